//! Experiment execution, artifacts on disk, and the results report.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{Experiment, ExperimentConfig, TaskKind};
use crate::control::{epsilon_sweep, solve_penalized, ControlProblem, SweepPoint};
use crate::error::Error;
use crate::kernels::Kernel;
use crate::simulator::{simulate, ControlField, Trajectory};
use crate::support::{geometry_report, GeometryReport};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "MEMHEAT_OUTPUT_ROOT";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input: unreadable or schema-invalid config, empty results directory.
    #[error("{0}")]
    Invalid(String),
    /// The computation or writing its artifacts failed.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Failed(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical(_) => CliError::Failed(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
    Ok(ExperimentConfig::from_json(&text)?)
}

/// Output directory: explicit override, then `output.dir`, then
/// `$MEMHEAT_OUTPUT_ROOT/<config stem>` (root defaults to `runs`).
pub fn output_dir(
    config: &ExperimentConfig,
    config_path: &Path,
    explicit: Option<&Path>,
) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    if let Some(d) = &config.output.dir {
        return PathBuf::from(d);
    }
    let root = std::env::var(OUTPUT_ROOT_ENV).unwrap_or_else(|_| "runs".into());
    let stem = config_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "experiment".into());
    Path::new(&root).join(stem)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub task: TaskKind,
    pub kernel: String,
    pub support_kind: String,
    pub cascade_order: usize,
    pub geometry: GeometryReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_bound: Option<f64>,
    pub results: serde_json::Value,
    pub wall_time_s: f64,
}

/// Geometry flags and system size, without running anything.
pub fn check(config: &ExperimentConfig) -> Result<serde_json::Value, CliError> {
    let exp = config.validate()?;
    let geometry = geometry_report(&exp.support, &exp.grid, &exp.time)?;
    Ok(json!({
        "valid": true,
        "kernel": kernel_label(&exp.config.kernel.kernel, exp.config.kernel.truncate),
        "cascade_order": exp.system.cascade_order(),
        "geometry": geometry,
    }))
}

/// Runs `task` (or the config's own task) and writes `summary.json`,
/// `trajectory.csv`, and for control tasks `control.csv`, for sweeps
/// `cost_curve.csv`.
pub fn run(
    config: &ExperimentConfig,
    task: Option<TaskKind>,
    out: &Path,
) -> Result<Summary, CliError> {
    let start = Instant::now();
    let mut config = config.clone();
    if let Some(kind) = task {
        config.task.kind = kind;
    }
    let exp = config.validate()?;
    let geometry = geometry_report(&exp.support, &exp.grid, &exp.time)?;
    fs::create_dir_all(out)
        .map_err(|e| CliError::Failed(format!("cannot create {}: {e}", out.display())))?;
    let stride = exp.config.output.stride;

    let results = match exp.config.task.kind {
        TaskKind::Simulate => {
            let u = ControlField::zeros(exp.time, exp.grid);
            let traj = simulate(&exp.system, &u, &exp.y0, &exp.time)?;
            write(out, "trajectory.csv", &trajectory_csv(&traj, stride))?;
            let n = traj.final_index();
            json!({
                "final_y_norm": traj.field(n, traj.y_field()).norm(),
                "final_z1_norm": traj.field(n, 1).norm(),
            })
        }
        TaskKind::Control => {
            let eps = exp.config.task.epsilon.expect("validated");
            let problem = problem(&exp, eps)?;
            let sol = solve_penalized(&problem, exp.config.solver.tol, exp.config.solver.max_iter)?;
            if !sol.converged {
                log::warn!("no convergence after {} iterations", sol.iterations);
            }
            let traj = simulate(&exp.system, &sol.control, &exp.y0, &exp.time)?;
            write(out, "trajectory.csv", &trajectory_csv(&traj, stride))?;
            write(out, "control.csv", &control_csv(&sol.control, stride))?;
            json!({
                "epsilon": eps,
                "cost": sol.cost,
                "energy": sol.energy,
                "residual_y": sol.residual_y,
                "residual_z1": sol.residual_memory,
                "residuals": sol.residuals,
                "relative_residual_y": sol.residual_y / exp.y0.norm(),
                "iterations": sol.iterations,
                "converged": sol.converged,
                "gradient_norm": sol.gradient_norm,
            })
        }
        TaskKind::Sweep => {
            let eps = exp.config.task.epsilons.clone().expect("validated");
            let problem = problem(&exp, eps[0])?;
            let sweep = epsilon_sweep(
                &problem,
                &eps,
                exp.config.solver.tol,
                exp.config.solver.max_iter,
            )?;
            let traj = simulate(&exp.system, &sweep.last.control, &exp.y0, &exp.time)?;
            write(out, "trajectory.csv", &trajectory_csv(&traj, stride))?;
            write(
                out,
                "control.csv",
                &control_csv(&sweep.last.control, stride),
            )?;
            write(out, "cost_curve.csv", &cost_curve_csv(&sweep.points))?;
            let first = sweep.points.first().map(|p| p.energy).unwrap_or(0.0);
            let last = sweep.points.last().map(|p| p.energy).unwrap_or(0.0);
            json!({
                "points": sweep.points,
                "slope": sweep.slope,
                "energy_ratio": if first > 0.0 { Some(last / first) } else { None },
                "energy": last,
                "residual_y": sweep.points.last().map(|p| p.residual_y),
                "residual_z1": sweep.points.last().map(|p| p.residual_z1),
            })
        }
    };

    let summary = Summary {
        task: exp.config.task.kind,
        kernel: kernel_label(&exp.config.kernel.kernel, exp.config.kernel.truncate),
        support_kind: if exp.support.is_static() {
            "static"
        } else {
            "moving"
        }
        .into(),
        cascade_order: exp.system.cascade_order(),
        geometry,
        truncation_bound: exp
            .truncation
            .as_ref()
            .map(|t| t.tail_bound(exp.time.horizon())),
        results,
        wall_time_s: start.elapsed().as_secs_f64(),
        config: exp.config,
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write(out, "summary.json", &text)?;
    Ok(summary)
}

fn problem(exp: &Experiment, eps: f64) -> Result<ControlProblem, CliError> {
    Ok(
        ControlProblem::new(exp.system.clone(), exp.y0.clone(), exp.time, eps)?
            .penalize_all_cascade(exp.config.penalize_all_cascade),
    )
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| CliError::Failed(format!("cannot write {}: {e}", path.display())))
}

/// 17 significant digits, locale independent.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn strided(n_steps: usize, stride: usize) -> impl Iterator<Item = usize> {
    (0..=n_steps)
        .step_by(stride)
        .chain((!n_steps.is_multiple_of(stride)).then_some(n_steps))
}

/// Columns `t, x, <fields...>`, one row per (time node, interior node).
pub fn trajectory_csv(traj: &Trajectory, stride: usize) -> String {
    let mut s = String::from("t,x");
    for name in traj.field_names() {
        s.push(',');
        s.push_str(name);
    }
    s.push('\n');
    let grid = traj.grid();
    let f = traj.n_fields();
    for n in strided(traj.final_index(), stride) {
        let t = traj.time().time(n);
        let state = traj.state(n);
        for (i, x) in grid.nodes().enumerate() {
            let _ = write!(s, "{},{}", num(t), num(x));
            for k in 0..f {
                let _ = write!(s, ",{}", num(state[i * f + k]));
            }
            s.push('\n');
        }
    }
    s
}

pub fn control_csv(u: &ControlField, stride: usize) -> String {
    let mut s = String::from("t,x,u\n");
    for n in strided(u.time().n_steps(), stride) {
        let t = u.time().time(n);
        for (x, v) in u.grid().nodes().zip(u.at(n)) {
            let _ = writeln!(s, "{},{},{}", num(t), num(x), num(*v));
        }
    }
    s
}

pub fn cost_curve_csv(points: &[SweepPoint]) -> String {
    let mut s = String::from("epsilon,energy,residual_y,residual_z1,iterations,converged\n");
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            num(p.epsilon),
            num(p.energy),
            num(p.residual_y),
            num(p.residual_z1),
            p.iterations,
            p.converged
        );
    }
    s
}

fn kernel_label(k: &Kernel, truncate: Option<usize>) -> String {
    match k {
        Kernel::Zero => "zero".into(),
        Kernel::ExpPoly { rate, coeffs } => format!("exp_poly(a={rate}; {coeffs:?})"),
        Kernel::Taylor { coeffs, .. } => match truncate {
            Some(order) => format!("taylor(K={order} of {})", coeffs.len()),
            None => format!("taylor({} terms)", coeffs.len()),
        },
    }
}

/// Collects every `summary.json` under `dir` (recursively) and renders a
/// side-by-side table. Unreadable summaries are skipped with a warning.
pub fn report(dir: &Path) -> Result<String, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Invalid(format!(
            "{} is not a directory",
            dir.display()
        )));
    }
    let mut rows = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let Ok(entry) = entry else { continue };
        if entry.file_name() != "summary.json" {
            continue;
        }
        let path = entry.path();
        let parsed = fs::read_to_string(path)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<Summary>(&t).map_err(|e| e.to_string()));
        match parsed {
            Ok(s) => {
                let run = path
                    .parent()
                    .and_then(|p| p.strip_prefix(dir).ok())
                    .map(|p| p.display().to_string())
                    .filter(|p| !p.is_empty())
                    .unwrap_or_else(|| ".".into());
                rows.push((run, s));
            }
            Err(e) => log::warn!("skipping {}: {e}", path.display()),
        }
    }
    if rows.is_empty() {
        return Err(CliError::Invalid(format!(
            "no valid summary.json under {}",
            dir.display()
        )));
    }
    Ok(render_table(&rows))
}

fn render_table(rows: &[(String, Summary)]) -> String {
    let header = [
        "run",
        "task",
        "kernel",
        "placement",
        "support",
        "coverage",
        "split",
        "energy",
        "residual_y",
        "residual_z1",
        "slope",
    ];
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4e}")).unwrap_or_else(|| "-".into());
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|(run, s)| {
            let r = &s.results;
            vec![
                run.clone(),
                format!("{:?}", s.task).to_lowercase(),
                s.kernel.clone(),
                serde_json::to_value(s.config.placement)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default(),
                s.support_kind.clone(),
                s.geometry.coverage.to_string(),
                s.geometry.split.to_string(),
                fmt(r.get("energy").and_then(|v| v.as_f64())),
                fmt(r
                    .get("residual_y")
                    .or(r.get("final_y_norm"))
                    .and_then(|v| v.as_f64())),
                fmt(r
                    .get("residual_z1")
                    .or(r.get("final_z1_norm"))
                    .and_then(|v| v.as_f64())),
                fmt(r.get("slope").and_then(|v| v.as_f64())),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            table
                .iter()
                .map(|r| r[c].len())
                .chain([header[c].len()])
                .max()
                .unwrap()
        })
        .collect();
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let row: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        out.push_str(row.join("  ").trim_end());
        out.push('\n');
    };
    line(header.to_vec(), &mut out);
    line(
        widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .iter()
            .map(|s| s.as_str())
            .collect(),
        &mut out,
    );
    for r in &table {
        line(r.iter().map(|s| s.as_str()).collect(), &mut out);
    }
    out
}
