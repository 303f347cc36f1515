//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use memheat::control::{epsilon_sweep, solve_penalized, ControlProblem, Evaluator};
use memheat::geometry::{Field, SpatialGrid};
use memheat::kernels::Kernel;
use memheat::reduction::{build_cascade, build_integrated_transform, MemoryPlacement};
use memheat::simulator::{
    relative_deviation, simulate, simulate_convolution, ControlField, TimeGrid,
};
use memheat::support::{Breakpoint, MovingSupport};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn smooth_random(grid: &SpatialGrid, rng: &mut ChaCha8Rng) -> Field {
    let c: Vec<f64> = (1..=4)
        .map(|k| rng.gen_range(-1.0..1.0) / (k * k) as f64)
        .collect();
    grid.sample(|x| {
        c.iter()
            .enumerate()
            .map(|(k, a)| a * ((k + 1) as f64 * PI * x).sin())
            .sum()
    })
}

fn random_exp_poly(rng: &mut ChaCha8Rng, degree: usize) -> Kernel {
    let mut coeffs: Vec<f64> = (0..=degree).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let last = coeffs.last_mut().unwrap();
    if last.abs() < 0.25 {
        *last = 0.25f64.copysign(*last);
    }
    Kernel::exp_poly(rng.gen_range(-2.0..2.0), coeffs).unwrap()
}

fn heat_decay() -> Outcome {
    let start = Instant::now();
    let grid = SpatialGrid::new(1.0, 200).unwrap();
    let time = TimeGrid::new(0.1, 1000).unwrap();
    let support = MovingSupport::fixed(0.2, 0.5).unwrap();
    let sys = build_cascade(
        &Kernel::Zero,
        MemoryPlacement::OnLaplacian,
        1.0,
        grid,
        support,
        0.1,
    )
    .unwrap();
    let y0 = grid.sample(|x| (PI * x).sin());
    let traj = simulate(&sys, &ControlField::zeros(time, grid), &y0, &time).unwrap();
    let exact = y0.scaled((-PI * PI * 0.1).exp());
    let err = traj
        .field(1000, 0)
        .combine(1.0, &exact, -1.0)
        .unwrap()
        .norm()
        / exact.norm();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        err <= 1e-3 && secs < 10.0,
        format!("relative error {err:.3e} (<= 1e-3), {secs:.2}s (< 10s)"),
    )
}

fn cascade_convolution() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let grid = SpatialGrid::new(1.0, 40).unwrap();
    let horizon = 0.5;
    let support = MovingSupport::fixed(0.3, 0.6).unwrap();
    let mut worst_dev = 0.0f64;
    let mut worst_order = f64::INFINITY;
    for case in 0..5 {
        let kernel = random_exp_poly(&mut rng, case % 4);
        let y0 = smooth_random(&grid, &mut rng);
        for placement in [MemoryPlacement::OnLaplacian, MemoryPlacement::OnState] {
            let sys =
                build_cascade(&kernel, placement, 1.0, grid, support.clone(), horizon).unwrap();
            let mut devs = Vec::new();
            for steps in [500, 1000, 2000] {
                let time = TimeGrid::new(horizon, steps).unwrap();
                let u = ControlField::zeros(time, grid);
                let a = simulate(&sys, &u, &y0, &time).unwrap();
                let b = simulate_convolution(&kernel, placement, 1.0, &support, &u, &y0, &time)
                    .unwrap();
                let dy = relative_deviation(&a, &b, 0, 0).unwrap();
                let dz = relative_deviation(&a, &b, 1, 1).unwrap();
                devs.push(dy.max(dz));
            }
            worst_dev = worst_dev.max(devs[0]);
            for w in devs.windows(2) {
                worst_order = worst_order.min((w[0] / w[1]).log2());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_dev <= 1e-4 && worst_order >= 1.8 && secs < 60.0,
        format!(
            "max deviation at dt=1e-3 {worst_dev:.3e} (<= 1e-4), min observed order {worst_order:.3} (>= 1.8), {secs:.2}s (< 60s)"
        ),
    )
}

fn transform_equivalence() -> Outcome {
    let grid = SpatialGrid::new(1.0, 100).unwrap();
    let horizon = 0.5;
    let time = TimeGrid::new(horizon, 200).unwrap();
    let support = MovingSupport::sweep(0.05, 0.6, 0.3, horizon).unwrap();
    let unit = Kernel::exp_poly(0.0, vec![1.0]).unwrap();
    let cascade = build_cascade(
        &unit,
        MemoryPlacement::OnLaplacian,
        1.0,
        grid,
        support.clone(),
        horizon,
    )
    .unwrap();
    let transform = build_integrated_transform(&unit, 1.0, grid, support, horizon).unwrap();
    let y0 = grid.sample(|x| (-((x - 0.4) / 0.1f64).powi(2)).exp());
    let u = ControlField::from_fn(time, grid, |t, x| (5.0 * t).sin() * x + 1.0);
    let a = simulate(&cascade, &u, &y0, &time).unwrap();
    let b = simulate(&transform, &u, &y0, &time).unwrap();
    let dev = relative_deviation(&b, &a, b.y_field(), a.y_field()).unwrap();
    outcome(
        dev <= 1e-6,
        format!("relative y deviation {dev:.3e} (<= 1e-6)"),
    )
}

fn gradient_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let n = rng.gen_range(5..=30);
        let steps = rng.gen_range(10..=50);
        let horizon = rng.gen_range(0.2..1.0);
        let grid = SpatialGrid::new(1.0, n).unwrap();
        let time = TimeGrid::new(horizon, steps).unwrap();
        let degree = rng.gen_range(0..3);
        let kernel = random_exp_poly(&mut rng, degree);
        let placement = if rng.gen_bool(0.5) {
            MemoryPlacement::OnLaplacian
        } else {
            MemoryPlacement::OnState
        };
        let support = if rng.gen_bool(0.5) {
            MovingSupport::fixed(0.2, 0.55).unwrap()
        } else {
            MovingSupport::sweep(0.02, 0.7, 0.25, horizon).unwrap()
        };
        let sys = build_cascade(&kernel, placement, 1.0, grid, support, horizon).unwrap();
        let y0 = smooth_random(&grid, &mut rng);
        let eps = 10f64.powf(rng.gen_range(-3.0..0.0));
        let problem = ControlProblem::new(sys, y0, time, eps)
            .unwrap()
            .penalize_all_cascade(rng.gen_bool(0.3));
        let eval = Evaluator::new(&problem).unwrap();
        let len = (steps + 1) * n;
        let random = |rng: &mut ChaCha8Rng| {
            ControlField::from_values(
                time,
                grid,
                (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap()
        };
        let u = random(&mut rng);
        let g = eval.gradient(&u).unwrap();
        for _ in 0..10 {
            let d = random(&mut rng);
            let tau = 1e-3;
            let mut up = u.clone();
            up.axpy(tau, &d);
            let mut um = u.clone();
            um.axpy(-tau, &d);
            let fd = (eval.objective(&up).unwrap().value - eval.objective(&um).unwrap().value)
                / (2.0 * tau);
            let exact = g.inner(&d);
            worst = worst.max((fd - exact).abs() / exact.abs());
        }
    }
    outcome(
        worst <= 1e-5,
        format!("max relative error {worst:.3e} over 100 directions (<= 1e-5)"),
    )
}

fn sweep_support(grid: &SpatialGrid, horizon: f64, width: f64, passes: usize) -> MovingSupport {
    let h = grid.h();
    let (lo, hi) = (0.5 * h, grid.length() - width - 0.5 * h);
    MovingSupport::new(
        (0..=passes)
            .map(|j| {
                let left = if j % 2 == 0 { lo } else { hi };
                Breakpoint {
                    t: horizon * j as f64 / passes as f64,
                    left,
                    right: left + width,
                }
            })
            .collect(),
    )
    .unwrap()
}

fn penalty_monotonicity() -> Outcome {
    let grid = SpatialGrid::new(1.0, 29).unwrap();
    let horizon = 1.0;
    let time = TimeGrid::new(horizon, 100).unwrap();
    let kernel = Kernel::exp_poly(0.0, vec![1.0, 1.0]).unwrap();
    let support = sweep_support(&grid, horizon, 0.2, 1);
    let sys = build_cascade(
        &kernel,
        MemoryPlacement::OnState,
        1.0,
        grid,
        support,
        horizon,
    )
    .unwrap();
    let y0 = grid.sample(|x| (PI * x).sin());
    let base = ControlProblem::new(sys, y0, time, 1e-1).unwrap();
    let mut prev: Option<(f64, f64)> = None;
    let mut ok = true;
    let mut trail = Vec::new();
    for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
        let sol = solve_penalized(&base.with_epsilon(eps).unwrap(), 1e-13, 5000).unwrap();
        ok &= sol.converged;
        let (res, energy) = (sol.total_residual(), sol.energy);
        if let Some((r0, e0)) = prev {
            ok &= res <= r0 + 1e-10 && energy >= e0 - 1e-10;
        }
        trail.push(format!("{eps:.0e}: E={energy:.4e} r={res:.3e}"));
        prev = Some((res, energy));
    }
    outcome(
        ok,
        format!(
            "terminal residual non-increasing, energy non-decreasing [{}]",
            trail.join("; ")
        ),
    )
}

fn dichotomy() -> Outcome {
    let start = Instant::now();
    let grid = SpatialGrid::new(1.0, 29).unwrap();
    let horizon = 4.0;
    let time = TimeGrid::new(horizon, 200).unwrap();
    let y0 = grid.sample(|x| (PI * x).sin());
    let eps = [1e-2, 1e-3, 1e-4, 1e-5];
    let memory = Kernel::exp_poly(0.0, vec![1.0, 1.0]).unwrap();
    let fixed = MovingSupport::fixed(0.2, 0.5).unwrap();
    let moving = sweep_support(&grid, horizon, 0.2, 4);
    let geometry_ok = !fixed.check_coverage(&grid, &time).unwrap().covered
        && moving.check_coverage(&grid, &time).unwrap().covered
        && moving.check_split(&grid, &time).unwrap();
    let run = |kernel: &Kernel, support: &MovingSupport| {
        let sys = build_cascade(
            kernel,
            MemoryPlacement::OnState,
            1.0,
            grid,
            support.clone(),
            horizon,
        )
        .unwrap();
        let p = ControlProblem::new(sys, y0.clone(), time, eps[0]).unwrap();
        epsilon_sweep(&p, &eps, 1e-10, 5000).unwrap()
    };
    let heat = run(&Kernel::Zero, &fixed);
    let stat = run(&memory, &fixed);
    let mov = run(&memory, &moving);
    let ratio =
        |s: &memheat::control::SweepResult| s.points.last().unwrap().energy / s.points[0].energy;
    let (ra, rb, rc) = (ratio(&heat), ratio(&stat), ratio(&mov));
    let converged = [&heat, &stat, &mov]
        .iter()
        .all(|s| s.points.iter().all(|p| p.converged));
    let growth = stat.points.windows(2).all(|w| w[1].energy > w[0].energy);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        ra <= 10.0 && rb >= 5.0 * rc && growth && geometry_ok && converged && secs < 600.0,
        format!(
            "energy(1e-5)/energy(1e-2): heat/static {ra:.3} (<= 10), memory/static {rb:.3}, memory/moving {rc:.3}; (b)/(c) = {:.2} (>= 5); monotone growth in (b): {growth}; {secs:.1}s",
            rb / rc
        ),
    )
}

fn truncation_convergence() -> Outcome {
    let grid = SpatialGrid::new(1.0, 50).unwrap();
    let horizon = 1.0;
    let time = TimeGrid::new(horizon, 1000).unwrap();
    let support = MovingSupport::fixed(0.2, 0.5).unwrap();
    let y0 = grid.sample(|x| (PI * x).sin() + 0.5 * (2.0 * PI * x).sin());
    let u = ControlField::zeros(time, grid);
    let placement = MemoryPlacement::OnLaplacian;
    let exact = Kernel::exp_poly(-1.0, vec![1.0]).unwrap();
    let reference = simulate_convolution(&exact, placement, 1.0, &support, &u, &y0, &time).unwrap();
    let data = Kernel::taylor_of_exp(-1.0, 20);
    let devs: Vec<f64> = [2, 4, 8]
        .iter()
        .map(|&order| {
            let k = data.truncate(order).unwrap().kernel;
            let sys = build_cascade(&k, placement, 1.0, grid, support.clone(), horizon).unwrap();
            let traj = simulate(&sys, &u, &y0, &time).unwrap();
            relative_deviation(&traj, &reference, 0, 0).unwrap()
        })
        .collect();
    let decreasing = devs.windows(2).all(|w| w[1] < w[0]);
    outcome(
        decreasing && devs[2] <= 1e-3,
        format!(
            "deviation K=2: {:.3e}, K=4: {:.3e}, K=8: {:.3e} (decreasing, K=8 <= 1e-3)",
            devs[0], devs[1], devs[2]
        ),
    )
}

fn geometry_examples() -> Outcome {
    let mut passed = 0;
    let mut check = |ok: bool| passed += ok as usize;
    let g3 = SpatialGrid::new(1.0, 3).unwrap();
    let g9 = SpatialGrid::new(1.0, 9).unwrap();
    let tg = TimeGrid::new(1.0, 100).unwrap();
    // indicator weights
    let whole = MovingSupport::fixed(0.0, 1.0).unwrap();
    check(whole.indicator_weights(0.5, &g3).unwrap().values() == [1.0, 1.0, 1.0]);
    let w = MovingSupport::fixed(0.3, 0.6)
        .unwrap()
        .indicator_weights(0.0, &g3)
        .unwrap();
    check(w.values()[2] == 0.0);
    check((w.values()[1] - 0.9).abs() < 1e-12);
    // coverage
    let c = MovingSupport::fixed(0.2, 0.4)
        .unwrap()
        .check_coverage(&g9, &tg)
        .unwrap();
    check(!c.covered && c.uncovered == vec![0, 1, 3, 4, 5, 6, 7, 8]);
    check(
        MovingSupport::sweep(0.0, 0.8, 0.2, 1.0)
            .unwrap()
            .check_coverage(&g9, &tg)
            .unwrap()
            .covered,
    );
    let half = MovingSupport::new(vec![
        Breakpoint {
            t: 0.0,
            left: 0.0,
            right: 0.2,
        },
        Breakpoint {
            t: 0.5,
            left: 0.25,
            right: 0.45,
        },
        Breakpoint {
            t: 1.0,
            left: 0.25,
            right: 0.45,
        },
    ])
    .unwrap();
    check(!half.check_coverage(&g9, &tg).unwrap().covered);
    // split
    check(
        MovingSupport::fixed(0.2, 0.5)
            .unwrap()
            .check_split(&g9, &tg)
            .unwrap()
            && MovingSupport::sweep(0.1, 0.6, 0.3, 1.0)
                .unwrap()
                .check_split(&g9, &tg)
                .unwrap(),
    );
    check(
        !MovingSupport::fixed(0.0, 0.3)
            .unwrap()
            .check_split(&g9, &tg)
            .unwrap(),
    );
    check(
        !MovingSupport::fixed(0.7, 1.0)
            .unwrap()
            .check_split(&g9, &tg)
            .unwrap(),
    );
    outcome(passed == 9, format!("{passed}/9 examples"))
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/memory_moving_sweep.json");
    let bin = env!("CARGO_BIN_EXE_memheat");
    let run = |out: &Path, cfg: &Path| {
        Command::new(bin)
            .args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .output()
            .map(|o| o.status.success())
            .unwrap_or(false)
    };
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    let mut ok = run(&a, &config) && run(&b, &config);
    // re-run from the config echoed in the summary
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("summary.json")).unwrap_or_default())
            .unwrap_or_default();
    let echo = dir.path().join("echo.json");
    std::fs::write(&echo, summary["config"].to_string()).unwrap();
    ok &= run(&c, &echo);
    let mut compared = 0;
    for name in ["trajectory.csv", "control.csv", "cost_curve.csv"] {
        let read = |d: &Path| std::fs::read(d.join(name)).ok();
        let first = read(&a);
        ok &= first.is_some() && first == read(&b) && first == read(&c);
        compared += 1;
    }
    outcome(
        ok,
        format!("{compared} CSV artifacts bit-identical across 2 runs and the summary echo"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 heat-decay oracle", heat_decay),
        ("2 cascade/convolution equivalence", cascade_convolution),
        ("3 transformation equivalence", transform_equivalence),
        ("4 gradient exactness", gradient_exactness),
        ("5 penalized-family monotonicity", penalty_monotonicity),
        ("6 fixed vs moving dichotomy", dichotomy),
        ("7 truncated-analytic convergence", truncation_convergence),
        ("8 geometry checks", geometry_examples),
        ("9 reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let o = f();
        println!(
            "[{}] {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += (!o.pass) as usize;
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
