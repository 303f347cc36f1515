//! Penalized null control.
//!
//! Minimizes the discrete functional
//!
//! ```text
//! J(u) = 1/2 sum_n dt ||χ_{ω(t_n)} u(t_n)||^2 + 1/(2ε) sum_{f in targets} ||x_f(T)||^2
//! ```
//!
//! over controls on the time nodes. Gradients are exact for the discrete
//! problem (discretize-then-optimize) and are taken with respect to the
//! space-time product `sum_n dt h sum_i u v`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, Field};
use crate::reduction::CoupledSystem;
use crate::simulator::{ControlField, Stepper, TimeGrid, Trajectory};

#[derive(Debug, Clone)]
pub struct ControlProblem {
    system: CoupledSystem,
    y0: Field,
    time: TimeGrid,
    epsilon: f64,
    all_cascade: bool,
}

impl ControlProblem {
    pub fn new(system: CoupledSystem, y0: Field, time: TimeGrid, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::Config(format!(
                "epsilon: must be positive, got {epsilon}"
            )));
        }
        if y0.grid() != system.grid() {
            return Err(Error::Usage(
                "initial datum lives on a different grid".into(),
            ));
        }
        Ok(Self {
            system,
            y0,
            time,
            epsilon,
            all_cascade: false,
        })
    }

    /// Also drive `z_2, ..., z_m` to zero.
    pub fn penalize_all_cascade(mut self, yes: bool) -> Self {
        self.all_cascade = yes;
        self
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        let mut p = self.clone();
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::Config(format!(
                "epsilon: must be positive, got {epsilon}"
            )));
        }
        p.epsilon = epsilon;
        Ok(p)
    }

    pub fn system(&self) -> &CoupledSystem {
        &self.system
    }

    pub fn y0(&self) -> &Field {
        &self.y0
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn targets(&self) -> Vec<usize> {
        self.system.target_fields(self.all_cascade)
    }

    pub fn zero_control(&self) -> ControlField {
        ControlField::zeros(self.time, *self.system.grid())
    }
}

/// Value of the penalized functional split into its parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub value: f64,
    pub energy: f64,
    /// `||x_f(T)||` for each target field, in target order.
    pub residuals: Vec<f64>,
}

/// Objective and adjoint gradient evaluation sharing one factorization.
pub struct Evaluator<'a> {
    problem: &'a ControlProblem,
    stepper: Stepper<'a>,
    targets: Vec<usize>,
}

impl<'a> Evaluator<'a> {
    pub fn new(problem: &'a ControlProblem) -> Result<Self> {
        Ok(Self {
            stepper: Stepper::new(&problem.system, problem.time)?,
            targets: problem.targets(),
            problem,
        })
    }

    pub fn energy(&self, u: &ControlField) -> f64 {
        let h = self.problem.system.grid().h();
        let dt = self.problem.time.dt();
        let mut e = 0.0;
        for n in 0..=self.problem.time.n_steps() {
            let w = self.stepper.weights(n);
            e += u
                .at(n)
                .iter()
                .zip(w)
                .map(|(u, w)| (w * u) * (w * u))
                .sum::<f64>();
        }
        0.5 * dt * h * e
    }

    fn residuals(&self, terminal: &[f64]) -> Vec<f64> {
        let f = self.problem.system.n_fields();
        let h = self.problem.system.grid().h();
        self.targets
            .iter()
            .map(|&k| {
                let v: Vec<f64> = terminal.iter().skip(k).step_by(f).copied().collect();
                dot(h, &v, &v).sqrt()
            })
            .collect()
    }

    pub fn objective(&self, u: &ControlField) -> Result<Objective> {
        let terminal = self.stepper.run_terminal(u, &self.problem.y0)?;
        let residuals = self.residuals(&terminal);
        let energy = self.energy(u);
        let penalty: f64 = residuals.iter().map(|r| r * r).sum();
        Ok(Objective {
            value: energy + penalty / (2.0 * self.problem.epsilon),
            energy,
            residuals,
        })
    }

    pub fn trajectory(&self, u: &ControlField) -> Result<Trajectory> {
        self.stepper.run(u, &self.problem.y0)
    }

    pub fn gradient(&self, u: &ControlField) -> Result<ControlField> {
        self.gradient_impl(u, false)
    }

    /// Gradient of the homogeneous part (`y0 = 0`), i.e. the Hessian applied to `u`.
    fn hessian_apply(&self, u: &ControlField) -> Result<ControlField> {
        self.gradient_impl(u, true)
    }

    fn gradient_impl(&self, u: &ControlField, homogeneous: bool) -> Result<ControlField> {
        let sys = &self.problem.system;
        let grid = *sys.grid();
        let time = self.problem.time;
        let f = sys.n_fields();
        let n = grid.len();
        let h = grid.h();
        let dt = time.dt();
        let steps = time.n_steps();

        let y0 = if homogeneous {
            grid.zeros()
        } else {
            self.problem.y0.clone()
        };
        let terminal = self.stepper.run_terminal(u, &y0)?;

        // dJ/dX^N (Euclidean)
        let mut lambda = vec![0.0; n * f];
        let scale = h / self.problem.epsilon;
        for i in 0..n {
            for &k in &self.targets {
                lambda[i * f + k] = scale * terminal[i * f + k];
            }
        }

        let mut grad = ControlField::zeros(time, grid);
        let mut mu = vec![0.0; n * f];
        for step in (0..steps).rev() {
            mu.copy_from_slice(&lambda);
            self.stepper.solve_implicit_transpose(&mut mu);
            let (w0, w1) = (self.stepper.weights(step), self.stepper.weights(step + 1));
            for i in 0..n {
                let nu: f64 = sys.control_fields().iter().map(|&c| mu[i * f + c]).sum();
                let s = 0.5 * dt * nu;
                grad.at_mut(step)[i] += s * w0[i];
                grad.at_mut(step + 1)[i] += s * w1[i];
            }
            self.stepper.apply_explicit_transpose(&mu, &mut lambda);
        }

        // Euclidean -> space-time product, plus the energy term
        let inv = 1.0 / (dt * h);
        for step in 0..=steps {
            let w = self.stepper.weights(step);
            let uu = u.at(step).to_vec();
            let g = grad.at_mut(step);
            for i in 0..n {
                g[i] = g[i] * inv + w[i] * w[i] * uu[i];
            }
        }
        Ok(grad)
    }
}

pub fn objective(problem: &ControlProblem, u: &ControlField) -> Result<f64> {
    Ok(Evaluator::new(problem)?.objective(u)?.value)
}

pub fn gradient(problem: &ControlProblem, u: &ControlField) -> Result<ControlField> {
    Evaluator::new(problem)?.gradient(u)
}

#[derive(Debug, Clone)]
pub struct PenalizedSolution {
    pub control: ControlField,
    pub epsilon: f64,
    pub cost: f64,
    pub energy: f64,
    pub residual_y: f64,
    pub residual_memory: f64,
    /// Terminal norms of every target field.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// `||∇J(0)||`, the reference for the relative stopping rule.
    pub reference_gradient_norm: f64,
    pub converged: bool,
    /// `J` after each conjugate-gradient iteration, starting from the initial guess.
    pub cost_history: Vec<f64>,
}

impl PenalizedSolution {
    /// `sqrt(sum of squared terminal residuals)`.
    pub fn total_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum::<f64>().sqrt()
    }
}

/// Conjugate gradients from `u = 0`.
pub fn solve_penalized(
    problem: &ControlProblem,
    tol: f64,
    max_iter: usize,
) -> Result<PenalizedSolution> {
    solve_penalized_from(problem, problem.zero_control(), tol, max_iter)
}

/// Preconditioned conjugate gradients on the quadratic `J` from the initial guess `start`.
/// Stops when `||∇J(u)|| <= tol * ||∇J(0)||`. Running out of iterations is
/// reported through `converged`, not as an error.
pub fn solve_penalized_from(
    problem: &ControlProblem,
    start: ControlField,
    tol: f64,
    max_iter: usize,
) -> Result<PenalizedSolution> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Config(format!(
            "solver.tol: must be positive, got {tol}"
        )));
    }
    let eval = Evaluator::new(problem)?;
    let mut u = start;
    if u.time() != problem.time() || u.grid() != problem.system().grid() {
        return Err(Error::Usage(
            "initial control is defined on different grids".into(),
        ));
    }
    mask(&eval, &mut u);

    let reference = eval.gradient(&problem.zero_control())?.norm();
    let mut g = eval.gradient(&u)?;
    let mut cost = eval.objective(&u)?.value;
    let mut history = vec![cost];
    let mut iterations = 0;
    let threshold = tol * reference;

    // Preconditioner: the Hessian is W (I + K / ε) W with W the indicator
    // weights, so dividing by w^2 removes the spread caused by partially
    // covered cells.
    let mut r = g.clone();
    r.scale(-1.0);
    let mut z = precondition(&eval, &r);
    let mut p = z.clone();
    let mut rz = r.inner(&z);
    let mut converged = g.norm() <= threshold;

    while !converged && iterations < max_iter {
        let q = eval.hessian_apply(&p)?;
        let pq = p.inner(&q);
        if pq.is_nan() || pq <= 0.0 {
            break;
        }
        let alpha = rz / pq;
        let rp = r.inner(&p);
        u.axpy(alpha, &p);
        r.axpy(-alpha, &q);
        cost += -alpha * rp + 0.5 * alpha * alpha * pq;
        history.push(cost);
        iterations += 1;

        if r.norm() <= threshold {
            // confirm with a fresh gradient; restart on drift
            g = eval.gradient(&u)?;
            if g.norm() <= threshold {
                converged = true;
                break;
            }
            r = g.clone();
            r.scale(-1.0);
            z = precondition(&eval, &r);
            p = z.clone();
            rz = r.inner(&z);
            continue;
        }
        z = precondition(&eval, &r);
        let rz_new = r.inner(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.scale(beta);
        p.axpy(1.0, &z);
    }

    let obj = eval.objective(&u)?;
    if !converged {
        g = eval.gradient(&u)?;
    }
    let targets = problem.targets();
    let memory = problem.system().memory_field();
    let residual_of = |field: usize| {
        targets
            .iter()
            .position(|&t| t == field)
            .map(|k| obj.residuals[k])
            .unwrap_or(0.0)
    };
    Ok(PenalizedSolution {
        epsilon: problem.epsilon(),
        cost: obj.value,
        energy: obj.energy,
        residual_y: residual_of(problem.system().y_field()),
        residual_memory: residual_of(memory),
        residuals: obj.residuals,
        iterations,
        gradient_norm: g.norm(),
        reference_gradient_norm: reference,
        converged,
        cost_history: history,
        control: u,
    })
}

fn precondition(eval: &Evaluator<'_>, r: &ControlField) -> ControlField {
    let mut z = r.clone();
    for n in 0..=z.time().n_steps() {
        let w = eval.stepper.weights(n);
        for (v, w) in z.at_mut(n).iter_mut().zip(w) {
            *v = if *w > 0.0 { *v / (w * w) } else { 0.0 };
        }
    }
    z
}

/// Zeroes the control where the indicator vanishes.
fn mask(eval: &Evaluator<'_>, u: &mut ControlField) {
    for n in 0..=u.time().n_steps() {
        let w = eval.stepper.weights(n).to_vec();
        for (v, w) in u.at_mut(n).iter_mut().zip(w) {
            if w == 0.0 {
                *v = 0.0;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub energy: f64,
    pub residual_y: f64,
    pub residual_z1: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// Least-squares slope of `ln(energy)` against `ln(ε)`. Near zero when the
    /// energy stays bounded as `ε -> 0`; increasingly negative when it grows.
    pub slope: Option<f64>,
    /// Solution at the smallest `ε`.
    pub last: PenalizedSolution,
}

/// Solves the penalized problem for each `ε` in decreasing order, warm-starting
/// every solve from the previous control.
pub fn epsilon_sweep(
    problem: &ControlProblem,
    epsilons: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<SweepResult> {
    if epsilons.is_empty() {
        return Err(Error::Config("sweep.epsilons: must not be empty".into()));
    }
    if epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::Config(
            "sweep.epsilons: values must be positive".into(),
        ));
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config(
            "sweep.epsilons: values must be strictly decreasing".into(),
        ));
    }
    let mut points = Vec::with_capacity(epsilons.len());
    let mut start = problem.zero_control();
    let mut last = None;
    for &eps in epsilons {
        let p = problem.with_epsilon(eps)?;
        let sol = solve_penalized_from(&p, start, tol, max_iter)?;
        if !sol.converged {
            log::warn!(
                "epsilon = {eps}: no convergence after {} iterations",
                sol.iterations
            );
        }
        points.push(SweepPoint {
            epsilon: eps,
            energy: sol.energy,
            residual_y: sol.residual_y,
            residual_z1: sol.residual_memory,
            iterations: sol.iterations,
            converged: sol.converged,
        });
        start = sol.control.clone();
        last = Some(sol);
    }
    let slope = log_log_slope(&points);
    Ok(SweepResult {
        points,
        slope,
        last: last.expect("non-empty sweep"),
    })
}

fn log_log_slope(points: &[SweepPoint]) -> Option<f64> {
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.energy > 0.0)
        .map(|p| (p.epsilon.ln(), p.energy.ln()))
        .collect();
    if xy.len() < 2 {
        return None;
    }
    let k = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / k;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
