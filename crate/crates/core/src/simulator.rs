//! Crank–Nicolson time stepping of a [`CoupledSystem`] and a reference
//! integrator that evaluates the memory integral from the stored history.

use std::hash::{DefaultHasher, Hash, Hasher};

use crate::banded::{BandLu, BandMatrix};
use crate::error::{Error, Result};
use crate::geometry::{dot, laplacian_into, Field, SpatialGrid};
use crate::kernels::Kernel;
use crate::reduction::{CoupledSystem, MemoryPlacement};
use crate::support::MovingSupport;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Config(format!(
                "time.horizon: must be positive, got {horizon}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::Config("time.n_steps: must be at least 1".into()));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        if n == self.n_steps {
            self.horizon
        } else {
            n as f64 * self.dt()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(|n| self.time(n))
    }

    /// Index of the time node at `t`; `t` must lie on the grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let x = t / self.dt();
        let n = x.round();
        if n < 0.0 || n > self.n_steps as f64 || (x - n).abs() > 1e-9 * x.abs().max(1.0) {
            return Err(Error::Usage(format!(
                "t = {t} is not a node of the time grid"
            )));
        }
        Ok(n as usize)
    }
}

/// Control values `u(t_n, x_i)` for every time node.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    time: TimeGrid,
    grid: SpatialGrid,
    data: Vec<f64>,
}

impl ControlField {
    pub fn zeros(time: TimeGrid, grid: SpatialGrid) -> Self {
        Self {
            time,
            grid,
            data: vec![0.0; (time.n_steps() + 1) * grid.len()],
        }
    }

    pub fn from_fn(time: TimeGrid, grid: SpatialGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity((time.n_steps() + 1) * grid.len());
        for t in time.times() {
            data.extend(grid.nodes().map(|x| f(t, x)));
        }
        Self { time, grid, data }
    }

    pub fn from_values(time: TimeGrid, grid: SpatialGrid, data: Vec<f64>) -> Result<Self> {
        if data.len() != (time.n_steps() + 1) * grid.len() {
            return Err(Error::Usage("control data has the wrong length".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "control contains non-finite values".into(),
            ));
        }
        Ok(Self { time, grid, data })
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn at(&self, n: usize) -> &[f64] {
        let w = self.grid.len();
        &self.data[n * w..(n + 1) * w]
    }

    pub fn at_mut(&mut self, n: usize) -> &mut [f64] {
        let w = self.grid.len();
        &mut self.data[n * w..(n + 1) * w]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Space-time product `sum_n dt h sum_i u v`.
    pub fn inner(&self, other: &ControlField) -> f64 {
        self.time.dt() * dot(self.grid.h(), &self.data, &other.data)
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &ControlField) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }
}

/// Snapshots of the full state at every time node.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    time: TimeGrid,
    grid: SpatialGrid,
    field_names: Vec<String>,
    y_field: usize,
    // node-major interleaved: states[n][i * n_fields + f]
    states: Vec<Vec<f64>>,
    scheme: String,
    system_hash: u64,
}

impl Trajectory {
    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn field_names(&self) -> &[String] {
        &self.field_names
    }

    pub fn n_fields(&self) -> usize {
        self.field_names.len()
    }

    pub fn scheme(&self) -> &str {
        &self.scheme
    }

    pub fn system_hash(&self) -> u64 {
        self.system_hash
    }

    pub fn state(&self, n: usize) -> &[f64] {
        &self.states[n]
    }

    /// Values of field `f` at time node `n`.
    pub fn field_values(&self, n: usize, f: usize) -> Vec<f64> {
        let nf = self.n_fields();
        self.states[n].iter().skip(f).step_by(nf).copied().collect()
    }

    pub fn field(&self, n: usize, f: usize) -> Field {
        Field::new(self.grid, self.field_values(n, f)).expect("trajectory values are finite")
    }

    pub fn y(&self, n: usize) -> Vec<f64> {
        self.field_values(n, self.y_field)
    }

    pub fn y_field(&self) -> usize {
        self.y_field
    }

    pub fn final_index(&self) -> usize {
        self.time.n_steps()
    }
}

/// Crank–Nicolson stepper with the step matrix factored once.
///
/// Unknowns are ordered node-major, `(y_i, z_{1,i}, ..., z_{m,i})` per node,
/// so the step matrices are banded with bandwidth `2F - 1` for `F` fields.
pub struct Stepper<'a> {
    sys: &'a CoupledSystem,
    time: TimeGrid,
    implicit: BandLu,
    explicit: BandMatrix,
    weights: Vec<Vec<f64>>,
}

impl<'a> Stepper<'a> {
    pub fn new(sys: &'a CoupledSystem, time: TimeGrid) -> Result<Self> {
        if (time.horizon() - sys.horizon()).abs() > 1e-12 * sys.horizon() {
            return Err(Error::Usage(format!(
                "time grid horizon {} differs from the system horizon {}",
                time.horizon(),
                sys.horizon()
            )));
        }
        let grid = *sys.grid();
        let half = 0.5 * time.dt();
        let implicit = assemble_step_matrix(sys, -half).factorize().map_err(|e| {
            Error::Numerical(format!(
                "{e} (dt = {}, {} unknowns)",
                time.dt(),
                sys.n_fields() * grid.len()
            ))
        })?;
        let explicit = assemble_step_matrix(sys, half);
        let weights = time
            .times()
            .map(|t| {
                sys.support()
                    .indicator_weights(t, &grid)
                    .map(Field::into_values)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            sys,
            time,
            implicit,
            explicit,
            weights,
        })
    }

    pub fn system(&self) -> &CoupledSystem {
        self.sys
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    /// Indicator weights at time node `n`.
    pub fn weights(&self, n: usize) -> &[f64] {
        &self.weights[n]
    }

    fn check_control(&self, u: &ControlField) -> Result<()> {
        if u.time() != &self.time || u.grid() != self.sys.grid() {
            return Err(Error::Usage("control is defined on different grids".into()));
        }
        Ok(())
    }

    pub fn run(&self, u: &ControlField, y0: &Field) -> Result<Trajectory> {
        self.check_control(u)?;
        let mut x = self.sys.initial_state(y0)?;
        let mut states = Vec::with_capacity(self.time.n_steps() + 1);
        states.push(x.clone());
        let mut rhs = vec![0.0; x.len()];
        for n in 0..self.time.n_steps() {
            self.step(n, &x, u, &mut rhs);
            std::mem::swap(&mut x, &mut rhs);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite state after step {} (t = {})",
                    n + 1,
                    self.time.time(n + 1)
                )));
            }
            states.push(x.clone());
        }
        Ok(Trajectory {
            time: self.time,
            grid: *self.sys.grid(),
            field_names: self.sys.field_names().to_vec(),
            y_field: self.sys.y_field(),
            states,
            scheme: "crank-nicolson cascade".into(),
            system_hash: system_hash(self.sys),
        })
    }

    /// Terminal state only.
    pub fn run_terminal(&self, u: &ControlField, y0: &Field) -> Result<Vec<f64>> {
        self.check_control(u)?;
        let mut x = self.sys.initial_state(y0)?;
        let mut next = vec![0.0; x.len()];
        for n in 0..self.time.n_steps() {
            self.step(n, &x, u, &mut next);
            std::mem::swap(&mut x, &mut next);
        }
        Ok(x)
    }

    fn step(&self, n: usize, x: &[f64], u: &ControlField, out: &mut [f64]) {
        self.explicit.mul_vec(x, out);
        let f = self.sys.n_fields();
        let dt = self.time.dt();
        let (w0, w1) = (&self.weights[n], &self.weights[n + 1]);
        let (u0, u1) = (u.at(n), u.at(n + 1));
        for i in 0..w0.len() {
            let forcing = 0.5 * dt * (w0[i] * u0[i] + w1[i] * u1[i]);
            if forcing != 0.0 {
                for &c in self.sys.control_fields() {
                    out[i * f + c] += forcing;
                }
            }
        }
        self.implicit.solve(out);
    }

    /// Solves `S^T mu = lambda` in place, `S` the implicit step matrix.
    pub(crate) fn solve_implicit_transpose(&self, lambda: &mut [f64]) {
        self.implicit.solve_transpose(lambda);
    }

    /// `R^T mu` for the explicit step matrix `R`.
    pub(crate) fn apply_explicit_transpose(&self, mu: &[f64], out: &mut [f64]) {
        self.explicit.mul_vec_transpose(mu, out);
    }
}

/// `I + scale * A` in banded node-major form.
fn assemble_step_matrix(sys: &CoupledSystem, scale: f64) -> BandMatrix {
    let f = sys.n_fields();
    let grid = sys.grid();
    let n = grid.len();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let band = 2 * f - 1;
    let mut m = BandMatrix::zeros(n * f, band, band);
    for i in 0..n * f {
        m.add(i, i, 1.0);
    }
    for &(r, c, block) in sys.operator().entries() {
        let diag = scale * (block.identity - 2.0 * block.laplacian * inv_h2);
        let off = scale * block.laplacian * inv_h2;
        for i in 0..n {
            m.add(i * f + r, i * f + c, diag);
            if off != 0.0 {
                if i > 0 {
                    m.add(i * f + r, (i - 1) * f + c, off);
                }
                if i + 1 < n {
                    m.add(i * f + r, (i + 1) * f + c, off);
                }
            }
        }
    }
    m
}

fn system_hash(sys: &CoupledSystem) -> u64 {
    let mut h = DefaultHasher::new();
    format!("{:?}", sys).hash(&mut h);
    h.finish()
}

/// Crank–Nicolson for `y' = bΔy + σ I(t) + χ u` on the system's grid, support and horizon.
pub fn simulate(
    sys: &CoupledSystem,
    u: &ControlField,
    y0: &Field,
    time: &TimeGrid,
) -> Result<Trajectory> {
    Stepper::new(sys, *time)?.run(u, y0)
}

/// Reference integrator: the same θ = 1/2 stepping for `y`, with the memory
/// integral `I(t) = int_0^t M(t-s) L y(s) ds` evaluated by the trapezoidal
/// rule over the full stored history. The returned trajectory has fields
/// `(y, z1)` with `z1 = I`.
pub fn simulate_convolution(
    kernel: &Kernel,
    placement: MemoryPlacement,
    diffusivity: f64,
    support: &MovingSupport,
    u: &ControlField,
    y0: &Field,
    time: &TimeGrid,
) -> Result<Trajectory> {
    kernel.validate()?;
    let grid = *y0.grid();
    if u.grid() != &grid || u.time() != time {
        return Err(Error::Usage("control is defined on different grids".into()));
    }
    support.validate_for(grid.length(), time.horizon())?;
    let n = grid.len();
    let h = grid.h();
    let dt = time.dt();
    let steps = time.n_steps();
    let sigma = placement.sign();
    let kernel_vals: Vec<f64> = (0..=steps)
        .map(|k| kernel.eval(time.time(k), 0))
        .collect::<Result<_>>()?;
    let inv_h2 = 1.0 / (h * h);

    // (I - dt/2 bΔ - σ dt^2/4 M(0) L) y^{n+1} = rhs
    let implicit_memory = sigma * 0.25 * dt * dt * kernel_vals[0];
    let mut mat = BandMatrix::zeros(n, 1, 1);
    for i in 0..n {
        let mut diag = 1.0 + dt * diffusivity * inv_h2;
        let mut off = -0.5 * dt * diffusivity * inv_h2;
        match placement {
            MemoryPlacement::OnLaplacian => {
                diag += 2.0 * implicit_memory * inv_h2;
                off -= implicit_memory * inv_h2;
            }
            MemoryPlacement::OnState => diag -= implicit_memory,
        }
        mat.add(i, i, diag);
        if i > 0 {
            mat.add(i, i - 1, off);
        }
        if i + 1 < n {
            mat.add(i, i + 1, off);
        }
    }
    let lu = mat.factorize()?;

    let weights: Vec<Vec<f64>> = time
        .times()
        .map(|t| support.indicator_weights(t, &grid).map(Field::into_values))
        .collect::<Result<_>>()?;

    let mut ys: Vec<Vec<f64>> = vec![y0.values().to_vec()];
    let mut lys: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    let mut buf = vec![0.0; n];
    placement.apply(h, y0.values(), &mut buf);
    lys.push(buf.clone());
    let mut memory: Vec<Vec<f64>> = vec![vec![0.0; n]];
    let mut lap = vec![0.0; n];
    let mut history = vec![0.0; n];

    for step in 0..steps {
        let next = step + 1;
        // trapezoid weights for all known history terms of I(t_{next})
        history.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..next {
            let w = if j == 0 { 0.5 * dt } else { dt };
            let mk = w * kernel_vals[next - j];
            if mk != 0.0 {
                for (a, v) in history.iter_mut().zip(&lys[j]) {
                    *a += mk * v;
                }
            }
        }
        let y = &ys[step];
        laplacian_into(h, y, &mut lap);
        let (w0, w1) = (&weights[step], &weights[next]);
        let (u0, u1) = (u.at(step), u.at(next));
        let mut rhs: Vec<f64> = (0..n)
            .map(|i| {
                y[i] + 0.5 * dt * diffusivity * lap[i]
                    + 0.5 * dt * sigma * (memory[step][i] + history[i])
                    + 0.5 * dt * (w0[i] * u0[i] + w1[i] * u1[i])
            })
            .collect();
        lu.solve(&mut rhs);
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite state after step {next}"
            )));
        }
        placement.apply(h, &rhs, &mut buf);
        let current: Vec<f64> = history
            .iter()
            .zip(&buf)
            .map(|(hst, l)| hst + 0.5 * dt * kernel_vals[0] * l)
            .collect();
        lys.push(buf.clone());
        memory.push(current);
        ys.push(rhs);
    }

    let states = ys
        .iter()
        .zip(&memory)
        .map(|(y, z)| y.iter().zip(z).flat_map(|(a, b)| [*a, *b]).collect())
        .collect();
    Ok(Trajectory {
        time: *time,
        grid,
        field_names: vec!["y".into(), "z1".into()],
        y_field: 0,
        states,
        scheme: "crank-nicolson convolution".into(),
        system_hash: {
            let mut hs = DefaultHasher::new();
            format!("{kernel:?}{placement:?}{diffusivity}{support:?}").hash(&mut hs);
            hs.finish()
        },
    })
}

/// Largest relative deviation `max_n ||a_f(t_n) - b_f(t_n)|| / max_n ||b_f(t_n)||`
/// of field `f` between two trajectories on the same grids.
pub fn relative_deviation(a: &Trajectory, b: &Trajectory, fa: usize, fb: usize) -> Result<f64> {
    if a.time() != b.time() || a.grid() != b.grid() {
        return Err(Error::Usage("trajectories live on different grids".into()));
    }
    let h = a.grid().h();
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for n in 0..=a.final_index() {
        let va = a.field_values(n, fa);
        let vb = b.field_values(n, fb);
        let d: Vec<f64> = va.iter().zip(&vb).map(|(x, y)| x - y).collect();
        num = num.max(dot(h, &d, &d).sqrt());
        den = den.max(dot(h, &vb, &vb).sqrt());
    }
    Ok(if den == 0.0 { num } else { num / den })
}
