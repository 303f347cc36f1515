//! Assembly of the coupled heat + ODE cascade.
//!
//! With `z_k(t) = int_0^t M^{(k-1)}(t-s) L y(s) ds` the memory equation becomes
//!
//! ```text
//! y'   = b Δy + σ z_1 + χ u
//! z_k' = M^{(k-1)}(0) L y + z_{k+1}                      (k < m)
//! z_m' = M^{(m-1)}(0) L y + sum_j c_j z_{j+1}
//! ```
//!
//! where `L = Δ, σ = +1` when the memory acts on the Laplacian and
//! `L = I, σ = -1` when it acts on the state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, Field, SpatialGrid};
use crate::kernels::{CompanionSystem, Kernel};
use crate::simulator::Trajectory;
use crate::support::MovingSupport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryPlacement {
    /// `y_t - int M(t-s) Δy(s) ds - b Δy = χ u`
    OnLaplacian,
    /// `y_t - b Δy + int M(t-s) y(s) ds = χ u`
    OnState,
}

impl MemoryPlacement {
    /// Sign with which `z_1` enters the `y` equation.
    pub fn sign(self) -> f64 {
        match self {
            MemoryPlacement::OnLaplacian => 1.0,
            MemoryPlacement::OnState => -1.0,
        }
    }

    /// `L` applied to `y` inside the memory integral, as `(identity, laplacian)` weights.
    fn operator(self) -> Block {
        match self {
            MemoryPlacement::OnLaplacian => Block {
                identity: 0.0,
                laplacian: 1.0,
            },
            MemoryPlacement::OnState => Block {
                identity: 1.0,
                laplacian: 0.0,
            },
        }
    }

    pub(crate) fn apply(self, h: f64, y: &[f64], out: &mut [f64]) {
        match self {
            MemoryPlacement::OnLaplacian => crate::geometry::laplacian_into(h, y, out),
            MemoryPlacement::OnState => out.copy_from_slice(y),
        }
    }
}

/// `identity * I + laplacian * Δ` acting on one field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    pub identity: f64,
    pub laplacian: f64,
}

impl Block {
    fn scaled(self, s: f64) -> Block {
        Block {
            identity: s * self.identity,
            laplacian: s * self.laplacian,
        }
    }
}

/// Sparse block matrix over the state fields; entry `(row, col, block)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOperator {
    n_fields: usize,
    entries: Vec<(usize, usize, Block)>,
}

impl BlockOperator {
    fn new(n_fields: usize) -> Self {
        Self {
            n_fields,
            entries: Vec::new(),
        }
    }

    fn push(&mut self, row: usize, col: usize, block: Block) {
        if block.identity != 0.0 || block.laplacian != 0.0 {
            self.entries.push((row, col, block));
        }
    }

    pub fn n_fields(&self) -> usize {
        self.n_fields
    }

    pub fn entries(&self) -> &[(usize, usize, Block)] {
        &self.entries
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formulation {
    Cascade {
        placement: MemoryPlacement,
        kernel: Kernel,
        companion: CompanionSystem,
    },
    /// `z = y + int_0^t y`, state `(z, y)`, for `M = 1`, `b = 1`.
    IntegratedTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSystem {
    grid: SpatialGrid,
    formulation: Formulation,
    diffusivity: f64,
    support: MovingSupport,
    horizon: f64,
    operator: BlockOperator,
    field_names: Vec<String>,
    control_fields: Vec<usize>,
    seeded_fields: Vec<usize>,
    y_field: usize,
}

impl CoupledSystem {
    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn formulation(&self) -> &Formulation {
        &self.formulation
    }

    pub fn diffusivity(&self) -> f64 {
        self.diffusivity
    }

    pub fn support(&self) -> &MovingSupport {
        &self.support
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn operator(&self) -> &BlockOperator {
        &self.operator
    }

    pub fn n_fields(&self) -> usize {
        self.operator.n_fields
    }

    /// Number of cascade states `m` (zero for the integrated transform).
    pub fn cascade_order(&self) -> usize {
        match &self.formulation {
            Formulation::Cascade { companion, .. } => companion.order(),
            Formulation::IntegratedTransform => 0,
        }
    }

    pub fn field_names(&self) -> &[String] {
        &self.field_names
    }

    /// Fields that receive `χ u`.
    pub fn control_fields(&self) -> &[usize] {
        &self.control_fields
    }

    pub fn y_field(&self) -> usize {
        self.y_field
    }

    /// Field realizing the memory constraint `int_0^T M(T-s) L y(s) ds`
    /// (`z_1` for the cascade, `z` for the integrated transform).
    pub fn memory_field(&self) -> usize {
        match self.formulation {
            Formulation::Cascade { .. } => 1,
            Formulation::IntegratedTransform => 0,
        }
    }

    /// Fields driven to zero at the final time. By default `y` and the memory
    /// field; `all_cascade` adds `z_2, ..., z_m`.
    pub fn target_fields(&self, all_cascade: bool) -> Vec<usize> {
        match self.formulation {
            Formulation::Cascade { .. } if all_cascade => (0..self.n_fields()).collect(),
            Formulation::Cascade { .. } => vec![0, 1],
            Formulation::IntegratedTransform => vec![0, 1],
        }
    }

    /// State vector (interleaved node-major layout) for initial datum `y0`.
    pub fn initial_state(&self, y0: &Field) -> Result<Vec<f64>> {
        if y0.grid() != &self.grid {
            return Err(Error::Usage(
                "initial datum lives on a different grid".into(),
            ));
        }
        let f = self.n_fields();
        let mut x = vec![0.0; f * self.grid.len()];
        for (i, v) in y0.values().iter().enumerate() {
            for &k in &self.seeded_fields {
                x[i * f + k] = *v;
            }
        }
        Ok(x)
    }
}

/// Assembles the cascade for an exp-poly (or zero) kernel.
pub fn build_cascade(
    kernel: &Kernel,
    placement: MemoryPlacement,
    diffusivity: f64,
    grid: SpatialGrid,
    support: MovingSupport,
    horizon: f64,
) -> Result<CoupledSystem> {
    build_cascade_with(
        kernel,
        placement,
        diffusivity,
        grid,
        support,
        horizon,
        false,
    )
}

/// As [`build_cascade`], optionally admitting `b = 0` with memory on the Laplacian.
pub fn build_cascade_with(
    kernel: &Kernel,
    placement: MemoryPlacement,
    diffusivity: f64,
    grid: SpatialGrid,
    support: MovingSupport,
    horizon: f64,
    allow_degenerate: bool,
) -> Result<CoupledSystem> {
    kernel.validate()?;
    check_common(diffusivity, &grid, &support, horizon)?;
    if diffusivity == 0.0 && placement == MemoryPlacement::OnLaplacian && !allow_degenerate {
        return Err(Error::Config(
            "diffusivity: b = 0 with memory on the Laplacian is rejected unless allow_degenerate is set"
                .into(),
        ));
    }
    let companion = kernel.companion()?;
    let m = companion.order();
    let mut op = BlockOperator::new(m + 1);
    let lap = placement.operator();
    op.push(
        0,
        0,
        Block {
            identity: 0.0,
            laplacian: diffusivity,
        },
    );
    op.push(
        0,
        1,
        Block {
            identity: placement.sign(),
            laplacian: 0.0,
        },
    );
    for k in 1..=m {
        op.push(k, 0, lap.scaled(companion.seeds()[k - 1]));
        if k < m {
            op.push(
                k,
                k + 1,
                Block {
                    identity: 1.0,
                    laplacian: 0.0,
                },
            );
        }
    }
    for (j, c) in companion.recurrence().iter().enumerate() {
        op.push(
            m,
            j + 1,
            Block {
                identity: *c,
                laplacian: 0.0,
            },
        );
    }
    let mut field_names = vec!["y".to_string()];
    field_names.extend((1..=m).map(|k| format!("z{k}")));
    Ok(CoupledSystem {
        grid,
        formulation: Formulation::Cascade {
            placement,
            kernel: kernel.clone(),
            companion,
        },
        diffusivity,
        support,
        horizon,
        operator: op,
        field_names,
        control_fields: vec![0],
        seeded_fields: vec![0],
        y_field: 0,
    })
}

/// The `z = y + int y` reformulation of the `M = 1`, `b = 1` memory equation,
/// with `z_t` substituted into the `y` equation:
///
/// ```text
/// z' = Δz + y + χ u
/// y' = Δz + χ u
/// ```
pub fn build_integrated_transform(
    kernel: &Kernel,
    diffusivity: f64,
    grid: SpatialGrid,
    support: MovingSupport,
    horizon: f64,
) -> Result<CoupledSystem> {
    let unit = Kernel::ExpPoly {
        rate: 0.0,
        coeffs: vec![1.0],
    };
    if kernel != &unit || diffusivity != 1.0 {
        return Err(Error::Usage(
            "the integrated transform requires M = 1 and b = 1".into(),
        ));
    }
    check_common(diffusivity, &grid, &support, horizon)?;
    let mut op = BlockOperator::new(2);
    op.push(
        0,
        0,
        Block {
            identity: 0.0,
            laplacian: 1.0,
        },
    );
    op.push(
        0,
        1,
        Block {
            identity: 1.0,
            laplacian: 0.0,
        },
    );
    op.push(
        1,
        0,
        Block {
            identity: 0.0,
            laplacian: 1.0,
        },
    );
    Ok(CoupledSystem {
        grid,
        formulation: Formulation::IntegratedTransform,
        diffusivity,
        support,
        horizon,
        operator: op,
        field_names: vec!["z".into(), "y".into()],
        control_fields: vec![0, 1],
        seeded_fields: vec![0, 1],
        y_field: 1,
    })
}

fn check_common(
    diffusivity: f64,
    grid: &SpatialGrid,
    support: &MovingSupport,
    horizon: f64,
) -> Result<()> {
    if !(diffusivity.is_finite() && diffusivity >= 0.0) {
        return Err(Error::Config(format!(
            "diffusivity: must be >= 0, got {diffusivity}"
        )));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Config(format!(
            "time.horizon: must be positive, got {horizon}"
        )));
    }
    support.validate_for(grid.length(), horizon)
}

/// `int_0^t M(t-s) L y(s) ds` by the trapezoidal rule over the trajectory's
/// time nodes, using the trajectory's `y` only.
pub fn memory_quadrature(
    traj: &Trajectory,
    kernel: &Kernel,
    placement: MemoryPlacement,
    t: f64,
) -> Result<Field> {
    let time = traj.time();
    let n = time.index_of(t)?;
    let grid = *traj.grid();
    let mut acc = vec![0.0; grid.len()];
    let mut ly = vec![0.0; grid.len()];
    let dt = time.dt();
    for j in 0..=n {
        if n == 0 {
            break;
        }
        let w = if j == 0 || j == n { 0.5 * dt } else { dt };
        let mk = kernel.eval(time.time(n - j), 0)?;
        placement.apply(grid.h(), &traj.y(j), &mut ly);
        for (a, v) in acc.iter_mut().zip(&ly) {
            *a += w * mk * v;
        }
    }
    Field::new(grid, acc)
}

/// Norm of [`memory_quadrature`]: the memory residual at time `t`.
pub fn memory_residual(
    traj: &Trajectory,
    kernel: &Kernel,
    placement: MemoryPlacement,
    t: f64,
) -> Result<f64> {
    let f = memory_quadrature(traj, kernel, placement, t)?;
    Ok(dot(f.grid().h(), f.values(), f.values()).sqrt())
}
