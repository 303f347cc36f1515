//! One-dimensional domain `(0, L)` with a uniform interior grid and
//! homogeneous Dirichlet boundary values.

use crate::error::{Error, Result};

/// Uniform grid of `n_interior` nodes strictly inside `(0, L)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    length: f64,
    n_interior: usize,
    spacing: f64,
}

impl SpatialGrid {
    pub fn new(length: f64, n_interior: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::Config(format!(
                "domain length must be positive and finite, got {length}"
            )));
        }
        if n_interior < 2 {
            return Err(Error::Config(format!(
                "n_interior must be at least 2, got {n_interior}"
            )));
        }
        Ok(Self {
            length,
            n_interior,
            spacing: length / (n_interior + 1) as f64,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn len(&self) -> usize {
        self.n_interior
    }

    pub fn is_empty(&self) -> bool {
        self.n_interior == 0
    }

    /// Mesh width `h = L / (n + 1)`.
    pub fn h(&self) -> f64 {
        self.spacing
    }

    /// Coordinate of interior node `i`.
    pub fn node(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.spacing
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_interior).map(|i| self.node(i))
    }

    /// Samples `f` at the interior nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: *self,
            values: self.nodes().map(f).collect(),
        }
    }

    pub fn zeros(&self) -> Field {
        Field {
            grid: *self,
            values: vec![0.0; self.n_interior],
        }
    }

    /// Eigenvalue of the discrete Dirichlet Laplacian for mode `k >= 1`.
    pub fn laplacian_eigenvalue(&self, k: usize) -> f64 {
        let h = self.spacing;
        let s = (k as f64 * std::f64::consts::PI * h / (2.0 * self.length)).sin();
        -4.0 / (h * h) * s * s
    }
}

/// Grid function on the interior nodes. Boundary values are zero and not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: SpatialGrid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: SpatialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Usage(format!(
                "field has {} values but the grid has {} interior nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "field value at node {i} is not finite"
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, alpha: f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &Field, beta: f64) -> Result<Field> {
        self.same_grid(other)?;
        Ok(Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        })
    }

    pub fn laplacian(&self) -> Field {
        let mut out = vec![0.0; self.values.len()];
        laplacian_into(self.grid.h(), &self.values, &mut out);
        Field {
            grid: self.grid,
            values: out,
        }
    }

    pub fn inner(&self, other: &Field) -> Result<f64> {
        self.same_grid(other)?;
        Ok(dot(self.grid.h(), &self.values, &other.values))
    }

    pub fn norm(&self) -> f64 {
        dot(self.grid.h(), &self.values, &self.values).sqrt()
    }

    fn same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Usage("fields live on different grids".into()));
        }
        Ok(())
    }
}

/// Three-point Dirichlet Laplacian with zero ghost values.
pub fn apply_laplacian(f: &Field) -> Field {
    f.laplacian()
}

/// Discrete `L^2` product `h * sum f_i g_i`.
pub fn inner(f: &Field, g: &Field) -> Result<f64> {
    f.inner(g)
}

pub(crate) fn laplacian_into(h: f64, f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let inv_h2 = 1.0 / (h * h);
    for i in 0..n {
        let left = if i > 0 { f[i - 1] } else { 0.0 };
        let right = if i + 1 < n { f[i + 1] } else { 0.0 };
        out[i] = (left - 2.0 * f[i] + right) * inv_h2;
    }
}

pub(crate) fn dot(h: f64, f: &[f64], g: &[f64]) -> f64 {
    h * f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_spacing_and_nodes() {
        let g = SpatialGrid::new(1.0, 3).unwrap();
        assert_eq!(g.h(), 0.25);
        assert_eq!(g.nodes().collect::<Vec<_>>(), vec![0.25, 0.5, 0.75]);
        let g = SpatialGrid::new(PI, 99).unwrap();
        assert!((g.h() - PI / 100.0).abs() < 1e-15);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(matches!(SpatialGrid::new(2.0, 1), Err(Error::Config(_))));
        assert!(matches!(SpatialGrid::new(0.0, 5), Err(Error::Config(_))));
        assert!(matches!(SpatialGrid::new(-1.0, 5), Err(Error::Config(_))));
    }

    #[test]
    fn stencil_on_constant() {
        let g = SpatialGrid::new(1.0, 3).unwrap();
        let f = g.sample(|_| 1.0);
        assert_eq!(f.laplacian().values(), &[-16.0, 0.0, -16.0]);
        assert_eq!(g.zeros().laplacian().values(), &[0.0; 3]);
    }

    #[test]
    fn inner_products() {
        let g = SpatialGrid::new(1.0, 3).unwrap();
        let one = g.sample(|_| 1.0);
        assert_eq!(inner(&one, &one).unwrap(), 0.75);
        assert_eq!(inner(&g.zeros(), &g.zeros()).unwrap(), 0.0);
        let other = SpatialGrid::new(1.0, 4).unwrap().zeros();
        assert!(matches!(inner(&one, &other), Err(Error::Usage(_))));
    }

    #[test]
    fn sine_norm_converges_to_half() {
        for n in [9, 99, 999] {
            let g = SpatialGrid::new(1.0, n).unwrap();
            let f = g.sample(|x| (PI * x).sin());
            // the trapezoid rule is exact for sin^2 on a uniform grid
            assert!((f.inner(&f).unwrap() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn sine_is_approximate_eigenfunction_second_order() {
        let mut errs = Vec::new();
        for n in [19, 39, 79] {
            let g = SpatialGrid::new(2.0, n).unwrap();
            let f = g.sample(|x| (PI * x / 2.0).sin());
            let lap = f.laplacian();
            let exact = f.scaled(-(PI / 2.0).powi(2));
            let err = lap.combine(1.0, &exact, -1.0).unwrap().norm() / exact.norm();
            errs.push(err);
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(ratio > 3.8 && ratio < 4.2, "ratio {ratio}");
        }
    }

    #[test]
    fn discrete_eigenpairs_exact() {
        let g = SpatialGrid::new(1.5, 50).unwrap();
        for k in [1, 2, 7, 30, 50] {
            let v = g.sample(|x| (k as f64 * PI * x / 1.5).sin());
            let lam = g.laplacian_eigenvalue(k);
            let lv = v.laplacian();
            let err = lv.combine(1.0, &v, -lam).unwrap().norm() / lv.norm();
            assert!(err < 1e-12, "k={k} err={err}");
        }
    }

    fn random_field(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-1.0..1.0f64, n)
    }

    proptest! {
        #[test]
        fn laplacian_symmetric_negative(
            (f, g) in (2usize..200).prop_flat_map(|n| (random_field(n), random_field(n)))
        ) {
            let grid = SpatialGrid::new(1.0, f.len()).unwrap();
            let f = Field::new(grid, f).unwrap();
            let g = Field::new(grid, g).unwrap();
            let a = f.laplacian().inner(&g).unwrap();
            let b = f.inner(&g.laplacian()).unwrap();
            let scale = f.laplacian().norm() * g.norm() + 1e-300;
            prop_assert!((a - b).abs() <= 1e-12 * scale);
            prop_assert!(f.laplacian().inner(&f).unwrap() <= 1e-12 * f.laplacian().norm() * f.norm());
        }

        #[test]
        fn laplacian_linear(
            (f, g) in (2usize..100).prop_flat_map(|n| (random_field(n), random_field(n))),
            alpha in -3.0..3.0f64,
            beta in -3.0..3.0f64,
        ) {
            let grid = SpatialGrid::new(1.0, f.len()).unwrap();
            let f = Field::new(grid, f).unwrap();
            let g = Field::new(grid, g).unwrap();
            let lhs = f.combine(alpha, &g, beta).unwrap().laplacian();
            let rhs = f.laplacian().combine(alpha, &g.laplacian(), beta).unwrap();
            let diff = lhs.combine(1.0, &rhs, -1.0).unwrap().norm();
            prop_assert!(diff <= 1e-12 * (rhs.norm() + lhs.norm() + 1.0));
        }
    }
}
