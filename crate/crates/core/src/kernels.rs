//! Memory kernels: exp-polynomials `e^{at} (a_0 + a_1 t + ... + a_K t^K)`,
//! truncatable Taylor data for analytic kernels, and the constant-coefficient
//! ODE each exp-polynomial satisfies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Zero,
    ExpPoly {
        rate: f64,
        coeffs: Vec<f64>,
    },
    /// `M(t) = sum_j c_j t^j`, valid on `[0, radius)`.
    Taylor {
        coeffs: Vec<f64>,
        radius: f64,
    },
}

impl Kernel {
    pub fn exp_poly(rate: f64, coeffs: Vec<f64>) -> Result<Self> {
        let k = Kernel::ExpPoly { rate, coeffs };
        k.validate()?;
        Ok(k)
    }

    pub fn taylor(coeffs: Vec<f64>, radius: f64) -> Result<Self> {
        let k = Kernel::Taylor { coeffs, radius };
        k.validate()?;
        Ok(k)
    }

    /// Taylor data of `e^{rate t}` with `n_terms` coefficients.
    pub fn taylor_of_exp(rate: f64, n_terms: usize) -> Self {
        let mut coeffs = Vec::with_capacity(n_terms);
        let mut c = 1.0;
        for j in 0..n_terms {
            coeffs.push(c);
            c *= rate / (j + 1) as f64;
        }
        Kernel::Taylor {
            coeffs,
            radius: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Kernel::Zero => Ok(()),
            Kernel::ExpPoly { rate, coeffs } => {
                if coeffs.is_empty() {
                    return Err(Error::Config("kernel.coeffs must not be empty".into()));
                }
                if !rate.is_finite() || coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Config("kernel coefficients must be finite".into()));
                }
                if coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
                    return Err(Error::Config(
                        "kernel.coeffs: leading coefficient must be nonzero when K > 0".into(),
                    ));
                }
                Ok(())
            }
            Kernel::Taylor { coeffs, radius } => {
                if coeffs.is_empty() {
                    return Err(Error::Config("kernel.coeffs must not be empty".into()));
                }
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Config("kernel coefficients must be finite".into()));
                }
                if radius.is_nan() || *radius <= 0.0 {
                    return Err(Error::Config(format!(
                        "kernel.radius must be positive, got {radius}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// `M^{(r)}(t)`.
    pub fn eval(&self, t: f64, r: usize) -> Result<f64> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::Domain(format!("kernel evaluated at t = {t} < 0")));
        }
        match self {
            Kernel::Zero => Ok(0.0),
            Kernel::ExpPoly { rate, coeffs } => {
                let p = exp_poly_derivative(*rate, coeffs, r);
                Ok((rate * t).exp() * horner(&p, t))
            }
            Kernel::Taylor { coeffs, radius } => {
                if t >= *radius {
                    return Err(Error::Domain(format!(
                        "t = {t} outside the Taylor validity radius {radius}"
                    )));
                }
                Ok(horner(&poly_derivative(coeffs, r), t))
            }
        }
    }

    pub fn companion(&self) -> Result<CompanionSystem> {
        match self {
            Kernel::Zero => Ok(CompanionSystem {
                recurrence: vec![0.0],
                seeds: vec![0.0],
            }),
            Kernel::ExpPoly { rate, coeffs } => {
                let m = coeffs.len();
                // (lambda - a)^m = sum_j C(m, j) (-a)^{m-j} lambda^j
                let recurrence = (0..m)
                    .map(|j| -binomial(m, j) * (-rate).powi((m - j) as i32))
                    .collect();
                let seeds = (0..m)
                    .map(|k| exp_poly_derivative(*rate, coeffs, k)[0])
                    .collect();
                Ok(CompanionSystem { recurrence, seeds })
            }
            Kernel::Taylor { .. } => Err(Error::Usage(
                "Taylor-data kernels have no finite companion system; truncate first".into(),
            )),
        }
    }

    /// Taylor polynomial of degree `order` as an exp-poly kernel with zero rate.
    pub fn truncate(&self, order: usize) -> Result<Truncation> {
        let Kernel::Taylor { coeffs, .. } = self else {
            return Err(Error::Usage(
                "only Taylor-data kernels can be truncated".into(),
            ));
        };
        if order >= coeffs.len() {
            return Err(Error::InsufficientData {
                requested: order,
                available: coeffs.len(),
            });
        }
        let mut kept = coeffs[..=order].to_vec();
        while kept.len() > 1 && *kept.last().unwrap() == 0.0 {
            kept.pop();
        }
        Ok(Truncation {
            kernel: Kernel::ExpPoly {
                rate: 0.0,
                coeffs: kept,
            },
            tail: coeffs[order + 1..].to_vec(),
            first_tail_power: order + 1,
        })
    }

    /// Order of the cascade this kernel reduces to.
    pub fn cascade_order(&self) -> Option<usize> {
        match self {
            Kernel::Zero => Some(1),
            Kernel::ExpPoly { coeffs, .. } => Some(coeffs.len()),
            Kernel::Taylor { .. } => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Kernel::Zero => true,
            Kernel::ExpPoly { coeffs, .. } | Kernel::Taylor { coeffs, .. } => {
                coeffs.iter().all(|c| *c == 0.0)
            }
        }
    }
}

/// Result of truncating Taylor data, with the dropped coefficients kept for bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Truncation {
    pub kernel: Kernel,
    tail: Vec<f64>,
    first_tail_power: usize,
}

impl Truncation {
    /// `sum_{j > K} |c_j| T^j` over the available coefficients: a sup-norm
    /// bound of the truncation error on `[0, T]`.
    pub fn tail_bound(&self, horizon: f64) -> f64 {
        self.tail
            .iter()
            .enumerate()
            .map(|(i, c)| c.abs() * horizon.powi((self.first_tail_power + i) as i32))
            .sum()
    }
}

/// Linear recurrence `M^{(m)} = sum_{j<m} c_j M^{(j)}` with seeds `M^{(k)}(0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanionSystem {
    recurrence: Vec<f64>,
    seeds: Vec<f64>,
}

impl CompanionSystem {
    pub fn order(&self) -> usize {
        self.seeds.len()
    }

    pub fn recurrence(&self) -> &[f64] {
        &self.recurrence
    }

    pub fn seeds(&self) -> &[f64] {
        &self.seeds
    }

    /// Right-hand side of the first-order form `v' = C v`, `v = (M, M', ...)`.
    pub fn rhs(&self, v: &[f64], out: &mut [f64]) {
        let m = self.order();
        out[..m - 1].copy_from_slice(&v[1..m]);
        out[m - 1] = self.recurrence.iter().zip(v).map(|(c, x)| c * x).sum();
    }
}

fn horner(p: &[f64], t: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

fn poly_derivative(p: &[f64], r: usize) -> Vec<f64> {
    let mut q = p.to_vec();
    for _ in 0..r {
        if q.len() <= 1 {
            return vec![0.0];
        }
        q = q[1..]
            .iter()
            .enumerate()
            .map(|(i, c)| (i + 1) as f64 * c)
            .collect();
    }
    q
}

/// Coefficients of `q_r` with `d^r/dt^r [e^{at} p(t)] = e^{at} q_r(t)`,
/// using `q_{r+1} = a q_r + q_r'`.
fn exp_poly_derivative(rate: f64, p: &[f64], r: usize) -> Vec<f64> {
    let mut q = p.to_vec();
    for _ in 0..r {
        let n = q.len();
        let mut next: Vec<f64> = q.iter().map(|c| rate * c).collect();
        for i in 1..n {
            next[i - 1] += i as f64 * q[i];
        }
        q = next;
    }
    q
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
