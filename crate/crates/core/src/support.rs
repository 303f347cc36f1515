//! Moving control region `omega(t) = (a(t), b(t))`, its cell-averaged grid
//! indicator, and the coverage / splitting checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Field, SpatialGrid};
use crate::simulator::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub t: f64,
    pub left: f64,
    pub right: f64,
}

/// Piecewise-linear path of intervals. A single breakpoint means a static
/// region for all `t >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Breakpoint>", into = "Vec<Breakpoint>")]
pub struct MovingSupport {
    breakpoints: Vec<Breakpoint>,
}

impl TryFrom<Vec<Breakpoint>> for MovingSupport {
    type Error = Error;

    fn try_from(breakpoints: Vec<Breakpoint>) -> Result<Self> {
        Self::new(breakpoints)
    }
}

impl From<MovingSupport> for Vec<Breakpoint> {
    fn from(s: MovingSupport) -> Self {
        s.breakpoints
    }
}

impl MovingSupport {
    pub fn new(breakpoints: Vec<Breakpoint>) -> Result<Self> {
        let Some(first) = breakpoints.first() else {
            return Err(Error::Config(
                "support: at least one breakpoint required".into(),
            ));
        };
        if first.t != 0.0 {
            return Err(Error::Config(format!(
                "support[0].t: schedule must start at t = 0, got {}",
                first.t
            )));
        }
        for (j, bp) in breakpoints.iter().enumerate() {
            if !(bp.t.is_finite() && bp.left.is_finite() && bp.right.is_finite()) {
                return Err(Error::Config(format!(
                    "support[{j}]: values must be finite"
                )));
            }
            if bp.left < 0.0 {
                return Err(Error::Config(format!(
                    "support[{j}].left: must be >= 0, got {}",
                    bp.left
                )));
            }
            if bp.left >= bp.right {
                return Err(Error::Config(format!(
                    "support[{j}]: left ({}) must be smaller than right ({})",
                    bp.left, bp.right
                )));
            }
            if j > 0 && bp.t <= breakpoints[j - 1].t {
                return Err(Error::Config(format!(
                    "support[{j}].t: breakpoint times must be strictly increasing"
                )));
            }
        }
        Ok(Self { breakpoints })
    }

    /// Static interval `(left, right)`.
    pub fn fixed(left: f64, right: f64) -> Result<Self> {
        Self::new(vec![Breakpoint {
            t: 0.0,
            left,
            right,
        }])
    }

    /// Interval of fixed `width` whose left end moves linearly from
    /// `start` at `t = 0` to `end` at `t = horizon`.
    pub fn sweep(start: f64, end: f64, width: f64, horizon: f64) -> Result<Self> {
        Self::new(vec![
            Breakpoint {
                t: 0.0,
                left: start,
                right: start + width,
            },
            Breakpoint {
                t: horizon,
                left: end,
                right: end + width,
            },
        ])
    }

    pub fn breakpoints(&self) -> &[Breakpoint] {
        &self.breakpoints
    }

    pub fn is_static(&self) -> bool {
        self.breakpoints
            .windows(2)
            .all(|w| w[0].left == w[1].left && w[0].right == w[1].right)
    }

    /// Last time the schedule is defined for, infinite for a single breakpoint.
    pub fn end_time(&self) -> f64 {
        if self.breakpoints.len() == 1 {
            f64::INFINITY
        } else {
            self.breakpoints.last().unwrap().t
        }
    }

    /// Checks the schedule against a domain and horizon.
    pub fn validate_for(&self, length: f64, horizon: f64) -> Result<()> {
        for (j, bp) in self.breakpoints.iter().enumerate() {
            if bp.right > length {
                return Err(Error::Config(format!(
                    "support[{j}].right: must be <= domain length {length}, got {}",
                    bp.right
                )));
            }
        }
        if self.end_time() < horizon {
            return Err(Error::Config(format!(
                "support: schedule ends at t = {} before the horizon {horizon}",
                self.end_time()
            )));
        }
        Ok(())
    }

    /// `(a(t), b(t))`.
    pub fn interval_at(&self, t: f64) -> Result<(f64, f64)> {
        if t.is_nan() || t < 0.0 || t > self.end_time() {
            return Err(Error::Usage(format!(
                "t = {t} outside the support schedule [0, {}]",
                self.end_time()
            )));
        }
        let bps = &self.breakpoints;
        let j = bps.partition_point(|bp| bp.t <= t);
        if j == bps.len() {
            let last = bps[bps.len() - 1];
            return Ok((last.left, last.right));
        }
        let (p, q) = (bps[j - 1], bps[j]);
        let s = (t - p.t) / (q.t - p.t);
        Ok((
            p.left + s * (q.left - p.left),
            p.right + s * (q.right - p.right),
        ))
    }

    /// Cell average of the indicator of `omega(t)` on each interior cell
    /// `(x_i - h/2, x_i + h/2)`.
    pub fn indicator_weights(&self, t: f64, grid: &SpatialGrid) -> Result<Field> {
        let (a, b) = self.interval_at(t)?;
        let h = grid.h();
        let values = grid
            .nodes()
            .map(|x| {
                let lo = (x - 0.5 * h).max(a);
                let hi = (x + 0.5 * h).min(b);
                ((hi - lo).max(0.0) / h).min(1.0)
            })
            .collect();
        Field::new(*grid, values)
    }

    /// Coverage of every interior node by `omega(t_n)` for some time node.
    pub fn check_coverage(&self, grid: &SpatialGrid, time: &TimeGrid) -> Result<Coverage> {
        let mut covered = vec![false; grid.len()];
        for t in time.times() {
            let (a, b) = self.interval_at(t)?;
            for (i, x) in grid.nodes().enumerate() {
                if a < x && x < b {
                    covered[i] = true;
                }
            }
        }
        let uncovered: Vec<usize> = (0..grid.len()).filter(|&i| !covered[i]).collect();
        Ok(Coverage {
            covered: uncovered.is_empty(),
            uncovered,
        })
    }

    /// True iff `0 < a(t_n)` and `b(t_n) < L` at every time node, so the
    /// complement of `omega` has two components.
    pub fn check_split(&self, grid: &SpatialGrid, time: &TimeGrid) -> Result<bool> {
        for t in time.times() {
            let (a, b) = self.interval_at(t)?;
            if !(a > 0.0 && b < grid.length()) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Largest endpoint displacement between consecutive time nodes.
    pub fn max_step_displacement(&self, time: &TimeGrid) -> Result<f64> {
        let mut prev = self.interval_at(0.0)?;
        let mut worst = 0.0f64;
        for t in time.times().skip(1) {
            let cur = self.interval_at(t)?;
            worst = worst
                .max((cur.0 - prev.0).abs())
                .max((cur.1 - prev.1).abs());
            prev = cur;
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub covered: bool,
    pub uncovered: Vec<usize>,
}

/// Coverage and split flags, plus a warning when the region moves more
/// than one cell per time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub coverage: bool,
    pub split: bool,
    pub uncovered_nodes: Vec<usize>,
    pub fast_motion: bool,
}

pub fn geometry_report(
    support: &MovingSupport,
    grid: &SpatialGrid,
    time: &TimeGrid,
) -> Result<GeometryReport> {
    let cov = support.check_coverage(grid, time)?;
    let split = support.check_split(grid, time)?;
    let fast_motion = support.max_step_displacement(time)? > grid.h();
    if fast_motion {
        log::warn!("control region moves more than one cell per time step; coverage is checked only at time nodes");
    }
    Ok(GeometryReport {
        coverage: cov.covered,
        split,
        uncovered_nodes: cov.uncovered,
        fast_motion,
    })
}
