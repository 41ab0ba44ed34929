//! Least-deviation safety-filter QPs over a single agent's input:
//!
//! ```text
//! minimize    |u - u_nom|^2
//! subject to  a_k . u >= b_k          (halfspace rows)
//!             u_min <= u <= u_max     (optional box)
//! ```

pub mod dense;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::Vec3;
use dense::{DenseOutcome, DenseProblem};

/// Absolute tolerance on row residuals of an optimal solution.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// Quadratic weight on the shared slack of a relaxed solve.
pub const SLACK_WEIGHT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpRow {
    pub a: Vec3,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpProblem {
    pub u_nom: Vec3,
    pub rows: Vec<QpRow>,
    pub bounds: Option<(Vec3, Vec3)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QpStatus {
    Optimal,
    /// The rows were jointly infeasible; a shared slack was added to all of
    /// them.
    Relaxed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u_star: Vec3,
    pub deviation: f64,
    pub active_rows: Vec<usize>,
    /// Row multipliers for the half-scaled objective: at an optimum,
    /// `u_star - u_nom = sum_k row_multipliers[k] a_k + lower - upper`.
    pub row_multipliers: Vec<f64>,
    pub lower_multipliers: Vec3,
    pub upper_multipliers: Vec3,
    pub status: QpStatus,
    pub slack_used: f64,
    pub iterations: usize,
}

impl QpProblem {
    pub fn new(u_nom: Vec3) -> Self {
        QpProblem {
            u_nom,
            rows: Vec::new(),
            bounds: None,
        }
    }

    pub fn with_row(mut self, a: Vec3, b: f64) -> Self {
        self.rows.push(QpRow { a, b });
        self
    }

    pub fn with_bounds(mut self, lo: Vec3, hi: Vec3) -> Self {
        self.bounds = Some((lo, hi));
        self
    }

    fn validate(&self) -> Result<()> {
        if !self.u_nom.is_finite() {
            return Err(Error::NonFinite("nominal input"));
        }
        for row in &self.rows {
            if !row.a.is_finite() || !row.b.is_finite() {
                return Err(Error::NonFinite("constraint row"));
            }
            if row.a.norm_sq() == 0.0 {
                return Err(Error::ZeroNormal);
            }
        }
        if let Some((lo, hi)) = self.bounds {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::NonFinite("input bounds"));
            }
            if (0..3).any(|k| lo[k] > hi[k]) {
                return Err(Error::Config("input box is empty".into()));
            }
        }
        Ok(())
    }

    /// Rows followed by the six box rows (lower x,y,z then upper x,y,z).
    /// With `slack` the variable vector gains a fourth entry `sigma` with
    /// slack `sigma / sqrt(SLACK_WEIGHT)` on every halfspace row and
    /// `sigma >= 0`.
    fn to_dense(&self, slack: bool) -> DenseProblem {
        let n = if slack { 4 } else { 3 };
        let scale = 1.0 / SLACK_WEIGHT.sqrt();
        let mut x0 = self.u_nom.to_array().to_vec();
        if slack {
            x0.push(0.0);
        }
        let mut normals = Vec::new();
        let mut rhs = Vec::new();
        for row in &self.rows {
            let mut c = row.a.to_array().to_vec();
            if slack {
                c.push(scale);
            }
            normals.push(c);
            rhs.push(row.b);
        }
        if let Some((lo, hi)) = self.bounds {
            for k in 0..3 {
                let mut c = vec![0.0; n];
                c[k] = 1.0;
                normals.push(c);
                rhs.push(lo[k]);
            }
            for k in 0..3 {
                let mut c = vec![0.0; n];
                c[k] = -1.0;
                normals.push(c);
                rhs.push(-hi[k]);
            }
        }
        if slack {
            let mut c = vec![0.0; n];
            c[3] = 1.0;
            normals.push(c);
            rhs.push(0.0);
        }
        DenseProblem { x0, normals, rhs }
    }

    fn unpack(&self, sol: dense::DenseSolution, status: QpStatus) -> QpSolution {
        let m = self.rows.len();
        let u_star = Vec3::from_slice(&sol.x[..3]);
        let slack_used = if status == QpStatus::Relaxed {
            sol.x[3].max(0.0) / SLACK_WEIGHT.sqrt()
        } else {
            0.0
        };
        let (lower, upper) = if self.bounds.is_some() {
            (
                Vec3::from_slice(&sol.multipliers[m..m + 3]),
                Vec3::from_slice(&sol.multipliers[m + 3..m + 6]),
            )
        } else {
            (Vec3::ZERO, Vec3::ZERO)
        };
        QpSolution {
            u_star,
            deviation: (u_star - self.u_nom).norm_sq(),
            active_rows: sol.active.iter().copied().filter(|&k| k < m).collect(),
            row_multipliers: sol.multipliers[..m].to_vec(),
            lower_multipliers: lower,
            upper_multipliers: upper,
            status,
            slack_used,
            iterations: sol.iterations,
        }
    }
}

/// Closed-form projection of `u_nom` onto `{u : a.u >= b}` and its squared
/// distance.
pub fn project_single(u_nom: Vec3, a: Vec3, b: f64) -> Result<(Vec3, f64)> {
    let aa = a.norm_sq();
    if aa == 0.0 {
        return Err(Error::ZeroNormal);
    }
    let gap = (b - a.dot(u_nom)).max(0.0);
    Ok((u_nom + a * (gap / aa), gap * gap / aa))
}

/// Exact minimizer via the dual active-set method. Jointly infeasible rows
/// fall back to a shared-slack relaxation with status [`QpStatus::Relaxed`].
pub fn solve(p: &QpProblem) -> Result<QpSolution> {
    p.validate()?;
    if let DenseOutcome::Optimal(sol) = p.to_dense(false).solve()? {
        return Ok(p.unpack(sol, QpStatus::Optimal));
    }
    match p.to_dense(true).solve()? {
        DenseOutcome::Optimal(sol) => Ok(p.unpack(sol, QpStatus::Relaxed)),
        DenseOutcome::Infeasible => Err(Error::Config("input box is empty".into())),
    }
}

impl QpSolution {
    /// Largest violation among stationarity, dual sign, primal feasibility
    /// and complementary slackness.
    pub fn kkt_residual(&self, p: &QpProblem) -> f64 {
        let mut grad = self.u_star - p.u_nom;
        let mut worst: f64 = 0.0;
        for (row, &w) in p.rows.iter().zip(&self.row_multipliers) {
            grad = grad - row.a * w;
            let s = row.a.dot(self.u_star) - row.b;
            worst = worst.max(-w).max(-s).max((w * s).abs());
        }
        if let Some((lo, hi)) = p.bounds {
            grad = grad - self.lower_multipliers + self.upper_multipliers;
            for k in 0..3 {
                let (wl, wu) = (self.lower_multipliers[k], self.upper_multipliers[k]);
                let (sl, su) = (self.u_star[k] - lo[k], hi[k] - self.u_star[k]);
                worst = worst.max(-wl).max(-wu).max(-sl).max(-su);
                worst = worst.max((wl * sl).abs()).max((wu * su).abs());
            }
        }
        worst.max(grad.norm())
    }
}

/// Brute-force minimum deviation over a grid laid on the input box.
///
/// Axes no row touches decouple and are set to the clamped nominal value;
/// the remaining axes are sampled at `lo + k * grid_step`. Returns `None`
/// if no grid point satisfies every row. Grid points are feasible, so the
/// result is an upper bound on the true optimum.
pub fn deviation_oracle(p: &QpProblem, grid_step: f64) -> Result<Option<f64>> {
    p.validate()?;
    let Some((lo, hi)) = p.bounds else {
        return Err(Error::Config("deviation oracle needs input bounds".into()));
    };
    if !(grid_step > 0.0) {
        return Err(Error::Config("grid step must be positive".into()));
    }
    let coupled: Vec<usize> = (0..3).filter(|&k| p.rows.iter().any(|r| r.a[k] != 0.0)).collect();
    let mut base = p.u_nom.clamp(lo, hi).to_array();
    let counts: Vec<usize> = coupled
        .iter()
        .map(|&k| ((hi[k] - lo[k]) / grid_step + 1e-9).floor() as usize + 1)
        .collect();
    let total: usize = counts.iter().product();
    let mut best: Option<f64> = None;
    for flat in 0..total {
        let mut rem = flat;
        for (idx, &k) in coupled.iter().enumerate() {
            base[k] = lo[k] + (rem % counts[idx]) as f64 * grid_step;
            rem /= counts[idx];
        }
        let u = Vec3::new(base[0], base[1], base[2]);
        if p.rows.iter().all(|r| r.a.dot(u) >= r.b) {
            let d = (u - p.u_nom).norm_sq();
            if best.is_none_or(|b| d < b) {
                best = Some(d);
            }
        }
    }
    Ok(best)
}
