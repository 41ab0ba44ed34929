//! Dual active-set method for Euclidean projection onto a polyhedron:
//!
//! ```text
//! minimize    1/2 |x - x0|^2
//! subject to  c_k . x >= d_k     for every row k
//! ```
//!
//! This is the Goldfarb-Idnani scheme specialised to an identity Hessian.
//! The iterate starts at the unconstrained minimizer and stays dual
//! feasible; each outer pass picks the most violated row and moves along
//! the projection of its normal onto the complement of the active normals,
//! dropping active rows whose multipliers would turn negative. Working sets
//! are tiny, so the active normals are re-factored (thin QR) from scratch
//! on every pass.

use crate::error::{Error, Result};

/// Rows closer than this to satisfied are treated as satisfied.
pub const FEAS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseProblem {
    pub x0: Vec<f64>,
    /// Row normals, each of length `x0.len()`.
    pub normals: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DenseOutcome {
    Optimal(DenseSolution),
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseSolution {
    pub x: Vec<f64>,
    /// One multiplier per row; zero for rows outside the final active set.
    /// Stationarity reads `x - x0 = sum_k multipliers[k] * normals[k]`.
    pub multipliers: Vec<f64>,
    /// Active rows in ascending index order.
    pub active: Vec<usize>,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Thin QR factorization `N = Q R` of the active normals by Gram-Schmidt
/// with one re-orthogonalization pass. `q` holds orthonormal columns, `r` is
/// upper triangular and row-major. `None` if a column is numerically
/// dependent on its predecessors.
struct ActiveQr {
    q: Vec<Vec<f64>>,
    r: Vec<f64>,
    k: usize,
}

impl ActiveQr {
    fn new(normals: &[Vec<f64>], active: &[usize]) -> Option<Self> {
        let k = active.len();
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut r = vec![0.0; k * k];
        for (col, &a) in active.iter().enumerate() {
            let mut v = normals[a].clone();
            let norm0 = dot(&v, &v).sqrt();
            for _ in 0..2 {
                for (i, qi) in q.iter().enumerate() {
                    let c = dot(qi, &v);
                    r[i * k + col] += c;
                    for (vd, qd) in v.iter_mut().zip(qi) {
                        *vd -= c * qd;
                    }
                }
            }
            let nv = dot(&v, &v).sqrt();
            if nv <= 1e-9 * norm0 {
                return None;
            }
            r[col * k + col] = nv;
            v.iter_mut().for_each(|x| *x /= nv);
            q.push(v);
        }
        Some(ActiveQr { q, r, k })
    }

    /// Splits `n` into `N r + z` with `z` orthogonal to every active normal.
    fn split(&self, n: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut z = n.to_vec();
        let mut coef = vec![0.0; self.k];
        for _ in 0..2 {
            for (i, qi) in self.q.iter().enumerate() {
                let c = dot(qi, &z);
                coef[i] += c;
                for (zd, qd) in z.iter_mut().zip(qi) {
                    *zd -= c * qd;
                }
            }
        }
        (self.back_substitute(coef), z)
    }

    fn back_substitute(&self, mut y: Vec<f64>) -> Vec<f64> {
        let k = self.k;
        for i in (0..k).rev() {
            for j in i + 1..k {
                y[i] -= self.r[i * k + j] * y[j];
            }
            y[i] /= self.r[i * k + i];
        }
        y
    }

    /// Solves `N'N y = rhs`, i.e. `R'R y = rhs`.
    fn solve_normal(&self, mut rhs: Vec<f64>) -> Vec<f64> {
        let k = self.k;
        for i in 0..k {
            for j in 0..i {
                rhs[i] -= self.r[j * k + i] * rhs[j];
            }
            rhs[i] /= self.r[i * k + i];
        }
        self.back_substitute(rhs)
    }
}

impl DenseProblem {
    fn check(&self) -> Result<()> {
        let n = self.x0.len();
        if self.normals.len() != self.rhs.len() {
            return Err(Error::Config("row count mismatch".into()));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("nominal point"));
        }
        for (c, d) in self.normals.iter().zip(&self.rhs) {
            if c.len() != n {
                return Err(Error::Config("row dimension mismatch".into()));
            }
            if c.iter().any(|v| !v.is_finite()) || !d.is_finite() {
                return Err(Error::NonFinite("constraint row"));
            }
            if c.iter().all(|&v| v == 0.0) {
                return Err(Error::ZeroNormal);
            }
        }
        Ok(())
    }

    fn residual(&self, x: &[f64], k: usize) -> f64 {
        dot(&self.normals[k], x) - self.rhs[k]
    }

    /// Most violated row by normalized residual; ties go to the lowest index.
    fn most_violated(&self, x: &[f64], active: &[usize]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for k in 0..self.rhs.len() {
            if active.contains(&k) {
                continue;
            }
            let s = self.residual(x, k);
            if s >= -FEAS_TOL {
                continue;
            }
            let score = s / dot(&self.normals[k], &self.normals[k]).sqrt();
            if best.is_none_or(|(_, b)| score < b) {
                best = Some((k, score));
            }
        }
        best.map(|(k, _)| k)
    }

    pub fn solve(&self) -> Result<DenseOutcome> {
        self.check()?;
        let n = self.x0.len();
        let m = self.rhs.len();
        let cap = 100 * m.max(1);
        let mut x = self.x0.clone();
        let mut active: Vec<usize> = Vec::new();
        let mut mult: Vec<f64> = Vec::new();
        let mut iterations = 0usize;

        while let Some(p) = self.most_violated(&x, &active) {
            let np = &self.normals[p];
            let mut mult_p = 0.0;
            loop {
                iterations += 1;
                if iterations > cap {
                    return Err(Error::SolverStall { iterations: cap });
                }
                // n_p = N r + z with z orthogonal to the active normals.
                let Some(qr) = ActiveQr::new(&self.normals, &active) else {
                    return Err(Error::SolverStall { iterations });
                };
                let (r, z) = qr.split(np);
                let zz = dot(&z, &z);
                let z_is_zero = zz <= 1e-12 * dot(np, np);

                let mut partial: Option<(usize, f64)> = None;
                for (idx, &rk) in r.iter().enumerate() {
                    if rk > 1e-14 {
                        let t = mult[idx] / rk;
                        if partial.is_none_or(|(_, b)| t < b) {
                            partial = Some((idx, t));
                        }
                    }
                }
                let full = if z_is_zero {
                    None
                } else {
                    Some(-self.residual(&x, p) / zz)
                };

                match (full, partial) {
                    (None, None) => return Ok(DenseOutcome::Infeasible),
                    (Some(t2), part) if part.is_none_or(|(_, t1)| t2 <= t1) => {
                        for d in 0..n {
                            x[d] += t2 * z[d];
                        }
                        for (idx, rk) in r.iter().enumerate() {
                            mult[idx] -= t2 * rk;
                        }
                        active.push(p);
                        mult.push(mult_p + t2);
                        break;
                    }
                    (full, Some((l, t1))) => {
                        if full.is_some() {
                            for d in 0..n {
                                x[d] += t1 * z[d];
                            }
                        }
                        for (idx, rk) in r.iter().enumerate() {
                            mult[idx] -= t1 * rk;
                        }
                        mult_p += t1;
                        active.remove(l);
                        mult.remove(l);
                    }
                    (Some(_), None) => unreachable!(),
                }
            }
        }

        self.polish(&mut x, &mut active, &mut mult);

        let mut multipliers = vec![0.0; m];
        let mut order: Vec<(usize, f64)> = active.iter().copied().zip(mult.iter().copied()).collect();
        order.sort_by_key(|&(k, _)| k);
        for &(k, w) in &order {
            multipliers[k] = w.max(0.0);
        }
        Ok(DenseOutcome::Optimal(DenseSolution {
            x,
            multipliers,
            active: order.into_iter().map(|(k, _)| k).collect(),
            iterations,
        }))
    }

    /// Re-solves the equality-constrained projection on the final active set
    /// to strip accumulated rounding from the incremental updates. Kept only
    /// if it stays dual and primal feasible.
    fn polish(&self, x: &mut [f64], active: &mut [usize], mult: &mut [f64]) {
        let q = active.len();
        if q == 0 {
            x.copy_from_slice(&self.x0);
            return;
        }
        let rhs: Vec<f64> = active
            .iter()
            .map(|&k| self.rhs[k] - dot(&self.normals[k], &self.x0))
            .collect();
        let Some(qr) = ActiveQr::new(&self.normals, active) else {
            return;
        };
        let lambda = qr.solve_normal(rhs);
        if lambda.iter().any(|&l| l < -1e-9) {
            return;
        }
        let mut cand = self.x0.clone();
        for (idx, &k) in active.iter().enumerate() {
            for d in 0..cand.len() {
                cand[d] += lambda[idx] * self.normals[k][d];
            }
        }
        if (0..self.rhs.len()).all(|k| self.residual(&cand, k) >= -FEAS_TOL) {
            x.copy_from_slice(&cand);
            mult.copy_from_slice(&lambda);
        }
    }
}
