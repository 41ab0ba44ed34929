//! Pairwise second-order barrier quantities for point-mass agents.
//!
//! For agents `i`, `j` with `r = p_i - p_j` and `w = v_i - v_j`, the barrier
//! `h = |r|^2 - r_s^2` has relative degree two: `h' = 2 r.w` and
//! `h'' = 2|w|^2 + 2 r.(u_i - u_j)`. Imposing the second-order condition
//! with linear gains turns into one affine row per ordered pair,
//!
//! ```text
//! (2r).u_i - (2r).u_j >= c_ij
//! ```
//!
//! and, once the neighbor input is replaced by an estimate `ū_j`, into the
//! halfspace `(2r).u_i >= b_ij` with `b_ij = c_ij + (2r).ū_j`.

use serde::{Deserialize, Serialize};

use crate::config::{CijVariant, NeighborModel, ScenarioConfig};
use crate::error::{Error, Result};
use crate::world::{relative_kinematics, AgentState, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HocbfParams {
    pub r_s: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub variant: CijVariant,
}

impl HocbfParams {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        HocbfParams {
            r_s: cfg.r_s,
            gamma1: cfg.gamma1,
            gamma2: cfg.gamma2,
            variant: cfg.cij_variant,
        }
    }

    /// Coefficient multiplying `h` in the offset.
    pub fn h_gain(&self) -> f64 {
        match self.variant {
            CijVariant::Paper => self.gamma2,
            CijVariant::Derived => self.gamma1 * self.gamma2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierEval {
    pub h: f64,
    pub h_dot: f64,
    pub psi0: f64,
    pub psi1: f64,
    /// Constraint normal `2 r_ij`.
    pub a: Vec3,
    pub c_ij: f64,
}

impl BarrierEval {
    pub fn new(r: Vec3, v: Vec3, params: &HocbfParams) -> Self {
        let (h, h_dot) = barrier(r, v, params.r_s);
        BarrierEval {
            h,
            h_dot,
            psi0: h,
            psi1: h_dot + params.gamma1 * h,
            a: 2.0 * r,
            c_ij: c_offset(r, v, params),
        }
    }
}

/// A single affine condition `a . u_owner >= b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfspaceConstraint {
    pub owner: usize,
    pub other: usize,
    pub a: Vec3,
    pub b: f64,
    pub c_ij: f64,
    pub u_bar_j: Vec3,
}

impl HalfspaceConstraint {
    pub fn residual(&self, u: Vec3) -> f64 {
        self.a.dot(u) - self.b
    }
}

/// Barrier value `|r|^2 - r_s^2` and its time derivative `2 r.v`.
pub fn barrier(r: Vec3, v: Vec3, r_s: f64) -> (f64, f64) {
    (r.norm_sq() - r_s * r_s, 2.0 * r.dot(v))
}

/// Offset `c_ij` of the affine row `(2r).(u_i - u_j) >= c_ij`.
pub fn c_offset(r: Vec3, v: Vec3, params: &HocbfParams) -> f64 {
    let (h, _) = barrier(r, v, params.r_s);
    -2.0 * v.norm_sq() - 2.0 * (params.gamma1 + params.gamma2) * r.dot(v) - params.h_gain() * h
}

/// Builds the halfspace agent `i` enforces against `j`, given an estimate of
/// `j`'s input.
pub fn build_constraint(
    i: &AgentState,
    j: &AgentState,
    params: &HocbfParams,
    u_bar_j: Vec3,
) -> Result<HalfspaceConstraint> {
    let (r, v) = relative_kinematics(i, j);
    if r.norm_sq() == 0.0 {
        return Err(Error::SingularConstraint { i: i.id, j: j.id });
    }
    let a = 2.0 * r;
    let c_ij = c_offset(r, v, params);
    Ok(HalfspaceConstraint {
        owner: i.id,
        other: j.id,
        a,
        b: c_ij + a.dot(u_bar_j),
        c_ij,
        u_bar_j,
    })
}

/// Estimate of `j`'s input as seen by `i`. `u_nom` is indexed by agent id.
///
/// A neighbor frozen at its goal applies zero input, which is known exactly
/// and overrides the configured model.
pub fn neighbor_estimate(model: NeighborModel, i: &AgentState, j: &AgentState, u_nom: &[Vec3]) -> Vec3 {
    if j.reached {
        return Vec3::ZERO;
    }
    match model {
        NeighborModel::Zero => Vec3::ZERO,
        NeighborModel::Reciprocal => -u_nom[i.id],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(variant: CijVariant) -> HocbfParams {
        HocbfParams {
            r_s: 0.3,
            gamma1: 5.0,
            gamma2: 2.0,
            variant,
        }
    }

    fn agent(id: usize, p: Vec3, v: Vec3) -> AgentState {
        AgentState {
            id,
            p,
            v,
            goal: Vec3::ZERO,
            reached: false,
        }
    }

    #[test]
    fn barrier_examples() {
        let (h, hd) = barrier(Vec3::planar(1.0, 0.0), Vec3::ZERO, 0.3);
        assert!((h - 0.91).abs() < 1e-12);
        assert_eq!(hd, 0.0);

        let (h, hd) = barrier(Vec3::planar(0.3, 0.0), Vec3::planar(0.0, 1.7), 0.3);
        assert!(h.abs() < 1e-15);
        assert_eq!(hd, 0.0);

        let (_, hd) = barrier(Vec3::planar(1.0, 0.0), Vec3::planar(-1.0, 0.0), 0.3);
        assert_eq!(hd, -2.0);
    }

    #[test]
    fn c_offset_examples() {
        let r = Vec3::planar(1.0, 0.0);
        let c = c_offset(r, Vec3::planar(-1.0, 0.0), &params(CijVariant::Paper));
        assert!((c - 10.18).abs() < 1e-12, "{c}");
        let c = c_offset(r, Vec3::ZERO, &params(CijVariant::Paper));
        assert!((c + 1.82).abs() < 1e-12, "{c}");
        let c = c_offset(r, Vec3::ZERO, &params(CijVariant::Derived));
        assert!((c + 9.10).abs() < 1e-12, "{c}");
    }

    #[test]
    fn psi_fields() {
        let e = BarrierEval::new(Vec3::planar(1.0, 0.0), Vec3::planar(-1.0, 0.0), &params(CijVariant::Paper));
        assert_eq!(e.psi0, e.h);
        assert!((e.psi1 - (-2.0 + 5.0 * 0.91)).abs() < 1e-12);
        assert_eq!(e.a, Vec3::planar(2.0, 0.0));
    }

    #[test]
    fn build_constraint_zero_model() {
        let i = agent(0, Vec3::planar(1.0, 0.0), Vec3::ZERO);
        let j = agent(1, Vec3::ZERO, Vec3::ZERO);
        let c = build_constraint(&i, &j, &params(CijVariant::Paper), Vec3::ZERO).unwrap();
        assert_eq!(c.b, c.c_ij);
        assert_eq!(c.a, Vec3::planar(2.0, 0.0));
        assert_eq!((c.owner, c.other), (0, 1));
    }

    #[test]
    fn build_constraint_reciprocal_offset() {
        // a = (2,0), u_nom_i = (1,0), c_ij = 0 gives b = -2.
        let a = Vec3::planar(2.0, 0.0);
        let u_nom = [Vec3::planar(1.0, 0.0), Vec3::ZERO];
        let i = agent(0, Vec3::planar(1.0, 0.0), Vec3::ZERO);
        let j = agent(1, Vec3::ZERO, Vec3::ZERO);
        let u_bar = neighbor_estimate(NeighborModel::Reciprocal, &i, &j, &u_nom);
        assert_eq!(0.0 + a.dot(u_bar), -2.0);
    }

    #[test]
    fn build_constraint_singular() {
        let i = agent(0, Vec3::planar(1.0, 1.0), Vec3::ZERO);
        let j = agent(1, Vec3::planar(1.0, 1.0), Vec3::planar(1.0, 0.0));
        let err = build_constraint(&i, &j, &params(CijVariant::Paper), Vec3::ZERO).unwrap_err();
        assert!(matches!(err, Error::SingularConstraint { i: 0, j: 1 }));
    }

    #[test]
    fn swap_symmetry() {
        let i = agent(0, Vec3::planar(0.4, -0.2), Vec3::planar(1.0, 0.5));
        let j = agent(1, Vec3::planar(-0.3, 0.9), Vec3::planar(-0.2, 0.1));
        let p = params(CijVariant::Paper);
        let ij = build_constraint(&i, &j, &p, Vec3::ZERO).unwrap();
        let ji = build_constraint(&j, &i, &p, Vec3::ZERO).unwrap();
        assert_eq!(ij.a, -ji.a);
        assert!((ij.c_ij - ji.c_ij).abs() < 1e-12);
    }

    #[test]
    fn neighbor_estimates() {
        let u_nom = [Vec3::planar(1.0, 2.0), Vec3::planar(3.0, 3.0), Vec3::ZERO];
        let i = agent(0, Vec3::ZERO, Vec3::ZERO);
        let j = agent(1, Vec3::planar(1.0, 0.0), Vec3::ZERO);
        assert_eq!(neighbor_estimate(NeighborModel::Zero, &i, &j, &u_nom), Vec3::ZERO);
        assert_eq!(
            neighbor_estimate(NeighborModel::Reciprocal, &i, &j, &u_nom),
            Vec3::planar(-1.0, -2.0)
        );
        let k = agent(2, Vec3::ZERO, Vec3::ZERO);
        assert_eq!(neighbor_estimate(NeighborModel::Reciprocal, &k, &j, &u_nom), Vec3::ZERO);
        let frozen = AgentState { reached: true, ..j };
        assert_eq!(neighbor_estimate(NeighborModel::Reciprocal, &i, &frozen, &u_nom), Vec3::ZERO);
    }
}
