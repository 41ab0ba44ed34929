//! Agent state, double-integrator dynamics and scenario sampling.
//!
//! Each agent is a point mass with state `(p, v)` driven by an acceleration
//! input `u`. Planar scenarios keep the `z` component at exactly zero: the
//! sampler writes zeros there and every update below is componentwise, so a
//! zero never turns into anything else.

use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub const fn planar(x: f64, y: f64) -> Self {
        Vec3 { x, y, z: 0.0 }
    }

    pub fn splat(s: f64) -> Self {
        Vec3::new(s, s, s)
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn clamp(self, lo: Vec3, hi: Vec3) -> Vec3 {
        Vec3::new(
            self.x.clamp(lo.x, hi.x),
            self.y.clamp(lo.y, hi.y),
            self.z.clamp(lo.z, hi.z),
        )
    }

    /// Componentwise `lo <= self <= hi` with an absolute tolerance.
    pub fn within(self, lo: Vec3, hi: Vec3, tol: f64) -> bool {
        (0..3).all(|k| self[k] >= lo[k] - tol && self[k] <= hi[k] + tol)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_slice(s: &[f64]) -> Vec3 {
        Vec3::new(s[0], s[1], s[2])
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;

    fn index(&self, k: usize) -> &f64 {
        match k {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index out of range: {k}"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: usize,
    pub p: Vec3,
    pub v: Vec3,
    pub goal: Vec3,
    /// Frozen at the goal: the agent applies zero input from now on.
    pub reached: bool,
}

impl AgentState {
    pub fn at_rest(id: usize, p: Vec3, goal: Vec3) -> Self {
        AgentState {
            id,
            p,
            v: Vec3::ZERO,
            goal,
            reached: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bounds {
    pub v_min: Vec3,
    pub v_max: Vec3,
    pub u_min: Vec3,
    pub u_max: Vec3,
    pub enforce_input: bool,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            v_min: Vec3::splat(-5.0),
            v_max: Vec3::splat(5.0),
            u_min: Vec3::splat(-5.0),
            u_max: Vec3::splat(5.0),
            enforce_input: false,
        }
    }
}

impl Bounds {
    pub fn validate(&self) -> Result<()> {
        for k in 0..3 {
            if !(self.v_min[k] < self.v_max[k]) {
                return Err(Error::Config(format!("bounds: v_min[{k}] must be < v_max[{k}]")));
            }
            if !(self.u_min[k] < self.u_max[k]) {
                return Err(Error::Config(format!("bounds: u_min[{k}] must be < u_max[{k}]")));
            }
        }
        Ok(())
    }

    /// The input box, if input saturation is enforced.
    pub fn input_box(&self) -> Option<(Vec3, Vec3)> {
        self.enforce_input.then_some((self.u_min, self.u_max))
    }
}

/// Relative position and velocity of `a` with respect to `b`.
pub fn relative_kinematics(a: &AgentState, b: &AgentState) -> (Vec3, Vec3) {
    debug_assert_ne!(a.id, b.id, "relative kinematics of an agent with itself");
    (a.p - b.p, a.v - b.v)
}

/// Result of one integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stepped {
    pub state: AgentState,
    pub velocity_clipped: bool,
}

/// Exact zero-order-hold update of the double integrator over `dt`, followed
/// by a componentwise velocity clip.
pub fn step(state: &AgentState, u: Vec3, dt: f64, bounds: &Bounds) -> Result<AgentState> {
    step_logged(state, u, dt, bounds).map(|s| s.state)
}

/// Like [`step`], also reporting whether the velocity clip was active.
pub fn step_logged(state: &AgentState, u: Vec3, dt: f64, bounds: &Bounds) -> Result<Stepped> {
    if !u.is_finite() {
        return Err(Error::NonFinite("input").for_agent(state.id));
    }
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    let u = match bounds.input_box() {
        Some((lo, hi)) => u.clamp(lo, hi),
        None => u,
    };
    let p = state.p + state.v * dt + u * (0.5 * dt * dt);
    let v_raw = state.v + u * dt;
    let v = v_raw.clamp(bounds.v_min, bounds.v_max);
    Ok(Stepped {
        state: AgentState { p, v, ..*state },
        velocity_clipped: v != v_raw,
    })
}

/// Samples starts and goals uniformly in the configured box.
///
/// The generator is ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`) and
/// coordinates are drawn with `Rng::gen_range` over the half-open box, axis
/// by axis in x, y, z order. All starts are drawn first, then all goals. A
/// start is rejected if it lies closer than `2 r_s` to an earlier start, a
/// goal if it lies closer than `2 r_s` to any start or an earlier goal.
pub fn sample_scenario(cfg: &ScenarioConfig) -> Result<Vec<AgentState>> {
    cfg.validate()?;
    let n = cfg.n_agents;
    let min_sep_sq = (2.0 * cfg.r_s).powi(2);
    let cap = 10_000 * n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut attempts = 0usize;

    let mut draw_separated = |rng: &mut ChaCha8Rng, taken: &[Vec3]| -> Result<Vec3> {
        loop {
            attempts += 1;
            if attempts > cap {
                return Err(Error::BoxTooDense { attempts: cap });
            }
            let lo = cfg.sample_box.min;
            let hi = cfg.sample_box.max;
            let x = rng.gen_range(lo..hi);
            let y = rng.gen_range(lo..hi);
            let z = if cfg.dim == 3 { rng.gen_range(lo..hi) } else { 0.0 };
            let cand = Vec3::new(x, y, z);
            if taken.iter().all(|q| (cand - *q).norm_sq() >= min_sep_sq) {
                return Ok(cand);
            }
        }
    };

    let mut starts = Vec::with_capacity(n);
    for _ in 0..n {
        let s = draw_separated(&mut rng, &starts)?;
        starts.push(s);
    }
    let mut taken = starts.clone();
    for _ in 0..n {
        let g = draw_separated(&mut rng, &taken)?;
        taken.push(g);
    }
    let goals = taken.split_off(n);
    Ok(starts
        .into_iter()
        .zip(goals)
        .enumerate()
        .map(|(id, (p, g))| AgentState::at_rest(id, p, g))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

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
    fn relative_kinematics_examples() {
        let a = agent(0, Vec3::planar(1.0, 0.0), Vec3::ZERO);
        let b = agent(1, Vec3::ZERO, Vec3::ZERO);
        assert_eq!(relative_kinematics(&a, &b), (Vec3::planar(1.0, 0.0), Vec3::ZERO));

        let c = agent(2, Vec3::planar(1.0, 0.0), Vec3::ZERO);
        assert_eq!(relative_kinematics(&a, &c), (Vec3::ZERO, Vec3::ZERO));

        let i = agent(0, Vec3::planar(2.0, 1.0), Vec3::planar(1.0, 0.0));
        let j = agent(1, Vec3::planar(-1.0, 3.0), Vec3::planar(0.0, 1.0));
        let (r, v) = relative_kinematics(&i, &j);
        assert_eq!(r, Vec3::planar(3.0, -2.0));
        assert_eq!(v, Vec3::planar(1.0, -1.0));
    }

    #[test]
    fn step_examples() {
        let b = Bounds::default();
        let s = agent(0, Vec3::ZERO, Vec3::planar(1.0, 0.0));
        let n = step(&s, Vec3::ZERO, 0.1, &b).unwrap();
        assert!((n.p - Vec3::planar(0.1, 0.0)).norm() < 1e-15);
        assert_eq!(n.v, Vec3::planar(1.0, 0.0));

        let s = agent(0, Vec3::ZERO, Vec3::ZERO);
        let n = step(&s, Vec3::planar(2.0, 0.0), 0.1, &b).unwrap();
        assert!((n.p - Vec3::planar(0.01, 0.0)).norm() < 1e-15);
        assert!((n.v - Vec3::planar(0.2, 0.0)).norm() < 1e-15);

        let s = agent(0, Vec3::ZERO, Vec3::planar(4.9, 0.0));
        let n = step_logged(&s, Vec3::planar(2.0, 0.0), 0.1, &b).unwrap();
        assert_eq!(n.state.v, Vec3::planar(5.0, 0.0));
        assert!(n.velocity_clipped);
    }

    #[test]
    fn step_clips_input_only_when_enforced() {
        let mut b = Bounds::default();
        let s = agent(0, Vec3::ZERO, Vec3::ZERO);
        let free = step(&s, Vec3::planar(40.0, 0.0), 0.01, &b).unwrap();
        assert!((free.v.x - 0.4).abs() < 1e-15);
        b.enforce_input = true;
        let sat = step(&s, Vec3::planar(40.0, 0.0), 0.01, &b).unwrap();
        assert!((sat.v.x - 0.05).abs() < 1e-15);
    }

    #[test]
    fn step_rejects_non_finite_input() {
        let s = agent(3, Vec3::ZERO, Vec3::ZERO);
        let err = step(&s, Vec3::planar(f64::NAN, 0.0), 0.1, &Bounds::default()).unwrap_err();
        assert!(matches!(err, Error::Agent { agent: 3, .. }));
    }

    #[test]
    fn sampler_is_deterministic_and_separated() {
        let cfg = ScenarioConfig {
            seed: 42,
            ..ScenarioConfig::default()
        };
        let a = sample_scenario(&cfg).unwrap();
        let b = sample_scenario(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        for i in 0..a.len() {
            assert_eq!(a[i].p.z, 0.0);
            assert_eq!(a[i].v, Vec3::ZERO);
            for j in i + 1..a.len() {
                assert!((a[i].p - a[j].p).norm() >= 0.6);
                assert!((a[i].goal - a[j].goal).norm() >= 0.6);
            }
        }
    }

    #[test]
    fn sampler_two_agents() {
        let cfg = ScenarioConfig {
            n_agents: 2,
            ..ScenarioConfig::default()
        };
        let a = sample_scenario(&cfg).unwrap();
        assert!((a[0].p - a[1].p).norm() >= 0.6);
    }

    #[test]
    fn sampler_gives_up_on_dense_box() {
        let mut cfg = ScenarioConfig {
            n_agents: 50,
            ..ScenarioConfig::default()
        };
        cfg.sample_box.min = -1.0;
        cfg.sample_box.max = 1.0;
        assert!(matches!(sample_scenario(&cfg), Err(Error::BoxTooDense { .. })));
    }
}
