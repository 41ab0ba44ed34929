//! Cross-checks of the fast solvers against brute-force oracles.
//!
//! Each suite draws random instances from a seeded generator, runs the fast
//! path and its oracle, and records the first instance that disagrees
//! beyond tolerance as a [`Replay`] that can be fed back to [`replay`].

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::allocator::{milp_oracle, minlp_oracle, objective, solve_milp, EdgePair};
use crate::config::{Mode, ScenarioConfig};
use crate::engine::tick_coordinated;
use crate::error::{Error, Result};
use crate::hocbf::{neighbor_estimate, HocbfParams};
use crate::qp::{deviation_oracle, project_single, solve, QpProblem, QpStatus};
use crate::world::{AgentState, Vec3};

pub const MILP_MAX_EDGES: usize = 8;
pub const PROJECTION_TOL: f64 = 1e-10;
pub const KKT_TOL: f64 = 1e-8;
pub const GRID_STEP: f64 = 0.01;
pub const GRID_SLACK: f64 = 0.05;
pub const QP_MAX_ROWS: usize = 4;
/// Half-width of the input box of the boxed QP suite.
pub const QP_BOX: f64 = 2.0;
pub const MINLP_MAX_AGENTS: usize = 4;
pub const MINLP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidateOptions {
    pub heavy: bool,
    pub seed: u64,
    /// Test hook: added to the first finite cost of every allocation
    /// instance seen by the fast solver, never by the oracle.
    pub perturb_cost: Option<f64>,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions { heavy: false, seed: 20_240_601, perturb_cost: None }
    }
}

/// Instance counts per suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Counts {
    pub milp: usize,
    pub projection: usize,
    pub qp: usize,
    pub proposition: usize,
    pub proposition_draws: usize,
    pub minlp: usize,
}

impl Counts {
    pub fn desk() -> Self {
        Counts { milp: 1000, projection: 10_000, qp: 500, proposition: 200, proposition_draws: 100, minlp: 20 }
    }

    pub fn heavy() -> Self {
        Counts { milp: 10_000, projection: 100_000, qp: 2000, proposition: 2000, proposition_draws: 100, minlp: 100 }
    }
}

mod float_text {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&crate::output::fmt_float(*x))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// One edge of an allocation instance; costs are strings so that infinite
/// costs survive JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub i: usize,
    pub j: usize,
    #[serde(with = "float_text")]
    pub j_ij: f64,
    #[serde(with = "float_text")]
    pub j_ji: f64,
}

impl From<&EdgePair> for CostRow {
    fn from(e: &EdgePair) -> Self {
        CostRow { i: e.i, j: e.j, j_ij: e.j_ij, j_ji: e.j_ji }
    }
}

impl From<&CostRow> for EdgePair {
    fn from(c: &CostRow) -> Self {
        EdgePair { i: c.i, j: c.j, j_ij: c.j_ij, j_ji: c.j_ji }
    }
}

/// A single failing instance, replayable with [`replay`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "suite", rename_all = "lowercase")]
pub enum Replay {
    Milp { edges: Vec<CostRow>, perturb_cost: Option<f64> },
    Projection { problem: QpProblem },
    Qp { problem: QpProblem },
    Proposition { edges: Vec<CostRow>, z_tilde: Vec<(bool, bool)>, perturb_cost: Option<f64> },
    Minlp { config: ScenarioConfig, agents: Vec<AgentState> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub instances: usize,
    pub failures: usize,
    /// Largest observed error in the suite's own units.
    pub worst: f64,
    pub tolerance: f64,
    pub seconds: f64,
    pub note: String,
    pub failure: Option<Replay>,
}

impl SuiteReport {
    fn new(name: &str, tolerance: f64) -> Self {
        SuiteReport {
            name: name.to_string(),
            instances: 0,
            failures: 0,
            worst: 0.0,
            tolerance,
            seconds: 0.0,
            note: String::new(),
            failure: None,
        }
    }

    fn record(&mut self, outcome: Outcome, instance: impl FnOnce() -> Replay) {
        self.instances += 1;
        if outcome.error > self.worst || self.worst.is_nan() {
            self.worst = outcome.error;
        }
        if !outcome.ok {
            self.failures += 1;
            if self.failure.is_none() {
                self.failure = Some(instance());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    pub fn line(&self) -> String {
        format!(
            "{:<12} {:>6} instances  {:>4} failures  worst {:.3e} (tol {:.1e})  {:.2}s{}{}",
            self.name,
            self.instances,
            self.failures,
            self.worst,
            self.tolerance,
            self.seconds,
            if self.note.is_empty() { "" } else { "  " },
            self.note
        )
    }
}

/// Result of one instance: whether it passed and its error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub ok: bool,
    pub error: f64,
}

fn perturbed(pairs: &[EdgePair], delta: Option<f64>) -> Vec<EdgePair> {
    let mut out = pairs.to_vec();
    if let Some(d) = delta {
        for e in out.iter_mut() {
            if e.j_ij.is_finite() {
                e.j_ij += d;
                break;
            }
            if e.j_ji.is_finite() {
                e.j_ji += d;
                break;
            }
        }
    }
    out
}

/// Random allocation instance over at most six agents. Roughly one cost in
/// ten is infinite and a few are small integers so that ties occur.
pub fn random_costs(rng: &mut impl Rng, max_edges: usize) -> Vec<EdgePair> {
    let mut all: Vec<(usize, usize)> = (0..6).flat_map(|i| (i + 1..6).map(move |j| (i, j))).collect();
    let n_edges = rng.gen_range(1..=max_edges.min(all.len()));
    let mut edges = Vec::with_capacity(n_edges);
    for _ in 0..n_edges {
        let k = rng.gen_range(0..all.len());
        edges.push(all.swap_remove(k));
    }
    edges.sort_unstable();
    let cost = |rng: &mut dyn rand::RngCore| -> f64 {
        let roll: f64 = rng.gen();
        if roll < 0.1 {
            f64::INFINITY
        } else if roll < 0.25 {
            f64::from(rng.gen_range(0..3u8))
        } else {
            rng.gen_range(0.0..10.0)
        }
    };
    edges
        .into_iter()
        .map(|(i, j)| EdgePair { i, j, j_ij: cost(rng), j_ji: cost(rng) })
        .collect()
}

/// Fast allocation against enumeration. Objectives must agree bit for bit
/// and selections must be identical on every edge with a finite cost.
/// Edges with both costs infinite are left out of the oracle instance
/// (every selection is optimal there) and must come back forced.
pub fn check_milp(pairs: &[EdgePair], perturb_cost: Option<f64>) -> Result<Outcome> {
    let fast = solve_milp(&perturbed(pairs, perturb_cost))?;
    let fast_obj = objective(pairs, fast.edges.iter().map(|e| (e.z_ij, e.z_ji)));
    let finite: Vec<usize> = (0..pairs.len())
        .filter(|&k| pairs[k].j_ij.is_finite() || pairs[k].j_ji.is_finite())
        .collect();
    let sub: Vec<EdgePair> = finite.iter().map(|&k| pairs[k]).collect();
    let oracle = milp_oracle(&sub)?;
    let mut same = fast.covers_all();
    for (e, &k) in oracle.edges.iter().zip(&finite) {
        let f = fast.edges[k];
        same &= (f.z_ij, f.z_ji, f.forced_infeasible) == (e.z_ij, e.z_ji, e.forced_infeasible);
    }
    for (k, f) in fast.edges.iter().enumerate() {
        if !finite.contains(&k) {
            same &= f.z_ij && f.z_ji && f.forced_infeasible;
        }
    }
    let oracle_obj = if finite.len() < pairs.len() { f64::INFINITY } else { oracle.objective };
    same &= fast_obj.to_bits() == oracle_obj.to_bits();
    let error = if fast_obj == oracle_obj { 0.0 } else { (fast_obj - oracle_obj).abs() };
    Ok(Outcome { ok: same, error: if same { error } else { error.max(f64::MIN_POSITIVE) } })
}

pub fn random_projection(rng: &mut impl Rng) -> QpProblem {
    let mut v = |lo: f64, hi: f64| Vec3::new(rng.gen_range(lo..hi), rng.gen_range(lo..hi), rng.gen_range(lo..hi));
    let u_nom = v(-10.0, 10.0);
    let mut a = v(-5.0, 5.0);
    while a.norm() < 1e-3 {
        a = v(-5.0, 5.0);
    }
    let b = rng.gen_range(-20.0..20.0);
    QpProblem::new(u_nom).with_row(a, b)
}

/// Single-row unbounded solve against the closed-form projection.
pub fn check_projection(p: &QpProblem) -> Result<Outcome> {
    let row = p.rows[0];
    let (u, cost) = project_single(p.u_nom, row.a, row.b)?;
    let s = solve(p)?;
    let error = (s.u_star - u).norm().max((s.deviation - cost).abs());
    Ok(Outcome { ok: s.status == QpStatus::Optimal && error <= PROJECTION_TOL, error })
}

/// Planar boxed instance with up to four rows around a known feasible
/// point, so the feasible set is never empty.
pub fn random_boxed_qp(rng: &mut impl Rng) -> QpProblem {
    let m = rng.gen_range(1..=QP_MAX_ROWS);
    let u_nom = Vec3::planar(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
    let inner = QP_BOX - 0.2;
    let anchor = Vec3::planar(rng.gen_range(-inner..inner), rng.gen_range(-inner..inner));
    let mut p = QpProblem::new(u_nom).with_bounds(Vec3::splat(-QP_BOX), Vec3::splat(QP_BOX));
    for _ in 0..m {
        let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let a = rng.gen_range(0.2..4.0) * Vec3::planar(angle.cos(), angle.sin());
        let b = a.dot(anchor) - rng.gen_range(0.0..2.0);
        p = p.with_row(a, b);
    }
    p
}

/// Boxed solve against the grid oracle plus a KKT check. The error is the
/// larger of the KKT residual and the excess over the grid optimum; the
/// two have separate tolerances.
pub fn check_qp(p: &QpProblem) -> Result<(Outcome, bool)> {
    let s = solve(p)?;
    let kkt = s.kkt_residual(p);
    let grid = deviation_oracle(p, GRID_STEP)?;
    let excess = grid.map_or(0.0, |g| s.deviation - g);
    let ok = s.status == QpStatus::Optimal && kkt <= KKT_TOL && excess <= GRID_SLACK;
    Ok((Outcome { ok, error: kkt.max(excess.max(0.0)) }, grid.is_some()))
}

pub fn random_cover(rng: &mut impl Rng, n_edges: usize) -> Vec<(bool, bool)> {
    (0..n_edges)
        .map(|_| match rng.gen_range(0..3u8) {
            0 => (true, false),
            1 => (false, true),
            _ => (true, true),
        })
        .collect()
}

/// `sum J z*` against one alternative covering assignment.
pub fn check_proposition(pairs: &[EdgePair], z_tilde: &[(bool, bool)], perturb_cost: Option<f64>) -> Result<Outcome> {
    let fast = solve_milp(&perturbed(pairs, perturb_cost))?;
    let star = objective(pairs, fast.edges.iter().map(|e| (e.z_ij, e.z_ji)));
    let alt = objective(pairs, z_tilde.iter().copied());
    let ok = star <= alt;
    let error = if ok { 0.0 } else { star - alt };
    Ok(Outcome { ok, error })
}

/// Small packed scenario with random velocities, all pairs usually
/// interacting.
pub fn random_desk_scenario(rng: &mut impl Rng, base: &ScenarioConfig) -> (ScenarioConfig, Vec<AgentState>) {
    let n = rng.gen_range(2..=MINLP_MAX_AGENTS);
    let cfg = ScenarioConfig { n_agents: n, mode: Mode::Coordinated, ..base.clone() };
    let mut agents: Vec<AgentState> = Vec::with_capacity(n);
    while agents.len() < n {
        let p = Vec3::planar(rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2));
        if agents.iter().any(|a| (a.p - p).norm() < 2.0 * cfg.r_s + 0.1) {
            continue;
        }
        agents.push(AgentState {
            id: agents.len(),
            p,
            v: Vec3::planar(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)),
            goal: Vec3::planar(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)),
            reached: false,
        });
    }
    (cfg, agents)
}

/// Realized coordinated-mode tick on a frozen state, for comparison with
/// the joint oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineTick {
    pub total_deviation: f64,
    pub inputs: Vec<Vec3>,
    /// Every filter solved without relaxation.
    pub all_optimal: bool,
    /// Every assigned neighbor estimate over-approximates the neighbor's
    /// realized input along the constraint normal.
    pub conservative: bool,
}

pub fn pipeline_tick(cfg: &ScenarioConfig, agents: &[AgentState]) -> Result<PipelineTick> {
    let o = tick_coordinated(agents, cfg, 0.0, false)?;
    let all_optimal = o.filters.iter().flatten().all(|f| f.status == QpStatus::Optimal);
    let mut conservative = true;
    if let Some(asg) = &o.assignment {
        for (&i, set) in &asg.responsibility_sets {
            for &j in set {
                let a = 2.0 * (agents[i].p - agents[j].p);
                let u_bar = neighbor_estimate(cfg.neighbor_input_model, &agents[i], &agents[j], &o.u_nom);
                conservative &= a.dot(u_bar) >= a.dot(o.inputs[j]) - 1e-12;
            }
        }
    }
    Ok(PipelineTick { total_deviation: o.metrics.total_deviation, inputs: o.inputs, all_optimal, conservative })
}

/// Joint oracle objective against the realized pipeline deviation. Only
/// meaningful when the pipeline tick is optimal and conservative; the
/// returned flag says whether that precondition held.
pub fn check_minlp(cfg: &ScenarioConfig, agents: &[AgentState]) -> Result<(Outcome, bool, f64)> {
    let pipe = pipeline_tick(cfg, agents)?;
    let eligible = pipe.all_optimal && pipe.conservative;
    let params = HocbfParams::from_config(cfg);
    let interaction = crate::allocator::build_interaction_set(agents, cfg.activation_radius);
    let u_nom = crate::engine::nominal_inputs(agents, cfg);
    let oracle = match minlp_oracle(agents, &interaction, &u_nom, &params, &cfg.bounds) {
        Ok(s) => s.objective,
        Err(Error::JointlyInfeasible) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let gap = pipe.total_deviation - oracle;
    let ok = oracle <= pipe.total_deviation + MINLP_TOL;
    Ok((Outcome { ok, error: if ok { 0.0 } else { -gap } }, eligible, gap))
}

fn timed<F: FnOnce(&mut SuiteReport) -> Result<()>>(mut r: SuiteReport, f: F) -> Result<SuiteReport> {
    let start = Instant::now();
    f(&mut r)?;
    r.seconds = start.elapsed().as_secs_f64();
    Ok(r)
}

pub fn milp_suite(n: usize, rng: &mut impl Rng, perturb_cost: Option<f64>) -> Result<SuiteReport> {
    timed(SuiteReport::new("milp", 0.0), |r| {
        for _ in 0..n {
            let pairs = random_costs(rng, MILP_MAX_EDGES);
            let out = check_milp(&pairs, perturb_cost)?;
            r.record(out, || Replay::Milp { edges: pairs.iter().map(CostRow::from).collect(), perturb_cost });
        }
        Ok(())
    })
}

pub fn projection_suite(n: usize, rng: &mut impl Rng) -> Result<SuiteReport> {
    timed(SuiteReport::new("projection", PROJECTION_TOL), |r| {
        for _ in 0..n {
            let p = random_projection(rng);
            let out = check_projection(&p)?;
            r.record(out, || Replay::Projection { problem: p.clone() });
        }
        Ok(())
    })
}

pub fn qp_suite(n: usize, rng: &mut impl Rng) -> Result<SuiteReport> {
    timed(SuiteReport::new("qp", KKT_TOL), |r| {
        let mut no_grid = 0;
        for _ in 0..n {
            let p = random_boxed_qp(rng);
            let (out, gridded) = check_qp(&p)?;
            no_grid += usize::from(!gridded);
            r.record(out, || Replay::Qp { problem: p.clone() });
        }
        r.note = format!("grid slack {GRID_SLACK}, {no_grid} without a feasible grid point");
        Ok(())
    })
}

pub fn proposition_suite(n: usize, draws: usize, rng: &mut impl Rng, perturb_cost: Option<f64>) -> Result<SuiteReport> {
    timed(SuiteReport::new("proposition", 0.0), |r| {
        for _ in 0..n {
            let pairs = random_costs(rng, MILP_MAX_EDGES);
            for _ in 0..draws {
                let z = random_cover(rng, pairs.len());
                let out = check_proposition(&pairs, &z, perturb_cost)?;
                r.record(out, || Replay::Proposition {
                    edges: pairs.iter().map(CostRow::from).collect(),
                    z_tilde: z.clone(),
                    perturb_cost,
                });
            }
        }
        Ok(())
    })
}

/// Draws desk scenarios until `n` satisfy the comparison's precondition.
pub fn minlp_suite(n: usize, rng: &mut impl Rng, base: &ScenarioConfig) -> Result<SuiteReport> {
    timed(SuiteReport::new("minlp", MINLP_TOL), |r| {
        let mut skipped = 0usize;
        let mut gaps = Vec::with_capacity(n);
        while r.instances < n {
            if skipped > 1000 * n.max(1) {
                return Err(Error::Config("no desk scenario met the minlp precondition".into()));
            }
            let (cfg, agents) = random_desk_scenario(rng, base);
            let (out, eligible, gap) = check_minlp(&cfg, &agents)?;
            if !eligible {
                skipped += 1;
                continue;
            }
            gaps.push(gap);
            r.record(out, || Replay::Minlp { config: cfg.clone(), agents: agents.clone() });
        }
        let mean = if gaps.is_empty() { 0.0 } else { gaps.iter().sum::<f64>() / gaps.len() as f64 };
        r.note = format!("mean gap {mean:.4e}, {skipped} draws skipped (estimate not conservative or relaxed)");
        Ok(())
    })
}

/// Runs every suite with the desk or heavy counts.
pub fn run_all(opts: &ValidateOptions) -> Result<Vec<SuiteReport>> {
    let counts = if opts.heavy { Counts::heavy() } else { Counts::desk() };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let base = ScenarioConfig::default();
    Ok(vec![
        milp_suite(counts.milp, &mut rng, opts.perturb_cost)?,
        projection_suite(counts.projection, &mut rng)?,
        qp_suite(counts.qp, &mut rng)?,
        proposition_suite(counts.proposition, counts.proposition_draws, &mut rng, opts.perturb_cost)?,
        minlp_suite(counts.minlp, &mut rng, &base)?,
    ])
}

/// Re-runs the check of one recorded instance.
pub fn replay(instance: &Replay) -> Result<Outcome> {
    match instance {
        Replay::Milp { edges, perturb_cost } => {
            let pairs: Vec<EdgePair> = edges.iter().map(EdgePair::from).collect();
            check_milp(&pairs, *perturb_cost)
        }
        Replay::Projection { problem } => check_projection(problem),
        Replay::Qp { problem } => check_qp(problem).map(|(o, _)| o),
        Replay::Proposition { edges, z_tilde, perturb_cost } => {
            let pairs: Vec<EdgePair> = edges.iter().map(EdgePair::from).collect();
            check_proposition(&pairs, z_tilde, *perturb_cost)
        }
        Replay::Minlp { config, agents } => check_minlp(config, agents).map(|(o, _, _)| o),
    }
}
