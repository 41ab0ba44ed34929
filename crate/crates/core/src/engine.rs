//! Tick orchestration for the three coordination modes and the run loop.
//!
//! Every tick works on one immutable snapshot of all agents: nominal inputs
//! are computed, the interaction set is built, each agent's safety filter
//! is solved against that same snapshot, and only then are all inputs
//! applied together.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::{
    build_interaction_set, edge_cost, minlp_oracle, solve_milp, AssignmentSolution, EdgePair, InteractionSet,
};
use crate::config::{Mode, ScenarioConfig};
use crate::error::{Error, Result};
use crate::hocbf::{barrier, build_constraint, neighbor_estimate, HocbfParams};
use crate::qp::{self, QpProblem, QpStatus};
use crate::world::{sample_scenario, step_logged, AgentState, Bounds, Vec3};

/// Speed below which an agent inside the goal tolerance is frozen.
pub const FREEZE_SPEED: f64 = 0.05;

/// Discretization allowance on the separation radius.
pub const SAFETY_ALLOWANCE: f64 = 0.02;

/// PD law toward a fixed goal, `u = -kp (p - goal) - kd v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NominalController {
    pub kp: f64,
    pub kd: f64,
}

impl Default for NominalController {
    fn default() -> Self {
        NominalController { kp: 4.0, kd: 4.0 }
    }
}

impl NominalController {
    pub fn input(&self, a: &AgentState, bounds: &Bounds) -> Vec3 {
        if a.reached {
            return Vec3::ZERO;
        }
        let u = -self.kp * (a.p - a.goal) - self.kd * a.v;
        match bounds.input_box() {
            Some((lo, hi)) => u.clamp(lo, hi),
            None => u,
        }
    }
}

/// Per-tick summary. Field order is the column order of `metrics.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub t: f64,
    pub total_deviation: f64,
    /// Mean barrier value over active edges; NaN when there are none.
    pub mean_barrier: f64,
    /// Minimum distance over all pairs, active or not.
    pub min_pair_dist: f64,
    pub qp_time_mean: f64,
    pub qp_time_max: f64,
    pub n_active_edges: usize,
    pub n_relaxed_qps: usize,
    pub assignment_churn: f64,
}

/// Result of one agent's safety filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterResult {
    pub u: Vec3,
    pub deviation: f64,
    pub n_rows: usize,
    pub status: QpStatus,
    pub slack_used: f64,
    pub seconds: f64,
}

/// Everything a tick computes from one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct TickOutcome {
    pub inputs: Vec<Vec3>,
    pub u_nom: Vec<Vec3>,
    pub interaction: InteractionSet,
    /// One entry per agent; `None` for frozen agents.
    pub filters: Vec<Option<FilterResult>>,
    pub metrics: StepMetrics,
    pub costs: Vec<EdgePair>,
    pub assignment: Option<AssignmentSolution>,
    pub additive: AdditiveBoundStats,
}

/// Comparison of realized filter deviation against the sum of assigned
/// single-constraint costs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AdditiveBoundStats {
    /// Agents holding two or more assignments.
    pub multi_checked: usize,
    /// Of those, agents whose deviation exceeded the cost sum.
    pub multi_violations: usize,
    /// Agents holding exactly one assignment with an optimal filter.
    pub single_checked: usize,
    /// Largest `|deviation - J|` over singly assigned agents.
    pub single_max_gap: f64,
}

impl AdditiveBoundStats {
    fn merge(&mut self, o: &AdditiveBoundStats) {
        self.multi_checked += o.multi_checked;
        self.multi_violations += o.multi_violations;
        self.single_checked += o.single_checked;
        self.single_max_gap = self.single_max_gap.max(o.single_max_gap);
    }
}

pub fn nominal_inputs(agents: &[AgentState], cfg: &ScenarioConfig) -> Vec<Vec3> {
    agents.iter().map(|a| cfg.controller.input(a, &cfg.bounds)).collect()
}

fn check_ids(agents: &[AgentState]) -> Result<()> {
    if agents.iter().enumerate().any(|(k, a)| a.id != k) {
        return Err(Error::Config("agent ids must equal their index".into()));
    }
    Ok(())
}

fn min_pair_distance(agents: &[AgentState]) -> f64 {
    let mut best = f64::INFINITY;
    for (k, a) in agents.iter().enumerate() {
        for b in &agents[k + 1..] {
            best = best.min((a.p - b.p).norm_sq());
        }
    }
    best.sqrt()
}

fn filter(p: &QpProblem) -> Result<FilterResult> {
    let start = Instant::now();
    let sol = qp::solve(p)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok(FilterResult {
        u: sol.u_star,
        deviation: sol.deviation,
        n_rows: p.rows.len(),
        status: sol.status,
        slack_used: sol.slack_used,
        seconds,
    })
}

/// Solves one filter per agent, `rows_of(k)` giving agent `k`'s rows.
fn solve_filters<F>(
    agents: &[AgentState],
    u_nom: &[Vec3],
    cfg: &ScenarioConfig,
    parallel: bool,
    rows_of: F,
) -> Result<Vec<Option<FilterResult>>>
where
    F: Fn(&AgentState) -> Result<Vec<qp::QpRow>> + Sync,
{
    let one = |a: &AgentState| -> Result<Option<FilterResult>> {
        if a.reached {
            return Ok(None);
        }
        let rows = rows_of(a).map_err(|e| e.for_agent(a.id))?;
        let p = QpProblem {
            u_nom: u_nom[a.id],
            rows,
            bounds: cfg.bounds.input_box(),
        };
        filter(&p).map(Some).map_err(|e| e.for_agent(a.id))
    };
    if parallel {
        agents.par_iter().map(one).collect()
    } else {
        agents.iter().map(one).collect()
    }
}

fn summarize(
    t: f64,
    agents: &[AgentState],
    params: &HocbfParams,
    interaction: &InteractionSet,
    filters: &[Option<FilterResult>],
) -> StepMetrics {
    let solved: Vec<&FilterResult> = filters.iter().flatten().collect();
    let total_deviation = solved.iter().map(|f| f.deviation).sum();
    let mean_barrier = if interaction.is_empty() {
        f64::NAN
    } else {
        interaction
            .edges
            .iter()
            .map(|&(i, j)| barrier(agents[i].p - agents[j].p, Vec3::ZERO, params.r_s).0)
            .sum::<f64>()
            / interaction.len() as f64
    };
    let (qp_time_mean, qp_time_max) = if solved.is_empty() {
        (0.0, 0.0)
    } else {
        let sum: f64 = solved.iter().map(|f| f.seconds).sum();
        let max = solved.iter().map(|f| f.seconds).fold(0.0, f64::max);
        (sum / solved.len() as f64, max)
    };
    StepMetrics {
        t,
        total_deviation,
        mean_barrier,
        min_pair_dist: min_pair_distance(agents),
        qp_time_mean,
        qp_time_max,
        n_active_edges: interaction.len(),
        n_relaxed_qps: solved.iter().filter(|f| f.status == QpStatus::Relaxed).count(),
        assignment_churn: 0.0,
    }
}

fn inputs_from(filters: &[Option<FilterResult>]) -> Vec<Vec3> {
    filters.iter().map(|f| f.map_or(Vec3::ZERO, |f| f.u)).collect()
}

/// Every agent enforces a row against every active neighbor.
pub fn tick_decentralized(agents: &[AgentState], cfg: &ScenarioConfig, t: f64, parallel: bool) -> Result<TickOutcome> {
    check_ids(agents)?;
    let params = HocbfParams::from_config(cfg);
    let u_nom = nominal_inputs(agents, cfg);
    let interaction = build_interaction_set(agents, cfg.activation_radius);
    let neighbors = interaction.neighbor_lists(agents.len());
    let filters = solve_filters(agents, &u_nom, cfg, parallel, |a| {
        neighbors[a.id]
            .iter()
            .map(|&j| {
                let u_bar = neighbor_estimate(cfg.neighbor_input_model, a, &agents[j], &u_nom);
                let c = build_constraint(a, &agents[j], &params, u_bar)?;
                Ok(qp::QpRow { a: c.a, b: c.b })
            })
            .collect()
    })?;
    let metrics = summarize(t, agents, &params, &interaction, &filters);
    Ok(TickOutcome {
        inputs: inputs_from(&filters),
        u_nom,
        interaction,
        filters,
        metrics,
        costs: Vec::new(),
        assignment: None,
        additive: AdditiveBoundStats::default(),
    })
}

/// Edge costs, then the per-edge allocation, then a reduced filter per
/// agent holding only its assigned rows.
pub fn tick_coordinated(agents: &[AgentState], cfg: &ScenarioConfig, t: f64, parallel: bool) -> Result<TickOutcome> {
    check_ids(agents)?;
    let params = HocbfParams::from_config(cfg);
    let u_nom = nominal_inputs(agents, cfg);
    let interaction = build_interaction_set(agents, cfg.activation_radius);
    let directed = |i: usize, j: usize| {
        let (ai, aj) = (&agents[i], &agents[j]);
        let u_bar = neighbor_estimate(cfg.neighbor_input_model, ai, aj, &u_nom);
        edge_cost(ai, aj, u_nom[i], u_bar, &params, &cfg.bounds)
    };
    let pair = |&(i, j): &(usize, usize)| -> Result<EdgePair> { Ok(EdgePair::from_costs(directed(i, j)?, directed(j, i)?)) };
    let costs: Vec<EdgePair> = if parallel {
        interaction.edges.par_iter().map(pair).collect::<Result<_>>()?
    } else {
        interaction.edges.iter().map(pair).collect::<Result<_>>()?
    };
    let assignment = solve_milp(&costs)?;
    let filters = solve_filters(agents, &u_nom, cfg, parallel, |a| {
        assignment
            .responsibilities_of(a.id)
            .iter()
            .map(|&j| {
                let u_bar = neighbor_estimate(cfg.neighbor_input_model, a, &agents[j], &u_nom);
                let c = build_constraint(a, &agents[j], &params, u_bar)?;
                Ok(qp::QpRow { a: c.a, b: c.b })
            })
            .collect()
    })?;

    let mut additive = AdditiveBoundStats::default();
    let mut directed_cost: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for e in &costs {
        directed_cost.insert((e.i, e.j), e.j_ij);
        directed_cost.insert((e.j, e.i), e.j_ji);
    }
    let cost_of = |i: usize, j: usize| directed_cost.get(&(i, j)).copied().unwrap_or(f64::NAN);
    for (&i, set) in &assignment.responsibility_sets {
        let Some(f) = filters[i] else { continue };
        if f.status != QpStatus::Optimal {
            continue;
        }
        let bound: f64 = set.iter().map(|&j| cost_of(i, j)).sum();
        if set.len() == 1 {
            if cfg.bounds.input_box().is_none() {
                additive.single_checked += 1;
                additive.single_max_gap = additive.single_max_gap.max((f.deviation - bound).abs());
            }
        } else {
            additive.multi_checked += 1;
            if f.deviation > bound * (1.0 + 1e-9) + 1e-12 {
                additive.multi_violations += 1;
            }
        }
    }

    let metrics = summarize(t, agents, &params, &interaction, &filters);
    Ok(TickOutcome {
        inputs: inputs_from(&filters),
        u_nom,
        interaction,
        filters,
        metrics,
        costs,
        assignment: Some(assignment),
        additive,
    })
}

/// Exact joint solve over all agents' inputs.
pub fn tick_oracle(agents: &[AgentState], cfg: &ScenarioConfig, t: f64) -> Result<TickOutcome> {
    check_ids(agents)?;
    let params = HocbfParams::from_config(cfg);
    let u_nom = nominal_inputs(agents, cfg);
    let interaction = build_interaction_set(agents, cfg.activation_radius);
    let start = Instant::now();
    let sol = minlp_oracle(agents, &interaction, &u_nom, &params, &cfg.bounds)?;
    let seconds = start.elapsed().as_secs_f64();
    let filters: Vec<Option<FilterResult>> = agents
        .iter()
        .map(|a| {
            (!a.reached).then(|| FilterResult {
                u: sol.inputs[a.id],
                deviation: (sol.inputs[a.id] - u_nom[a.id]).norm_sq(),
                n_rows: interaction.len(),
                status: QpStatus::Optimal,
                slack_used: 0.0,
                seconds,
            })
        })
        .collect();
    let mut metrics = summarize(t, agents, &params, &interaction, &filters);
    metrics.qp_time_mean = seconds;
    metrics.qp_time_max = seconds;
    Ok(TickOutcome {
        inputs: sol.inputs,
        u_nom,
        interaction,
        filters,
        metrics,
        costs: Vec::new(),
        assignment: None,
        additive: AdditiveBoundStats::default(),
    })
}

pub fn tick(agents: &[AgentState], cfg: &ScenarioConfig, t: f64, parallel: bool) -> Result<TickOutcome> {
    match cfg.mode {
        Mode::Decentralized => tick_decentralized(agents, cfg, t, parallel),
        Mode::Coordinated => tick_coordinated(agents, cfg, t, parallel),
        Mode::Oracle => tick_oracle(agents, cfg, t),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[derive(Default)]
pub struct RunOptions {
    pub parallel: bool,
    /// Record one trajectory row per agent every `trajectory_stride` ticks;
    /// 0 disables recording.
    pub trajectory_stride: usize,
    pub dump_assignments: bool,
}


#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub agent_id: usize,
    pub p: Vec3,
    pub v: Vec3,
    pub u: Vec3,
    pub u_nom: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssignmentRow {
    pub t: f64,
    pub i: usize,
    pub j: usize,
    pub j_ij: f64,
    pub j_ji: f64,
    pub z_ij: bool,
    pub z_ji: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// First time all agents are frozen at their goals; `None` on timeout.
    pub mission_time: Option<f64>,
    pub metrics: Vec<StepMetrics>,
    pub trajectory: Vec<TrajectoryRow>,
    pub assignments: Vec<AssignmentRow>,
    pub initial: Vec<AgentState>,
    pub final_state: Vec<AgentState>,
    /// Minimum pairwise distance over every recorded state, final included.
    pub min_separation: f64,
    /// Minimum pairwise distance over ticks without a relaxed filter.
    pub min_separation_unrelaxed: f64,
    pub safety_violated: bool,
    pub relaxed_ticks: usize,
    pub forced_edges: usize,
    pub velocity_clips: usize,
    pub qp_solves: usize,
    pub qp_seconds: f64,
    pub additive: AdditiveBoundStats,
    pub wall_seconds: f64,
}

impl RunResult {
    /// `sum_t total_deviation * dt`.
    pub fn integrated_deviation(&self, dt: f64) -> f64 {
        self.metrics.iter().map(|m| m.total_deviation).sum::<f64>() * dt
    }

    pub fn mean_qp_seconds(&self) -> f64 {
        if self.qp_solves == 0 {
            0.0
        } else {
            self.qp_seconds / self.qp_solves as f64
        }
    }

    pub fn mean_tick_seconds(&self) -> f64 {
        self.wall_seconds / self.metrics.len().max(1) as f64
    }

    /// Time-average of the per-tick mean barrier over ticks with edges.
    pub fn mean_barrier(&self) -> f64 {
        let vals: Vec<f64> = self.metrics.iter().map(|m| m.mean_barrier).filter(|v| !v.is_nan()).collect();
        if vals.is_empty() {
            f64::NAN
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    }

    /// Mission time, with a timeout counted as `t_max`.
    pub fn mission_time_or(&self, t_max: f64) -> f64 {
        self.mission_time.unwrap_or(t_max)
    }
}

fn churn(prev: &BTreeMap<(usize, usize), (bool, bool)>, now: &AssignmentSolution) -> f64 {
    let mut common = 0usize;
    let mut flipped = 0usize;
    for e in &now.edges {
        if let Some(&old) = prev.get(&(e.i, e.j)) {
            common += 1;
            if old != (e.z_ij, e.z_ji) {
                flipped += 1;
            }
        }
    }
    if common == 0 {
        0.0
    } else {
        flipped as f64 / common as f64
    }
}

/// Samples the scenario from `cfg` and runs it.
pub fn run(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunResult> {
    let agents = sample_scenario(cfg)?;
    run_from(cfg, agents, opts)
}

/// Runs from a given initial state until every agent is frozen at its goal
/// or `t_max` is reached.
pub fn run_from(cfg: &ScenarioConfig, mut agents: Vec<AgentState>, opts: &RunOptions) -> Result<RunResult> {
    cfg.validate()?;
    check_ids(&agents)?;
    let wall = Instant::now();
    let initial = agents.clone();
    let n_ticks = (cfg.t_max / cfg.dt).round() as usize;
    let mut out = RunResult {
        mission_time: None,
        metrics: Vec::with_capacity(n_ticks),
        trajectory: Vec::new(),
        assignments: Vec::new(),
        initial,
        final_state: Vec::new(),
        min_separation: f64::INFINITY,
        min_separation_unrelaxed: f64::INFINITY,
        safety_violated: false,
        relaxed_ticks: 0,
        forced_edges: 0,
        velocity_clips: 0,
        qp_solves: 0,
        qp_seconds: 0.0,
        additive: AdditiveBoundStats::default(),
        wall_seconds: 0.0,
    };
    let mut prev: BTreeMap<(usize, usize), (bool, bool)> = BTreeMap::new();

    for k in 0..n_ticks {
        if agents.iter().all(|a| a.reached) {
            break;
        }
        let t = k as f64 * cfg.dt;
        let mut o = tick(&agents, cfg, t, opts.parallel)?;
        if let Some(asg) = &o.assignment {
            o.metrics.assignment_churn = churn(&prev, asg);
            out.forced_edges += asg.n_forced();
            prev = asg.edges.iter().map(|e| ((e.i, e.j), (e.z_ij, e.z_ji))).collect();
            if opts.dump_assignments {
                for (e, c) in asg.edges.iter().zip(&o.costs) {
                    out.assignments.push(AssignmentRow {
                        t,
                        i: e.i,
                        j: e.j,
                        j_ij: c.j_ij,
                        j_ji: c.j_ji,
                        z_ij: e.z_ij,
                        z_ji: e.z_ji,
                    });
                }
            }
        }
        out.additive.merge(&o.additive);
        for f in o.filters.iter().flatten() {
            out.qp_solves += 1;
            out.qp_seconds += f.seconds;
        }
        let m = o.metrics;
        out.min_separation = out.min_separation.min(m.min_pair_dist);
        if m.n_relaxed_qps > 0 {
            out.relaxed_ticks += 1;
        } else {
            out.min_separation_unrelaxed = out.min_separation_unrelaxed.min(m.min_pair_dist);
        }
        if opts.trajectory_stride > 0 && k % opts.trajectory_stride == 0 {
            for a in &agents {
                out.trajectory.push(TrajectoryRow {
                    t,
                    agent_id: a.id,
                    p: a.p,
                    v: a.v,
                    u: o.inputs[a.id],
                    u_nom: o.u_nom[a.id],
                });
            }
        }
        out.metrics.push(m);

        let mut next = Vec::with_capacity(agents.len());
        for (a, u) in agents.iter().zip(&o.inputs) {
            if a.reached {
                next.push(*a);
                continue;
            }
            let s = step_logged(a, *u, cfg.dt, &cfg.bounds)?;
            out.velocity_clips += s.velocity_clipped as usize;
            let mut b = s.state;
            if (b.p - b.goal).norm() <= cfg.goal_tolerance && b.v.norm() < FREEZE_SPEED {
                b.reached = true;
                b.v = Vec3::ZERO;
            }
            next.push(b);
        }
        agents = next;
        if agents.iter().all(|a| a.reached) {
            out.mission_time = Some((k + 1) as f64 * cfg.dt);
        }
    }

    let final_min = min_pair_distance(&agents);
    out.min_separation = out.min_separation.min(final_min);
    out.min_separation_unrelaxed = out.min_separation_unrelaxed.min(final_min);
    out.safety_violated = out.min_separation < cfg.r_s;
    out.final_state = agents;
    out.wall_seconds = wall.elapsed().as_secs_f64();
    Ok(out)
}
