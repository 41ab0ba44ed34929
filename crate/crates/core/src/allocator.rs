//! Responsibility allocation: who of each interacting pair enforces the
//! pair's collision constraint.
//!
//! Each ordered pair `(i, j)` gets the cost of agent `i` enforcing the
//! constraint alone, i.e. the squared distance from its nominal input to
//! the halfspace. The coverage problem
//!
//! ```text
//! minimize    sum J_ij z_ij
//! subject to  z_ij + z_ji >= 1,  z binary
//! ```
//!
//! has no coupling between edges, so with nonnegative costs it is solved
//! edge by edge by picking the cheaper direction. [`milp_oracle`] checks
//! that by enumeration and [`minlp_oracle`] solves the exact joint problem
//! in which neighbor inputs are decision variables.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hocbf::{build_constraint, HocbfParams};
use crate::qp::dense::{DenseOutcome, DenseProblem};
use crate::qp::project_single;
use crate::world::{AgentState, Bounds, Vec3};

/// Largest edge count [`milp_oracle`] enumerates.
pub const MILP_ORACLE_MAX_EDGES: usize = 16;
/// Largest agent count [`minlp_oracle`] accepts.
pub const MINLP_ORACLE_MAX_AGENTS: usize = 6;
/// Largest edge count [`minlp_oracle`] accepts.
pub const MINLP_ORACLE_MAX_EDGES: usize = 10;

/// Unordered interacting pairs `(i, j)` with `i < j`, sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct InteractionSet {
    pub edges: Vec<(usize, usize)>,
}

impl InteractionSet {
    pub fn from_edges(mut edges: Vec<(usize, usize)>) -> Self {
        for e in edges.iter_mut() {
            assert_ne!(e.0, e.1, "self-pair in interaction set");
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        edges.sort_unstable();
        edges.dedup();
        InteractionSet { edges }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Neighbors of every agent, each list ascending. Indexed by id.
    pub fn neighbor_lists(&self, n_agents: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); n_agents];
        for &(i, j) in &self.edges {
            out[i].push(j);
            out[j].push(i);
        }
        for l in out.iter_mut() {
            l.sort_unstable();
        }
        out
    }
}

/// Pairs within `activation_radius` of each other.
///
/// Pairs where both agents are frozen at their goals never interact again
/// and are skipped. A frozen agent next to a moving one stays in the set as
/// a static obstacle.
pub fn build_interaction_set(agents: &[AgentState], activation_radius: f64) -> InteractionSet {
    let r2 = activation_radius * activation_radius;
    let mut edges = Vec::new();
    for (a, ai) in agents.iter().enumerate() {
        for aj in &agents[a + 1..] {
            if ai.reached && aj.reached {
                continue;
            }
            if (ai.p - aj.p).norm_sq() <= r2 {
                edges.push((ai.id.min(aj.id), ai.id.max(aj.id)));
            }
        }
    }
    InteractionSet::from_edges(edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeCost {
    pub i: usize,
    pub j: usize,
    /// `f64::INFINITY` marks an assignment agent `i` cannot carry.
    pub cost: f64,
}

/// Both directed costs of one edge, `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgePair {
    pub i: usize,
    pub j: usize,
    pub j_ij: f64,
    pub j_ji: f64,
}

impl EdgePair {
    pub fn from_costs(ij: EdgeCost, ji: EdgeCost) -> Self {
        debug_assert!(ij.i == ji.j && ij.j == ji.i);
        if ij.i < ij.j {
            EdgePair { i: ij.i, j: ij.j, j_ij: ij.cost, j_ji: ji.cost }
        } else {
            EdgePair { i: ji.i, j: ji.j, j_ij: ji.cost, j_ji: ij.cost }
        }
    }
}

/// Cost of agent `i` enforcing its constraint against `j` in isolation.
///
/// Infinite when `i` is frozen, or when input bounds are enforced and the
/// single-constraint projection leaves the input box.
pub fn edge_cost(
    i: &AgentState,
    j: &AgentState,
    u_nom_i: Vec3,
    u_bar_j: Vec3,
    params: &HocbfParams,
    bounds: &Bounds,
) -> Result<EdgeCost> {
    let row = build_constraint(i, j, params, u_bar_j)?;
    let (u_star, cost) = project_single(u_nom_i, row.a, row.b)?;
    let mut cost = cost;
    if i.reached {
        cost = f64::INFINITY;
    } else if let Some((lo, hi)) = bounds.input_box() {
        if !u_star.within(lo, hi, 0.0) {
            cost = f64::INFINITY;
        }
    }
    Ok(EdgeCost { i: i.id, j: j.id, cost })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EdgeAssignment {
    pub i: usize,
    pub j: usize,
    pub z_ij: bool,
    pub z_ji: bool,
    /// Both directions were infinite; both agents were made responsible.
    pub forced_infeasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssignmentSolution {
    /// One entry per edge, in the order of the input costs.
    pub edges: Vec<EdgeAssignment>,
    pub objective: f64,
    /// For each agent with at least one assignment, the neighbors it must
    /// enforce against, ascending.
    pub responsibility_sets: BTreeMap<usize, Vec<usize>>,
}

impl AssignmentSolution {
    fn assemble(pairs: &[EdgePair], choice: impl Iterator<Item = (bool, bool, bool)>) -> Self {
        let mut edges = Vec::with_capacity(pairs.len());
        let mut sets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (e, (z_ij, z_ji, forced)) in pairs.iter().zip(choice) {
            if z_ij {
                sets.entry(e.i).or_default().push(e.j);
            }
            if z_ji {
                sets.entry(e.j).or_default().push(e.i);
            }
            edges.push(EdgeAssignment { i: e.i, j: e.j, z_ij, z_ji, forced_infeasible: forced });
        }
        for l in sets.values_mut() {
            l.sort_unstable();
        }
        let objective = objective(pairs, edges.iter().map(|a| (a.z_ij, a.z_ji)));
        AssignmentSolution { edges, objective, responsibility_sets: sets }
    }

    pub fn covers_all(&self) -> bool {
        self.edges.iter().all(|e| e.z_ij || e.z_ji)
    }

    pub fn responsibilities_of(&self, agent: usize) -> &[usize] {
        self.responsibility_sets.get(&agent).map_or(&[], |v| v.as_slice())
    }

    pub fn n_forced(&self) -> usize {
        self.edges.iter().filter(|e| e.forced_infeasible).count()
    }
}

/// `sum J z` with the convention `0 * inf = 0`.
pub fn objective(pairs: &[EdgePair], z: impl Iterator<Item = (bool, bool)>) -> f64 {
    pairs
        .iter()
        .zip(z)
        .map(|(e, (z_ij, z_ji))| {
            let a = if z_ij { e.j_ij } else { 0.0 };
            let b = if z_ji { e.j_ji } else { 0.0 };
            a + b
        })
        .sum()
}

fn check_costs(pairs: &[EdgePair]) -> Result<()> {
    for e in pairs {
        for c in [e.j_ij, e.j_ji] {
            if c.is_nan() || c < 0.0 {
                return Err(Error::Config(format!("edge ({}, {}): cost must be >= 0, got {c}", e.i, e.j)));
            }
        }
    }
    Ok(())
}

/// Exact minimizer of the coverage MILP by per-edge decomposition. Ties go
/// to the lower agent id. An edge with both costs infinite gets both
/// directions assigned and is flagged.
pub fn solve_milp(pairs: &[EdgePair]) -> Result<AssignmentSolution> {
    check_costs(pairs)?;
    let choice = pairs.iter().map(|e| {
        if e.j_ij.is_infinite() && e.j_ji.is_infinite() {
            (true, true, true)
        } else if e.j_ij < e.j_ji || (e.j_ij == e.j_ji && e.i < e.j) {
            (true, false, false)
        } else {
            (false, true, false)
        }
    });
    Ok(AssignmentSolution::assemble(pairs, choice))
}

/// Global optimum of the coverage MILP by exhaustive enumeration of all
/// `2^(2|E|)` binary vectors. The first optimum in enumeration order wins.
pub fn milp_oracle(pairs: &[EdgePair]) -> Result<AssignmentSolution> {
    check_costs(pairs)?;
    let e = pairs.len();
    if e > MILP_ORACLE_MAX_EDGES {
        return Err(Error::SizeCap(format!("{e} edges > {MILP_ORACLE_MAX_EDGES}")));
    }
    let bit = |mask: u64, k: usize| mask >> k & 1 == 1;
    let mut best: Option<(u64, f64)> = None;
    for mask in 0u64..(1u64 << (2 * e)) {
        if !(0..e).all(|k| bit(mask, 2 * k) || bit(mask, 2 * k + 1)) {
            continue;
        }
        let obj = objective(pairs, (0..e).map(|k| (bit(mask, 2 * k), bit(mask, 2 * k + 1))));
        if best.is_none_or(|(_, b)| obj < b) {
            best = Some((mask, obj));
        }
    }
    let mask = best.map_or(0, |(m, _)| m);
    Ok(AssignmentSolution::assemble(
        pairs,
        (0..e).map(|k| {
            let (a, b) = (bit(mask, 2 * k), bit(mask, 2 * k + 1));
            let forced = a && b && pairs[k].j_ij.is_infinite() && pairs[k].j_ji.is_infinite();
            (a, b, forced)
        }),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinlpSolution {
    /// `(i, j, z_ij, z_ji)` per edge, in interaction-set order.
    pub z: Vec<(usize, usize, bool, bool)>,
    /// Joint optimal inputs, one per agent in the input order.
    pub inputs: Vec<Vec3>,
    pub objective: f64,
    /// Number of coverage patterns enumerated.
    pub patterns: usize,
    /// Number of distinct joint QPs actually solved.
    pub distinct_qps: usize,
}

/// Solves the joint allocation-and-control problem by enumerating every
/// coverage-feasible `z` and solving, for each, the stacked QP over all
/// agents' inputs with the exact coupled rows `a_ij.(u_i - u_j) >= c_ij`.
///
/// Patterns inducing the same row set share one QP solve. Frozen agents
/// keep zero input and contribute constants. `u_nom` is indexed by
/// position in `agents`.
pub fn minlp_oracle(
    agents: &[AgentState],
    interaction: &InteractionSet,
    u_nom: &[Vec3],
    params: &HocbfParams,
    bounds: &Bounds,
) -> Result<MinlpSolution> {
    let n = agents.len();
    let e = interaction.len();
    if n > MINLP_ORACLE_MAX_AGENTS || e > MINLP_ORACLE_MAX_EDGES {
        return Err(Error::SizeCap(format!(
            "{n} agents / {e} edges exceeds {MINLP_ORACLE_MAX_AGENTS} / {MINLP_ORACLE_MAX_EDGES}"
        )));
    }
    let pos: HashMap<usize, usize> = agents.iter().enumerate().map(|(k, a)| (a.id, k)).collect();
    // Variable slot of each agent, None when frozen.
    let mut slot = vec![None; n];
    let mut n_free = 0;
    for (k, a) in agents.iter().enumerate() {
        if !a.reached {
            slot[k] = Some(n_free);
            n_free += 1;
        }
    }
    let dim = 3 * n_free;
    let x0: Vec<f64> = agents
        .iter()
        .zip(u_nom)
        .filter(|(a, _)| !a.reached)
        .flat_map(|(_, u)| u.to_array())
        .collect();

    // Directed rows in stacked coordinates: (normal, rhs) for owner->other.
    let directed = |owner: usize, other: usize| -> Result<Option<(Vec<f64>, f64)>> {
        let row = build_constraint(&agents[owner], &agents[other], params, Vec3::ZERO)?;
        let mut c = vec![0.0; dim];
        for (k, sign) in [(owner, 1.0), (other, -1.0)] {
            if let Some(s) = slot[k] {
                for d in 0..3 {
                    c[3 * s + d] = sign * row.a[d];
                }
            }
        }
        if c.iter().all(|&v| v == 0.0) {
            // Both frozen: the row is a constant condition.
            return Ok(None);
        }
        Ok(Some((c, row.c_ij)))
    };
    let mut rows_ij = Vec::with_capacity(e);
    let mut rows_ji = Vec::with_capacity(e);
    for &(i, j) in &interaction.edges {
        let (pi, pj) = (pos[&i], pos[&j]);
        rows_ij.push(directed(pi, pj)?);
        rows_ji.push(directed(pj, pi)?);
    }

    let mut box_rows: Vec<(Vec<f64>, f64)> = Vec::new();
    if let Some((lo, hi)) = bounds.input_box() {
        for s in 0..n_free {
            for d in 0..3 {
                let mut c = vec![0.0; dim];
                c[3 * s + d] = 1.0;
                box_rows.push((c.clone(), lo[d]));
                c[3 * s + d] = -1.0;
                box_rows.push((c, -hi[d]));
            }
        }
    }

    type Key = Vec<Vec<u64>>;
    let mut cache: HashMap<Key, Option<(Vec<f64>, f64)>> = HashMap::new();
    let mut best: Option<(Vec<(bool, bool)>, Vec<f64>, f64)> = None;
    let mut patterns = 0usize;
    let total = 3usize.pow(e as u32);
    for code in 0..total {
        // Digit 0: z_ij only, 1: z_ji only, 2: both.
        let mut rem = code;
        let z: Vec<(bool, bool)> = (0..e)
            .map(|_| {
                let d = rem % 3;
                rem /= 3;
                (d != 1, d != 0)
            })
            .collect();
        patterns += 1;
        let mut rows: Vec<&(Vec<f64>, f64)> = Vec::new();
        for (k, &(a, b)) in z.iter().enumerate() {
            if a {
                rows.extend(rows_ij[k].as_ref());
            }
            if b {
                rows.extend(rows_ji[k].as_ref());
            }
        }
        let mut key: Key = rows
            .iter()
            // +0.0 folds -0.0 into 0.0 so mirrored rows hash alike.
            .map(|(c, d)| c.iter().chain(std::iter::once(d)).map(|v| (v + 0.0).to_bits()).collect())
            .collect();
        key.sort_unstable();
        key.dedup();
        let result = match cache.get(&key) {
            Some(r) => r.clone(),
            None => {
                let mut normals: Vec<Vec<f64>> = rows.iter().map(|(c, _)| c.clone()).collect();
                let mut rhs: Vec<f64> = rows.iter().map(|(_, d)| *d).collect();
                for (c, d) in &box_rows {
                    normals.push(c.clone());
                    rhs.push(*d);
                }
                let outcome = DenseProblem { x0: x0.clone(), normals, rhs }.solve()?;
                let r = match outcome {
                    DenseOutcome::Optimal(s) => {
                        let obj = s.x.iter().zip(&x0).map(|(a, b)| (a - b).powi(2)).sum();
                        Some((s.x, obj))
                    }
                    DenseOutcome::Infeasible => None,
                };
                cache.insert(key, r.clone());
                r
            }
        };
        if let Some((x, obj)) = result {
            if best.as_ref().is_none_or(|(_, _, b)| obj < *b) {
                best = Some((z, x, obj));
            }
        }
    }
    let Some((z, x, objective)) = best else {
        return Err(Error::JointlyInfeasible);
    };
    let inputs = slot
        .iter()
        .map(|s| s.map_or(Vec3::ZERO, |s| Vec3::from_slice(&x[3 * s..3 * s + 3])))
        .collect();
    Ok(MinlpSolution {
        z: interaction
            .edges
            .iter()
            .zip(&z)
            .map(|(&(i, j), &(a, b))| (i, j, a, b))
            .collect(),
        inputs,
        objective,
        patterns,
        distinct_qps: cache.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::CijVariant;

    fn pair(i: usize, j: usize, j_ij: f64, j_ji: f64) -> EdgePair {
        EdgePair { i, j, j_ij, j_ji }
    }

    fn params() -> HocbfParams {
        HocbfParams { r_s: 0.3, gamma1: 5.0, gamma2: 2.0, variant: CijVariant::Paper }
    }

    fn agent(id: usize, p: Vec3, v: Vec3) -> AgentState {
        AgentState { id, p, v, goal: Vec3::ZERO, reached: false }
    }

    #[test]
    fn cheaper_direction_wins() {
        let s = solve_milp(&[pair(0, 1, 0.25, 0.5)]).unwrap();
        assert_eq!(s.edges[0], EdgeAssignment { i: 0, j: 1, z_ij: true, z_ji: false, forced_infeasible: false });
        assert_eq!(s.objective, 0.25);
        assert_eq!(s.responsibilities_of(0), &[1]);
        assert!(s.responsibilities_of(1).is_empty());
    }

    #[test]
    fn tie_goes_to_lower_id() {
        let s = solve_milp(&[pair(2, 5, 0.3, 0.3)]).unwrap();
        assert!(s.edges[0].z_ij && !s.edges[0].z_ji);
        assert_eq!(s.responsibilities_of(2), &[5]);
    }

    #[test]
    fn both_infinite_is_forced() {
        let s = solve_milp(&[pair(0, 1, f64::INFINITY, f64::INFINITY), pair(1, 2, 1.0, f64::INFINITY)]).unwrap();
        assert!(s.edges[0].z_ij && s.edges[0].z_ji && s.edges[0].forced_infeasible);
        assert!(s.edges[1].z_ij && !s.edges[1].z_ji);
        assert_eq!(s.n_forced(), 1);
        assert!(s.covers_all());
    }

    #[test]
    fn negative_cost_rejected() {
        assert!(solve_milp(&[pair(0, 1, -1.0, 0.0)]).is_err());
    }

    #[test]
    fn oracle_single_edge() {
        let s = milp_oracle(&[pair(0, 1, 0.7, 0.2)]).unwrap();
        assert!(!s.edges[0].z_ij && s.edges[0].z_ji);
        assert_eq!(s.objective, 0.2);
    }

    #[test]
    fn oracle_size_cap() {
        let pairs: Vec<_> = (0..17).map(|k| pair(k, k + 1, 1.0, 1.0)).collect();
        assert!(matches!(milp_oracle(&pairs), Err(Error::SizeCap(_))));
    }

    #[test]
    fn edge_cost_examples() {
        let p = params();
        let bounds = Bounds::default();
        // Far apart and at rest: the nominal input already satisfies the row.
        let i = agent(0, Vec3::planar(1.5, 0.0), Vec3::ZERO);
        let j = agent(1, Vec3::ZERO, Vec3::ZERO);
        assert_eq!(edge_cost(&i, &j, Vec3::ZERO, Vec3::ZERO, &p, &bounds).unwrap().cost, 0.0);

        // Closing head-on: positive cost equal to the projection cost.
        let i = agent(0, Vec3::planar(1.0, 0.0), Vec3::planar(-2.0, 0.0));
        let c = edge_cost(&i, &j, Vec3::ZERO, Vec3::ZERO, &p, &bounds).unwrap();
        let row = build_constraint(&i, &j, &p, Vec3::ZERO).unwrap();
        let (_, expect) = project_single(Vec3::ZERO, row.a, row.b).unwrap();
        assert_eq!(c.cost, expect);
        assert!(c.cost > 0.0);

        // Same with input bounds on: the projection needs more than the box.
        let strict = Bounds { enforce_input: true, ..Bounds::default() };
        let fast = agent(0, Vec3::planar(1.0, 0.0), Vec3::planar(-3.0, 0.0));
        assert_eq!(edge_cost(&fast, &j, Vec3::ZERO, Vec3::ZERO, &p, &strict).unwrap().cost, f64::INFINITY);

        let frozen = AgentState { reached: true, ..i };
        assert_eq!(edge_cost(&frozen, &j, Vec3::ZERO, Vec3::ZERO, &p, &bounds).unwrap().cost, f64::INFINITY);
    }

    #[test]
    fn interaction_set_rules() {
        let a = agent(0, Vec3::ZERO, Vec3::ZERO);
        let b = agent(1, Vec3::planar(10.0, 0.0), Vec3::ZERO);
        assert!(build_interaction_set(&[a, b], 2.0).is_empty());
        let b = agent(1, Vec3::planar(1.0, 0.0), Vec3::ZERO);
        assert_eq!(build_interaction_set(&[a, b], 2.0).edges, vec![(0, 1)]);
        let fa = AgentState { reached: true, ..a };
        let fb = AgentState { reached: true, ..b };
        assert_eq!(build_interaction_set(&[fa, b], 2.0).edges, vec![(0, 1)]);
        assert!(build_interaction_set(&[fa, fb], 2.0).is_empty());
    }

    #[test]
    fn minlp_no_edges() {
        let agents = [agent(0, Vec3::ZERO, Vec3::ZERO), agent(1, Vec3::planar(9.0, 0.0), Vec3::ZERO)];
        let u_nom = [Vec3::planar(1.0, 0.0), Vec3::planar(0.0, -1.0)];
        let s = minlp_oracle(&agents, &InteractionSet::default(), &u_nom, &params(), &Bounds::default()).unwrap();
        assert_eq!(s.objective, 0.0);
        assert_eq!(s.inputs, u_nom.to_vec());
    }

    #[test]
    fn minlp_head_on_splits_effort() {
        // Symmetric head-on: the joint optimum shares the correction evenly,
        // costing half of what one agent alone would pay.
        let i = agent(0, Vec3::planar(0.5, 0.0), Vec3::planar(-1.0, 0.0));
        let j = agent(1, Vec3::planar(-0.5, 0.0), Vec3::planar(1.0, 0.0));
        let p = params();
        let set = InteractionSet::from_edges(vec![(0, 1)]);
        let s = minlp_oracle(&[i, j], &set, &[Vec3::ZERO; 2], &p, &Bounds::default()).unwrap();
        let row = build_constraint(&i, &j, &p, Vec3::ZERO).unwrap();
        let (_, alone) = project_single(Vec3::ZERO, row.a, row.b).unwrap();
        assert!((s.objective - alone / 2.0).abs() < 1e-9, "{} vs {}", s.objective, alone);
        assert!((s.inputs[0] + s.inputs[1]).norm() < 1e-9);
        assert_eq!(s.patterns, 3);
        assert_eq!(s.distinct_qps, 1);
    }
}
