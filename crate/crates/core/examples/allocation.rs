//! Responsibility allocation on one snapshot of a small swarm: directed
//! single-constraint costs, the per-edge optimum, and the enumeration oracle.

use safecoord::allocator::{build_interaction_set, edge_cost, milp_oracle, solve_milp, EdgePair};
use safecoord::engine::nominal_inputs;
use safecoord::hocbf::HocbfParams;
use safecoord::world::sample_scenario;
use safecoord::{ScenarioConfig, Vec3};

fn main() -> safecoord::Result<()> {
    let cfg = ScenarioConfig {
        n_agents: 6,
        seed: 11,
        sample_box: safecoord::config::SampleBox { min: -1.5, max: 1.5 },
        ..ScenarioConfig::default()
    };
    let mut agents = sample_scenario(&cfg)?;
    for a in &mut agents {
        a.v = (a.goal - a.p) * 0.5;
    }
    let params = HocbfParams::from_config(&cfg);
    let u_nom = nominal_inputs(&agents, &cfg);
    let edges = build_interaction_set(&agents, cfg.activation_radius);
    let mut pairs = Vec::new();
    for &(i, j) in &edges.edges {
        let ij = edge_cost(&agents[i], &agents[j], u_nom[i], Vec3::ZERO, &params, &cfg.bounds)?;
        let ji = edge_cost(&agents[j], &agents[i], u_nom[j], Vec3::ZERO, &params, &cfg.bounds)?;
        pairs.push(EdgePair::from_costs(ij, ji));
    }

    let fast = solve_milp(&pairs)?;
    let oracle = milp_oracle(&pairs)?;
    println!("{} edges", pairs.len());
    for (p, z) in pairs.iter().zip(&fast.edges) {
        let owner = if z.z_ij { p.i } else { p.j };
        println!("  ({}, {})  J_ij {:8.4}  J_ji {:8.4}  -> agent {owner}", p.i, p.j, p.j_ij, p.j_ji);
    }
    println!("objective {:.6} (enumeration {:.6})", fast.objective, oracle.objective);
    for (agent, set) in &fast.responsibility_sets {
        println!("  agent {agent} enforces against {set:?}");
    }
    Ok(())
}
