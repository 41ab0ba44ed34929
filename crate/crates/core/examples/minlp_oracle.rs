//! The joint oracle on a three-agent snapshot next to one coordinated tick.

use safecoord::allocator::{build_interaction_set, minlp_oracle};
use safecoord::engine::{nominal_inputs, tick_coordinated};
use safecoord::hocbf::HocbfParams;
use safecoord::{AgentState, ScenarioConfig, Vec3};

fn main() -> safecoord::Result<()> {
    let cfg = ScenarioConfig { n_agents: 3, ..ScenarioConfig::default() };
    let agents = vec![
        AgentState { v: Vec3::planar(1.0, 0.0), ..AgentState::at_rest(0, Vec3::planar(-0.6, 0.0), Vec3::planar(4.0, 0.0)) },
        AgentState { v: Vec3::planar(-1.0, 0.0), ..AgentState::at_rest(1, Vec3::planar(0.6, 0.1), Vec3::planar(-4.0, 0.0)) },
        AgentState { v: Vec3::planar(0.0, -1.0), ..AgentState::at_rest(2, Vec3::planar(0.0, 0.9), Vec3::planar(0.0, -4.0)) },
    ];
    let edges = build_interaction_set(&agents, cfg.activation_radius);
    let u_nom = nominal_inputs(&agents, &cfg);
    let joint = minlp_oracle(&agents, &edges, &u_nom, &HocbfParams::from_config(&cfg), &cfg.bounds)?;
    let tick = tick_coordinated(&agents, &cfg, 0.0, false)?;
    println!("joint optimum {:.4} over {} patterns ({} distinct QPs)", joint.objective, joint.patterns, joint.distinct_qps);
    for (i, j, z_ij, z_ji) in &joint.z {
        println!("  ({i}, {j})  z_ij {z_ij}  z_ji {z_ji}");
    }
    println!("coordinated tick {:.4}", tick.metrics.total_deviation);
    for (k, (u, n)) in tick.inputs.iter().zip(&u_nom).enumerate() {
        println!("  agent {k}  nominal {:?}  filtered {:?}  joint {:?}", n.to_array(), u.to_array(), joint.inputs[k].to_array());
    }
    Ok(())
}
