//! Two agents swapping places along a line.
//!
//! A pair that enters the activation radius while closing fast already has
//! `psi1 = h' + gamma1 h < 0`, and a single responsible agent cannot recover
//! it. With the radius wide enough that the pair is active from rest, both
//! modes keep separation.

use safecoord::engine::{run_from, RunOptions};
use safecoord::{AgentState, Mode, NeighborModel, ScenarioConfig, Vec3};

fn main() -> safecoord::Result<()> {
    let agents = vec![
        AgentState::at_rest(0, Vec3::planar(-3.0, 0.0), Vec3::planar(3.0, 0.02)),
        AgentState::at_rest(1, Vec3::planar(3.0, 0.0), Vec3::planar(-3.0, -0.02)),
    ];
    for radius in [2.0, 7.0] {
        for model in [NeighborModel::Zero, NeighborModel::Reciprocal] {
            for mode in [Mode::Decentralized, Mode::Coordinated] {
                let cfg = ScenarioConfig {
                    n_agents: 2,
                    mode,
                    neighbor_input_model: model,
                    activation_radius: radius,
                    t_max: 20.0,
                    ..ScenarioConfig::default()
                };
                let r = run_from(&cfg, agents.clone(), &RunOptions::default())?;
                println!(
                    "radius {radius}  {:<10} {:<13} mission {:>7}  min separation {:.4} (r_s {})  deviation {:9.3}",
                    model.to_string(),
                    mode.to_string(),
                    r.mission_time.map_or("timeout".into(), |t| format!("{t:.2}s")),
                    r.min_separation,
                    cfg.r_s,
                    r.integrated_deviation(cfg.dt)
                );
            }
        }
    }
    Ok(())
}
