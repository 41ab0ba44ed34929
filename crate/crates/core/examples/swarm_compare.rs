//! The 100-agent benchmark in both modes for one seed.
//!
//! `cargo run --release --example swarm_compare -- [seed]`

use safecoord::engine::{run, RunOptions};
use safecoord::{Mode, ScenarioConfig};

fn main() -> safecoord::Result<()> {
    let seed = std::env::args().nth(1).map_or(1, |s| s.parse().expect("seed must be an integer"));
    for mode in [Mode::Decentralized, Mode::Coordinated] {
        let cfg = ScenarioConfig { seed, mode, ..ScenarioConfig::default() };
        let r = run(&cfg, &RunOptions { parallel: true, ..RunOptions::default() })?;
        println!(
            "{:<13} mission {:>8}  deviation {:.4e}  mean h {:.3}  qp {:.2} us  min_sep {:.4}  relaxed ticks {}",
            mode.to_string(),
            r.mission_time.map_or("timeout".into(), |t| format!("{t:.2}s")),
            r.integrated_deviation(cfg.dt),
            r.mean_barrier(),
            r.mean_qp_seconds() * 1e6,
            r.min_separation,
            r.relaxed_ticks
        );
    }
    Ok(())
}
