//! Loading a TOML scenario and writing a full run directory.
//!
//! `cargo run --example scenario_file -- [path.toml] [out_dir]`

use std::path::PathBuf;

use safecoord::engine::{run, RunOptions};
use safecoord::output::{unix_now, write_run_dir};
use safecoord::ScenarioConfig;

fn main() -> safecoord::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().map_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/scenario.toml"), PathBuf::from);
    let out = args.next().map_or_else(|| std::env::temp_dir().join("safecoord-scenario"), PathBuf::from);
    let cfg = ScenarioConfig::load(&path)?;
    let started = unix_now();
    let r = run(&cfg, &RunOptions { trajectory_stride: 5, dump_assignments: true, ..RunOptions::default() })?;
    let manifest = write_run_dir(&out, &cfg, &r, started)?;
    println!("{} agents, {:?}, mission {:?}, min separation {:.4}", cfg.n_agents, cfg.mode, r.mission_time, r.min_separation);
    println!("wrote {:?} to {}", manifest.files, out.display());
    Ok(())
}
