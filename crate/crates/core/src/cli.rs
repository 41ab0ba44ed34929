//! Command-line front end: `run`, `compare` and `validate`.
//!
//! Settings are layered: built-in defaults, then `--config FILE`, then
//! environment variables (`SAFECOORD_MODE`, `SAFECOORD_AGENTS`, ...), then
//! flags. Exit codes: 0 success, 1 runtime or validation failure, 2 usage
//! or configuration error.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{CijVariant, Mode, NeighborModel, ScenarioConfig};
use crate::engine::{run, RunOptions, RunResult};
use crate::error::{Error, Result};
use crate::output::{self, fmt_float, Summary};
use crate::validate::{self, Replay, ValidateOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "safecoord", version, about = "Barrier-function safety filters with responsibility allocation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one scenario and write its artifacts.
    Run(RunArgs),
    /// Run decentralized and coordinated modes on the same scenarios.
    Compare(CompareArgs),
    /// Cross-check the solvers against brute-force oracles.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// TOML scenario file; flags override its values.
    #[arg(long, env = "SAFECOORD_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "SAFECOORD_MODE")]
    pub mode: Option<Mode>,
    #[arg(long, env = "SAFECOORD_AGENTS")]
    pub agents: Option<usize>,
    #[arg(long, env = "SAFECOORD_DT")]
    pub dt: Option<f64>,
    #[arg(long, env = "SAFECOORD_T_MAX")]
    pub t_max: Option<f64>,
    #[arg(long, env = "SAFECOORD_ACTIVATION_RADIUS")]
    pub activation_radius: Option<f64>,
    /// Ignore the input box even if the config enables it.
    #[arg(long, env = "SAFECOORD_NO_INPUT_BOUNDS")]
    pub no_input_bounds: bool,
    #[arg(long, env = "SAFECOORD_CIJ_VARIANT")]
    pub cij_variant: Option<CijVariant>,
    #[arg(long, env = "SAFECOORD_NEIGHBOR_MODEL")]
    pub neighbor_model: Option<NeighborModel>,
    /// Solve the per-agent filters on one thread.
    #[arg(long, env = "SAFECOORD_SERIAL")]
    pub serial: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, env = "SAFECOORD_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "SAFECOORD_OUT", default_value = "out")]
    pub out: PathBuf,
    /// Also write the per-tick allocation to assignments.csv.
    #[arg(long, env = "SAFECOORD_DUMP_ASSIGNMENTS")]
    pub dump_assignments: bool,
    /// Write trajectory rows every this many ticks.
    #[arg(long, env = "SAFECOORD_TRAJECTORY_STRIDE", default_value_t = 10)]
    pub trajectory_stride: usize,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, env = "SAFECOORD_SEED", conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Seed list: `1..5` (inclusive), `1..=5` or `1,4,9`.
    #[arg(long, env = "SAFECOORD_SEEDS")]
    pub seeds: Option<SeedList>,
    /// Write each run's artifacts and the paired table under this directory.
    #[arg(long, env = "SAFECOORD_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, env = "SAFECOORD_TRAJECTORY_STRIDE", default_value_t = 10)]
    pub trajectory_stride: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// Ten times more instances per suite.
    #[arg(long)]
    pub heavy: bool,
    #[arg(long, env = "SAFECOORD_SEED")]
    pub seed: Option<u64>,
    /// Directory for serialized failing instances.
    #[arg(long, env = "SAFECOORD_OUT")]
    pub out: Option<PathBuf>,
    /// Re-check one serialized instance instead of running the suites.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Test hook: perturb the costs the fast allocator sees.
    #[arg(long, hide = true)]
    pub perturb_cost: Option<f64>,
}

/// Inclusive list of seeds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedList(pub Vec<u64>);

impl FromStr for SeedList {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let bad = |_| format!("invalid seed list {s:?}");
        let s = s.trim();
        let seeds = if let Some((a, b)) = s.split_once("..") {
            let b = b.strip_prefix('=').unwrap_or(b);
            let (a, b): (u64, u64) = (a.trim().parse().map_err(bad)?, b.trim().parse().map_err(bad)?);
            if a > b {
                return Err(format!("empty seed range {s:?}"));
            }
            (a..=b).collect()
        } else {
            s.split(',').map(|x| x.trim().parse().map_err(bad)).collect::<std::result::Result<Vec<u64>, _>>()?
        };
        Ok(SeedList(seeds))
    }
}

impl fmt::Display for SeedList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u64::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

impl ScenarioArgs {
    pub fn resolve(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => ScenarioConfig::default(),
        };
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(n) = self.agents {
            cfg.n_agents = n;
        }
        if let Some(dt) = self.dt {
            cfg.dt = dt;
        }
        if let Some(t) = self.t_max {
            cfg.t_max = t;
        }
        if let Some(r) = self.activation_radius {
            cfg.activation_radius = r;
        }
        if self.no_input_bounds {
            cfg.bounds.enforce_input = false;
        }
        if let Some(v) = self.cij_variant {
            cfg.cij_variant = v;
        }
        if let Some(m) = self.neighbor_model {
            cfg.neighbor_input_model = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::BoxTooDense { .. } => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return if code == 0 { EXIT_OK } else { EXIT_USAGE };
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Compare(a) => cmd_compare(a, out),
        Command::Validate(a) => cmd_validate(a, out, err),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn summary_line(cfg: &ScenarioConfig, r: &RunResult) -> String {
    format!(
        "{:<13} seed {:>3}  mission {:>8}  deviation {:>12.4}  h_bar {:>7.3}  qp {:>7.2} us  min_sep {:.4}  relaxed_ticks {}",
        cfg.mode.to_string(),
        cfg.seed,
        r.mission_time.map_or("timeout".to_string(), |t| format!("{t:.2}s")),
        r.integrated_deviation(cfg.dt),
        r.mean_barrier(),
        r.mean_qp_seconds() * 1e6,
        r.min_separation,
        r.relaxed_ticks
    )
}

pub fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> Result<i32> {
    let mut cfg = a.scenario.resolve()?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let opts = RunOptions {
        parallel: !a.scenario.serial,
        trajectory_stride: a.trajectory_stride.max(1),
        dump_assignments: a.dump_assignments,
    };
    let started = output::unix_now();
    let r = run(&cfg, &opts)?;
    output::write_run_dir(&a.out, &cfg, &r, started)?;
    writeln!(out, "{}", summary_line(&cfg, &r))?;
    writeln!(out, "wrote {}", a.out.display())?;
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedRow {
    pub seed: u64,
    pub decentralized: Summary,
    pub coordinated: Summary,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Identical,
    CoordinatedFaster,
    DecentralizedFaster,
    Tied,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Identical => "identical",
            Verdict::CoordinatedFaster => "coordinated faster",
            Verdict::DecentralizedFaster => "decentralized faster",
            Verdict::Tied => "tied",
        })
    }
}

/// Two runs are identical when every non-timing metric and every state
/// agree exactly.
pub fn verdict(dec: &RunResult, coord: &RunResult, t_max: f64) -> Verdict {
    let strip = |r: &RunResult| -> Vec<[u64; 6]> {
        r.metrics
            .iter()
            .map(|m| {
                [
                    m.t.to_bits(),
                    m.total_deviation.to_bits(),
                    m.mean_barrier.to_bits(),
                    m.min_pair_dist.to_bits(),
                    m.n_active_edges as u64,
                    m.n_relaxed_qps as u64,
                ]
            })
            .collect()
    };
    if strip(dec) == strip(coord) && dec.final_state == coord.final_state && dec.trajectory == coord.trajectory {
        return Verdict::Identical;
    }
    let (d, c) = (dec.mission_time_or(t_max), coord.mission_time_or(t_max));
    if c < d {
        Verdict::CoordinatedFaster
    } else if d < c {
        Verdict::DecentralizedFaster
    } else {
        Verdict::Tied
    }
}

pub const COMPARE_COLUMNS: [&str; 16] = [
    "seed",
    "dec_mission_time",
    "coord_mission_time",
    "dec_integrated_deviation",
    "coord_integrated_deviation",
    "dec_mean_barrier",
    "coord_mean_barrier",
    "dec_qp_time_mean",
    "coord_qp_time_mean",
    "dec_min_separation",
    "coord_min_separation",
    "dec_relaxed_ticks",
    "coord_relaxed_ticks",
    "dec_tick_time_mean",
    "coord_tick_time_mean",
    "verdict",
];

fn write_compare_csv(path: &Path, rows: &[PairedRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(COMPARE_COLUMNS)?;
    let mt = |s: &Summary| s.mission_time.map_or("timeout".to_string(), fmt_float);
    for r in rows {
        let (d, c) = (&r.decentralized, &r.coordinated);
        w.write_record([
            r.seed.to_string(),
            mt(d),
            mt(c),
            fmt_float(d.integrated_deviation),
            fmt_float(c.integrated_deviation),
            fmt_float(d.mean_barrier),
            fmt_float(c.mean_barrier),
            fmt_float(d.qp_time_mean),
            fmt_float(c.qp_time_mean),
            fmt_float(d.min_separation),
            fmt_float(c.min_separation),
            d.relaxed_ticks.to_string(),
            c.relaxed_ticks.to_string(),
            fmt_float(d.tick_time_mean),
            fmt_float(c.tick_time_mean),
            r.verdict.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_compare(a: &CompareArgs, out: &mut dyn Write) -> Result<i32> {
    let base = a.scenario.resolve()?;
    let seeds = match (&a.seeds, a.seed) {
        (Some(list), _) => list.0.clone(),
        (None, Some(s)) => vec![s],
        (None, None) => vec![base.seed],
    };
    let opts = RunOptions {
        parallel: !a.scenario.serial,
        trajectory_stride: a.trajectory_stride.max(1),
        dump_assignments: false,
    };
    let mut rows = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        let mut pair = Vec::with_capacity(2);
        for mode in [Mode::Decentralized, Mode::Coordinated] {
            let cfg = ScenarioConfig { seed, mode, ..base.clone() };
            cfg.validate()?;
            let started = output::unix_now();
            let r = run(&cfg, &opts)?;
            if let Some(dir) = &a.out {
                output::write_run_dir(&dir.join(format!("seed-{seed}")).join(mode.to_string()), &cfg, &r, started)?;
            }
            writeln!(out, "{}", summary_line(&cfg, &r))?;
            pair.push((cfg, r));
        }
        let (coord_cfg, coord) = pair.pop().expect("two runs");
        let (dec_cfg, dec) = pair.pop().expect("two runs");
        let v = verdict(&dec, &coord, base.t_max);
        writeln!(out, "seed {seed}: {v}")?;
        rows.push(PairedRow {
            seed,
            decentralized: Summary::new(&dec_cfg, &dec),
            coordinated: Summary::new(&coord_cfg, &coord),
            verdict: v,
        });
    }
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        write_compare_csv(&dir.join("compare.csv"), &rows)?;
        let mut f = std::fs::File::create(dir.join("compare.json"))?;
        serde_json::to_writer_pretty(&mut f, &rows)?;
        writeln!(out, "wrote {}", dir.display())?;
    }
    Ok(EXIT_OK)
}

pub fn cmd_validate(a: &ValidateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    if let Some(path) = &a.replay {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let instance: Replay =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let o = validate::replay(&instance)?;
        writeln!(out, "replay: {} (error {:.3e})", if o.ok { "PASS" } else { "FAIL" }, o.error)?;
        return Ok(if o.ok { EXIT_OK } else { EXIT_FAILURE });
    }
    let defaults = ValidateOptions::default();
    let opts = ValidateOptions {
        heavy: a.heavy,
        seed: a.seed.unwrap_or(defaults.seed),
        perturb_cost: a.perturb_cost,
    };
    let reports = validate::run_all(&opts)?;
    let mut ok = true;
    for r in &reports {
        writeln!(out, "{} {}", if r.passed() { "PASS" } else { "FAIL" }, r.line())?;
        let Some(instance) = &r.failure else { continue };
        ok = false;
        let text = serde_json::to_string_pretty(instance)?;
        writeln!(err, "offending {} instance:\n{text}", r.name)?;
        if let Some(dir) = &a.out {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(format!("failure-{}.json", r.name));
            std::fs::write(&path, &text)?;
            writeln!(err, "saved to {} (replay with --replay)", path.display())?;
        }
    }
    writeln!(out, "validate: {}", if ok { "PASS" } else { "FAIL" })?;
    Ok(if ok { EXIT_OK } else { EXIT_FAILURE })
}
