//! Run artifacts: CSV series, a JSON summary, and a manifest.
//!
//! Floats are written with 17 significant digits so every value reads back
//! bit-identical.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::engine::{AdditiveBoundStats, AssignmentRow, RunResult, StepMetrics, TrajectoryRow};
use crate::error::Result;

/// Version of the `summary.json` and `manifest.json` key sets.
pub const SCHEMA_VERSION: u32 = 1;

pub const TRAJECTORY_COLUMNS: [&str; 14] = [
    "t", "agent_id", "px", "py", "pz", "vx", "vy", "vz", "ux", "uy", "uz", "unom_x", "unom_y", "unom_z",
];

pub const METRICS_COLUMNS: [&str; 9] = [
    "t",
    "total_deviation",
    "mean_barrier",
    "min_pair_dist",
    "qp_time_mean",
    "qp_time_max",
    "n_active_edges",
    "n_relaxed_qps",
    "assignment_churn",
];

/// Wall-clock columns of `metrics.csv`, excluded from determinism checks.
pub const TIMING_COLUMNS: [&str; 2] = ["qp_time_mean", "qp_time_max"];

pub const ASSIGNMENT_COLUMNS: [&str; 7] = ["t", "i", "j", "J_ij", "J_ji", "z_ij", "z_ji"];

pub const TRAJECTORY_FILE: &str = "trajectories.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const ASSIGNMENTS_FILE: &str = "assignments.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";

pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn csv_writer<W: Write>(w: W, header: &[&str]) -> Result<csv::Writer<W>> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    Ok(out)
}

pub fn write_trajectories<W: Write>(w: W, rows: &[TrajectoryRow]) -> Result<()> {
    let mut out = csv_writer(w, &TRAJECTORY_COLUMNS)?;
    for r in rows {
        let mut rec = Vec::with_capacity(TRAJECTORY_COLUMNS.len());
        rec.push(fmt_float(r.t));
        rec.push(r.agent_id.to_string());
        for v in [r.p, r.v, r.u, r.u_nom] {
            rec.extend(v.to_array().map(fmt_float));
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_metrics<W: Write>(w: W, rows: &[StepMetrics]) -> Result<()> {
    let mut out = csv_writer(w, &METRICS_COLUMNS)?;
    for m in rows {
        out.write_record([
            fmt_float(m.t),
            fmt_float(m.total_deviation),
            fmt_float(m.mean_barrier),
            fmt_float(m.min_pair_dist),
            fmt_float(m.qp_time_mean),
            fmt_float(m.qp_time_max),
            m.n_active_edges.to_string(),
            m.n_relaxed_qps.to_string(),
            fmt_float(m.assignment_churn),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_assignments<W: Write>(w: W, rows: &[AssignmentRow]) -> Result<()> {
    let mut out = csv_writer(w, &ASSIGNMENT_COLUMNS)?;
    for a in rows {
        out.write_record([
            fmt_float(a.t),
            a.i.to_string(),
            a.j.to_string(),
            fmt_float(a.j_ij),
            fmt_float(a.j_ji),
            u8::from(a.z_ij).to_string(),
            u8::from(a.z_ji).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Scalar results of one run. Non-finite values serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub mode: String,
    pub seed: u64,
    pub n_agents: usize,
    /// `null` on timeout.
    pub mission_time: Option<f64>,
    pub timed_out: bool,
    pub n_ticks: usize,
    /// Time integral of the total squared deviation.
    pub integrated_deviation: f64,
    pub mean_barrier: f64,
    pub min_separation: f64,
    pub min_separation_unrelaxed: f64,
    pub safety_violated: bool,
    pub relaxed_ticks: usize,
    pub forced_edges: usize,
    pub velocity_clips: usize,
    pub qp_solves: usize,
    pub qp_time_mean: f64,
    pub tick_time_mean: f64,
    pub wall_seconds: f64,
    pub additive: AdditiveBoundStats,
}

impl Summary {
    pub fn new(cfg: &ScenarioConfig, r: &RunResult) -> Self {
        Summary {
            schema_version: SCHEMA_VERSION,
            mode: cfg.mode.to_string(),
            seed: cfg.seed,
            n_agents: cfg.n_agents,
            mission_time: r.mission_time,
            timed_out: r.mission_time.is_none(),
            n_ticks: r.metrics.len(),
            integrated_deviation: r.integrated_deviation(cfg.dt),
            mean_barrier: r.mean_barrier(),
            min_separation: r.min_separation,
            min_separation_unrelaxed: r.min_separation_unrelaxed,
            safety_violated: r.safety_violated,
            relaxed_ticks: r.relaxed_ticks,
            forced_edges: r.forced_edges,
            velocity_clips: r.velocity_clips,
            qp_solves: r.qp_solves,
            qp_time_mean: r.mean_qp_seconds(),
            tick_time_mean: r.mean_tick_seconds(),
            wall_seconds: r.wall_seconds,
            additive: r.additive,
        }
    }
}

/// Provenance of one output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub mode: String,
    pub git_describe: String,
    /// Seconds since the Unix epoch.
    pub started_at: u64,
    pub files: Vec<String>,
    pub config: ScenarioConfig,
}

/// `git describe` of the source tree this binary was built from.
pub fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["-C", env!("CARGO_MANIFEST_DIR"), "describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".to_string())
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: Serialize>(path: PathBuf, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes every artifact of `result` into `dir`, creating it if needed.
pub fn write_run_dir(dir: &Path, cfg: &ScenarioConfig, result: &RunResult, started_at: u64) -> Result<RunManifest> {
    fs::create_dir_all(dir)?;
    let mut files = vec![CONFIG_FILE, TRAJECTORY_FILE, METRICS_FILE, SUMMARY_FILE, MANIFEST_FILE];
    fs::write(dir.join(CONFIG_FILE), cfg.to_toml_string())?;
    write_trajectories(create(dir, TRAJECTORY_FILE)?, &result.trajectory)?;
    write_metrics(create(dir, METRICS_FILE)?, &result.metrics)?;
    if !result.assignments.is_empty() {
        write_assignments(create(dir, ASSIGNMENTS_FILE)?, &result.assignments)?;
        files.push(ASSIGNMENTS_FILE);
    }
    write_json(dir.join(SUMMARY_FILE), &Summary::new(cfg, result))?;
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        seed: cfg.seed,
        mode: cfg.mode.to_string(),
        git_describe: git_describe(),
        started_at,
        files: files.into_iter().map(String::from).collect(),
        config: cfg.clone(),
    };
    write_json(dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Vec3;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = fmt_float(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(fmt_float(f64::NAN), "NaN");
        assert_eq!(fmt_float(f64::INFINITY), "inf");
        assert_eq!(fmt_float(0.01), "1.0000000000000000e-2");
    }

    #[test]
    fn trajectory_header_is_exact() {
        let row = TrajectoryRow {
            t: 0.0,
            agent_id: 3,
            p: Vec3::planar(1.0, 2.0),
            v: Vec3::ZERO,
            u: Vec3::ZERO,
            u_nom: Vec3::ZERO,
        };
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,agent_id,px,py,pz,vx,vy,vz,ux,uy,uz,unom_x,unom_y,unom_z");
        assert_eq!(lines.next().unwrap().split(',').count(), 14);
    }

    #[test]
    fn assignment_flags_are_binary() {
        let row = AssignmentRow { t: 0.5, i: 0, j: 1, j_ij: 2.0, j_ji: f64::INFINITY, z_ij: true, z_ji: false };
        let mut buf = Vec::new();
        write_assignments(&mut buf, &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.ends_with(",inf,1,0\n"), "{text}");
    }
}
