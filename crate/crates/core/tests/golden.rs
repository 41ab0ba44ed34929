//! Regression goldens. A missing golden file is written on first run and
//! compared on every later run; set `SAFECOORD_BLESS=1` to rewrite.

use std::fs;
use std::path::PathBuf;

use serde_json::{json, Value};

use safecoord::allocator::{build_interaction_set, minlp_oracle};
use safecoord::engine::{nominal_inputs, run, RunOptions};
use safecoord::hocbf::HocbfParams;
use safecoord::output::Summary;
use safecoord::world::sample_scenario;
use safecoord::{Mode, ScenarioConfig};

const REL_TOL: f64 = 1e-9;

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn check_golden(name: &str, actual: Value) {
    let path = golden_path(name);
    if std::env::var_os("SAFECOORD_BLESS").is_some() || !path.exists() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, serde_json::to_string_pretty(&actual).unwrap() + "\n").unwrap();
        eprintln!("wrote golden {}", path.display());
        return;
    }
    let expected: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    compare("", &expected, &actual);
}

fn compare(at: &str, expected: &Value, actual: &Value) {
    match (expected, actual) {
        (Value::Object(e), Value::Object(a)) => {
            assert_eq!(e.keys().collect::<Vec<_>>(), a.keys().collect::<Vec<_>>(), "keys at {at}");
            for (k, ev) in e {
                compare(&format!("{at}.{k}"), ev, &a[k]);
            }
        }
        (Value::Array(e), Value::Array(a)) => {
            assert_eq!(e.len(), a.len(), "length at {at}");
            for (k, (ev, av)) in e.iter().zip(a).enumerate() {
                compare(&format!("{at}[{k}]"), ev, av);
            }
        }
        (Value::Number(e), Value::Number(a)) if e.is_f64() || a.is_f64() => {
            let (e, a) = (e.as_f64().unwrap(), a.as_f64().unwrap());
            assert!((e - a).abs() <= REL_TOL * e.abs().max(1.0), "{at}: golden {e}, got {a}");
        }
        _ => assert_eq!(expected, actual, "at {at}"),
    }
}

#[test]
fn three_agent_joint_optimum() {
    let cfg = ScenarioConfig {
        n_agents: 3,
        seed: 7,
        mode: Mode::Oracle,
        sample_box: safecoord::config::SampleBox { min: -1.0, max: 1.0 },
        ..ScenarioConfig::default()
    };
    let mut agents = sample_scenario(&cfg).unwrap();
    for a in &mut agents {
        a.v = -a.p;
    }
    let edges = build_interaction_set(&agents, cfg.activation_radius);
    let u_nom = nominal_inputs(&agents, &cfg);
    let sol = minlp_oracle(&agents, &edges, &u_nom, &HocbfParams::from_config(&cfg), &cfg.bounds).unwrap();
    assert_eq!(edges.len(), 3);
    check_golden(
        "minlp_three_agents_seed7.json",
        json!({
            "objective": sol.objective,
            "patterns": sol.patterns,
            "z": sol.z,
            "inputs": sol.inputs.iter().map(|u| u.to_array()).collect::<Vec<_>>(),
        }),
    );
}

#[test]
fn swarm_seed42_summary() {
    let cfg = ScenarioConfig { seed: 42, ..ScenarioConfig::default() };
    let r = run(&cfg, &RunOptions { trajectory_stride: 100, ..RunOptions::default() }).unwrap();
    let s = Summary::new(&cfg, &r);
    let every = |k: usize| r.metrics.iter().step_by(k);
    check_golden(
        "swarm_seed42_coordinated.json",
        json!({
            "mission_time": s.mission_time,
            "n_ticks": s.n_ticks,
            "integrated_deviation": s.integrated_deviation,
            "mean_barrier": s.mean_barrier,
            "min_separation": s.min_separation,
            "relaxed_ticks": s.relaxed_ticks,
            "forced_edges": s.forced_edges,
            "velocity_clips": s.velocity_clips,
            "qp_solves": s.qp_solves,
            "metrics_every_100": every(100)
                .map(|m| json!([m.t, m.total_deviation, m.min_pair_dist, m.n_active_edges, m.n_relaxed_qps, m.assignment_churn]))
                .collect::<Vec<_>>(),
            "final_positions": r.final_state.iter().map(|a| a.p.to_array()).collect::<Vec<_>>(),
        }),
    );
}
