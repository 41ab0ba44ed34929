use proptest::prelude::*;

use safecoord::allocator::{objective, solve_milp, EdgePair};
use safecoord::hocbf::{build_constraint, BarrierEval, HocbfParams};
use safecoord::qp::{project_single, solve, QpProblem, QpStatus};
use safecoord::world::{sample_scenario, step};
use safecoord::{AgentState, Bounds, CijVariant, ScenarioConfig, Vec3};

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn nonzero(range: f64) -> impl Strategy<Value = Vec3> {
    vec3(range).prop_filter("nonzero", |v| v.norm() > 1e-3)
}

fn agent(id: usize, p: Vec3, v: Vec3) -> AgentState {
    AgentState { id, p, v, goal: Vec3::ZERO, reached: false }
}

fn params(gamma1: f64, gamma2: f64, variant: CijVariant) -> HocbfParams {
    HocbfParams { r_s: 0.3, gamma1, gamma2, variant }
}

fn variant() -> impl Strategy<Value = CijVariant> {
    prop_oneof![Just(CijVariant::Paper), Just(CijVariant::Derived)]
}

fn cost() -> impl Strategy<Value = f64> {
    prop_oneof![8 => 0.0..10.0, 1 => Just(0.0), 1 => Just(f64::INFINITY)]
}

fn edges() -> impl Strategy<Value = Vec<EdgePair>> {
    prop::collection::vec((cost(), cost()), 0..8).prop_map(|cs| {
        cs.into_iter().enumerate().map(|(k, (a, b))| EdgePair { i: k, j: k + 100, j_ij: a, j_ji: b }).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn zoh_composes_over_half_steps(p in vec3(5.0), v in vec3(1.0), u in vec3(5.0), dt in 0.001..0.05f64) {
        let bounds = Bounds::default();
        let a = agent(0, p, v);
        let full = step(&a, u, dt, &bounds).unwrap();
        let half = step(&step(&a, u, dt / 2.0, &bounds).unwrap(), u, dt / 2.0, &bounds).unwrap();
        prop_assert!((full.p - half.p).norm() <= 1e-12);
        prop_assert!((full.v - half.v).norm() <= 1e-12);
    }

    #[test]
    fn velocity_clip_is_idempotent(v in vec3(20.0), u in vec3(50.0), dt in 0.001..0.05f64) {
        let bounds = Bounds::default();
        let once = step(&agent(0, Vec3::ZERO, v), u, dt, &bounds).unwrap();
        prop_assert!(once.v.within(bounds.v_min, bounds.v_max, 0.0));
        prop_assert_eq!(once.v.clamp(bounds.v_min, bounds.v_max), once.v);
    }

    #[test]
    fn constraint_is_antisymmetric(r in nonzero(3.0), vi in vec3(3.0), vj in vec3(3.0), var in variant()) {
        let pr = params(5.0, 2.0, var);
        let i = agent(0, r, vi);
        let j = agent(1, Vec3::ZERO, vj);
        let ij = build_constraint(&i, &j, &pr, Vec3::ZERO).unwrap();
        let ji = build_constraint(&j, &i, &pr, Vec3::ZERO).unwrap();
        prop_assert_eq!(ij.a, -ji.a);
        prop_assert!((ij.c_ij - ji.c_ij).abs() <= 1e-12 * ij.c_ij.abs().max(1.0));
    }

    #[test]
    fn zero_estimate_keeps_offset(r in nonzero(3.0), v in vec3(3.0), var in variant()) {
        let c = build_constraint(&agent(0, r, v), &agent(1, Vec3::ZERO, Vec3::ZERO), &params(5.0, 2.0, var), Vec3::ZERO)
            .unwrap();
        prop_assert_eq!(c.b, c.c_ij);
    }

    #[test]
    fn single_row_solve_is_projection(u in vec3(10.0), a in nonzero(5.0), b in -20.0..20.0f64) {
        let s = solve(&QpProblem::new(u).with_row(a, b)).unwrap();
        let (proj, dev) = project_single(u, a, b).unwrap();
        prop_assert_eq!(s.status, QpStatus::Optimal);
        prop_assert!((s.u_star - proj).norm() <= 1e-10 * proj.norm().max(1.0));
        prop_assert!((s.deviation - dev).abs() <= 1e-10 * dev.max(1.0));
    }

    #[test]
    fn extra_row_never_lowers_deviation(
        u in vec3(5.0),
        rows in prop::collection::vec((nonzero(3.0), -5.0..5.0f64), 1..5),
        extra in (nonzero(3.0), -5.0..5.0f64),
    ) {
        let mut p = QpProblem::new(u);
        for &(a, b) in &rows {
            p = p.with_row(a, b);
        }
        let before = solve(&p).unwrap();
        let after = solve(&p.clone().with_row(extra.0, extra.1)).unwrap();
        prop_assume!(before.status == QpStatus::Optimal && after.status == QpStatus::Optimal);
        prop_assert!(after.deviation >= before.deviation - 1e-9 * before.deviation.max(1.0));
        for &(a, b) in &rows {
            prop_assert!(a.dot(after.u_star) - b >= -1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn allocation_covers_and_beats_any_cover(pairs in edges(), picks in prop::collection::vec(0u8..3, 8)) {
        let sol = solve_milp(&pairs).unwrap();
        prop_assert!(sol.covers_all());
        let other = picks.iter().take(pairs.len()).map(|&k| (k != 1, k != 0));
        let alt = objective(&pairs, other);
        prop_assert!(sol.objective <= alt || (sol.objective.is_infinite() && alt.is_infinite()));
    }

    /// Any relative input satisfying the row keeps the second-order barrier
    /// condition `psi1' + gamma2 psi1 >= 0` wherever `h >= 0`.
    #[test]
    fn row_certifies_barrier_condition(
        dir in nonzero(1.0),
        dist in 0.3..3.0f64,
        v in vec3(5.0),
        w in vec3(20.0),
        gamma1 in 1.0..10.0f64,
        gamma2 in 0.1..10.0f64,
        var in variant(),
    ) {
        let pr = params(gamma1, gamma2, var);
        let r = dir * (dist / dir.norm());
        let e = BarrierEval::new(r, v, &pr);
        prop_assume!(e.h >= 0.0);
        let (u_rel, _) = project_single(w, e.a, e.c_ij).unwrap();
        let h_ddot = 2.0 * v.norm_sq() + 2.0 * r.dot(u_rel);
        let psi1_dot = h_ddot + gamma1 * e.h_dot;
        let scale = 1.0 + v.norm_sq() + r.norm() * (u_rel.norm() + v.norm()) * (gamma1 + gamma2) + gamma1 * gamma2 * e.h;
        prop_assert!(psi1_dot + gamma2 * e.psi1 >= -1e-9 * scale);
    }

    /// If the unassigned agent's realized input never exceeds its estimate
    /// along the normal, the assigned agent's row implies the pairwise row.
    #[test]
    fn conservative_estimate_implies_pair_row(
        r in nonzero(3.0),
        vi in vec3(3.0),
        vj in vec3(3.0),
        u_bar in vec3(5.0),
        w in vec3(5.0),
        shrink in 0.0..5.0f64,
    ) {
        let pr = params(5.0, 2.0, CijVariant::Paper);
        let row = build_constraint(&agent(0, r, vi), &agent(1, Vec3::ZERO, vj), &pr, u_bar).unwrap();
        let (u_i, _) = project_single(w, row.a, row.b).unwrap();
        let u_j = u_bar - row.a * (shrink / row.a.norm());
        let lhs = row.a.dot(u_i - u_j);
        prop_assert!(lhs >= row.c_ij - 1e-9 * row.b.abs().max(row.c_ij.abs()).max(1.0));
    }

    #[test]
    fn sampler_is_deterministic_and_separated(seed in any::<u64>(), n in 2usize..40, dim in 2u8..4) {
        let cfg = ScenarioConfig { n_agents: n, seed, dim, ..ScenarioConfig::default() };
        let a = sample_scenario(&cfg).unwrap();
        prop_assert_eq!(&a, &sample_scenario(&cfg).unwrap());
        for x in 0..n {
            prop_assert_eq!(a[x].id, x);
            for y in x + 1..n {
                prop_assert!((a[x].p - a[y].p).norm() >= 2.0 * cfg.r_s);
                prop_assert!((a[x].goal - a[y].goal).norm() >= 2.0 * cfg.r_s);
            }
            for y in 0..n {
                prop_assert!((a[x].p - a[y].goal).norm() >= 2.0 * cfg.r_s);
            }
        }
    }
}
