//! A multi-row safety filter: several halfspaces, an optional input box,
//! and the shared-slack fallback when the rows cannot all hold.

use safecoord::qp::{solve, QpProblem};
use safecoord::Vec3;

fn show(label: &str, p: &QpProblem) -> safecoord::Result<()> {
    let s = solve(p)?;
    println!(
        "{label:<10} u* {:?}  deviation {:.4}  status {:?}  slack {:.3e}  kkt {:.1e}",
        s.u_star.to_array(),
        s.deviation,
        s.status,
        s.slack_used,
        s.kkt_residual(p)
    );
    Ok(())
}

fn main() -> safecoord::Result<()> {
    let u_nom = Vec3::planar(2.0, 0.0);
    let feasible = QpProblem::new(u_nom)
        .with_row(Vec3::planar(-1.0, 0.0), -1.0)
        .with_row(Vec3::planar(0.0, 1.0), 0.5)
        .with_row(Vec3::planar(-1.0, -1.0), -3.0);
    show("rows", &feasible)?;
    show("boxed", &feasible.clone().with_bounds(Vec3::splat(-0.8), Vec3::splat(0.8)))?;

    // x >= 1 and x <= -1 cannot both hold.
    let conflicting = QpProblem::new(u_nom).with_row(Vec3::planar(1.0, 0.0), 1.0).with_row(Vec3::planar(-1.0, 0.0), 1.0);
    show("conflict", &conflicting)?;
    Ok(())
}
