//! Projecting a nominal input onto one halfspace, in closed form and with
//! the active-set solver.

use safecoord::qp::{project_single, solve, QpProblem};
use safecoord::Vec3;

fn main() -> safecoord::Result<()> {
    let u_nom = Vec3::planar(1.0, -2.0);
    for (a, b) in [(Vec3::planar(1.0, 0.0), 3.0), (Vec3::planar(1.0, 1.0), -4.0), (Vec3::planar(0.0, 2.0), 0.5)] {
        let (closed, cost) = project_single(u_nom, a, b)?;
        let s = solve(&QpProblem::new(u_nom).with_row(a, b))?;
        println!(
            "a={:?} b={b:5.2}  closed {:?} cost {cost:.6}  solver {:?} cost {:.6}  active {:?}",
            a.to_array(),
            closed.to_array(),
            s.u_star.to_array(),
            s.deviation,
            s.active_rows
        );
    }
    Ok(())
}
