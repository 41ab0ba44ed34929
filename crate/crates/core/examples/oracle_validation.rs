//! The desk validation suites: allocator against enumeration, solver against
//! closed forms and a grid, and the coordinated pipeline against the joint
//! oracle.

use safecoord::validate::{run_all, ValidateOptions};

fn main() -> safecoord::Result<()> {
    for r in run_all(&ValidateOptions::default())? {
        println!("{} {}", if r.passed() { "PASS" } else { "FAIL" }, r.line());
    }
    Ok(())
}
