//! Run the built-in statistical self-checks and print their verdicts.

use dpme::validation::{run_suite, Suite};

fn main() -> dpme::Result<()> {
    let seed = std::env::args().nth(1).map_or(1, |s| s.parse().expect("seed"));
    for suite in [Suite::Qp, Suite::Dirichlet, Suite::Bound] {
        let report = run_suite(suite, seed)?;
        println!("{:<10} {}", suite.name(), if report.passed { "PASS" } else { "FAIL" });
    }
    Ok(())
}
