//! Check that a truncated stick-breaking measure has Dirichlet marginals on a
//! finite partition of the line.

use dpme::stick_breaking::partition_from_cuts;
use dpme::{dirichlet_marginal_check, BaseMeasure};

fn main() -> dpme::Result<()> {
    let base = BaseMeasure::isotropic(1, 0.0, 1.0, 1.0)?;
    let partition = partition_from_cuts(&[-0.5, 0.7]);
    for alpha in [1.0, 10.0] {
        let report = dirichlet_marginal_check(alpha, &base, &partition, 5000, 200, 5)?;
        println!("alpha = {alpha}, {} draws at T = {}", report.n_draws, report.t_proxy);
        for c in &report.cells {
            println!(
                "  [{:>5}, {:>5}): mean {:.4} (target {:.4} +/- {:.4}), var {:.4} (target {:.4} +/- {:.4})",
                c.cell.lo, c.cell.hi, c.mean, c.mean_target, c.mean_std_error,
                c.variance, c.variance_target, c.variance_std_error
            );
        }
        println!("  within 3 standard errors: {}", report.within(3.0));
    }
    Ok(())
}
