//! Pick the truncation level for a target error and watch the embedding gap
//! shrink as `T` grows.

use dpme::{
    choose_truncation, expected_tail_mass, truncation_decay_check, BaseMeasure, KernelConfig,
};

fn main() -> dpme::Result<()> {
    println!("{:>6} {:>8} {:>5} {:>12}", "alpha", "delta", "T", "E[tail]");
    for alpha in [0.5, 1.0, 5.0] {
        for delta in [1e-2, 1e-4, 1e-8] {
            let t = choose_truncation(alpha, delta, 1.0)?;
            let tail = expected_tail_mass(alpha, t)?;
            println!("{alpha:>6} {delta:>8.0e} {t:>5} {tail:>12.3e}");
        }
    }

    let base = BaseMeasure::isotropic(1, 0.0, 1.0, 1.0)?;
    let kernel = KernelConfig::new(1.0)?;
    let alpha = 1.0;
    let t_values: Vec<usize> = (1..=12).collect();
    let report = truncation_decay_check(alpha, &base, &kernel, &t_values, 60, 1000, 3)?;
    println!("\nsquared embedding gap to a T = {} proxy, alpha = {alpha}", report.t_ref);
    for ((t, gap), bound) in report.t_values.iter().zip(&report.mean_gaps).zip(&report.bounds) {
        println!("  T = {t:>2}: {gap:.3e}  (exp(-T/alpha) = {bound:.3e})");
    }
    println!("fitted log slope {:.3}", report.slope);
    Ok(())
}
