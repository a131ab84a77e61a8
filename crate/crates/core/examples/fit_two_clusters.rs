//! Fit mixture weights to two well-separated clusters by minimizing the
//! RKHS distance between the model and the data.

use dpme::rng::rng_from_seed;
use dpme::{fit, AtomStrategy, Dataset, FitConfig, Truncation};
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> dpme::Result<()> {
    let mut rng = rng_from_seed(2024);
    let rows: Vec<Vec<f64>> = (0..2000)
        .map(|_| {
            let centre = if rng.gen::<f64>() < 0.7 { -3.0 } else { 3.0 };
            vec![centre + rng.sample::<f64, _>(StandardNormal)]
        })
        .collect();
    let data = Dataset::from_rows(&rows)?;

    for strategy in [AtomStrategy::Kmeans, AtomStrategy::Subsample, AtomStrategy::SampleG0] {
        let mut cfg = FitConfig::new(1.0, Truncation::Fixed(2));
        cfg.atom_strategy = strategy;
        let res = fit(&data, &cfg)?;
        println!("atoms from {}:", strategy.name());
        for (w, c) in res.model.weights.iter().zip(&res.model.components) {
            println!("  pi = {w:.3} at {:+.3}", c.mean()[0]);
        }
        println!("  mmd2 = {:.3e}, converged = {}", res.mmd2, res.qp.converged);
    }

    let mut cfg = FitConfig::new(1.0, Truncation::Auto { delta: 1e-4 });
    cfg.comp_cov_scale = 1.0;
    let res = fit(&data, &cfg)?;
    println!(
        "auto truncation: T = {}, {} components above the {} floor",
        res.model.weights.len(),
        res.effective_t,
        cfg.weight_floor
    );
    Ok(())
}
