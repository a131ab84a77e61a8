//! Draw a truncated Dirichlet process prior and compare the leftover stick
//! mass with its expectation.
//!
//! ```text
//! cargo run --example stick_breaking_prior -- 2.0 10
//! ```

use dpme::rng::derive_seed;
use dpme::{expected_tail_mass, sample_betas, sample_draw, weights_from_betas, BaseMeasure};

fn main() -> dpme::Result<()> {
    let mut args = std::env::args().skip(1);
    let alpha: f64 = args.next().map_or(2.0, |a| a.parse().expect("alpha"));
    let trunc: usize = args.next().map_or(10, |a| a.parse().expect("trunc"));

    let base = BaseMeasure::isotropic(2, 0.0, 4.0, 0.25)?;
    let (draw, atoms) = sample_draw(alpha, trunc, &base, 7)?;
    println!("one draw, alpha = {alpha}, T = {trunc}");
    for (w, atom) in draw.weights.iter().zip(&atoms) {
        println!("  pi = {w:.4}  mean = [{:+.3}, {:+.3}]", atom.mean()[0], atom.mean()[1]);
    }
    println!("  tail mass = {:.3e}", draw.tail_mass);

    let n = 20_000;
    let mean_tail = (0..n)
        .map(|i| {
            let betas = sample_betas(alpha, trunc, derive_seed(99, i)).unwrap();
            weights_from_betas(&betas).unwrap().1
        })
        .sum::<f64>()
        / n as f64;
    println!(
        "average tail over {n} draws = {mean_tail:.4e}, exact (alpha/(1+alpha))^T = {:.4e}",
        expected_tail_mass(alpha, trunc)?
    );
    Ok(())
}
