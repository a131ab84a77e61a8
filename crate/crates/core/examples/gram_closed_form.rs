//! Closed-form RKHS inner products between Gaussian components, checked
//! against Monte Carlo.

use dpme::embedding::{assemble_gram, mc_component_inner, median_heuristic_bandwidth};
use dpme::{component_inner, Dataset, GaussianComponent, KernelConfig};

fn main() -> dpme::Result<()> {
    let f = GaussianComponent::new(vec![0.0, 1.0], vec![0.5, 2.0])?;
    let g = GaussianComponent::new(vec![1.0, -1.0], vec![1.0, 0.3])?;
    let kernel = KernelConfig::new(1.5)?;

    let exact = component_inner(&f, &g, &kernel)?;
    let (mc, se) = mc_component_inner(&f, &g, &kernel, 200_000, 11)?;
    println!("<mu[f], mu[g]> closed form {exact:.6}, Monte Carlo {mc:.6} +/- {se:.1e}");

    let rows: Vec<Vec<f64>> = (0..40)
        .map(|i| {
            let t = i as f64 / 40.0 * std::f64::consts::TAU;
            vec![2.0 * t.cos(), t.sin()]
        })
        .collect();
    let data = Dataset::from_rows(&rows)?;
    let kernel = KernelConfig::new(median_heuristic_bandwidth(&data)?)?;
    let gram = assemble_gram(&[f, g], &data, &kernel)?;
    println!("median-heuristic bandwidth^2 = {:.4}", kernel.bandwidth2);
    println!("S = {:.4}", gram.s);
    println!("R = {:.4}", gram.r.transpose());
    println!("<mu_X, mu_X> = {:.4}", gram.data_term);
    Ok(())
}
