//! Posterior responsibilities and hard assignments under a fitted mixture.

use dpme::{assign_latents, Dataset, GaussianComponent, TruncatedDPMM};

fn main() -> dpme::Result<()> {
    let model = TruncatedDPMM::new(
        1.0,
        vec![0.6, 0.4],
        vec![
            GaussianComponent::new(vec![-2.0], vec![1.0])?,
            GaussianComponent::new(vec![2.0], vec![1.0])?,
        ],
    )?;
    let data = Dataset::from_rows(&[vec![-3.0], vec![-0.1], vec![0.2], vec![2.5], vec![80.0]])?;
    let latents = assign_latents(&model, &data)?;
    for (k, x) in data.rows().enumerate() {
        let r = latents.responsibilities.row(k);
        println!(
            "x = {:>6.2}: responsibilities [{:.3}, {:.3}] -> component {}",
            x[0], r[0], r[1], latents.assignments[k]
        );
    }
    println!("rows that fell back to nearest-atom assignment: {:?}", latents.flagged_rows);
    Ok(())
}
