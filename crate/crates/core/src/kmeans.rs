//! Seeded k-means (k-means++ seeding, Lloyd iterations, best of several restarts).

use rand::Rng;

use crate::embedding::Dataset;
use crate::error::{DpmeError, Result};
use crate::rng::{derive_seed, rng_from_seed, DpmeRng};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// `k` centroids, each of length `d`.
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub inertia: f64,
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_init(data: &Dataset, k: usize, rng: &mut DpmeRng) -> Vec<Vec<f64>> {
    let m = data.m();
    let mut centroids = vec![data.row(rng.gen_range(0..m)).to_vec()];
    let mut dist: Vec<f64> = data.rows().map(|x| sq_dist(x, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = m - 1;
            for (i, d) in dist.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.gen_range(0..m)
        };
        let c = data.row(idx).to_vec();
        for (d, x) in dist.iter_mut().zip(data.rows()) {
            *d = d.min(sq_dist(x, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(data: &Dataset, mut centroids: Vec<Vec<f64>>, max_iter: usize) -> KMeansResult {
    let (k, d) = (centroids.len(), data.d());
    let mut labels = vec![usize::MAX; data.m()];
    for _ in 0..max_iter {
        let mut changed = false;
        for (label, x) in labels.iter_mut().zip(data.rows()) {
            let (j, _) = nearest(x, &centroids);
            if *label != j {
                *label = j;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (&j, x) in labels.iter().zip(data.rows()) {
            counts[j] += 1;
            for (s, xi) in sums[j].iter_mut().zip(x) {
                *s += xi;
            }
        }
        for ((c, s), n) in centroids.iter_mut().zip(sums).zip(counts) {
            // empty clusters keep their previous centroid
            if n > 0 {
                *c = s.into_iter().map(|v| v / n as f64).collect();
            }
        }
    }
    let inertia = labels
        .iter()
        .zip(data.rows())
        .map(|(&j, x)| sq_dist(x, &centroids[j]))
        .sum();
    KMeansResult {
        centroids,
        labels,
        inertia,
    }
}

/// Runs `restarts` seeded k-means fits and keeps the lowest inertia
/// (earliest restart on ties).
pub fn kmeans(
    data: &Dataset,
    k: usize,
    restarts: usize,
    max_iter: usize,
    seed: u64,
) -> Result<KMeansResult> {
    if k == 0 || k > data.m() {
        return Err(DpmeError::domain(format!(
            "k-means needs 1 <= k <= m, got k = {k}, m = {}",
            data.m()
        )));
    }
    let mut best: Option<KMeansResult> = None;
    for restart in 0..restarts.max(1) {
        let mut rng = rng_from_seed(derive_seed(seed, restart as u64));
        let fit = lloyd(data, plus_plus_init(data, k, &mut rng), max_iter);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}
