//! Kernel mean embeddings of diagonal Gaussian mixtures under the Gaussian
//! RBF kernel `k(x, y) = exp(-|x - y|^2 / (2 s2))`.
//!
//! With Gaussian components every inner product between embeddings has a
//! closed form that factors over dimensions:
//!
//! ```text
//! <mu[f], mu[g]> = prod_j sqrt(s2 / (s2 + vf_j + vg_j)) * exp(-(mf_j - mg_j)^2 / (2 (s2 + vf_j + vg_j)))
//! ```
//!
//! and the inner product with a data point `x` is the same expression with
//! `g` replaced by a point mass at `x`. These give the Gram statistics `S`,
//! `R` and the data self-term needed to evaluate the squared MMD between the
//! empirical embedding and a truncated mixture embedding.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{DpmeError, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::stick_breaking::{expected_tail_mass, sample_draw, truncation_bound, BaseMeasure};

/// A Gaussian component with diagonal covariance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianComponent {
    mean: Vec<f64>,
    cov_diag: Vec<f64>,
}

impl GaussianComponent {
    pub fn new(mean: Vec<f64>, cov_diag: Vec<f64>) -> Result<Self> {
        if mean.is_empty() {
            return Err(DpmeError::domain("component needs dimension >= 1"));
        }
        if mean.len() != cov_diag.len() {
            return Err(DpmeError::DimensionMismatch {
                expected: mean.len(),
                got: cov_diag.len(),
            });
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(DpmeError::domain("component mean must be finite"));
        }
        if let Some(v) = cov_diag.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(DpmeError::domain(format!(
                "component variances must be positive, got {v}"
            )));
        }
        Ok(Self { mean, cov_diag })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov_diag(&self) -> &[f64] {
        &self.cov_diag
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Log density at `x`.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        const LN_2PI: f64 = 1.837_877_066_409_345_5;
        self.mean
            .iter()
            .zip(&self.cov_diag)
            .zip(x)
            .map(|((m, v), xi)| -0.5 * (LN_2PI + v.ln() + (xi - m).powi(2) / v))
            .sum()
    }

    /// Squared Mahalanobis distance from `x` to the mean.
    pub fn mahalanobis2(&self, x: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.cov_diag)
            .zip(x)
            .map(|((m, v), xi)| (xi - m).powi(2) / v)
            .sum()
    }

    fn sample_into<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        for ((o, m), v) in out.iter_mut().zip(&self.mean).zip(&self.cov_diag) {
            let z: f64 = rng.sample(StandardNormal);
            *o = m + v.sqrt() * z;
        }
    }
}

/// Gaussian RBF kernel configuration; `bandwidth2` is the squared bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelConfig {
    pub bandwidth2: f64,
}

impl KernelConfig {
    pub fn new(bandwidth2: f64) -> Result<Self> {
        if bandwidth2 > 0.0 && bandwidth2.is_finite() {
            Ok(Self { bandwidth2 })
        } else {
            Err(DpmeError::domain(format!(
                "bandwidth2 must be positive, got {bandwidth2}"
            )))
        }
    }

    /// `sup_x k(x, x)`.
    pub fn bound(&self) -> f64 {
        1.0
    }
}

/// Observations stored row-major, `m` rows of dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<f64>,
    m: usize,
    d: usize,
}

impl Dataset {
    pub fn new(points: Vec<f64>, m: usize, d: usize) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(DpmeError::DegenerateData(format!(
                "dataset must be non-empty, got {m} x {d}"
            )));
        }
        if points.len() != m * d {
            return Err(DpmeError::DimensionMismatch {
                expected: m * d,
                got: points.len(),
            });
        }
        if let Some(pos) = points.iter().position(|x| !x.is_finite()) {
            return Err(DpmeError::Data {
                row: pos / d + 1,
                column: Some(pos % d + 1),
                message: "non-finite value".into(),
            });
        }
        Ok(Self { points, m, d })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(DpmeError::Data {
                row: i + 1,
                column: None,
                message: format!("expected {d} columns, found {}", r.len()),
            });
        }
        Self::new(rows.concat(), rows.len(), d)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.points[k * self.d..(k + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.points
    }

    /// Per-dimension mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.d];
        for row in self.rows() {
            for (acc, x) in mean.iter_mut().zip(row) {
                *acc += x;
            }
        }
        mean.iter_mut().for_each(|x| *x /= self.m as f64);
        mean
    }

    /// Per-dimension sample variance (`m - 1` denominator; zero when `m == 1`).
    pub fn variance(&self) -> Vec<f64> {
        if self.m < 2 {
            return vec![0.0; self.d];
        }
        let mean = self.mean();
        let mut var = vec![0.0; self.d];
        for row in self.rows() {
            for ((acc, x), mu) in var.iter_mut().zip(row).zip(&mean) {
                *acc += (x - mu).powi(2);
            }
        }
        var.iter_mut().for_each(|x| *x /= (self.m - 1) as f64);
        var
    }
}

/// Sufficient statistics of the weight problem: `S`, `R` and `<mu_X, mu_X>`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingGram {
    pub s: DMatrix<f64>,
    pub r: DVector<f64>,
    pub data_term: f64,
}

impl EmbeddingGram {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

/// A truncated mixture: weights on the simplex and their components.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncatedDPMM {
    pub alpha: f64,
    pub weights: Vec<f64>,
    pub components: Vec<GaussianComponent>,
}

impl TruncatedDPMM {
    pub fn new(alpha: f64, weights: Vec<f64>, components: Vec<GaussianComponent>) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(DpmeError::domain(format!("alpha must be positive, got {alpha}")));
        }
        if weights.is_empty() {
            return Err(DpmeError::domain("model needs at least one component"));
        }
        if weights.len() != components.len() {
            return Err(DpmeError::DimensionMismatch {
                expected: weights.len(),
                got: components.len(),
            });
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(DpmeError::Infeasible(format!(
                "weights must be nonnegative and sum to 1 (sum = {sum})"
            )));
        }
        let d = components[0].dim();
        if let Some(c) = components.iter().find(|c| c.dim() != d) {
            return Err(DpmeError::DimensionMismatch {
                expected: d,
                got: c.dim(),
            });
        }
        Ok(Self {
            alpha,
            weights,
            components,
        })
    }

    pub fn truncation(&self) -> usize {
        self.weights.len()
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(DpmeError::DimensionMismatch {
            expected: a,
            got: b,
        })
    }
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum()
}

fn rbf(x: &[f64], y: &[f64], bandwidth2: f64) -> f64 {
    (-sq_dist(x, y) / (2.0 * bandwidth2)).exp()
}

pub fn kernel_eval(x: &[f64], y: &[f64], cfg: &KernelConfig) -> Result<f64> {
    check_dims(x.len(), y.len())?;
    Ok(rbf(x, y, cfg.bandwidth2))
}

/// `<mu[f], mu[x]>` for a point `x`, i.e. the smoothed kernel `E_{y~f} k(x, y)`.
fn smoothed_kernel(f: &GaussianComponent, x: &[f64], bandwidth2: f64) -> f64 {
    let mut scale = 1.0;
    let mut exponent = 0.0;
    for ((m, v), xi) in f.mean.iter().zip(&f.cov_diag).zip(x) {
        let s = bandwidth2 + v;
        scale *= bandwidth2 / s;
        exponent += (xi - m).powi(2) / (2.0 * s);
    }
    scale.sqrt() * (-exponent).exp()
}

/// Closed-form inner product of two component embeddings.
pub fn component_inner(
    f: &GaussianComponent,
    g: &GaussianComponent,
    cfg: &KernelConfig,
) -> Result<f64> {
    check_dims(f.dim(), g.dim())?;
    let mut scale = 1.0;
    let mut exponent = 0.0;
    for j in 0..f.dim() {
        let s = cfg.bandwidth2 + f.cov_diag[j] + g.cov_diag[j];
        scale *= cfg.bandwidth2 / s;
        exponent += (f.mean[j] - g.mean[j]).powi(2) / (2.0 * s);
    }
    Ok(scale.sqrt() * (-exponent).exp())
}

/// Inner product of a component embedding with the empirical embedding of `data`.
pub fn component_data_inner(
    f: &GaussianComponent,
    data: &Dataset,
    cfg: &KernelConfig,
) -> Result<f64> {
    check_dims(f.dim(), data.d())?;
    let total: f64 = data
        .rows()
        .map(|x| smoothed_kernel(f, x, cfg.bandwidth2))
        .sum();
    Ok(total / data.m() as f64)
}

/// Squared RKHS norm of the empirical embedding.
pub fn empirical_self_term(data: &Dataset, cfg: &KernelConfig) -> f64 {
    let m = data.m();
    let mut off_diag = 0.0;
    for i in 0..m {
        let xi = data.row(i);
        let mut row_sum = 0.0;
        for j in (i + 1)..m {
            row_sum += rbf(xi, data.row(j), cfg.bandwidth2);
        }
        off_diag += row_sum;
    }
    (m as f64 + 2.0 * off_diag) / (m as f64 * m as f64)
}

/// Assembles `S`, `R` and the data self-term for the given components.
pub fn assemble_gram(
    components: &[GaussianComponent],
    data: &Dataset,
    cfg: &KernelConfig,
) -> Result<EmbeddingGram> {
    if components.is_empty() {
        return Err(DpmeError::domain("need at least one component"));
    }
    for c in components {
        check_dims(data.d(), c.dim())?;
    }
    let s = gram_matrix(components, cfg)?;
    let r = components
        .iter()
        .map(|c| component_data_inner(c, data, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(EmbeddingGram {
        s,
        r: DVector::from_vec(r),
        data_term: empirical_self_term(data, cfg),
    })
}

/// Pairwise `<mu[f_i], mu[f_j]>`, computed once per unordered pair.
pub fn gram_matrix(components: &[GaussianComponent], cfg: &KernelConfig) -> Result<DMatrix<f64>> {
    let t = components.len();
    let mut s = DMatrix::zeros(t, t);
    for i in 0..t {
        for j in i..t {
            let v = component_inner(&components[i], &components[j], cfg)?;
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(s)
}

/// `data_term - 2 R'pi + pi' S pi`, with round-off negatives above `-1e-12`
/// clamped to zero.
pub fn mmd_squared(model: &TruncatedDPMM, gram: &EmbeddingGram) -> Result<f64> {
    mmd_squared_weights(&model.weights, gram)
}

pub(crate) fn mmd_squared_weights(weights: &[f64], gram: &EmbeddingGram) -> Result<f64> {
    check_dims(gram.len(), weights.len())?;
    let pi = DVector::from_column_slice(weights);
    let value = gram.data_term - 2.0 * gram.r.dot(&pi) + pi.dot(&(&gram.s * &pi));
    if value >= 0.0 {
        Ok(value)
    } else if value > -1e-12 {
        Ok(0.0)
    } else {
        Err(DpmeError::Invariant(format!(
            "squared MMD evaluated to {value:e}"
        )))
    }
}

/// Monte Carlo estimate of `<mu[f], mu[g]>` as the mean of `k(x_i, y_i)` over
/// independent pairs `x_i ~ f`, `y_i ~ g`. Returns `(estimate, std_error)`.
pub fn mc_component_inner(
    f: &GaussianComponent,
    g: &GaussianComponent,
    cfg: &KernelConfig,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    check_dims(f.dim(), g.dim())?;
    if n_samples < 1000 {
        return Err(DpmeError::domain(format!(
            "n_samples must be >= 1000, got {n_samples}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let d = f.dim();
    let (mut x, mut y) = (vec![0.0; d], vec![0.0; d]);
    let samples = (0..n_samples).map(|_| {
        f.sample_into(&mut rng, &mut x);
        g.sample_into(&mut rng, &mut y);
        rbf(&x, &y, cfg.bandwidth2)
    });
    Ok(mean_and_std_error(samples))
}

/// Monte Carlo estimate of `<mu[f], mu_X>`: the mean of `k(x, y)` with
/// `y ~ f` and `x` drawn uniformly from the data.
pub fn mc_component_data_inner(
    f: &GaussianComponent,
    data: &Dataset,
    cfg: &KernelConfig,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    check_dims(f.dim(), data.d())?;
    if n_samples < 1000 {
        return Err(DpmeError::domain(format!(
            "n_samples must be >= 1000, got {n_samples}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut y = vec![0.0; f.dim()];
    let samples = (0..n_samples).map(|_| {
        let x = data.row(rng.gen_range(0..data.m()));
        f.sample_into(&mut rng, &mut y);
        rbf(x, &y, cfg.bandwidth2)
    });
    Ok(mean_and_std_error(samples))
}

pub(crate) fn mean_and_std_error(samples: impl Iterator<Item = f64>) -> (f64, f64) {
    // Welford
    let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
    for s in samples {
        n += 1;
        let delta = s - mean;
        mean += delta / n as f64;
        m2 += delta * (s - mean);
    }
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = m2 / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

const MEDIAN_MAX_PAIRS: usize = 10_000;
const MEDIAN_PAIR_SEED: u64 = 0x6d65_6469_616e;

/// Median heuristic: `s2 = median(|x_i - x_j|)^2 / 2` over distinct pairs,
/// using a fixed deterministic subsample of pairs once there are more than
/// 10^4 of them.
pub fn median_heuristic_bandwidth(data: &Dataset) -> Result<f64> {
    let m = data.m();
    if m < 2 {
        return Err(DpmeError::DegenerateData(
            "median heuristic needs at least two points".into(),
        ));
    }
    let n_pairs = m * (m - 1) / 2;
    let mut dists = Vec::with_capacity(n_pairs.min(MEDIAN_MAX_PAIRS));
    if n_pairs <= MEDIAN_MAX_PAIRS {
        for i in 0..m {
            for j in (i + 1)..m {
                dists.push(sq_dist(data.row(i), data.row(j)).sqrt());
            }
        }
    } else {
        let mut rng = rng_from_seed(MEDIAN_PAIR_SEED);
        for _ in 0..MEDIAN_MAX_PAIRS {
            let pair = index::sample(&mut rng, m, 2);
            dists.push(sq_dist(data.row(pair.index(0)), data.row(pair.index(1))).sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let n = dists.len();
    let median = if n % 2 == 1 {
        dists[n / 2]
    } else {
        0.5 * (dists[n / 2 - 1] + dists[n / 2])
    };
    if median <= 0.0 {
        return Err(DpmeError::DegenerateData(
            "median pairwise distance is zero (points identical)".into(),
        ));
    }
    Ok(median * median / 2.0)
}

/// Per-truncation-level squared embedding gaps, averaged over prior draws.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub alpha: f64,
    pub t_ref: usize,
    pub n_draws: usize,
    pub t_values: Vec<usize>,
    pub mean_gaps: Vec<f64>,
    pub gap_std_errors: Vec<f64>,
    /// `exp(-T / alpha)` with `C = 1`.
    pub bounds: Vec<f64>,
    /// Least-squares slope of `ln(mean gap)` against `T`.
    pub slope: f64,
    /// Every draw's gap sequence was non-increasing in `T`.
    pub monotone: bool,
}

impl DecayReport {
    pub fn all_under_bound(&self) -> bool {
        self.mean_gaps.iter().zip(&self.bounds).all(|(g, b)| g <= b)
    }

    /// `[-1.4 / alpha, -0.6 / alpha]`.
    pub fn slope_window(&self) -> (f64, f64) {
        (-1.4 / self.alpha, -0.6 / self.alpha)
    }

    pub fn slope_within_window(&self) -> bool {
        let (lo, hi) = self.slope_window();
        self.slope >= lo && self.slope <= hi
    }
}

/// Measures how fast the squared RKHS distance between a long (`t_ref`)
/// stick-breaking embedding and its truncation at `T` decays with `T`.
pub fn truncation_decay_check(
    alpha: f64,
    base: &BaseMeasure,
    cfg: &KernelConfig,
    t_values: &[usize],
    t_ref: usize,
    n_draws: usize,
    seed: u64,
) -> Result<DecayReport> {
    if t_values.is_empty() || t_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DpmeError::domain("t_values must be non-empty and increasing"));
    }
    let t_max = *t_values.last().unwrap();
    if t_ref < 4 * t_max {
        return Err(DpmeError::domain(format!(
            "t_ref = {t_ref} must be at least 4 * max(T) = {}",
            4 * t_max
        )));
    }
    let tail = expected_tail_mass(alpha, t_ref)?;
    if tail >= 1e-10 {
        return Err(DpmeError::domain(format!(
            "t_ref = {t_ref} leaves expected tail mass {tail:e} (need < 1e-10)"
        )));
    }
    if n_draws < 2 {
        return Err(DpmeError::domain("need at least two draws"));
    }

    let mut per_t: Vec<Vec<f64>> = vec![Vec::with_capacity(n_draws); t_values.len()];
    let mut monotone = true;
    let mut gaps = Vec::with_capacity(t_ref + 1);
    for i in 0..n_draws {
        let (draw, comps) = sample_draw(alpha, t_ref, base, derive_seed(seed, i as u64))?;
        let s = gram_matrix(&comps, cfg)?;
        tail_gaps(&draw.weights, &s, &mut gaps);
        monotone &= gaps.windows(2).all(|g| g[0] >= g[1]);
        for (acc, &t) in per_t.iter_mut().zip(t_values) {
            acc.push(gaps[t]);
        }
    }

    let (mean_gaps, gap_std_errors): (Vec<f64>, Vec<f64>) = per_t
        .into_iter()
        .map(|xs| mean_and_std_error(xs.into_iter()))
        .unzip();
    let bounds = t_values
        .iter()
        .map(|&t| truncation_bound(alpha, t, cfg.bound()))
        .collect();
    let xs: Vec<f64> = t_values.iter().map(|&t| t as f64).collect();
    let ys: Vec<f64> = mean_gaps.iter().map(|g| g.ln()).collect();
    Ok(DecayReport {
        alpha,
        t_ref,
        n_draws,
        t_values: t_values.to_vec(),
        mean_gaps,
        gap_std_errors,
        bounds,
        slope: least_squares_slope(&xs, &ys),
        monotone,
    })
}

/// `gaps[t] = |sum_{i >= t} w_i mu_i|^2` for `t = 0..=len`, accumulated from
/// the far end so every step adds a nonnegative term.
fn tail_gaps(w: &[f64], s: &DMatrix<f64>, gaps: &mut Vec<f64>) {
    let n = w.len();
    gaps.clear();
    gaps.resize(n + 1, 0.0);
    for t in (0..n).rev() {
        let cross: f64 = ((t + 1)..n).map(|j| w[j] * s[(t, j)]).sum();
        gaps[t] = gaps[t + 1] + w[t] * (w[t] * s[(t, t)] + 2.0 * cross);
    }
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
