//! Stick-breaking draws from a Dirichlet Process prior.
//!
//! A draw breaks `Beta(1, alpha)` fractions off a unit stick; the `i`-th
//! weight is the fraction broken at step `i` times whatever was left of the
//! stick before it. Truncating after `T` breaks leaves `tail_mass` unassigned.

use rand::Rng;
use rand_distr::{Distribution, Open01, StandardNormal};
use serde::Serialize;

use crate::embedding::GaussianComponent;
use crate::error::{DpmeError, Result};
use crate::rng::{derive_seed, rng_from_seed};

/// One truncated stick-breaking realisation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StickBreakingDraw {
    pub alpha: f64,
    pub betas: Vec<f64>,
    pub weights: Vec<f64>,
    pub tail_mass: f64,
}

impl StickBreakingDraw {
    /// Builds a draw from explicit break fractions.
    pub fn from_betas(alpha: f64, betas: Vec<f64>) -> Result<Self> {
        check_alpha(alpha)?;
        let (weights, tail_mass) = weights_from_betas(&betas)?;
        Ok(Self {
            alpha,
            betas,
            weights,
            tail_mass,
        })
    }

    pub fn truncation(&self) -> usize {
        self.betas.len()
    }
}

/// Base measure over component parameters: component means are drawn from
/// `N(mean0, tau2 * I)` and every component shares the covariance `comp_cov`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaseMeasure {
    mean0: Vec<f64>,
    tau2: f64,
    comp_cov: Vec<f64>,
}

impl BaseMeasure {
    pub fn new(mean0: Vec<f64>, tau2: f64, comp_cov: Vec<f64>) -> Result<Self> {
        if mean0.is_empty() {
            return Err(DpmeError::domain("base measure needs dimension >= 1"));
        }
        if mean0.len() != comp_cov.len() {
            return Err(DpmeError::DimensionMismatch {
                expected: mean0.len(),
                got: comp_cov.len(),
            });
        }
        if !(tau2 > 0.0 && tau2.is_finite()) {
            return Err(DpmeError::domain(format!("tau2 must be positive, got {tau2}")));
        }
        if mean0.iter().any(|m| !m.is_finite()) {
            return Err(DpmeError::domain("mean0 must be finite"));
        }
        if let Some(v) = comp_cov.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(DpmeError::domain(format!(
                "component variances must be positive, got {v}"
            )));
        }
        Ok(Self {
            mean0,
            tau2,
            comp_cov,
        })
    }

    /// Isotropic base measure in `dim` dimensions.
    pub fn isotropic(dim: usize, mean0: f64, tau2: f64, comp_var: f64) -> Result<Self> {
        Self::new(vec![mean0; dim], tau2, vec![comp_var; dim])
    }

    pub fn mean0(&self) -> &[f64] {
        &self.mean0
    }

    pub fn tau2(&self) -> f64 {
        self.tau2
    }

    pub fn comp_cov(&self) -> &[f64] {
        &self.comp_cov
    }

    pub fn dim(&self) -> usize {
        self.mean0.len()
    }

    /// Mass the marginal of the first coordinate assigns to `[lo, hi)`.
    pub fn interval_mass(&self, lo: f64, hi: f64) -> f64 {
        let sd = self.tau2.sqrt();
        normal_cdf((hi - self.mean0[0]) / sd) - normal_cdf((lo - self.mean0[0]) / sd)
    }
}

pub(crate) fn normal_cdf(z: f64) -> f64 {
    if z == f64::INFINITY {
        1.0
    } else if z == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(DpmeError::domain(format!("alpha must be positive, got {alpha}")))
    }
}

fn check_truncation(trunc: usize) -> Result<()> {
    if trunc == 0 {
        Err(DpmeError::domain("truncation level must be >= 1"))
    } else {
        Ok(())
    }
}

/// Draws `trunc` independent `Beta(1, alpha)` variates as `1 - U^(1/alpha)`.
pub fn sample_betas(alpha: f64, trunc: usize, seed: u64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    check_truncation(trunc)?;
    let mut rng = rng_from_seed(seed);
    Ok((0..trunc)
        .map(|_| {
            let u: f64 = Open01.sample(&mut rng);
            // 1 - exp(ln(u) / alpha), without cancellation for large alpha
            -(u.ln() / alpha).exp_m1()
        })
        .collect())
}

/// Converts break fractions into stick weights, returning `(weights, tail_mass)`.
pub fn weights_from_betas(betas: &[f64]) -> Result<(Vec<f64>, f64)> {
    let mut remainder = 1.0;
    let mut weights = Vec::with_capacity(betas.len());
    for (i, &b) in betas.iter().enumerate() {
        if !(0.0..=1.0).contains(&b) {
            return Err(DpmeError::domain(format!(
                "beta[{i}] = {b} is outside [0, 1]"
            )));
        }
        weights.push(b * remainder);
        remainder *= 1.0 - b;
    }
    Ok((weights, remainder))
}

/// Samples a truncated prior draw together with its Gaussian components.
pub fn sample_draw(
    alpha: f64,
    trunc: usize,
    base: &BaseMeasure,
    seed: u64,
) -> Result<(StickBreakingDraw, Vec<GaussianComponent>)> {
    let betas = sample_betas(alpha, trunc, derive_seed(seed, 0))?;
    let draw = StickBreakingDraw::from_betas(alpha, betas)?;
    let mut rng = rng_from_seed(derive_seed(seed, 1));
    let sd = base.tau2.sqrt();
    let components = (0..trunc)
        .map(|_| {
            let mean = base
                .mean0
                .iter()
                .map(|m| {
                    let z: f64 = rng.sample(StandardNormal);
                    m + sd * z
                })
                .collect();
            GaussianComponent::new(mean, base.comp_cov.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((draw, components))
}

/// Exact expectation of the unassigned stick after `trunc` breaks,
/// `(alpha / (1 + alpha))^trunc`.
pub fn expected_tail_mass(alpha: f64, trunc: usize) -> Result<f64> {
    check_alpha(alpha)?;
    if trunc == 0 {
        return Ok(1.0);
    }
    Ok((alpha / (1.0 + alpha)).powf(trunc as f64))
}

/// The truncation bound `c * exp(-trunc / alpha)`.
pub fn truncation_bound(alpha: f64, trunc: usize, c: f64) -> f64 {
    c * (-(trunc as f64) / alpha).exp()
}

/// Smallest `T >= 1` with `c * exp(-T / alpha) <= delta`.
pub fn choose_truncation(alpha: f64, delta: f64, c: f64) -> Result<usize> {
    check_alpha(alpha)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(DpmeError::domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(DpmeError::domain(format!("C must be positive, got {c}")));
    }
    if delta >= c {
        return Ok(1);
    }
    let mut trunc = ((alpha * (c / delta).ln()).ceil() as usize).max(1);
    // the closed form can land one off after rounding
    while truncation_bound(alpha, trunc, c) > delta {
        trunc += 1;
    }
    while trunc > 1 && truncation_bound(alpha, trunc - 1, c) <= delta {
        trunc -= 1;
    }
    Ok(trunc)
}

/// Half-open interval `[lo, hi)` of the real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x < self.hi
    }
}

/// Splits the real line at the given interior cut points.
pub fn partition_from_cuts(cuts: &[f64]) -> Vec<Interval> {
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(f64::NEG_INFINITY);
    edges.extend_from_slice(cuts);
    edges.push(f64::INFINITY);
    edges.windows(2).map(|w| Interval::new(w[0], w[1])).collect()
}

fn validate_partition(partition: &[Interval]) -> Result<()> {
    if partition.is_empty() {
        return Err(DpmeError::Partition("no cells".into()));
    }
    let mut cells = partition.to_vec();
    cells.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    if cells[0].lo != f64::NEG_INFINITY || cells[cells.len() - 1].hi != f64::INFINITY {
        return Err(DpmeError::Partition("cells do not cover the whole line".into()));
    }
    for c in &cells {
        if c.lo.is_nan() || c.hi.is_nan() || c.lo >= c.hi {
            return Err(DpmeError::Partition(format!(
                "empty or malformed cell [{}, {})",
                c.lo, c.hi
            )));
        }
    }
    for w in cells.windows(2) {
        if w[0].hi > w[1].lo {
            return Err(DpmeError::Partition(format!(
                "cells [{}, {}) and [{}, {}) overlap",
                w[0].lo, w[0].hi, w[1].lo, w[1].hi
            )));
        }
        if w[0].hi < w[1].lo {
            return Err(DpmeError::Partition(format!(
                "gap between {} and {}",
                w[0].hi, w[1].lo
            )));
        }
    }
    Ok(())
}

/// Moment comparison for one partition cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellMoments {
    pub cell: Interval,
    pub base_mass: f64,
    pub mean: f64,
    pub mean_target: f64,
    pub mean_std_error: f64,
    pub variance: f64,
    pub variance_target: f64,
    pub variance_std_error: f64,
}

impl CellMoments {
    pub fn mean_deviation(&self) -> f64 {
        self.mean - self.mean_target
    }

    pub fn variance_deviation(&self) -> f64 {
        self.variance - self.variance_target
    }

    /// Both moments within `k` standard errors (plus round-off slack).
    pub fn within(&self, k: f64) -> bool {
        const SLACK: f64 = 1e-12;
        self.mean_deviation().abs() <= k * self.mean_std_error + SLACK
            && self.variance_deviation().abs() <= k * self.variance_std_error + SLACK
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirichletMarginalReport {
    pub alpha: f64,
    pub n_draws: usize,
    pub t_proxy: usize,
    pub cells: Vec<CellMoments>,
}

impl DirichletMarginalReport {
    pub fn within(&self, k: f64) -> bool {
        self.cells.iter().all(|c| c.within(k))
    }
}

/// Compares the empirical moments of `(G(A_1), ..., G(A_r))` over many
/// truncated draws with the moments of `Dir(alpha G_0(A_1), ..., alpha G_0(A_r))`.
///
/// Atoms are placed by the first coordinate of the component means. The
/// truncated tail is spread over the cells in proportion to `G_0`.
pub fn dirichlet_marginal_check(
    alpha: f64,
    base: &BaseMeasure,
    partition: &[Interval],
    n_draws: usize,
    t_proxy: usize,
    seed: u64,
) -> Result<DirichletMarginalReport> {
    check_alpha(alpha)?;
    validate_partition(partition)?;
    if n_draws < 2 {
        return Err(DpmeError::domain("need at least two draws"));
    }
    let tail = expected_tail_mass(alpha, t_proxy)?;
    if tail >= 1e-8 {
        return Err(DpmeError::domain(format!(
            "t_proxy = {t_proxy} leaves expected tail mass {tail:e} (need < 1e-8)"
        )));
    }
    let base_mass: Vec<f64> = partition
        .iter()
        .map(|c| base.interval_mass(c.lo, c.hi))
        .collect();
    let r = partition.len();
    let mut samples = vec![Vec::with_capacity(n_draws); r];
    for i in 0..n_draws {
        let (draw, comps) = sample_draw(alpha, t_proxy, base, derive_seed(seed, i as u64))?;
        let mut cell_mass: Vec<f64> = base_mass.iter().map(|g| draw.tail_mass * g).collect();
        for (w, comp) in draw.weights.iter().zip(&comps) {
            let x = comp.mean()[0];
            if let Some(c) = partition.iter().position(|cell| cell.contains(x)) {
                cell_mass[c] += w;
            }
        }
        for (s, v) in samples.iter_mut().zip(cell_mass) {
            s.push(v);
        }
    }
    let n = n_draws as f64;
    let cells = partition
        .iter()
        .zip(&base_mass)
        .zip(&samples)
        .map(|((cell, &g0), xs)| {
            let mean = xs.iter().sum::<f64>() / n;
            let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
            let variance = m2 * n / (n - 1.0);
            let var_of_var = ((m4 - m2 * m2 * (n - 3.0) / (n - 1.0)) / n).max(0.0);
            CellMoments {
                cell: *cell,
                base_mass: g0,
                mean,
                mean_target: g0,
                mean_std_error: (variance / n).sqrt(),
                variance,
                variance_target: g0 * (1.0 - g0) / (alpha + 1.0),
                variance_std_error: var_of_var.sqrt(),
            }
        })
        .collect();
    Ok(DirichletMarginalReport {
        alpha,
        n_draws,
        t_proxy,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_examples() {
        let (w, t) = weights_from_betas(&[1.0]).unwrap();
        assert_eq!(w, vec![1.0]);
        assert_eq!(t, 0.0);
        let (w, t) = weights_from_betas(&[0.5, 0.5, 0.5]).unwrap();
        assert_eq!(w, vec![0.5, 0.25, 0.125]);
        assert_eq!(t, 0.125);
        let (w, t) = weights_from_betas(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(w, vec![0.0, 0.0, 1.0]);
        assert_eq!(t, 0.0);
    }

    #[test]
    fn rejects_out_of_range_betas_and_params() {
        assert!(matches!(weights_from_betas(&[0.2, 1.5]), Err(DpmeError::Domain(_))));
        assert!(matches!(weights_from_betas(&[-0.1]), Err(DpmeError::Domain(_))));
        assert!(sample_betas(0.0, 3, 1).is_err());
        assert!(sample_betas(-1.0, 3, 1).is_err());
        assert!(sample_betas(1.0, 0, 1).is_err());
        assert!(expected_tail_mass(0.0, 2).is_err());
    }

    #[test]
    fn betas_in_unit_interval_and_deterministic() {
        let a = sample_betas(1.0, 3, 9).unwrap();
        assert!(a.iter().all(|b| *b > 0.0 && *b < 1.0));
        assert_eq!(a, sample_betas(1.0, 3, 9).unwrap());
        assert_ne!(a, sample_betas(1.0, 3, 10).unwrap());
    }

    #[test]
    fn beta_mean_matches_one_over_one_plus_alpha() {
        let b = sample_betas(2.0, 100_000, 3).unwrap();
        let mean = b.iter().sum::<f64>() / b.len() as f64;
        assert!((mean - 1.0 / 3.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn single_break_draw() {
        let base = BaseMeasure::isotropic(2, 0.0, 1.0, 1.0).unwrap();
        let (draw, comps) = sample_draw(1.5, 1, &base, 4).unwrap();
        assert_eq!(comps.len(), 1);
        assert_eq!(draw.weights[0], draw.betas[0]);
        assert!((draw.tail_mass - (1.0 - draw.betas[0])).abs() < 1e-15);
        assert!((draw.weights[0] + draw.tail_mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn draws_are_reproducible() {
        let base = BaseMeasure::isotropic(3, 1.0, 2.0, 0.5).unwrap();
        let a = sample_draw(2.0, 20, &base, 77).unwrap();
        let b = sample_draw(2.0, 20, &base, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn long_truncation_leaves_negligible_tail() {
        let base = BaseMeasure::isotropic(1, 0.0, 1.0, 1.0).unwrap();
        let n = 10_000;
        let mean_tail = (0..n)
            .map(|i| sample_draw(1.0, 50, &base, derive_seed(5, i)).unwrap().0.tail_mass)
            .sum::<f64>()
            / n as f64;
        assert!(mean_tail < 1e-9, "{mean_tail}");
    }

    #[test]
    fn expected_tail_mass_examples() {
        assert_eq!(expected_tail_mass(3.0, 0).unwrap(), 1.0);
        assert!((expected_tail_mass(2.0, 5).unwrap() - 32.0 / 243.0).abs() < 1e-15);
        assert!((expected_tail_mass(1.0, 10).unwrap() - 2f64.powi(-10)).abs() < 1e-18);
    }

    #[test]
    fn choose_truncation_examples() {
        assert_eq!(choose_truncation(1.0, 1e-4, 1.0).unwrap(), 10);
        assert_eq!(choose_truncation(1.0, 0.5, 0.25).unwrap(), 1);
        assert_eq!(choose_truncation(5.0, 1e-2, 1.0).unwrap(), 24);
        assert!(choose_truncation(1.0, 0.0, 1.0).is_err());
        assert!(choose_truncation(1.0, 1.0, 1.0).is_err());
        assert!(choose_truncation(1.0, 0.1, 0.0).is_err());
    }

    #[test]
    fn partition_validation() {
        let base = BaseMeasure::isotropic(1, 0.0, 1.0, 1.0).unwrap();
        let overlapping = [
            Interval::new(f64::NEG_INFINITY, 0.5),
            Interval::new(0.0, f64::INFINITY),
        ];
        let gap = [
            Interval::new(f64::NEG_INFINITY, -0.5),
            Interval::new(0.0, f64::INFINITY),
        ];
        let short = [Interval::new(-10.0, f64::INFINITY)];
        for p in [&overlapping[..], &gap[..], &short[..]] {
            assert!(matches!(
                dirichlet_marginal_check(1.0, &base, p, 10, 40, 0),
                Err(DpmeError::Partition(_))
            ));
        }
        // t_proxy too small for alpha
        assert!(matches!(
            dirichlet_marginal_check(1.0, &base, &partition_from_cuts(&[0.0]), 10, 5, 0),
            Err(DpmeError::Domain(_))
        ));
    }

    #[test]
    fn whole_line_cell_has_unit_mass() {
        let base = BaseMeasure::isotropic(1, 0.0, 1.0, 1.0).unwrap();
        let report =
            dirichlet_marginal_check(1.0, &base, &partition_from_cuts(&[]), 200, 40, 3).unwrap();
        let cell = &report.cells[0];
        assert!((cell.mean - 1.0).abs() < 1e-12);
        assert!(cell.variance < 1e-24);
        assert!(report.within(3.0));
    }

    #[test]
    fn two_cell_moments_for_alpha_one() {
        let base = BaseMeasure::isotropic(1, 0.0, 1.0, 1.0).unwrap();
        let report =
            dirichlet_marginal_check(1.0, &base, &partition_from_cuts(&[0.0]), 10_000, 40, 11)
                .unwrap();
        for c in &report.cells {
            assert!((c.base_mass - 0.5).abs() < 1e-15);
            assert!((c.variance_target - 0.125).abs() < 1e-15);
            assert!(c.within(3.0), "{c:?}");
        }
    }

    #[test]
    fn variance_shrinks_for_large_alpha() {
        let base = BaseMeasure::isotropic(1, 0.0, 1.0, 1.0).unwrap();
        let part = partition_from_cuts(&[0.0]);
        let report = dirichlet_marginal_check(100.0, &base, &part, 10_000, 2000, 2).unwrap();
        let v = report.cells[0].variance;
        assert!((v - 0.25 / 101.0).abs() < 3.0 * report.cells[0].variance_std_error, "{v}");
    }
}
