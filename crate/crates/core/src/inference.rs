//! End-to-end fitting: pick atoms, assemble the Gram statistics, solve for
//! the mixture weights, then recover latent assignments.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::embedding::{
    assemble_gram, median_heuristic_bandwidth, mmd_squared, Dataset, EmbeddingGram,
    GaussianComponent, KernelConfig, TruncatedDPMM,
};
use crate::error::{DpmeError, Result};
use crate::kmeans::kmeans;
use crate::qp::{self, QPProblem, QPSolution};
use crate::rng::{derive_seed, rng_from_seed};
use crate::stick_breaking::{choose_truncation, truncation_bound};

const ATOM_STREAM: u64 = 1;
const QP_STREAM: u64 = 2;
const KMEANS_RESTARTS: usize = 20;
const KMEANS_MAX_ITER: usize = 100;

pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-3;
pub const DEFAULT_COMP_COV_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    Fixed(usize),
    /// Smallest level whose truncation bound (with `C = 1`) is below `delta`.
    Auto { delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomStrategy {
    SampleG0,
    Kmeans,
    Subsample,
}

impl AtomStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            AtomStrategy::SampleG0 => "sample",
            AtomStrategy::Kmeans => "kmeans",
            AtomStrategy::Subsample => "subsample",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularization {
    /// `1e-6 * trace(S) / T`.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Median,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitConfig {
    pub alpha: f64,
    pub trunc: Truncation,
    pub atom_strategy: AtomStrategy,
    pub epsilon: Regularization,
    pub bandwidth: Bandwidth,
    /// Atom variance as a multiple of the per-dimension data variance.
    pub comp_cov_scale: f64,
    pub weight_floor: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl FitConfig {
    pub fn new(alpha: f64, trunc: Truncation) -> Self {
        Self {
            alpha,
            trunc,
            atom_strategy: AtomStrategy::Kmeans,
            epsilon: Regularization::Auto,
            bandwidth: Bandwidth::Median,
            comp_cov_scale: DEFAULT_COMP_COV_SCALE,
            weight_floor: DEFAULT_WEIGHT_FLOOR,
            tol: qp::DEFAULT_TOL,
            max_iter: qp::DEFAULT_MAX_ITER,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(DpmeError::domain(format!("alpha must be positive, got {}", self.alpha)));
        }
        match self.trunc {
            Truncation::Fixed(0) => return Err(DpmeError::domain("trunc must be >= 1")),
            Truncation::Auto { delta } if !(delta > 0.0 && delta < 1.0) => {
                return Err(DpmeError::domain(format!("delta must lie in (0, 1), got {delta}")))
            }
            _ => {}
        }
        if let Regularization::Fixed(e) = self.epsilon {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(DpmeError::domain(format!("epsilon must be nonnegative, got {e}")));
            }
        }
        if let Bandwidth::Fixed(b) = self.bandwidth {
            KernelConfig::new(b)?;
        }
        if !(self.comp_cov_scale > 0.0 && self.comp_cov_scale.is_finite()) {
            return Err(DpmeError::domain("comp_cov_scale must be positive"));
        }
        if !(0.0..1.0).contains(&self.weight_floor) {
            return Err(DpmeError::domain("weight_floor must lie in [0, 1)"));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(DpmeError::domain("tol and max_iter must be positive"));
        }
        Ok(())
    }

    /// The truncation level, resolving `Auto` against the bound with `C = 1`.
    pub fn truncation(&self) -> Result<usize> {
        match self.trunc {
            Truncation::Fixed(t) if t > 0 => Ok(t),
            Truncation::Fixed(_) => Err(DpmeError::domain("trunc must be >= 1")),
            Truncation::Auto { delta } => choose_truncation(self.alpha, delta, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Latents {
    pub assignments: Vec<usize>,
    /// `m x T`, rows on the simplex.
    pub responsibilities: DMatrix<f64>,
    /// Rows whose every weighted density underflows; assigned to the nearest
    /// atom (Mahalanobis) instead.
    pub flagged_rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: TruncatedDPMM,
    pub qp: QPSolution,
    pub gram: EmbeddingGram,
    pub mmd2: f64,
    pub latents: Latents,
    pub effective_t: usize,
    /// `exp(-T / alpha)`.
    pub truncation_bound: f64,
    pub bandwidth2: f64,
    pub epsilon: f64,
}

fn atom_variance(data: &Dataset, scale: f64) -> Vec<f64> {
    data.variance()
        .into_iter()
        .map(|v| scale * if v > 0.0 { v } else { 1.0 })
        .collect()
}

/// Chooses the `T` atoms whose weights the fit will solve for.
pub fn init_atoms(data: &Dataset, cfg: &FitConfig) -> Result<Vec<GaussianComponent>> {
    cfg.validate()?;
    let trunc = cfg.truncation()?;
    let cov = atom_variance(data, cfg.comp_cov_scale);
    let seed = derive_seed(cfg.seed, ATOM_STREAM);
    let means: Vec<Vec<f64>> = match cfg.atom_strategy {
        AtomStrategy::SampleG0 => {
            let center = data.mean();
            let tau: Vec<f64> = data
                .variance()
                .into_iter()
                .map(|v| if v > 0.0 { v.sqrt() } else { 1.0 })
                .collect();
            let mut rng = rng_from_seed(seed);
            (0..trunc)
                .map(|_| {
                    center
                        .iter()
                        .zip(&tau)
                        .map(|(c, t)| {
                            let z: f64 = rng.sample(StandardNormal);
                            c + t * z
                        })
                        .collect()
                })
                .collect()
        }
        AtomStrategy::Kmeans => {
            kmeans(data, trunc, KMEANS_RESTARTS, KMEANS_MAX_ITER, seed)?.centroids
        }
        AtomStrategy::Subsample => {
            if trunc > data.m() {
                return Err(DpmeError::domain(format!(
                    "cannot subsample {trunc} atoms from {} rows",
                    data.m()
                )));
            }
            let mut rng = rng_from_seed(seed);
            index::sample(&mut rng, data.m(), trunc)
                .into_iter()
                .map(|i| data.row(i).to_vec())
                .collect()
        }
    };
    means
        .into_iter()
        .map(|m| GaussianComponent::new(m, cov.clone()))
        .collect()
}

/// Fits mixture weights over atoms chosen by `cfg.atom_strategy`.
pub fn fit(data: &Dataset, cfg: &FitConfig) -> Result<FitResult> {
    let atoms = init_atoms(data, cfg)?;
    fit_with_atoms(data, atoms, cfg)
}

/// Fits mixture weights over the given atoms; `cfg.trunc` is ignored.
pub fn fit_with_atoms(
    data: &Dataset,
    atoms: Vec<GaussianComponent>,
    cfg: &FitConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let bandwidth2 = match cfg.bandwidth {
        Bandwidth::Median => median_heuristic_bandwidth(data)?,
        Bandwidth::Fixed(b) => b,
    };
    let kernel = KernelConfig::new(bandwidth2)?;
    let gram = assemble_gram(&atoms, data, &kernel)?;
    let trunc = atoms.len();
    let epsilon = match cfg.epsilon {
        Regularization::Auto => 1e-6 * gram.s.trace() / trunc as f64,
        Regularization::Fixed(e) => e,
    };
    let problem = QPProblem::new(gram.s.clone(), gram.r.clone(), epsilon)?;
    let solution = qp::solve(&problem, cfg.tol, cfg.max_iter, derive_seed(cfg.seed, QP_STREAM))?;
    let model = TruncatedDPMM::new(cfg.alpha, solution.pi.clone(), atoms)?;
    let mmd2 = mmd_squared(&model, &gram)?;
    let latents = assign_latents(&model, data)?;
    Ok(FitResult {
        effective_t: effective_components(&model, cfg.weight_floor),
        truncation_bound: truncation_bound(cfg.alpha, trunc, kernel.bound()),
        model,
        qp: solution,
        gram,
        mmd2,
        latents,
        bandwidth2,
        epsilon,
    })
}

/// Posterior component responsibilities and hard assignments.
pub fn assign_latents(model: &TruncatedDPMM, data: &Dataset) -> Result<Latents> {
    let t = model.truncation();
    if t == 0 || model.weights.iter().all(|w| *w <= 0.0) {
        return Err(DpmeError::domain("model has no positive weight"));
    }
    if model.components.len() != t {
        return Err(DpmeError::DimensionMismatch {
            expected: t,
            got: model.components.len(),
        });
    }
    for c in &model.components {
        if c.dim() != data.d() {
            return Err(DpmeError::DimensionMismatch {
                expected: data.d(),
                got: c.dim(),
            });
        }
    }
    let log_weights: Vec<f64> = model
        .weights
        .iter()
        .map(|w| if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY })
        .collect();
    let underflow = f64::MIN_POSITIVE.ln();

    let mut responsibilities = DMatrix::zeros(data.m(), t);
    let mut assignments = Vec::with_capacity(data.m());
    let mut flagged_rows = Vec::new();
    let mut logp = vec![0.0; t];
    for (k, x) in data.rows().enumerate() {
        for ((lp, lw), comp) in logp.iter_mut().zip(&log_weights).zip(&model.components) {
            *lp = lw + comp.log_density(x);
        }
        let max = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max < underflow {
            let nearest = (0..t)
                .filter(|&i| model.weights[i] > 0.0)
                .min_by(|&a, &b| {
                    model.components[a]
                        .mahalanobis2(x)
                        .total_cmp(&model.components[b].mahalanobis2(x))
                })
                .expect("some weight is positive");
            responsibilities[(k, nearest)] = 1.0;
            assignments.push(nearest);
            flagged_rows.push(k);
            continue;
        }
        let total: f64 = logp.iter().map(|lp| (lp - max).exp()).sum();
        let mut best = (0, f64::NEG_INFINITY);
        for (i, lp) in logp.iter().enumerate() {
            let r = (lp - max).exp() / total;
            responsibilities[(k, i)] = r;
            if r > best.1 {
                best = (i, r);
            }
        }
        assignments.push(best.0);
    }
    Ok(Latents {
        assignments,
        responsibilities,
        flagged_rows,
    })
}

/// Number of weights strictly above `weight_floor`.
pub fn effective_components(model: &TruncatedDPMM, weight_floor: f64) -> usize {
    model.weights.iter().filter(|w| **w > weight_floor).count()
}
