//! Statistical self-checks exposed through `dpme validate`.
//!
//! Each suite compares an implementation route against an independent one:
//! Monte Carlo against closed forms, the QP solver against lattice search,
//! sampled Dirichlet marginals against the Dirichlet moment formulas, and
//! truncated embeddings against the exponential truncation bound.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::embedding::{
    component_data_inner, component_inner, mc_component_data_inner, mc_component_inner,
    truncation_decay_check, Dataset, DecayReport, GaussianComponent, KernelConfig,
};
use crate::error::{DpmeError, Result};
use crate::qp::{brute_force_solve, solve, QPProblem, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::rng::{derive_seed, rng_from_seed, DpmeRng};
use crate::stick_breaking::{
    dirichlet_marginal_check, expected_tail_mass, partition_from_cuts, BaseMeasure,
    DirichletMarginalReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Bound,
    Gram,
    Dirichlet,
    Qp,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Bound, Suite::Gram, Suite::Dirichlet, Suite::Qp];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Bound => "bound",
            Suite::Gram => "gram",
            Suite::Dirichlet => "dirichlet",
            Suite::Qp => "qp",
        }
    }

    pub fn parse(name: &str) -> Option<Vec<Suite>> {
        match name {
            "all" => Some(Suite::ALL.to_vec()),
            other => Suite::ALL.iter().find(|s| s.name() == other).map(|s| vec![*s]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum SuiteDetails {
    Bound(Vec<DecayReport>),
    Gram(GramReport),
    Dirichlet(Vec<DirichletMarginalReport>),
    Qp(QpReport),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub passed: bool,
    pub details: SuiteDetails,
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let seed = derive_seed(seed, suite as u64);
    let (passed, details) = match suite {
        Suite::Bound => {
            let reports = bound_suite(seed)?;
            let ok = reports
                .iter()
                .all(|r| r.monotone && r.all_under_bound() && r.slope_within_window());
            (ok, SuiteDetails::Bound(reports))
        }
        Suite::Gram => {
            let report = gram_suite(seed)?;
            (report.passed(), SuiteDetails::Gram(report))
        }
        Suite::Dirichlet => {
            let reports = dirichlet_suite(seed)?;
            let ok = reports.iter().all(|r| r.within(3.0));
            (ok, SuiteDetails::Dirichlet(reports))
        }
        Suite::Qp => {
            let report = qp_suite(seed)?;
            (report.passed(), SuiteDetails::Qp(report))
        }
    };
    Ok(SuiteReport {
        suite: suite.name(),
        passed,
        details,
    })
}

pub const BOUND_ALPHAS: [f64; 3] = [0.5, 1.0, 2.0];
pub const BOUND_DRAWS: usize = 2000;
pub const BOUND_T_MAX: usize = 15;

/// Base measure and kernel used by the truncation-bound suite.
pub fn bound_setup() -> (BaseMeasure, KernelConfig) {
    (
        BaseMeasure::isotropic(1, 0.0, 1.0, 1.0).expect("valid base measure"),
        KernelConfig::new(1.0).expect("valid bandwidth"),
    )
}

/// Smallest level `>= min` whose expected tail mass is below `target`.
pub fn proxy_truncation(alpha: f64, target: f64, min: usize) -> Result<usize> {
    let mut t = min.max(1);
    while expected_tail_mass(alpha, t)? >= target {
        t += 1;
    }
    Ok(t)
}

pub fn bound_suite(seed: u64) -> Result<Vec<DecayReport>> {
    let (base, kernel) = bound_setup();
    let t_values: Vec<usize> = (1..=BOUND_T_MAX).collect();
    BOUND_ALPHAS
        .iter()
        .enumerate()
        .map(|(i, &alpha)| {
            let t_ref = proxy_truncation(alpha, 1e-10, 4 * BOUND_T_MAX)?;
            truncation_decay_check(
                alpha,
                &base,
                &kernel,
                &t_values,
                t_ref,
                BOUND_DRAWS,
                derive_seed(seed, i as u64),
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GramCase {
    pub kind: &'static str,
    pub dim: usize,
    pub closed_form: f64,
    pub monte_carlo: f64,
    pub std_error: f64,
}

impl GramCase {
    pub fn z_score(&self) -> f64 {
        (self.closed_form - self.monte_carlo) / self.std_error
    }

    pub fn within(&self, k: f64) -> bool {
        (self.closed_form - self.monte_carlo).abs() <= k * self.std_error
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GramReport {
    pub reference_value: f64,
    pub reference_error: f64,
    pub cases: Vec<GramCase>,
}

impl GramReport {
    pub fn passed(&self) -> bool {
        self.reference_error <= 1e-12 && self.cases.iter().all(|c| c.within(3.0))
    }
}

pub const GRAM_PAIRS: usize = 24;
pub const GRAM_MC_SAMPLES: usize = 1_000_000;

pub fn random_component(rng: &mut DpmeRng, dim: usize) -> GaussianComponent {
    let mean = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let var = (0..dim).map(|_| rng.gen_range(0.2..2.0)).collect();
    GaussianComponent::new(mean, var).expect("positive variances")
}

pub fn gram_suite(seed: u64) -> Result<GramReport> {
    let f = GaussianComponent::new(vec![0.0], vec![1.0])?;
    let reference = component_inner(&f, &f, &KernelConfig::new(1.0)?)?;
    let reference_error = (reference - (1.0f64 / 3.0).sqrt()).abs();

    let mut rng = rng_from_seed(seed);
    let mut cases = Vec::with_capacity(2 * GRAM_PAIRS);
    for i in 0..GRAM_PAIRS {
        let dim = [1, 2, 5][i % 3];
        let kernel = KernelConfig::new(rng.gen_range(0.5..3.0) * dim as f64)?;
        let f = random_component(&mut rng, dim);
        let g = random_component(&mut rng, dim);
        let (mc, se) = mc_component_inner(&f, &g, &kernel, GRAM_MC_SAMPLES, rng.gen())?;
        cases.push(GramCase {
            kind: "component_inner",
            dim,
            closed_form: component_inner(&f, &g, &kernel)?,
            monte_carlo: mc,
            std_error: se,
        });
        let points: Vec<f64> = (0..20 * dim).map(|_| rng.sample(StandardNormal)).collect();
        let data = Dataset::new(points, 20, dim)?;
        let (mc, se) = mc_component_data_inner(&f, &data, &kernel, GRAM_MC_SAMPLES, rng.gen())?;
        cases.push(GramCase {
            kind: "component_data_inner",
            dim,
            closed_form: component_data_inner(&f, &data, &kernel)?,
            monte_carlo: mc,
            std_error: se,
        });
    }
    Ok(GramReport {
        reference_value: reference,
        reference_error,
        cases,
    })
}

pub const DIRICHLET_ALPHAS: [f64; 2] = [1.0, 10.0];
pub const DIRICHLET_DRAWS: usize = 10_000;
/// Interior cut points of the three-cell partition (base measure `N(0, 1)`).
pub const DIRICHLET_CUTS: [f64; 2] = [-0.5, 0.7];

pub fn dirichlet_suite(seed: u64) -> Result<Vec<DirichletMarginalReport>> {
    let base = BaseMeasure::isotropic(1, 0.0, 1.0, 1.0)?;
    let partition = partition_from_cuts(&DIRICHLET_CUTS);
    DIRICHLET_ALPHAS
        .iter()
        .enumerate()
        .map(|(i, &alpha)| {
            let t_proxy = proxy_truncation(alpha, 1e-8, 1)?;
            dirichlet_marginal_check(
                alpha,
                &base,
                &partition,
                DIRICHLET_DRAWS,
                t_proxy,
                derive_seed(seed, i as u64),
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QpCase {
    pub solver_objective: f64,
    pub grid_objective: f64,
    pub kkt_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QpReport {
    pub cases: Vec<QpCase>,
    /// Max-norm distance from `[1, 0]` on `Q = I`, `r = [1, 0]`.
    pub analytic_error: f64,
}

impl QpReport {
    pub fn passed(&self) -> bool {
        self.analytic_error <= 1e-9
            && self.cases.iter().all(|c| {
                c.solver_objective <= c.grid_objective + 1e-4
                    && (!c.converged || c.kkt_residual <= 1e-8)
            })
    }
}

pub const QP_INSTANCES: usize = 50;
pub const QP_GRID_STEP: f64 = 1e-3;

/// Random `T x T` PSD problem `Q = A'A / T` with standard normal `A` and `r`.
pub fn random_psd_problem(rng: &mut DpmeRng, t: usize) -> Result<QPProblem> {
    let a = DMatrix::from_fn(t, t, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut q = a.transpose() * &a / t as f64;
    // exact symmetry
    q = (&q + q.transpose()) * 0.5;
    let r = DVector::from_fn(t, |_, _| rng.sample::<f64, _>(StandardNormal));
    QPProblem::new(q, r, 0.0)
}

pub fn qp_suite(seed: u64) -> Result<QpReport> {
    let mut rng = rng_from_seed(seed);
    let mut cases = Vec::with_capacity(QP_INSTANCES);
    for i in 0..QP_INSTANCES {
        let problem = random_psd_problem(&mut rng, 3)?;
        let sol = solve(&problem, DEFAULT_TOL, DEFAULT_MAX_ITER, i as u64)?;
        let grid = brute_force_solve(&problem, QP_GRID_STEP)?;
        cases.push(QpCase {
            solver_objective: sol.objective,
            grid_objective: grid.objective,
            kkt_residual: sol.kkt_residual,
            converged: sol.converged,
        });
    }
    let analytic = QPProblem::new(
        DMatrix::identity(2, 2),
        DVector::from_column_slice(&[1.0, 0.0]),
        0.0,
    )?;
    let sol = solve(&analytic, DEFAULT_TOL, DEFAULT_MAX_ITER, 0)?;
    let analytic_error = (sol.pi[0] - 1.0).abs().max(sol.pi[1].abs());
    Ok(QpReport {
        cases,
        analytic_error,
    })
}

pub fn unknown_suite(name: &str) -> DpmeError {
    DpmeError::domain(format!(
        "unknown suite '{name}' (expected bound, gram, dirichlet, qp or all)"
    ))
}
