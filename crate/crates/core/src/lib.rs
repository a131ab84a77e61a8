//! Kernel mean embeddings of truncated Dirichlet Process mixtures.
//!
//! A Dirichlet Process mixture drawn by stick-breaking and truncated after
//! `T` components embeds into the RKHS of a Gaussian kernel as
//! `sum_i pi_i mu[f_i]`. Fitting the weights to data means minimising the
//! squared MMD between that embedding and the empirical embedding of the
//! data, which is a convex quadratic program over the probability simplex.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`stick_breaking`] | prior draws, tail mass, truncation level choice, Dirichlet marginal check |
//! | [`embedding`] | kernel, closed-form Gram statistics, squared MMD, truncation decay check |
//! | [`qp`] | simplex projection, accelerated projected gradient solver, KKT certificate |
//! | [`inference`] | atom selection, end-to-end fit, latent assignments |
//! | [`validation`] | the statistical self-checks run by `dpme validate` |
//! | [`cli`] | the `dpme` command line |

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod embedding;
pub mod error;
pub mod format;
pub mod inference;
pub mod kmeans;
pub mod qp;
pub mod rng;
pub mod stick_breaking;
pub mod validation;

pub use embedding::{
    assemble_gram, component_data_inner, component_inner, empirical_self_term, kernel_eval,
    mc_component_inner, median_heuristic_bandwidth, mmd_squared, truncation_decay_check, Dataset,
    DecayReport, EmbeddingGram, GaussianComponent, KernelConfig, TruncatedDPMM,
};
pub use error::{DpmeError, Result};
pub use inference::{
    assign_latents, effective_components, fit, fit_with_atoms, init_atoms, AtomStrategy,
    Bandwidth, FitConfig, FitResult, Latents, Regularization, Truncation,
};
pub use qp::{brute_force_solve, kkt_residual, project_simplex, solve, QPProblem, QPSolution};
pub use stick_breaking::{
    choose_truncation, dirichlet_marginal_check, expected_tail_mass, sample_betas, sample_draw,
    weights_from_betas, BaseMeasure, Interval, StickBreakingDraw,
};
