//! Simplex-constrained convex quadratic programs
//!
//! ```text
//! minimize   1/2 pi' Q pi - r' pi
//! subject to sum(pi) = 1, pi >= 0
//! ```
//!
//! solved by accelerated projected gradient with objective-based restarts.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::Serialize;

use crate::error::{DpmeError, Result};
use crate::rng::rng_from_seed;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 50_000;

const POWER_ITERATIONS: usize = 30;
const LIPSCHITZ_SAFETY: f64 = 1.01;
const SYMMETRY_TOL: f64 = 1e-12;
/// Slack on the accept test so that round-off near the optimum does not
/// trigger restarts.
const ACCEPT_SLACK: f64 = 1e-13;
const POLISH_SLACK: f64 = 1e-12;
const POLISH_EVERY: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct QPProblem {
    pub q: DMatrix<f64>,
    pub r: DVector<f64>,
    pub epsilon: f64,
}

impl QPProblem {
    /// Builds `Q = s + epsilon * I`.
    pub fn new(s: DMatrix<f64>, r: DVector<f64>, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(DpmeError::domain(format!(
                "epsilon must be nonnegative, got {epsilon}"
            )));
        }
        let t = r.len();
        if t == 0 {
            return Err(DpmeError::domain("problem needs at least one variable"));
        }
        if s.shape() != (t, t) {
            return Err(DpmeError::DimensionMismatch {
                expected: t,
                got: s.nrows(),
            });
        }
        let q = s + DMatrix::identity(t, t) * epsilon;
        let problem = Self { q, r, epsilon };
        problem.validate()?;
        Ok(problem)
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn objective(&self, pi: &[f64]) -> f64 {
        let p = DVector::from_column_slice(pi);
        0.5 * p.dot(&(&self.q * &p)) - self.r.dot(&p)
    }

    fn validate(&self) -> Result<()> {
        if self.q.iter().chain(self.r.iter()).any(|x| x.is_nan()) {
            return Err(DpmeError::domain("NaN in problem data"));
        }
        let t = self.len();
        for i in 0..t {
            for j in (i + 1)..t {
                if (self.q[(i, j)] - self.q[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(DpmeError::domain(format!(
                        "Q is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QPSolution {
    pub pi: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn smallest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Euclidean projection onto the probability simplex (sort and threshold).
pub fn project_simplex(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(DpmeError::domain("cannot project an empty vector"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(DpmeError::domain("non-finite entry in projection input"));
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let candidate = (1.0 - cumsum) / (j + 1) as f64;
        // ties resolve to the largest admissible rho
        if uj + candidate > 0.0 {
            tau = candidate;
        }
    }
    Ok(v.iter().map(|x| (x + tau).max(0.0)).collect())
}

/// Feasibility plus complementary slackness against `lambda = min_i g_i`
/// where `g = Q pi - r`. Zero exactly at the optimum.
pub fn kkt_residual(problem: &QPProblem, pi: &[f64]) -> Result<f64> {
    if pi.len() != problem.len() {
        return Err(DpmeError::DimensionMismatch {
            expected: problem.len(),
            got: pi.len(),
        });
    }
    let sum: f64 = pi.iter().sum();
    let min = pi.iter().copied().fold(f64::INFINITY, f64::min);
    if (sum - 1.0).abs() > 1e-8 || min < -1e-8 || pi.iter().any(|x| !x.is_finite()) {
        return Err(DpmeError::Infeasible(format!("sum = {sum}, min = {min}")));
    }
    let p = DVector::from_column_slice(pi);
    let g = &problem.q * &p - &problem.r;
    let lambda = g.iter().copied().fold(f64::INFINITY, f64::min);
    let slackness = pi
        .iter()
        .zip(g.iter())
        .map(|(p, gi)| p * (gi - lambda))
        .fold(0.0, f64::max);
    Ok((sum - 1.0).abs().max((-min).max(0.0)).max(slackness))
}

fn lipschitz_estimate(q: &DMatrix<f64>, seed: u64) -> f64 {
    let t = q.nrows();
    let mut rng = rng_from_seed(seed);
    let mut v = DVector::from_fn(t, |_, _| rng.gen::<f64>() + 0.5);
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let norm = v.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v /= norm;
        let w = q * &v;
        estimate = v.dot(&w);
        v = w;
    }
    estimate.max(0.0) * LIPSCHITZ_SAFETY
}

fn normalize(mut pi: Vec<f64>) -> Vec<f64> {
    pi.iter_mut().for_each(|x| *x = x.max(0.0));
    let sum: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|x| *x /= sum);
    pi
}

fn finish(problem: &QPProblem, pi: Vec<f64>, iterations: usize, tol: f64) -> Result<QPSolution> {
    let pi = normalize(pi);
    let kkt = kkt_residual(problem, &pi)?;
    Ok(QPSolution {
        objective: problem.objective(&pi),
        kkt_residual: kkt,
        iterations,
        converged: kkt <= tol,
        pi,
    })
}

/// Solves the problem from the uniform warm start.
pub fn solve(problem: &QPProblem, tol: f64, max_iter: usize, seed: u64) -> Result<QPSolution> {
    solve_traced(problem, tol, max_iter, seed).map(|(sol, _)| sol)
}

/// Like [`solve`], also returning the objective after every accepted step
/// (the warm start first).
pub fn solve_traced(
    problem: &QPProblem,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<(QPSolution, Vec<f64>)> {
    problem.validate()?;
    if !(tol > 0.0) {
        return Err(DpmeError::domain(format!("tol must be positive, got {tol}")));
    }
    let t = problem.len();
    let q = &problem.q;
    let r = &problem.r;
    let objective = |p: &DVector<f64>| 0.5 * p.dot(&(q * p)) - r.dot(p);
    let project = |p: DVector<f64>| project_simplex(p.as_slice()).map(DVector::from_vec);

    let mut x = DVector::from_element(t, 1.0 / t as f64);
    let mut fx = objective(&x);
    let mut trace = vec![fx];
    if t == 1 || kkt_residual(problem, x.as_slice())? <= tol {
        return Ok((finish(problem, x.as_slice().to_vec(), 0, tol)?, trace));
    }

    let r_scale = 1.0 + r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut lipschitz = lipschitz_estimate(q, seed).max(1e-6 * r_scale);
    let mut y = x.clone();
    let mut momentum: f64 = 1.0;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let step = 1.0 / lipschitz;
        let mut x_new = project(&y - (q * &y - r) * step)?;
        let mut f_new = objective(&x_new);
        if f_new > fx + ACCEPT_SLACK * fx.abs().max(1.0) {
            // restart from x with a plain projected-gradient step
            momentum = 1.0;
            x_new = project(&x - (q * &x - r) * step)?;
            f_new = objective(&x_new);
            if f_new > fx + ACCEPT_SLACK * fx.abs().max(1.0) {
                // step size too long for this Q; shrink and retry
                lipschitz *= 2.0;
                y = x.clone();
                continue;
            }
        }
        let momentum_new = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        y = &x_new + (&x_new - &x) * ((momentum - 1.0) / momentum_new);
        momentum = momentum_new;
        x = x_new;
        fx = f_new;
        trace.push(fx);
        let converged = kkt_residual(problem, x.as_slice())? <= tol;
        if converged || iterations % POLISH_EVERY == 0 {
            if let Some((p, f)) = polish(problem, x.as_slice(), fx)? {
                x = DVector::from_vec(p);
                fx = f;
                y = x.clone();
                momentum = 1.0;
                trace.push(fx);
            }
        }
        if converged || kkt_residual(problem, x.as_slice())? <= tol {
            break;
        }
    }
    if iterations == max_iter {
        if let Some((p, f)) = polish(problem, x.as_slice(), fx)? {
            x = DVector::from_vec(p);
            trace.push(f);
        }
    }
    Ok((finish(problem, x.as_slice().to_vec(), iterations, tol)?, trace))
}

/// Exact minimiser on the face spanned by the support of `pi`: solves the
/// equality-constrained KKT system, dropping coordinates that come out
/// negative. Returned only when it is feasible, does not raise the objective
/// and does not raise the KKT residual.
fn polish(problem: &QPProblem, pi: &[f64], objective: f64) -> Result<Option<(Vec<f64>, f64)>> {
    let mut support: Vec<usize> = (0..pi.len()).filter(|&i| pi[i] > 0.0).collect();
    let current_kkt = kkt_residual(problem, pi)?;
    while !support.is_empty() {
        let k = support.len();
        let mut kkt = DMatrix::zeros(k + 1, k + 1);
        let mut rhs = DVector::zeros(k + 1);
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                kkt[(a, b)] = problem.q[(i, j)];
            }
            kkt[(a, k)] = 1.0;
            kkt[(k, a)] = 1.0;
            rhs[a] = problem.r[i];
        }
        rhs[k] = 1.0;
        let Some(sol) = kkt.lu().solve(&rhs) else {
            return Ok(None);
        };
        if sol.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        let (worst, min) = (0..k).fold((0, f64::INFINITY), |acc, a| {
            if sol[a] < acc.1 {
                (a, sol[a])
            } else {
                acc
            }
        });
        if min < 0.0 {
            support.remove(worst);
            continue;
        }
        let mut candidate = vec![0.0; pi.len()];
        for (a, &i) in support.iter().enumerate() {
            candidate[i] = sol[a];
        }
        let candidate = normalize(candidate);
        let f = problem.objective(&candidate);
        let candidate_kkt = kkt_residual(problem, &candidate)?;
        if f <= objective + POLISH_SLACK * objective.abs().max(1.0) && candidate_kkt <= current_kkt {
            return Ok(Some((candidate, f)));
        }
        return Ok(None);
    }
    Ok(None)
}

/// Exhaustive search over the simplex lattice with spacing `grid_step`.
/// Usable for `T <= 4` only.
pub fn brute_force_solve(problem: &QPProblem, grid_step: f64) -> Result<QPSolution> {
    problem.validate()?;
    let t = problem.len();
    if t > 4 {
        return Err(DpmeError::domain(format!(
            "brute force supports T <= 4, got {t}"
        )));
    }
    if !(grid_step > 0.0 && grid_step <= 1e-2) {
        return Err(DpmeError::domain(format!(
            "grid step must lie in (0, 1e-2], got {grid_step}"
        )));
    }
    let n = (1.0 / grid_step).round() as usize;
    if ((n as f64) * grid_step - 1.0).abs() > 1e-9 {
        return Err(DpmeError::domain("1 / grid_step must be an integer"));
    }

    let mut best = (f64::INFINITY, vec![1.0 / t as f64; t]);
    let mut counts = vec![0usize; t];
    let mut point = vec![0.0; t];
    enumerate_compositions(n, 0, &mut counts, &mut |c| {
        for (p, &k) in point.iter_mut().zip(c) {
            *p = k as f64 / n as f64;
        }
        let f = problem.objective(&point);
        if f < best.0 {
            best = (f, point.clone());
        }
    });
    let pi = best.1;
    Ok(QPSolution {
        objective: problem.objective(&pi),
        kkt_residual: kkt_residual(problem, &pi)?,
        iterations: 0,
        converged: true,
        pi,
    })
}

fn enumerate_compositions(
    remaining: usize,
    idx: usize,
    counts: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    let last = counts.len() - 1;
    if idx == last {
        counts[last] = remaining;
        visit(counts);
        return;
    }
    for k in 0..=remaining {
        counts[idx] = k;
        enumerate_compositions(remaining - k, idx + 1, counts, visit);
    }
}
