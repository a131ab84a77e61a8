//! Solve a small simplex-constrained quadratic program and compare with a
//! lattice search.

use dpme::qp::solve_traced;
use dpme::{brute_force_solve, project_simplex, QPProblem};
use nalgebra::{DMatrix, DVector};

fn main() -> dpme::Result<()> {
    println!("projection of [0.8, 0.6, -0.2] = {:?}", project_simplex(&[0.8, 0.6, -0.2])?);

    let s = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, 0.3, 0.1, 0.3, 1.5]);
    let r = DVector::from_column_slice(&[0.9, 0.8, 0.2]);
    let problem = QPProblem::new(s, r, 1e-6)?;

    let (sol, trace) = solve_traced(&problem, 1e-10, 10_000, 0)?;
    println!(
        "solver: pi = {:.6?}, objective {:.8}, kkt {:.1e}, {} iterations, converged {}",
        sol.pi, sol.objective, sol.kkt_residual, sol.iterations, sol.converged
    );
    println!("objective trace: first {:.6}, last {:.6}", trace[0], trace[trace.len() - 1]);

    let grid = brute_force_solve(&problem, 1e-3)?;
    println!("lattice: pi = {:.3?}, objective {:.8}", grid.pi, grid.objective);
    Ok(())
}
