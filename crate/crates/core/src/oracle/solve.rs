use crate::error::{Error, Result};

use super::dykstra::{dykstra_warm, problem_sets, DYKSTRA_MAX_CYCLES, DYKSTRA_TOL};
use super::problem::DiscreteProblem;

/// Iteration budget of the projected gradient method.
pub const ORACLE_MAX_ITER: usize = 20_000;

/// Outcome of [`oracle_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub powers: Vec<f64>,
    /// Objective in bits.
    pub objective: f64,
    pub iterations: usize,
    /// Final projected-gradient norm.
    pub pg_norm: f64,
}

/// Maximizes the discrete objective by spectral projected gradient ascent
/// with Armijo backtracking along the projected direction. Stops once the
/// projected step of the cell-normalized gradient is below `tol`.
pub fn oracle_solve(problem: &DiscreteProblem, tol: f64) -> Result<OracleSolution> {
    let n = problem.cells();
    let h = problem.steps.iter().sum::<f64>() / n as f64;
    // Gradient per unit cell length keeps step sizes independent of `n`.
    let grad = |p: &[f64]| -> Vec<f64> { problem.gradient(p).into_iter().map(|g| g / h).collect() };

    let sets = problem_sets(problem);
    // Separate warm starts for the step and the stationarity measure.
    let mut warm_step = vec![vec![0.0; n]; sets.len()];
    let mut warm_pg = warm_step.clone();
    let project = |y: &[f64], warm: &mut Vec<Vec<f64>>| {
        dykstra_warm(y, &sets, warm, DYKSTRA_TOL, DYKSTRA_MAX_CYCLES)
    };
    let mut x = vec![0.0; n];
    let mut g = grad(&x);
    let mut f = problem.objective(&x);
    let mut alpha = 1.0;
    for it in 0..ORACLE_MAX_ITER {
        let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + alpha * b).collect();
        let proj = project(&trial, &mut warm_step)?;
        let dir: Vec<f64> = proj.iter().zip(&x).map(|(a, b)| a - b).collect();

        let unit: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + b).collect();
        let pg = project(&unit, &mut warm_pg)?
            .iter()
            .zip(&x)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if pg <= tol {
            return Ok(finish(problem, x, it, pg));
        }

        let slope: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>() * h;
        let mut t = 1.0;
        let (x_new, f_new) = loop {
            let cand: Vec<f64> = x
                .iter()
                .zip(&dir)
                .map(|(a, d)| (a + t * d).max(0.0))
                .collect();
            let fc = problem.objective(&cand);
            if fc >= f + 1e-4 * t * slope || t < 1e-12 {
                break (cand, fc);
            }
            t *= 0.5;
        };
        let g_new = grad(&x_new);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        let sy: f64 = s
            .iter()
            .zip(g_new.iter().zip(&g))
            .map(|(s, (a, b))| s * (a - b))
            .sum();
        alpha = if sy < 0.0 {
            (ss / -sy).clamp(1e-8, 1e8)
        } else {
            1e3
        };
        x = x_new;
        g = g_new;
        f = f_new;
        if ss == 0.0 {
            return Ok(finish(problem, x, it, pg));
        }
    }
    Err(Error::MaxIterations {
        iterations: ORACLE_MAX_ITER,
        context: "oracle projected gradient".into(),
    })
}

/// Scales the iterate into exact feasibility and evaluates it.
fn finish(
    problem: &DiscreteProblem,
    mut x: Vec<f64>,
    iterations: usize,
    pg_norm: f64,
) -> OracleSolution {
    let ratio = problem.worst_ratio(&x);
    if ratio > 1.0 {
        x.iter_mut().for_each(|v| *v /= ratio);
    }
    let objective = problem.objective(&x);
    OracleSolution {
        powers: x,
        objective,
        iterations,
        pg_norm,
    }
}
