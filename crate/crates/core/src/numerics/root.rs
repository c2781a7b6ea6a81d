use crate::error::{Error, Result};

/// Default absolute tolerance on a scalar unknown.
pub const DEFAULT_ROOT_TOL: f64 = 1e-10;
/// Default tolerance of the outermost unknown in a nested solve.
pub const DEFAULT_OUTER_TOL: f64 = 1e-8;

/// Scalar root problem with a sign-changing bracket.
#[derive(Debug, Clone)]
pub struct BracketedRootProblem<F> {
    pub f: F,
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl<F: Fn(f64) -> f64> BracketedRootProblem<F> {
    pub fn new(f: F, lo: f64, hi: f64) -> Self {
        Self {
            f,
            lo,
            hi,
            tol: DEFAULT_ROOT_TOL,
            max_iter: 400,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

/// Plain bisection. Returns the midpoint of the final bracket, or an exact
/// root if one is hit on the way.
pub fn bisect<F: Fn(f64) -> f64>(problem: &BracketedRootProblem<F>) -> Result<f64> {
    let f = &problem.f;
    let (mut lo, mut hi) = (problem.lo, problem.hi);
    let (f_lo, f_hi) = (f(lo), f(hi));
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if !(f_lo.is_finite() && f_hi.is_finite()) || f_lo.signum() == f_hi.signum() {
        return Err(Error::InvalidBracket { lo, hi, f_lo, f_hi });
    }
    let lo_negative = f_lo < 0.0;
    for _ in 0..problem.max_iter {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= problem.tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if hi - lo <= problem.tol {
        Ok(0.5 * (lo + hi))
    } else {
        Err(Error::MaxIterations {
            iterations: problem.max_iter,
            context: format!(
                "bisection bracket [{lo}, {hi}] still wider than {}",
                problem.tol
            ),
        })
    }
}

/// Bisection with default iteration budget.
pub fn bisect_fn(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    bisect(&BracketedRootProblem::new(f, lo, hi).with_tol(tol))
}

/// A system solved by nested one-dimensional bisections. Level 0 is the
/// outermost unknown; for a candidate value at level `k` all deeper levels are
/// solved first, then `residual(k, x)` is evaluated on the full vector.
pub trait MonotoneSystem {
    fn dim(&self) -> usize;

    /// Bracket for the unknown at `level` given the outer unknowns `outer`.
    fn bracket(&self, level: usize, outer: &[f64]) -> (f64, f64);

    /// Residual of `level` at the full unknown vector `x`.
    fn residual(&self, level: usize, x: &[f64]) -> f64;
}

/// Tolerances and budgets of a nested solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedSolveConfig {
    /// Absolute tolerance on each unknown, outermost first; missing entries
    /// fall back to [`DEFAULT_ROOT_TOL`].
    pub tolerances: Vec<f64>,
    pub max_iter: usize,
}

impl Default for NestedSolveConfig {
    fn default() -> Self {
        Self {
            tolerances: vec![DEFAULT_OUTER_TOL],
            max_iter: 400,
        }
    }
}

impl NestedSolveConfig {
    fn tol(&self, level: usize) -> f64 {
        self.tolerances
            .get(level)
            .copied()
            .unwrap_or(DEFAULT_ROOT_TOL)
    }
}

/// Solves a [`MonotoneSystem`] by nested bisection. A bracket whose endpoint
/// residuals share a sign is reported as [`Error::BracketFailure`].
pub fn solve_monotone_system<S: MonotoneSystem + ?Sized>(
    system: &S,
    config: &NestedSolveConfig,
) -> Result<Vec<f64>> {
    let mut prefix = Vec::with_capacity(system.dim());
    solve_level(system, config, 0, &mut prefix)
}

fn solve_level<S: MonotoneSystem + ?Sized>(
    system: &S,
    config: &NestedSolveConfig,
    level: usize,
    prefix: &mut Vec<f64>,
) -> Result<Vec<f64>> {
    let (lo, hi) = system.bracket(level, prefix);
    let eval = |v: f64, prefix: &mut Vec<f64>| -> Result<(f64, Vec<f64>)> {
        prefix.push(v);
        let full = if level + 1 == system.dim() {
            Ok(prefix.clone())
        } else {
            solve_level(system, config, level + 1, prefix)
        };
        prefix.pop();
        let full = full?;
        Ok((system.residual(level, &full), full))
    };
    let (f_lo, x_lo) = eval(lo, prefix)?;
    if f_lo == 0.0 {
        return Ok(x_lo);
    }
    let (f_hi, x_hi) = eval(hi, prefix)?;
    if f_hi == 0.0 {
        return Ok(x_hi);
    }
    if !(f_lo.is_finite() && f_hi.is_finite()) || f_lo.signum() == f_hi.signum() {
        return Err(Error::BracketFailure {
            level,
            detail: format!(
                "residual has the same sign at both ends of [{lo}, {hi}] ({f_lo}, {f_hi})"
            ),
        });
    }
    let lo_negative = f_lo < 0.0;
    let (mut a, mut b) = (lo, hi);
    let mut best = if f_lo.abs() < f_hi.abs() { x_lo } else { x_hi };
    let tol = config.tol(level);
    for _ in 0..config.max_iter {
        let mid = 0.5 * (a + b);
        if b - a <= tol || mid <= a || mid >= b {
            let (_, x) = eval(mid, prefix)?;
            return Ok(x);
        }
        let (fm, x) = eval(mid, prefix)?;
        best = x;
        if fm == 0.0 {
            return Ok(best);
        }
        if (fm < 0.0) == lo_negative {
            a = mid;
        } else {
            b = mid;
        }
    }
    if b - a <= tol {
        Ok(best)
    } else {
        Err(Error::MaxIterations {
            iterations: config.max_iter,
            context: format!("nested bisection at level {level}"),
        })
    }
}
