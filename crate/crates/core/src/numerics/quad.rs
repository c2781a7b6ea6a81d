use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;

/// Adaptive Simpson quadrature with absolute error target `tol`.
pub fn quad_adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    refine(&f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn refine(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 || m <= a || m >= b {
        return Err(Error::SubdivisionLimit { a, b });
    }
    Ok(refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}

/// Composite Simpson rule on `n` (rounded up to even) panels.
pub fn simpson_composite(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n.max(2).div_ceil(2) * 2;
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + k as f64 * h);
    }
    sum * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_and_exponential() {
        assert!((quad_adaptive(|_| 1.0, 0.0, 1.0, 1e-12).unwrap() - 1.0).abs() < 1e-14);
        let e = quad_adaptive(f64::exp, 0.0, 1.0, 1e-12).unwrap();
        assert!((e - (std::f64::consts::E - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn rate_of_recip_policy_matches_riemann() {
        let f = |t: f64| 0.5 * (1.0 / (0.09541 * (0.3 * t).exp())).log2();
        let q = quad_adaptive(f, 0.0, 2.0, 1e-12).unwrap();
        let n = 1_000_000;
        let h = 2.0 / n as f64;
        let riemann: f64 = (0..n).map(|k| f((k as f64 + 0.5) * h)).sum::<f64>() * h;
        assert!((q - riemann).abs() < 1e-6);
    }

    #[test]
    fn subdivision_limit() {
        let bad = quad_adaptive(|t: f64| if t < 0.3 { 0.0 } else { 1e12 }, 0.0, 1.0, 1e-14);
        assert!(matches!(bad, Err(Error::SubdivisionLimit { .. })));
    }

    #[test]
    fn composite_simpson_is_exact_for_cubics() {
        let v = simpson_composite(|t| t * t * t, 0.0, 2.0, 3);
        assert!((v - 4.0).abs() < 1e-12);
    }
}
