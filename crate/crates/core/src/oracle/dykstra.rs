use crate::error::{Error, Result};

use super::problem::{DiscreteProblem, PrefixRows};

/// Movement per cycle below which Dykstra's iteration stops.
pub const DYKSTRA_TOL: f64 = 1e-10;
/// Cycle budget of Dykstra's iteration.
pub const DYKSTRA_MAX_CYCLES: usize = 200_000;

/// Closed convex set with an exact Euclidean projection.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexSet {
    /// `{x : a·x ≤ b}`.
    HalfSpace { a: Vec<f64>, b: f64 },
    /// `{x : x ≥ 0}`.
    NonNegBox,
    /// A nested family of prefix rows.
    NestedPrefix(PrefixRows),
}

impl ConvexSet {
    pub fn project(&self, x: &mut [f64]) {
        match self {
            ConvexSet::HalfSpace { a, b } => {
                let ax: f64 = a.iter().zip(x.iter()).map(|(u, v)| u * v).sum();
                let aa: f64 = a.iter().map(|u| u * u).sum();
                if ax > *b && aa > 0.0 {
                    let s = (ax - b) / aa;
                    x.iter_mut().zip(a).for_each(|(v, u)| *v -= s * u);
                }
            }
            ConvexSet::NonNegBox => x.iter_mut().for_each(|v| *v = v.max(0.0)),
            ConvexSet::NestedPrefix(rows) => project_prefix(rows, x),
        }
    }
}

/// Exact projection onto `{Σ_{i ≤ k} w_i x_i ≤ cap_k}`.
///
/// The optimal correction is `x_i −= w_i N_i` with `N` nonincreasing and
/// nonnegative. Its cumulative `Σ w_i² N_i`, seen as a function of
/// `Ω_k = Σ_{i ≤ k} w_i²`, is the least concave majorant of `(0, 0)` and the
/// excess points `(Ω_k, Σ_{i ≤ k} w_i x_i − cap_k)`, flattened once it peaks.
fn project_prefix(rows: &PrefixRows, x: &mut [f64]) {
    let w = &rows.weights;
    let mut pts: Vec<(usize, f64, f64)> = Vec::with_capacity(rows.ends.len() + 1);
    pts.push((usize::MAX, 0.0, 0.0));
    let (mut omega, mut acc, mut i) = (0.0, 0.0, 0);
    let mut any = false;
    for (&end, &cap) in rows.ends.iter().zip(&rows.caps) {
        while i <= end {
            omega += w[i] * w[i];
            acc += w[i] * x[i];
            i += 1;
        }
        let excess = acc - cap;
        any |= excess > 0.0;
        pts.push((end, omega, excess));
    }
    if !any {
        return;
    }

    // Upper hull by a monotone chain over increasing Ω.
    let mut hull: Vec<(usize, f64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (a.1 - o.1) * (p.2 - o.2) - (a.2 - o.2) * (p.1 - o.1);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }

    let mut start = 0;
    for seg in hull.windows(2) {
        let (_, o0, g0) = seg[0];
        let (end, o1, g1) = seg[1];
        let slope = if o1 > o0 {
            ((g1 - g0) / (o1 - o0)).max(0.0)
        } else {
            0.0
        };
        if slope <= 0.0 {
            break;
        }
        for j in start..=end {
            x[j] -= w[j] * slope;
        }
        start = end + 1;
    }
}

/// Dykstra's alternating projections onto the intersection of `sets`.
pub fn dykstra(point: &[f64], sets: &[ConvexSet], tol: f64, max_cycles: usize) -> Result<Vec<f64>> {
    let mut incr = vec![vec![0.0; point.len()]; sets.len()];
    dykstra_warm(point, sets, &mut incr, tol, max_cycles)
}

/// [`dykstra`] started from the correction terms of an earlier call.
///
/// Dykstra's method is block coordinate descent on the dual of the
/// projection problem, so any earlier corrections are a valid start and the
/// limit is unchanged.
pub(crate) fn dykstra_warm(
    point: &[f64],
    sets: &[ConvexSet],
    incr: &mut [Vec<f64>],
    tol: f64,
    max_cycles: usize,
) -> Result<Vec<f64>> {
    if point.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams(
            "projection point is not finite".into(),
        ));
    }
    let n = point.len();
    let mut x = point.to_vec();
    for p in incr.iter() {
        x.iter_mut().zip(p).for_each(|(v, q)| *v -= q);
    }
    let mut y = vec![0.0; n];
    let mut before = vec![0.0; n];
    for _ in 0..max_cycles {
        let mut moved: f64 = 0.0;
        for (set, p) in sets.iter().zip(incr.iter_mut()) {
            for j in 0..n {
                y[j] = x[j] + p[j];
            }
            before.copy_from_slice(&y);
            set.project(&mut y);
            for j in 0..n {
                p[j] = before[j] - y[j];
                moved = moved.max((y[j] - x[j]).abs());
                x[j] = y[j];
            }
        }
        if moved < tol {
            return Ok(x);
        }
    }
    Err(Error::MaxIterations {
        iterations: max_cycles,
        context: "Dykstra projection".into(),
    })
}

/// Projection of `point` onto the feasible set of `problem`.
pub fn dykstra_project(point: &[f64], problem: &DiscreteProblem) -> Result<Vec<f64>> {
    dykstra(
        point,
        &problem_sets(problem),
        DYKSTRA_TOL,
        DYKSTRA_MAX_CYCLES,
    )
}

pub(crate) fn problem_sets(problem: &DiscreteProblem) -> [ConvexSet; 3] {
    [
        ConvexSet::NestedPrefix(problem.energy.clone()),
        ConvexSet::NestedPrefix(problem.temperature.clone()),
        ConvexSet::NonNegBox,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArrivalProfile, ThermalParams};
    use crate::oracle::build_discrete;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_problem(n: usize, e: f64) -> DiscreteProblem {
        let p = ThermalParams::new(0.1, 0.3, 37.0, 37.6).unwrap();
        let prof = ArrivalProfile::from_pairs(3.0, &[(0.0, e), (1.5, 2.0)]).unwrap();
        build_discrete(&p, &prof, n).unwrap()
    }

    /// Exhaustive active-set projection onto `{A x ≤ b}`.
    fn brute_force(y: &[f64], rows: &[(Vec<f64>, f64)]) -> Vec<f64> {
        let m = rows.len();
        let n = y.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 0u32..(1 << m) {
            let act: Vec<usize> = (0..m).filter(|&r| mask & (1 << r) != 0).collect();
            let x = if act.is_empty() {
                y.to_vec()
            } else {
                let a = DMatrix::from_fn(act.len(), n, |r, c| rows[act[r]].0[c]);
                let resid = DVector::from_iterator(
                    act.len(),
                    act.iter().map(|&r| {
                        rows[r].0.iter().zip(y).map(|(u, v)| u * v).sum::<f64>() - rows[r].1
                    }),
                );
                let gram = &a * a.transpose();
                let Some(nu) = gram.lu().solve(&resid) else {
                    continue;
                };
                if nu.iter().any(|&v| v < -1e-12) {
                    continue;
                }
                let corr = a.transpose() * nu;
                y.iter().zip(corr.iter()).map(|(v, c)| v - c).collect()
            };
            let feasible = rows
                .iter()
                .all(|(a, b)| a.iter().zip(&x).map(|(u, v)| u * v).sum::<f64>() <= b + 1e-9);
            if feasible {
                let dist: f64 = x.iter().zip(y).map(|(u, v)| (u - v).powi(2)).sum();
                if best.as_ref().is_none_or(|(d, _)| dist < *d) {
                    best = Some((dist, x));
                }
            }
        }
        best.unwrap().1
    }

    fn all_rows(prob: &DiscreteProblem) -> Vec<(Vec<f64>, f64)> {
        let n = prob.cells();
        let mut rows = prob.energy.dense();
        rows.extend(prob.temperature.dense());
        for i in 0..n {
            let mut a = vec![0.0; n];
            a[i] = -1.0;
            rows.push((a, 0.0));
        }
        rows
    }

    #[test]
    fn feasible_point_is_fixed() {
        let prob = small_problem(16, 3.0);
        let x = vec![0.1; prob.cells()];
        let y = dykstra_project(&x, &prob).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn single_half_space() {
        let set = ConvexSet::HalfSpace {
            a: vec![1.0, 2.0],
            b: 2.0,
        };
        let x = dykstra(&[3.0, 4.0], &[set], 1e-12, 10).unwrap();
        // Move by (a·x − b)/|a|² · a = 9/5 · (1, 2).
        assert!((x[0] - 1.2).abs() < 1e-12 && (x[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn prefix_projection_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let prob = small_problem(6, 3.0);
        let rows = prob.temperature.dense();
        for _ in 0..50 {
            let y: Vec<f64> = (0..prob.cells())
                .map(|_| rng.gen_range(-3.0..12.0))
                .collect();
            let mut x = y.clone();
            project_prefix(&prob.temperature, &mut x);
            let exact = brute_force(&y, &rows);
            for (u, v) in x.iter().zip(&exact) {
                assert!((u - v).abs() < 1e-8, "{x:?} vs {exact:?}");
            }
        }
    }

    #[test]
    fn random_points_match_active_set_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..30 {
            let prob = small_problem(6, 1.0 + trial as f64 * 0.1);
            let rows = all_rows(&prob);
            let y: Vec<f64> = (0..prob.cells())
                .map(|_| rng.gen_range(-2.0..10.0))
                .collect();
            let x = dykstra_project(&y, &prob).unwrap();
            assert!(
                prob.worst_violation(&x) <= 1e-8,
                "{}",
                prob.worst_violation(&x)
            );
            let exact = brute_force(&y, &rows);
            let d = |z: &[f64]| {
                z.iter()
                    .zip(&y)
                    .map(|(u, v)| (u - v).powi(2))
                    .sum::<f64>()
                    .sqrt()
            };
            assert!(d(&x) <= d(&exact) + 1e-6, "{} vs {}", d(&x), d(&exact));
        }
    }
}
