//! Dual of the cell-exact problem, minimized by a log-barrier Newton method.
//!
//! With energy multipliers `μ_e` and temperature multipliers `λ_k`, write
//! `M_e = Σ_{e' ≥ e} μ_{e'}` and `Λ_i = Σ_{k ≥ i} λ_k`. Maximizing the
//! Lagrangian over each cell gives `P_i = [1/q_i − 1]^+` with
//! `q_i = M_{e(i)} + g_i Λ_i`, and the dual function
//! `G = Σ Δ_i φ(q_i) + Σ_e M_e E_e + Σ_k Λ_k (V_k − V_{k−1})`,
//! `φ(q) = q − 1 − ln q` for `q < 1` and 0 otherwise. `G` is minimized over
//! nonincreasing nonnegative `M`, `Λ` with a barrier on the increments.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::grid::Grid;
use crate::error::{Error, Result};
use crate::model::{ArrivalProfile, ThermalParams};

/// Multipliers of the discrete problem.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DualState {
    /// `μ_e ≥ 0`, one per epoch end.
    pub mu: Vec<f64>,
    /// `λ_k ≥ 0`, one per node after the start (the row at the end of cell `k`).
    pub lambda: Vec<f64>,
    /// Final barrier weight; the duality gap is at most this times the number of multipliers.
    pub barrier_weight: f64,
    pub iterations: usize,
    /// Best feasible primal objective seen up to each iteration (nats).
    pub best_objective_history: Vec<f64>,
}

impl DualState {
    /// `M_e` for every epoch.
    pub fn energy_levels(&self) -> Vec<f64> {
        let mut out = self.mu.clone();
        for e in (0..out.len().saturating_sub(1)).rev() {
            out[e] += out[e + 1];
        }
        out
    }

    /// `Λ_i` for every cell.
    pub fn temperature_levels(&self) -> Vec<f64> {
        let mut out = self.lambda.clone();
        for i in (0..out.len().saturating_sub(1)).rev() {
            out[i] += out[i + 1];
        }
        out
    }
}

/// Converged discrete solution.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    pub grid: Grid,
    pub powers: Vec<f64>,
    pub state: DualState,
    /// `Σ Δ_i ln(1 + P_i)` of the returned (feasible) powers.
    pub objective: f64,
    /// Dual function value, an upper bound on the discrete optimum.
    pub dual_objective: f64,
}

impl GridSolution {
    /// Throughput in bits.
    pub fn throughput(&self) -> f64 {
        self.objective / (2.0 * std::f64::consts::LN_2)
    }
}

/// Options of the barrier method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierConfig {
    /// Target bound on the duality gap, relative to `D`.
    pub gap: f64,
    pub max_newton: usize,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        Self {
            gap: 1e-11,
            max_newton: 5000,
        }
    }
}

fn phi(q: f64) -> f64 {
    if q < 1.0 {
        q - 1.0 - q.ln()
    } else {
        0.0
    }
}

/// Tridiagonal matrix `diag(c) + Σ_j h_j (e_j − e_{j+1})(e_j − e_{j+1})ᵀ`
/// (with `e_n = 0`), factorized as `L D Lᵀ`. Pivots are formed as series
/// combinations of positive terms, so huge barrier weights do not cancel.
struct Tridiag {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl Tridiag {
    fn factor(c: &[f64], h: &[f64]) -> Option<Self> {
        let n = c.len();
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n];
        let mut carry = 0.0;
        for j in 0..n {
            let rest = c[j] + carry;
            d[j] = rest + h[j];
            if !(d[j] > 0.0) || !d[j].is_finite() {
                return None;
            }
            if j + 1 < n {
                l[j + 1] = -h[j] / d[j];
                carry = if rest == 0.0 { 0.0 } else { h[j] * rest / d[j] };
            }
        }
        Some(Self { d, l })
    }

    fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        for j in 1..n {
            rhs[j] -= self.l[j] * rhs[j - 1];
        }
        for j in 0..n {
            rhs[j] /= self.d[j];
        }
        for j in (0..n - 1).rev() {
            rhs[j] -= self.l[j + 1] * rhs[j + 1];
        }
    }
}

/// The barrier problem restricted to cells and epochs that can carry power.
struct Barrier<'a> {
    grid: &'a Grid,
    /// First cell and epoch with energy available.
    i0: usize,
    e0: usize,
    /// Energy terms of the reduced epochs.
    energy: Vec<f64>,
    /// Increments `V_k − V_{k−1}` of the reduced temperature rows.
    cap_inc: Vec<f64>,
}

impl<'a> Barrier<'a> {
    fn new(grid: &'a Grid) -> Self {
        let e0 = grid
            .epoch_cum
            .iter()
            .position(|&c| c > 0.0)
            .unwrap_or(grid.epochs());
        let i0 = if e0 < grid.epochs() {
            grid.epoch_start[e0]
        } else {
            grid.cells()
        };
        let mut energy: Vec<f64> = grid.epoch_energy[e0..].to_vec();
        if let Some(first) = energy.first_mut() {
            *first = grid.epoch_cum[e0];
        }
        let cap_inc = (i0..grid.cells())
            .map(|k| {
                if k == i0 {
                    grid.cap[k]
                } else {
                    grid.cap[k] - grid.cap[k - 1]
                }
            })
            .collect();
        Self {
            grid,
            i0,
            e0,
            energy,
            cap_inc,
        }
    }

    fn n(&self) -> usize {
        self.grid.cells() - self.i0
    }

    fn m(&self) -> usize {
        self.grid.epochs() - self.e0
    }

    fn q(&self, lam: &[f64], mm: &[f64], j: usize) -> f64 {
        let i = self.i0 + j;
        mm[self.grid.epoch_of_cell[i] - self.e0] + self.grid.weight[i] * lam[j]
    }

    fn increments(v: &[f64]) -> impl Iterator<Item = f64> + '_ {
        (0..v.len()).map(move |j| v[j] - v.get(j + 1).copied().unwrap_or(0.0))
    }

    fn dual_value(&self, lam: &[f64], mm: &[f64]) -> f64 {
        let g = self.grid;
        let mut val = 0.0;
        for j in 0..self.n() {
            val += g.dt[self.i0 + j] * phi(self.q(lam, mm, j)) + lam[j] * self.cap_inc[j];
        }
        val + mm.iter().zip(&self.energy).map(|(m, e)| m * e).sum::<f64>()
    }

    /// Barrier objective, `None` outside the interior.
    fn value(&self, lam: &[f64], mm: &[f64], tau: f64) -> Option<f64> {
        let mut logs = 0.0;
        for d in Self::increments(lam).chain(Self::increments(mm)) {
            if !(d > 0.0) {
                return None;
            }
            logs += d.ln();
        }
        Some(self.dual_value(lam, mm) - tau * logs)
    }

    fn powers(&self, lam: &[f64], mm: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.grid.cells()];
        for j in 0..self.n() {
            p[self.i0 + j] = (1.0 / self.q(lam, mm, j) - 1.0).max(0.0);
        }
        p
    }

    /// Newton direction and the gradient's inner product with it.
    fn newton_direction(
        &self,
        lam: &[f64],
        mm: &[f64],
        tau: f64,
    ) -> Option<(Vec<f64>, Vec<f64>, f64)> {
        let g = self.grid;
        let (n, m) = (self.n(), self.m());
        let mut grad_l = vec![0.0; n];
        let mut grad_m = self.energy.clone();
        let mut diag_a = vec![0.0; n];
        let mut bar_a = vec![0.0; n];
        let mut coup = vec![0.0; n];
        let mut mat_c = DMatrix::<f64>::zeros(m, m);

        for j in 0..n {
            let i = self.i0 + j;
            let q = self.q(lam, mm, j);
            let r = g.epoch_of_cell[i] - self.e0;
            let (p, curv) = if q < 1.0 {
                (1.0 / q - 1.0, 1.0 / (q * q))
            } else {
                (0.0, 0.0)
            };
            let (dt, w) = (g.dt[i], g.weight[i]);
            grad_l[j] += self.cap_inc[j] - dt * w * p;
            grad_m[r] -= dt * p;
            diag_a[j] += dt * w * w * curv;
            coup[j] = dt * w * curv;
            mat_c[(r, r)] += dt * curv;
        }
        for (j, d) in Self::increments(lam).enumerate() {
            bar_a[j] = tau / (d * d);
            grad_l[j] -= tau / d;
            if j + 1 < n {
                grad_l[j + 1] += tau / d;
            }
        }
        let mut bar_m = vec![0.0; m];
        for (r, d) in Self::increments(mm).enumerate() {
            bar_m[r] = tau / (d * d);
            grad_m[r] -= tau / d;
            if r + 1 < m {
                grad_m[r + 1] += tau / d;
            }
        }

        // Schur complement on the small energy block.
        let fact = Tridiag::factor(&diag_a, &bar_a)?;
        let mut y: Vec<f64> = grad_l.iter().map(|v| -v).collect();
        fact.solve(&mut y);
        let mut z = vec![vec![0.0; n]; m];
        for (r, col) in z.iter_mut().enumerate() {
            let (lo, hi) = (
                g.epoch_start[self.e0 + r] - self.i0,
                g.epoch_start[self.e0 + r + 1] - self.i0,
            );
            col[lo..hi].copy_from_slice(&coup[lo..hi]);
            fact.solve(col);
        }
        let mut schur = mat_c;
        let mut rhs = DVector::from_iterator(m, grad_m.iter().map(|v| -v));
        for r in 0..m {
            let (lo, hi) = (
                g.epoch_start[self.e0 + r] - self.i0,
                g.epoch_start[self.e0 + r + 1] - self.i0,
            );
            for j in lo..hi {
                rhs[r] -= coup[j] * y[j];
                for (s, col) in z.iter().enumerate() {
                    schur[(r, s)] -= coup[j] * col[j];
                }
            }
        }
        // Solve in increment coordinates `M = U u`, where the barrier is
        // diagonal and cannot swamp the curvature terms.
        let upper = DMatrix::<f64>::from_fn(m, m, |s, r| if s <= r { 1.0 } else { 0.0 });
        let mut schur_u = upper.transpose() * schur * &upper;
        for (r, h) in bar_m.iter().enumerate() {
            schur_u[(r, r)] += h;
        }
        let rhs_u = upper.transpose() * rhs;
        let du = schur_u
            .clone()
            .cholesky()
            .map(|c| c.solve(&rhs_u))
            .or_else(|| schur_u.lu().solve(&rhs_u))?;
        let dm = upper * du;
        let mut dl = y;
        for (s, col) in z.iter().enumerate() {
            for j in 0..n {
                dl[j] -= col[j] * dm[s];
            }
        }
        let dm: Vec<f64> = dm.iter().copied().collect();
        let slope = grad_l.iter().zip(&dl).map(|(a, b)| a * b).sum::<f64>()
            + grad_m.iter().zip(&dm).map(|(a, b)| a * b).sum::<f64>();
        Some((dl, dm, slope))
    }
}

/// Largest step keeping every increment positive, shortened by `0.99`.
fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    let mut alpha = f64::INFINITY;
    for j in 0..v.len() {
        let d = v[j] - v.get(j + 1).copied().unwrap_or(0.0);
        let dd = dv[j] - dv.get(j + 1).copied().unwrap_or(0.0);
        if dd < 0.0 {
            alpha = alpha.min(-d / dd);
        }
    }
    0.99 * alpha
}

/// Solves the discrete problem on an `n`-cell grid starting at temperature `t_init`.
pub fn solve_grid(
    params: &ThermalParams,
    profile: &ArrivalProfile,
    n: usize,
    t_init: f64,
    config: &BarrierConfig,
) -> Result<GridSolution> {
    let grid = Grid::new(params, profile, n, t_init);
    let cells = grid.cells();
    let bar = Barrier::new(&grid);
    let (nr, mr) = (bar.n(), bar.m());
    if nr == 0 || mr == 0 {
        let state = DualState {
            mu: vec![0.0; grid.epochs()],
            lambda: vec![0.0; cells],
            barrier_weight: 0.0,
            iterations: 0,
            best_objective_history: vec![0.0],
        };
        return Ok(GridSolution {
            powers: vec![0.0; cells],
            state,
            objective: 0.0,
            dual_objective: 0.0,
            grid,
        });
    }

    let d = profile.deadline();
    let k_sat = 1.0 / (params.p_sat() + 1.0);
    let avg = profile.total_energy() / d;
    let m_start = 1.0 / (1.0 + avg.min(params.p_sat() * 4.0).max(1e-3));
    let mut mm: Vec<f64> = (0..mr)
        .map(|r| m_start * (mr - r) as f64 / mr as f64)
        .collect();
    let lam_scale = 1e-3 * k_sat * (-params.b * d).exp() / d;
    let mut lam: Vec<f64> = (0..nr)
        .map(|j| lam_scale * (d - grid.nodes[bar.i0 + j]))
        .collect();

    let total = (nr + mr) as f64;
    let gap_target = config.gap * d.max(1.0);
    let mut tau = 1e-2 * d / total;
    let mut iterations = 0;
    let mut best = f64::NEG_INFINITY;
    let mut history = Vec::new();

    loop {
        // Centering.
        for _ in 0..200 {
            let p = bar.powers(&lam, &mm);
            if grid.worst_ratio(&p) <= 1.0 + 1e-9 {
                best = best.max(grid.objective(&p));
            }
            history.push(if best.is_finite() { best } else { 0.0 });
            iterations += 1;
            if iterations > config.max_newton {
                return Err(Error::MaxIterations {
                    iterations,
                    context: "barrier Newton iterations on the discrete dual".into(),
                });
            }
            let Some((dl, dm, slope)) = bar.newton_direction(&lam, &mm, tau) else {
                return Err(Error::MaxIterations {
                    iterations,
                    context: "singular Newton system".into(),
                });
            };
            if -slope <= 1e-3 * tau.min(1e-9) || !slope.is_finite() {
                break;
            }
            let f0 = bar.value(&lam, &mm, tau).unwrap_or(f64::INFINITY);
            let mut alpha = max_step(&lam, &dl).min(max_step(&mm, &dm)).min(1.0);
            let mut accepted = false;
            while alpha > 1e-12 {
                let lt: Vec<f64> = lam.iter().zip(&dl).map(|(a, b)| a + alpha * b).collect();
                let mt: Vec<f64> = mm.iter().zip(&dm).map(|(a, b)| a + alpha * b).collect();
                if let Some(f) = bar.value(&lt, &mt, tau) {
                    if f <= f0 + 0.25 * alpha * slope || f - f0 <= 1e-15 * f0.abs() {
                        lam = lt;
                        mm = mt;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted || -slope < 1e-15 * f0.abs().max(1.0) {
                break;
            }
        }
        if total * tau <= gap_target {
            break;
        }
        tau = (tau * 0.1).max(gap_target / total * 0.5);
    }

    let mut powers = bar.powers(&lam, &mm);
    let ratio = grid.worst_ratio(&powers);
    if ratio > 1.0 {
        powers.iter_mut().for_each(|p| *p /= ratio);
    }
    let objective = grid.objective(&powers);
    best = best.max(objective);
    history.push(best);

    let mut mu = vec![0.0; grid.epochs()];
    for (r, v) in Barrier::increments(&mm).enumerate() {
        mu[bar.e0 + r] = v;
    }
    let mut lambda = vec![0.0; cells];
    for (j, v) in Barrier::increments(&lam).enumerate() {
        lambda[bar.i0 + j] = v;
    }
    let dual_objective = bar.dual_value(&lam, &mm);
    let state = DualState {
        mu,
        lambda,
        barrier_weight: tau,
        iterations,
        best_objective_history: history,
    };
    Ok(GridSolution {
        powers,
        state,
        objective,
        dual_objective,
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::single::solve_single;

    fn fig() -> ThermalParams {
        ThermalParams::new(0.1, 0.3, 37.0, 38.0).unwrap()
    }

    #[test]
    fn tridiagonal_solve() {
        // [[3,-1,0],[-1,4,-1],[0,-1,3]]
        let f = Tridiag::factor(&[2.0, 2.0, 1.0], &[1.0, 1.0, 1.0]).unwrap();
        let mut x = vec![2.0, 2.0, 2.0];
        f.solve(&mut x);
        for v in x {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn temperature_inactive_gives_constant_power() {
        let p = ThermalParams::new(0.1, 0.3, 37.0, 1000.0).unwrap();
        let prof = ArrivalProfile::single(6.0, 3.0).unwrap();
        let sol = solve_grid(&p, &prof, 256, 37.0, &BarrierConfig::default()).unwrap();
        for &x in &sol.powers {
            assert!((x - 2.0).abs() < 1e-6, "{x}");
        }
        assert!(sol.dual_objective - sol.objective < 1e-8);
    }

    #[test]
    fn matches_single_arrival_closed_form() {
        let p = fig();
        for &(e, d) in &[(10.0, 3.5), (17.71, 3.5), (30.0, 3.5), (8.0, 2.0)] {
            let prof = ArrivalProfile::single(e, d).unwrap();
            let sol = solve_grid(&p, &prof, 4096, 37.0, &BarrierConfig::default()).unwrap();
            let exact = solve_single(&p, e, d).unwrap().throughput;
            let rel = (sol.throughput() - exact).abs() / exact;
            assert!(rel < 1e-3, "E = {e}: {} vs {exact}", sol.throughput());
            assert!(sol.throughput() <= exact + 1e-9);
        }
    }

    #[test]
    fn best_objective_is_monotone() {
        let prof = ArrivalProfile::from_pairs(5.0, &[(0.0, 6.08), (1.5, 14.55)]).unwrap();
        let sol = solve_grid(&fig(), &prof, 512, 37.0, &BarrierConfig::default()).unwrap();
        assert!(sol
            .state
            .best_objective_history
            .windows(2)
            .all(|w| w[1] >= w[0]));
        assert!(sol
            .state
            .mu
            .iter()
            .chain(&sol.state.lambda)
            .all(|&v| v >= 0.0));
    }

    #[test]
    fn leading_empty_epoch_stays_idle() {
        let prof = ArrivalProfile::from_pairs(3.0, &[(0.0, 0.0), (1.0, 4.0)]).unwrap();
        let sol = solve_grid(&fig(), &prof, 300, 37.0, &BarrierConfig::default()).unwrap();
        let first = sol.grid.epoch_start[1];
        assert!(sol.powers[..first].iter().all(|&p| p == 0.0));
        assert!(sol.objective > 0.0);
    }
}
