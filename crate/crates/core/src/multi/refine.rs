//! Structure extraction from a grid solution and continuous refinement.
//!
//! Between contacts with the ceiling the policy is `1/(β(t) + C e^{bt}) − 1`
//! clamped at 0, with `β` constant between tight epoch ends and one `C` per
//! stretch. On a contact the power is `p̄`. The unknowns are the `β` levels,
//! the free `C`s and the contact entry and exit times; they are pinned by
//! energy equalities at tight epoch ends, `T = T_c` at entries (and at `D` for
//! a terminal touch) and continuity of `β + C e^{bt}` at entries and exits.

use nalgebra::{DMatrix, DVector};

use super::dual::GridSolution;
use crate::model::{
    push_recip_pieces, temperature_at, ArrivalProfile, PowerPolicy, PowerSegment, ThermalParams,
};
use crate::report::{DensityPiece, Multipliers, TemperatureMultiplier};

/// `μ_e` above which an epoch end counts as tight.
const MU_TIGHT: f64 = 1e-7;
/// Relative distance to the ceiling below which a node counts as tight.
const TEMP_TIGHT: f64 = 1e-8;
/// Gaps of at most this many cells inside a tight run are bridged.
const MERGE_GAP: usize = 2;

/// One maximal interval with the temperature held at the ceiling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub t_in: f64,
    pub t_out: f64,
    pub starts_at_zero: bool,
    pub ends_at_deadline: bool,
}

/// Combinatorial description of a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Structure {
    /// Epochs whose end is energy-tight, in increasing order.
    pub tight_epochs: Vec<usize>,
    pub contacts: Vec<Contact>,
    /// Temperature reaches the ceiling at `D` only.
    pub terminal_touch: bool,
}

/// Reads the tight sets off a converged grid solution.
pub fn extract_structure(sol: &GridSolution, params: &ThermalParams) -> Structure {
    let grid = &sol.grid;
    let n = grid.cells();
    let mut used = 0.0;
    let mut tight_epochs = Vec::new();
    for e in 0..grid.epochs() {
        let (lo, hi) = (grid.epoch_start[e], grid.epoch_start[e + 1]);
        used += (lo..hi).map(|i| grid.dt[i] * sol.powers[i]).sum::<f64>();
        let slack = grid.epoch_cum[e] - used;
        if grid.epoch_cum[e] > 0.0
            && sol.state.mu[e] > MU_TIGHT
            && slack <= 1e-4 * (1.0 + grid.epoch_cum[e])
        {
            tight_epochs.push(e);
        }
    }

    let temps = grid.node_temperatures(&sol.powers);
    let tol = TEMP_TIGHT * params.t_delta();
    let tight: Vec<bool> = (0..n)
        .map(|i| params.t_crit - temps[i + 1] <= tol)
        .collect();
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for i in (0..n).filter(|&i| tight[i]) {
        match runs.last_mut() {
            Some(run) if i - run.1 <= MERGE_GAP + 1 => run.1 = i,
            _ => runs.push((i, i)),
        }
    }

    let start_hot = params.t_crit - grid.t_init <= tol;
    let mut contacts = Vec::new();
    let mut terminal_touch = false;
    for &(lo, hi) in &runs {
        let at_zero = lo == 0 && start_hot;
        let at_end = hi + 1 == n;
        if lo == hi && !at_zero {
            // A single tight node is a tangency; only the one at D matters.
            terminal_touch |= at_end;
            continue;
        }
        contacts.push(Contact {
            t_in: if at_zero { 0.0 } else { grid.nodes[lo] },
            t_out: grid.nodes[hi + 1],
            starts_at_zero: at_zero,
            ends_at_deadline: at_end,
        });
    }
    Structure {
        tight_epochs,
        contacts,
        terminal_touch,
    }
}

/// Alternative structures tried when the extracted one does not certify.
pub fn structure_variants(base: &Structure, profile: &ArrivalProfile) -> Vec<Structure> {
    let mut out = vec![base.clone()];
    let ends_at_d = base.contacts.last().is_some_and(|c| c.ends_at_deadline);
    if !ends_at_d {
        let mut v = base.clone();
        v.terminal_touch = !v.terminal_touch;
        out.push(v);
    }
    let mut order: Vec<usize> = (0..base.contacts.len()).collect();
    order.sort_by(|&i, &j| {
        let len = |c: &Contact| c.t_out - c.t_in;
        len(&base.contacts[i]).total_cmp(&len(&base.contacts[j]))
    });
    for i in order {
        let mut v = base.clone();
        let dropped = v.contacts.remove(i);
        if dropped.ends_at_deadline {
            v.terminal_touch = true;
        }
        out.push(v);
    }
    let last = profile.num_epochs() - 1;
    let mut v = base.clone();
    if let Some(pos) = v.tight_epochs.iter().position(|&e| e == last) {
        v.tight_epochs.remove(pos);
    } else {
        v.tight_epochs.push(last);
    }
    out.push(v);
    out
}

/// Position of each unknown in the parameter vector.
struct Layout {
    /// Ends of the tight epochs; `β` is constant between consecutive ones.
    tight_ends: Vec<f64>,
    /// Index of the free `C` of each stretch (`contacts.len() + 1` stretches).
    c_index: Vec<Option<usize>>,
    t_in_index: Vec<Option<usize>>,
    t_out_index: Vec<Option<usize>>,
    len: usize,
}

/// Unknowns decoded from a parameter vector.
struct Candidate {
    betas: Vec<f64>,
    cs: Vec<f64>,
    contacts: Vec<(f64, f64)>,
}

/// Refines a structure into a continuous policy with its multipliers.
pub struct Refiner<'a> {
    params: &'a ThermalParams,
    profile: &'a ArrivalProfile,
    t_init: f64,
    structure: Structure,
    layout: Layout,
    /// Leading stretch of zero available energy where the power is 0.
    idle_until: f64,
}

impl<'a> Refiner<'a> {
    pub fn new(
        params: &'a ThermalParams,
        profile: &'a ArrivalProfile,
        t_init: f64,
        structure: Structure,
    ) -> Self {
        let first_energy = (0..profile.num_epochs()).find(|&e| profile.cumulative_energy(e) > 0.0);
        let idle_until = first_energy.map_or(profile.deadline(), |e| profile.epoch(e).0);
        let tight_ends: Vec<f64> = structure
            .tight_epochs
            .iter()
            .map(|&e| profile.epoch(e).1)
            .collect();
        let mut len = tight_ends.len();
        let k = structure.contacts.len();
        let mut c_index = vec![None; k + 1];
        let mut t_in_index = vec![None; k];
        let mut t_out_index = vec![None; k];
        for s in 0..=k {
            let empty = if s == 0 {
                structure.contacts.first().is_some_and(|c| c.starts_at_zero)
            } else {
                structure.contacts[s - 1].ends_at_deadline
            };
            let trailing = s == k;
            if !empty && (!trailing || structure.terminal_touch) {
                c_index[s] = Some(len);
                len += 1;
            }
        }
        for (j, c) in structure.contacts.iter().enumerate() {
            if !c.starts_at_zero {
                t_in_index[j] = Some(len);
                len += 1;
            }
            if !c.ends_at_deadline {
                t_out_index[j] = Some(len);
                len += 1;
            }
        }
        let layout = Layout {
            tight_ends,
            c_index,
            t_in_index,
            t_out_index,
            len,
        };
        Self {
            params,
            profile,
            t_init,
            structure,
            layout,
            idle_until,
        }
    }

    fn k_sat(&self) -> f64 {
        1.0 / (self.params.p_sat() + 1.0)
    }

    fn decode(&self, x: &[f64]) -> Candidate {
        let lay = &self.layout;
        let d = self.profile.deadline();
        let betas = x[..lay.tight_ends.len()].to_vec();
        let cs = lay
            .c_index
            .iter()
            .map(|i| i.map_or(0.0, |i| x[i]))
            .collect();
        let contacts = (0..self.structure.contacts.len())
            .map(|j| {
                let t_in = lay.t_in_index[j].map_or(0.0, |i| x[i]);
                let t_out = lay.t_out_index[j].map_or(d, |i| x[i]);
                (t_in, t_out)
            })
            .collect();
        Candidate {
            betas,
            cs,
            contacts,
        }
    }

    fn encode(&self, cand: &Candidate) -> Vec<f64> {
        let lay = &self.layout;
        let mut x = vec![0.0; lay.len];
        x[..cand.betas.len()].copy_from_slice(&cand.betas);
        for (s, idx) in lay.c_index.iter().enumerate() {
            if let Some(i) = idx {
                x[*i] = cand.cs[s];
            }
        }
        for (j, &(t_in, t_out)) in cand.contacts.iter().enumerate() {
            if let Some(i) = lay.t_in_index[j] {
                x[i] = t_in;
            }
            if let Some(i) = lay.t_out_index[j] {
                x[i] = t_out;
            }
        }
        x
    }

    /// `β(t)` with right-continuity at tight epoch ends.
    fn beta_at(&self, cand: &Candidate, t: f64) -> f64 {
        let g = self.layout.tight_ends.partition_point(|&s| s <= t);
        cand.betas.get(g).copied().unwrap_or(0.0)
    }

    /// Left limit `β(t−)`.
    fn beta_left(&self, cand: &Candidate, t: f64) -> f64 {
        let g = self.layout.tight_ends.partition_point(|&s| s < t);
        cand.betas.get(g).copied().unwrap_or(0.0)
    }

    /// Initial guess read off the grid solution.
    pub fn initial_guess(&self, sol: &GridSolution) -> Vec<f64> {
        let grid = &sol.grid;
        let b = self.params.b;
        let m_levels = sol.state.energy_levels();
        let l_levels = sol.state.temperature_levels();
        let betas = self
            .structure
            .tight_epochs
            .iter()
            .map(|&e| m_levels[e])
            .collect();
        let d = self.profile.deadline();
        let k = self.structure.contacts.len();
        let cs = (0..=k)
            .map(|s| {
                let lo = if s == 0 {
                    self.idle_until
                } else {
                    self.structure.contacts[s - 1].t_out
                };
                let hi = if s == k {
                    d
                } else {
                    self.structure.contacts[s].t_in
                };
                let mid = 0.5 * (lo + hi);
                let i = grid
                    .nodes
                    .partition_point(|&t| t <= mid)
                    .clamp(1, grid.cells())
                    - 1;
                (grid.weight[i] * l_levels[i] * (-b * grid.midpoint(i)).exp()).max(0.0)
            })
            .collect();
        let contacts = self
            .structure
            .contacts
            .iter()
            .map(|c| (c.t_in, c.t_out))
            .collect();
        self.encode(&Candidate {
            betas,
            cs,
            contacts,
        })
    }

    /// Builds the policy, or `None` when the unknowns are out of their domain.
    fn policy(&self, cand: &Candidate) -> Option<PowerPolicy> {
        let d = self.profile.deadline();
        let b = self.params.b;
        let p_sat = self.params.p_sat();
        if cand.betas.iter().any(|&v| !(v >= 0.0) || !v.is_finite())
            || cand.betas.windows(2).any(|w| w[1] > w[0])
            || cand.cs.iter().any(|&c| !(c >= 0.0) || !c.is_finite())
        {
            return None;
        }
        let mut prev = self.idle_until;
        for (j, &(t_in, t_out)) in cand.contacts.iter().enumerate() {
            let first_at_zero = j == 0 && self.structure.contacts[0].starts_at_zero;
            let ok_in = if first_at_zero {
                true
            } else {
                t_in > prev + 1e-12
            };
            if !ok_in || !(t_out > t_in + 1e-12) || t_out > d {
                return None;
            }
            prev = t_out;
        }

        let mut cuts: Vec<f64> = vec![0.0, self.idle_until, d];
        cuts.extend(cand.contacts.iter().flat_map(|&(a, b)| [a, b]));
        cuts.extend(self.layout.tight_ends.iter().copied().filter(|&t| t < d));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-13);

        let mut segs = Vec::new();
        for w in cuts.windows(2) {
            let (u, v) = (w[0], w[1]);
            if v - u <= 1e-13 {
                continue;
            }
            if v <= self.idle_until {
                segs.push(PowerSegment::constant(u, v, 0.0));
                continue;
            }
            let mid = 0.5 * (u + v);
            if cand.contacts.iter().any(|&(a, b)| mid > a && mid < b) {
                segs.push(PowerSegment::constant(u, v, p_sat));
                continue;
            }
            let s = cand.contacts.iter().filter(|&&(_, b)| b <= mid).count();
            let beta = self.beta_at(cand, u);
            let c = cand.cs[s];
            if beta + c * (b * u).exp().min((b * v).exp()) <= 0.0 {
                return None;
            }
            push_recip_pieces(&mut segs, u, v, beta, c, b);
        }
        PowerPolicy::new(segs).ok()
    }

    fn residual(&self, x: &[f64]) -> Option<(Vec<f64>, PowerPolicy)> {
        let cand = self.decode(x);
        let policy = self.policy(&cand)?;
        let prm = self.params;
        let b = prm.b;
        let k = self.k_sat();
        let e_scale = 1.0 + self.profile.total_energy();
        let mut r = Vec::with_capacity(self.layout.len);
        for &e in &self.structure.tight_epochs {
            let end = self.profile.epoch(e).1;
            r.push((self.profile.cumulative_energy(e) - policy.energy_until(end)) / e_scale);
        }
        for (j, &(t_in, t_out)) in cand.contacts.iter().enumerate() {
            let c = &self.structure.contacts[j];
            if !c.starts_at_zero {
                let temp = temperature_at(&policy, prm, self.t_init, t_in);
                r.push((temp - prm.t_crit) / prm.t_delta());
                r.push((self.beta_at(&cand, t_in) + cand.cs[j] * (b * t_in).exp() - k) / k);
            }
            if !c.ends_at_deadline {
                r.push((self.beta_at(&cand, t_out) + cand.cs[j + 1] * (b * t_out).exp() - k) / k);
            }
        }
        if self.structure.terminal_touch {
            let temp = temperature_at(&policy, prm, self.t_init, self.profile.deadline());
            r.push((temp - prm.t_crit) / prm.t_delta());
        }
        Some((r, policy))
    }

    fn typical(&self, i: usize) -> f64 {
        let nb = self.layout.tight_ends.len();
        let is_time = self
            .layout
            .t_in_index
            .iter()
            .chain(&self.layout.t_out_index)
            .any(|&idx| idx == Some(i));
        if is_time {
            self.profile.deadline()
        } else if i < nb {
            self.k_sat()
        } else {
            self.k_sat() * 1e-2
        }
    }

    /// Damped Newton with a finite-difference Jacobian.
    pub fn solve(&self, x0: Vec<f64>) -> Option<(PowerPolicy, Multipliers)> {
        let n = self.layout.len;
        let mut x = x0;
        let (mut r, mut policy) = self.residual(&x)?;
        let norm = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        for _ in 0..80 {
            if norm(&r) <= 1e-13 || n == 0 {
                break;
            }
            let mut jac = DMatrix::<f64>::zeros(n, n);
            for col in 0..n {
                let h = 1e-7 * x[col].abs().max(self.typical(col));
                let mut xp = x.clone();
                xp[col] += h;
                let rp = match self.residual(&xp) {
                    Some((rp, _)) => rp,
                    None => {
                        xp[col] = x[col] - h;
                        let (rm, _) = self.residual(&xp)?;
                        rm.iter()
                            .map(|v| -v)
                            .zip(&r)
                            .map(|(m, r0)| m + 2.0 * r0)
                            .collect()
                    }
                };
                for row in 0..n {
                    jac[(row, col)] = (rp[row] - r[row]) / h;
                }
            }
            let dx = jac.lu().solve(&DVector::from_column_slice(&r))?;
            let base = norm(&r);
            let mut alpha = 1.0;
            let mut next = None;
            while alpha > 1e-6 {
                let xt: Vec<f64> = x
                    .iter()
                    .zip(dx.iter())
                    .map(|(a, d)| a - alpha * d)
                    .collect();
                if let Some((rt, pt)) = self.residual(&xt) {
                    if norm(&rt) < (1.0 - 1e-4 * alpha) * base {
                        next = Some((xt, rt, pt));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let (xt, rt, pt) = next?;
            x = xt;
            r = rt;
            policy = pt;
        }
        if norm(&r) > 1e-10 {
            return None;
        }
        let cand = self.decode(&x);
        Some((policy, self.multipliers(&cand)))
    }

    fn multipliers(&self, cand: &Candidate) -> Multipliers {
        let b = self.params.b;
        let d = self.profile.deadline();
        let k = self.k_sat();
        let m = self.profile.num_epochs();
        let mut energy = vec![0.0; m];
        for (g, &e) in self.structure.tight_epochs.iter().enumerate() {
            let next = cand.betas.get(g + 1).copied().unwrap_or(0.0);
            energy[e] = cand.betas[g] - next;
        }
        // Idle leading epochs: enough weight to keep the power at 0.
        if self.idle_until > 0.0 {
            let last_idle = self.profile.epoch_of(self.idle_until) - 1;
            let after =
                self.beta_at(cand, self.idle_until) + cand.cs[0] * (b * self.idle_until).exp();
            energy[last_idle] += (1.0 - after).max(0.0);
        }

        let mut temperature = TemperatureMultiplier::zero();
        for &(t_in, t_out) in &cand.contacts {
            let mut cuts = vec![t_in, t_out];
            cuts.extend(
                self.layout
                    .tight_ends
                    .iter()
                    .copied()
                    .filter(|&s| s > t_in && s < t_out),
            );
            cuts.sort_by(f64::total_cmp);
            for w in cuts.windows(2) {
                let kappa = b * (k - self.beta_at(cand, w[0]));
                temperature.densities.push(DensityPiece {
                    start: w[0],
                    end: w[1],
                    kappa,
                });
            }
        }
        match cand.contacts.last() {
            Some(&(_, t_out)) if t_out >= d => {
                let mass = (k - self.beta_left(cand, d)) * (-b * d).exp();
                temperature.atoms.push((d, mass));
            }
            _ => {
                let c_last = *cand.cs.last().unwrap_or(&0.0);
                if c_last > 0.0 {
                    temperature.atoms.push((d, c_last));
                }
            }
        }
        Multipliers {
            energy,
            temperature,
        }
    }
}

/// Piecewise-constant fallback with the grid multipliers as atoms at cell ends.
pub fn grid_fallback(sol: &GridSolution) -> (PowerPolicy, Multipliers) {
    let grid = &sol.grid;
    let policy = PowerPolicy::from_cells(&grid.nodes, &sol.powers)
        .unwrap_or_else(|_| PowerPolicy::zero(grid.nodes[grid.cells()]));
    let atoms = sol
        .state
        .lambda
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > 0.0)
        .map(|(k, &l)| (grid.nodes[k + 1], l))
        .collect();
    let temperature = TemperatureMultiplier {
        densities: Vec::new(),
        atoms,
    };
    (
        policy,
        Multipliers {
            energy: sol.state.mu.clone(),
            temperature,
        },
    )
}
