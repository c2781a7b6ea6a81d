use crate::error::{Error, Result};
use crate::model::{ArrivalProfile, ThermalParams};

/// Family of prefix constraints `Σ_{i ≤ k} w_i x_i ≤ cap_k` for `k` in `ends`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixRows {
    pub weights: Vec<f64>,
    /// Last cell of each row, increasing.
    pub ends: Vec<usize>,
    pub caps: Vec<f64>,
}

impl PrefixRows {
    /// Largest `lhs/cap` over the rows.
    pub fn worst_ratio(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        let mut i = 0;
        let mut worst = f64::NEG_INFINITY;
        for (&end, &cap) in self.ends.iter().zip(&self.caps) {
            while i <= end {
                acc += self.weights[i] * x[i];
                i += 1;
            }
            let r = if cap > 0.0 {
                acc / cap
            } else if acc > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            worst = worst.max(r);
        }
        worst
    }

    /// Largest violation `lhs − cap` (0 when feasible).
    pub fn worst_violation(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        let mut i = 0;
        let mut worst: f64 = 0.0;
        for (&end, &cap) in self.ends.iter().zip(&self.caps) {
            while i <= end {
                acc += self.weights[i] * x[i];
                i += 1;
            }
            worst = worst.max(acc - cap);
        }
        worst
    }

    /// Rows as dense coefficient vectors.
    pub fn dense(&self) -> Vec<(Vec<f64>, f64)> {
        self.ends
            .iter()
            .zip(&self.caps)
            .map(|(&end, &cap)| {
                let mut a = vec![0.0; self.weights.len()];
                a[..=end].copy_from_slice(&self.weights[..=end]);
                (a, cap)
            })
            .collect()
    }
}

/// Piecewise-constant discretization: maximize `Σ ½·log₂(1 + P_i)·Δ_i` over
/// `P ≥ 0` subject to the energy rows at epoch ends and a temperature row at
/// every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteProblem {
    /// Grid points `0 = t_0 < … < t_n = D`.
    pub times: Vec<f64>,
    pub steps: Vec<f64>,
    pub energy: PrefixRows,
    pub temperature: PrefixRows,
}

impl DiscreteProblem {
    pub fn cells(&self) -> usize {
        self.steps.len()
    }

    /// Objective in bits.
    pub fn objective(&self, p: &[f64]) -> f64 {
        self.steps
            .iter()
            .zip(p)
            .map(|(d, p)| 0.5 * d * p.ln_1p())
            .sum::<f64>()
            / std::f64::consts::LN_2
    }

    /// Gradient of [`DiscreteProblem::objective`].
    pub fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let s = 0.5 / std::f64::consts::LN_2;
        self.steps
            .iter()
            .zip(p)
            .map(|(d, p)| s * d / (1.0 + p.max(0.0)))
            .collect()
    }

    /// Largest violation over rows and the box.
    pub fn worst_violation(&self, p: &[f64]) -> f64 {
        let neg = p.iter().fold(0.0f64, |a, &v| a.max(-v));
        neg.max(self.energy.worst_violation(p))
            .max(self.temperature.worst_violation(p))
    }

    /// Largest `lhs/cap` over all rows.
    pub fn worst_ratio(&self, p: &[f64]) -> f64 {
        self.energy
            .worst_ratio(p)
            .max(self.temperature.worst_ratio(p))
    }
}

/// Builds the problem on `n` uniform cells with every arrival inserted as a
/// grid point. Cell `i` covers `[t_i, t_{i+1})`; its temperature coefficient
/// is `∫_{t_i}^{t_{i+1}} e^{bτ} dτ` in closed form.
pub fn build_discrete(
    params: &ThermalParams,
    profile: &ArrivalProfile,
    n: usize,
) -> Result<DiscreteProblem> {
    build_discrete_from(params, profile, n, params.t_env)
}

/// [`build_discrete`] for a horizon starting at temperature `t_init`.
pub fn build_discrete_from(
    params: &ThermalParams,
    profile: &ArrivalProfile,
    n: usize,
    t_init: f64,
) -> Result<DiscreteProblem> {
    params.validate()?;
    if n == 0 {
        return Err(Error::InvalidParams(
            "the oracle grid needs at least one cell".into(),
        ));
    }
    let d = profile.deadline();
    let mut times: Vec<f64> = (0..n).map(|k| d * k as f64 / n as f64).collect();
    times.extend(profile.interior_arrival_times());
    times.push(d);
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * d);
    let steps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let cells = steps.len();

    let b = params.b;
    let mut energy = PrefixRows {
        weights: steps.clone(),
        ends: Vec::new(),
        caps: Vec::new(),
    };
    for e in 0..profile.num_epochs() {
        let end = profile.epoch(e).1;
        let last = times.partition_point(|&t| t < end - 1e-12 * d) - 1;
        energy.ends.push(last);
        energy.caps.push(profile.cumulative_energy(e));
    }
    let weights = (0..cells)
        .map(|i| ((b * times[i + 1]).exp() - (b * times[i]).exp()) / b)
        .collect();
    let caps = (1..=cells)
        .map(|k| {
            let t = times[k];
            (params.t_delta() * (b * t).exp() - (t_init - params.t_env)) / params.a
        })
        .collect();
    let temperature = PrefixRows {
        weights,
        ends: (0..cells).collect(),
        caps,
    };
    Ok(DiscreteProblem {
        times,
        steps,
        energy,
        temperature,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_cells_by_hand() {
        let p = ThermalParams::new(0.1, 0.3, 37.0, 38.0).unwrap();
        let prof = ArrivalProfile::single(3.0, 2.0).unwrap();
        let prob = build_discrete(&p, &prof, 2).unwrap();
        assert_eq!(prob.times, vec![0.0, 1.0, 2.0]);
        assert_eq!(prob.energy.ends, vec![1]);
        assert_eq!(prob.energy.caps, vec![3.0]);
        let w0 = (0.3f64.exp() - 1.0) / 0.3;
        let w1 = (0.6f64.exp() - 0.3f64.exp()) / 0.3;
        assert!((prob.temperature.weights[0] - w0).abs() < 1e-12);
        assert!((prob.temperature.weights[1] - w1).abs() < 1e-12);
        assert!((prob.temperature.caps[0] - 0.3f64.exp() / 0.1).abs() < 1e-12);
        assert!((prob.temperature.caps[1] - 0.6f64.exp() / 0.1).abs() < 1e-12);
    }

    #[test]
    fn arrivals_are_grid_points() {
        let p = ThermalParams::new(0.1, 0.3, 37.0, 38.0).unwrap();
        let prof = ArrivalProfile::from_pairs(5.0, &[(0.0, 6.08), (1.5, 14.55)]).unwrap();
        let prob = build_discrete(&p, &prof, 64).unwrap();
        let k = prob.energy.ends[0];
        assert_eq!(prob.times[k + 1], 1.5);
        assert_eq!(prob.energy.ends[1], prob.cells() - 1);
    }
}
