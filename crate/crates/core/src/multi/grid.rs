use crate::model::{ArrivalProfile, ThermalParams};

/// Cell-exact discretization of the throughput problem.
///
/// Power is constant on each cell. The temperature constraint is imposed at
/// every node in its integral form `Σ_{i≤k} Δ_i g_i P_i ≤ V_k` (scaled by
/// `1/a`), with the weight `g_i` the exact cell average of `e^{bτ}`. A
/// piecewise-constant power moves the temperature monotonically inside a
/// cell, so node feasibility is exact continuous feasibility.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    /// Nodes `t_0 = 0 < … < t_n = D`; every arrival is a node.
    pub nodes: Vec<f64>,
    pub dt: Vec<f64>,
    /// Cell averages of `e^{bτ}`.
    pub weight: Vec<f64>,
    /// Right-hand side of the temperature row at the end of each cell.
    pub cap: Vec<f64>,
    pub epoch_of_cell: Vec<usize>,
    /// Energy of each epoch.
    pub epoch_energy: Vec<f64>,
    /// Cumulative energy at each epoch end.
    pub epoch_cum: Vec<f64>,
    /// First cell of each epoch (plus `n` at the end).
    pub epoch_start: Vec<usize>,
    pub t_init: f64,
    params: ThermalParams,
}

impl Grid {
    /// Uniform grid of `n` cells with the arrival instants inserted; uniform
    /// nodes closer than a quarter cell to an arrival are dropped.
    pub fn new(params: &ThermalParams, profile: &ArrivalProfile, n: usize, t_init: f64) -> Self {
        let d = profile.deadline();
        let h = d / n as f64;
        let arrivals: Vec<f64> = profile.interior_arrival_times().collect();
        let mut nodes: Vec<f64> = (0..=n)
            .map(|k| if k == n { d } else { k as f64 * h })
            .filter(|&t| t == 0.0 || t == d || arrivals.iter().all(|&s| (s - t).abs() > 0.25 * h))
            .collect();
        nodes.extend(arrivals.iter().copied());
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();

        let b = params.b;
        let cells = nodes.len() - 1;
        let dt: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        let weight: Vec<f64> = (0..cells)
            .map(|i| (b * nodes[i]).exp() * (b * dt[i]).exp_m1() / (b * dt[i]))
            .collect();
        let t_g = t_init - params.t_env;
        let cap: Vec<f64> = (0..cells)
            .map(|k| (params.t_delta() * (b * nodes[k + 1]).exp() - t_g) / params.a)
            .collect();
        let epoch_of_cell: Vec<usize> = (0..cells).map(|i| profile.epoch_of(nodes[i])).collect();
        let m = profile.num_epochs();
        let mut epoch_start = vec![cells; m + 1];
        for i in (0..cells).rev() {
            epoch_start[epoch_of_cell[i]] = i;
        }
        Self {
            dt,
            weight,
            cap,
            epoch_of_cell,
            epoch_energy: profile.arrivals().iter().map(|a| a.energy).collect(),
            epoch_cum: (0..m).map(|e| profile.cumulative_energy(e)).collect(),
            epoch_start,
            nodes,
            t_init,
            params: *params,
        }
    }

    pub fn cells(&self) -> usize {
        self.dt.len()
    }

    pub fn epochs(&self) -> usize {
        self.epoch_energy.len()
    }

    pub fn params(&self) -> &ThermalParams {
        &self.params
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        0.5 * (self.nodes[i] + self.nodes[i + 1])
    }

    /// Temperature at every node for cell powers `p`.
    pub fn node_temperatures(&self, p: &[f64]) -> Vec<f64> {
        let prm = &self.params;
        let mut heat = self.t_init - prm.t_env;
        let mut out = Vec::with_capacity(self.nodes.len());
        out.push(self.t_init);
        for i in 0..self.cells() {
            heat += prm.a * self.dt[i] * self.weight[i] * p[i];
            out.push(prm.t_env + (-prm.b * self.nodes[i + 1]).exp() * heat);
        }
        out
    }

    /// Largest relative violation over all rows: `max(lhs/rhs) − 1`.
    pub fn worst_ratio(&self, p: &[f64]) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        let mut used = 0.0;
        let mut heat = 0.0;
        for i in 0..self.cells() {
            used += self.dt[i] * p[i];
            heat += self.dt[i] * self.weight[i] * p[i];
            worst = worst.max(heat / self.cap[i]);
            let e = self.epoch_of_cell[i];
            if i + 1 == self.epoch_start[e + 1] {
                let cap = self.epoch_cum[e];
                worst = worst.max(if cap > 0.0 {
                    used / cap
                } else if used > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                });
            }
        }
        worst
    }

    /// `Σ Δ_i ln(1 + P_i)` (nats).
    pub fn objective(&self, p: &[f64]) -> f64 {
        self.dt.iter().zip(p).map(|(d, p)| d * p.ln_1p()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_cell_rows_by_hand() {
        let p = ThermalParams::new(0.1, 0.3, 37.0, 38.0).unwrap();
        let prof = ArrivalProfile::single(1.0, 2.0).unwrap();
        let g = Grid::new(&p, &prof, 2, 37.0);
        assert_eq!(g.nodes, vec![0.0, 1.0, 2.0]);
        assert!((g.weight[0] - (0.3f64.exp() - 1.0) / 0.3).abs() < 1e-12);
        assert!((g.weight[1] - (0.6f64.exp() - 0.3f64.exp()) / 0.3).abs() < 1e-12);
        assert!((g.cap[1] - 0.6f64.exp() / 0.1).abs() < 1e-12);
        let temps = g.node_temperatures(&[3.0, 3.0]);
        let exact = crate::model::temperature_const_segment(3.0, &p, 37.0, 2.0);
        assert!((temps[2] - exact).abs() < 1e-12);
    }

    #[test]
    fn arrivals_become_nodes() {
        let p = ThermalParams::new(0.1, 0.3, 37.0, 38.0).unwrap();
        let prof = ArrivalProfile::from_pairs(5.0, &[(0.0, 6.08), (1.5, 14.55)]).unwrap();
        let g = Grid::new(&p, &prof, 7, 37.0);
        assert!(g.nodes.contains(&1.5));
        assert!(g.nodes.windows(2).all(|w| w[1] > w[0]));
        let e1 = g.epoch_start[1];
        assert_eq!(g.nodes[e1], 1.5);
        assert_eq!(g.epoch_start[2], g.cells());
    }
}
