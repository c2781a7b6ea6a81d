use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients of the first-order thermal model
/// `dT/dt = a·P − b·(T − T_e) + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    /// Heat produced per unit transmit power.
    pub a: f64,
    /// Cooling rate towards the environment.
    pub b: f64,
    /// Extra heat rate from other sources (negative for a sink).
    pub c: f64,
    /// Environment temperature.
    pub t_env: f64,
    /// Critical temperature that must never be exceeded.
    pub t_crit: f64,
}

impl ThermalParams {
    pub fn new(a: f64, b: f64, t_env: f64, t_crit: f64) -> Result<Self> {
        Self::with_heat_source(a, b, 0.0, t_env, t_crit)
    }

    pub fn with_heat_source(a: f64, b: f64, c: f64, t_env: f64, t_crit: f64) -> Result<Self> {
        let params = Self {
            a,
            b,
            c,
            t_env,
            t_crit,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.a, self.b, self.c, self.t_env, self.t_crit]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParams(
                "all coefficients must be finite".into(),
            ));
        }
        if self.a <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "a must be positive, got {}",
                self.a
            )));
        }
        if self.b <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "b must be positive, got {}",
                self.b
            )));
        }
        if self.t_crit <= self.t_env {
            return Err(Error::InvalidParams(format!(
                "critical temperature {} must exceed environment temperature {}",
                self.t_crit, self.t_env
            )));
        }
        Ok(())
    }

    /// Largest allowed deviation from the environment temperature.
    pub fn t_delta(&self) -> f64 {
        self.t_crit - self.t_env
    }

    /// Power that holds the temperature exactly at the critical level.
    pub fn p_sat(&self) -> f64 {
        self.t_delta() * self.b / self.a
    }

    pub(crate) fn require_no_heat_source(&self) -> Result<()> {
        if self.c != 0.0 {
            return Err(Error::UnsupportedHeatSource(self.c));
        }
        Ok(())
    }
}

/// One energy arrival: `energy` becomes available at `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub time: f64,
    pub energy: f64,
}

/// Deadline plus the ordered energy arrivals, the first one at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalProfile {
    deadline: f64,
    arrivals: Vec<Arrival>,
}

impl ArrivalProfile {
    pub fn new(deadline: f64, arrivals: Vec<Arrival>) -> Result<Self> {
        if !(deadline.is_finite() && deadline > 0.0) {
            return Err(Error::InvalidProfile(format!(
                "deadline must be positive, got {deadline}"
            )));
        }
        let first = arrivals.first().ok_or_else(|| {
            Error::InvalidProfile("at least one arrival (at t = 0) is required".into())
        })?;
        if first.time != 0.0 {
            return Err(Error::InvalidProfile(format!(
                "first arrival must be at t = 0, got {}",
                first.time
            )));
        }
        for (i, w) in arrivals.windows(2).enumerate() {
            if !(w[1].time > w[0].time) {
                return Err(Error::InvalidProfile(format!(
                    "arrival times must be strictly increasing (arrival {} at {} after {})",
                    i + 1,
                    w[1].time,
                    w[0].time
                )));
            }
        }
        if let Some(last) = arrivals.last() {
            if last.time >= deadline {
                return Err(Error::InvalidProfile(format!(
                    "arrival at {} is not before the deadline {deadline}",
                    last.time
                )));
            }
        }
        for (i, arr) in arrivals.iter().enumerate() {
            if !(arr.energy.is_finite() && arr.energy >= 0.0) {
                return Err(Error::InvalidProfile(format!(
                    "arrival {i} has invalid energy {}",
                    arr.energy
                )));
            }
        }
        Ok(Self { deadline, arrivals })
    }

    /// A single arrival of `energy` at `t = 0`.
    pub fn single(energy: f64, deadline: f64) -> Result<Self> {
        Self::new(deadline, vec![Arrival { time: 0.0, energy }])
    }

    pub fn from_pairs(deadline: f64, pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            deadline,
            pairs
                .iter()
                .map(|&(time, energy)| Arrival { time, energy })
                .collect(),
        )
    }

    pub fn deadline(&self) -> f64 {
        self.deadline
    }

    pub fn arrivals(&self) -> &[Arrival] {
        &self.arrivals
    }

    pub fn num_epochs(&self) -> usize {
        self.arrivals.len()
    }

    /// Start and end of epoch `e`, the last epoch ending at the deadline.
    pub fn epoch(&self, e: usize) -> (f64, f64) {
        let start = self.arrivals[e].time;
        let end = self.arrivals.get(e + 1).map_or(self.deadline, |a| a.time);
        (start, end)
    }

    /// Energy harvested up to and including epoch `e`.
    pub fn cumulative_energy(&self, e: usize) -> f64 {
        self.arrivals[..=e].iter().map(|a| a.energy).sum()
    }

    pub fn total_energy(&self) -> f64 {
        self.arrivals.iter().map(|a| a.energy).sum()
    }

    /// Index of the epoch containing `t` (epochs are half-open `[s_e, s_{e+1})`;
    /// the deadline belongs to the last epoch).
    pub fn epoch_of(&self, t: f64) -> usize {
        self.arrivals.iter().rposition(|a| a.time <= t).unwrap_or(0)
    }

    /// Energy available for consumption before time `t`.
    pub fn available_before(&self, t: f64) -> f64 {
        self.arrivals
            .iter()
            .take_while(|a| a.time < t)
            .map(|a| a.energy)
            .sum()
    }

    pub fn interior_arrival_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.arrivals.iter().skip(1).map(|a| a.time)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_quantities() {
        let p = ThermalParams::new(0.1, 0.3, 37.0, 38.0).unwrap();
        assert!((p.t_delta() - 1.0).abs() < 1e-12);
        assert!((p.p_sat() - 3.0).abs() < 1e-12);
        let p8 = ThermalParams::new(0.1, 1.1, 37.0, 37.92).unwrap();
        assert!((p8.p_sat() - 10.12).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ThermalParams::new(0.0, 0.3, 37.0, 38.0).is_err());
        assert!(ThermalParams::new(0.1, -1.0, 37.0, 38.0).is_err());
        assert!(ThermalParams::new(0.1, 0.3, 38.0, 38.0).is_err());
        assert!(ThermalParams::new(0.1, 0.3, f64::NAN, 38.0).is_err());
    }

    #[test]
    fn profile_validation() {
        assert!(ArrivalProfile::from_pairs(5.0, &[(0.0, 1.0), (1.5, 2.0)]).is_ok());
        assert!(ArrivalProfile::from_pairs(5.0, &[(0.1, 1.0)]).is_err());
        assert!(ArrivalProfile::from_pairs(5.0, &[(0.0, 1.0), (1.5, 2.0), (1.5, 1.0)]).is_err());
        assert!(ArrivalProfile::from_pairs(5.0, &[(0.0, 1.0), (5.0, 2.0)]).is_err());
        assert!(ArrivalProfile::from_pairs(5.0, &[(0.0, -1.0)]).is_err());
        assert!(ArrivalProfile::from_pairs(0.0, &[(0.0, 1.0)]).is_err());
    }

    #[test]
    fn epochs_and_staircase() {
        let prof = ArrivalProfile::from_pairs(5.0, &[(0.0, 6.08), (1.5, 14.55)]).unwrap();
        assert_eq!(prof.num_epochs(), 2);
        assert_eq!(prof.epoch(0), (0.0, 1.5));
        assert_eq!(prof.epoch(1), (1.5, 5.0));
        assert_eq!(prof.epoch_of(1.5), 1);
        assert_eq!(prof.epoch_of(1.4999), 0);
        assert_eq!(prof.epoch_of(5.0), 1);
        assert!((prof.available_before(1.5) - 6.08).abs() < 1e-12);
        assert!((prof.available_before(1.6) - 20.63).abs() < 1e-12);
        assert!((prof.cumulative_energy(1) - 20.63).abs() < 1e-12);
    }
}
