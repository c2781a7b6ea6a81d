use serde::{Deserialize, Serialize};

use super::params::{ArrivalProfile, ThermalParams};
use super::policy::PowerPolicy;
use super::thermal::{segment_peak, segment_temperature};

/// Violation (temperature or energy units) still counted as feasible.
pub const FEAS_TOL: f64 = 1e-7;
/// Slack below which a constraint is reported as active.
pub const ACTIVE_TOL: f64 = 1e-5;

/// Outcome of checking one constraint family against a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// Largest positive violation, 0 when nothing is violated.
    pub worst_violation: f64,
    /// Where the smallest slack occurs.
    pub worst_at: f64,
    /// Isolated instants where the constraint is tight.
    pub active_instants: Vec<f64>,
    /// Maximal intervals on which the constraint stays tight.
    pub active_intervals: Vec<(f64, f64)>,
}

impl FeasibilityReport {
    fn from_parts(
        worst_slack: f64,
        worst_at: f64,
        instants: Vec<f64>,
        intervals: Vec<(f64, f64)>,
    ) -> Self {
        let worst_violation = (-worst_slack).max(0.0);
        Self {
            feasible: worst_violation <= FEAS_TOL,
            worst_violation,
            worst_at,
            active_instants: instants,
            active_intervals: intervals,
        }
    }

    /// True when `t` is an active instant or inside an active interval.
    pub fn is_active_at(&self, t: f64, tol: f64) -> bool {
        self.active_instants.iter().any(|&s| (s - t).abs() <= tol)
            || self
                .active_intervals
                .iter()
                .any(|&(lo, hi)| t >= lo - tol && t <= hi + tol)
    }
}

/// Checks `∫_0^t P ≤ Σ_{s_i < t} E_i` at every epoch end. The bound is
/// constant inside an epoch and the consumed energy nondecreasing, so these
/// points suffice.
pub fn check_energy_causality(policy: &PowerPolicy, profile: &ArrivalProfile) -> FeasibilityReport {
    let mut worst_slack = f64::INFINITY;
    let mut worst_at = 0.0;
    let mut instants = Vec::new();
    for e in 0..profile.num_epochs() {
        let (_, end) = profile.epoch(e);
        let slack = profile.cumulative_energy(e) - policy.energy_until(end);
        if slack < worst_slack {
            worst_slack = slack;
            worst_at = end;
        }
        if slack <= ACTIVE_TOL {
            instants.push(end);
        }
    }
    FeasibilityReport::from_parts(worst_slack, worst_at, instants, Vec::new())
}

/// Checks `T(t) ≤ T_c` on all of `[0, D]`, exactly: segment endpoints plus the
/// single interior maximum a segment can have.
pub fn check_temperature(
    policy: &PowerPolicy,
    params: &ThermalParams,
    t0: f64,
) -> FeasibilityReport {
    let t_crit = params.t_crit;
    let mut worst_slack = t_crit - t0;
    let mut worst_at = 0.0;
    let mut instants = Vec::new();
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    let mut temp = t0;
    if worst_slack <= ACTIVE_TOL {
        instants.push(0.0);
    }
    for seg in policy.segments() {
        let end_temp = segment_temperature(seg, params, temp, seg.end);
        let (t_peak, peak) = segment_peak(seg, params, temp);
        if t_crit - peak < worst_slack {
            worst_slack = t_crit - peak;
            worst_at = t_peak;
        }
        let start_tight = t_crit - temp <= ACTIVE_TOL;
        let end_tight = t_crit - end_temp <= ACTIVE_TOL;
        if start_tight && end_tight {
            // Temperature is monotone between these endpoints or peaks above
            // them; either way it stays within tolerance of the ceiling.
            match intervals.last_mut() {
                Some(last) if (last.1 - seg.start).abs() <= 1e-12 => last.1 = seg.end,
                _ => intervals.push((seg.start, seg.end)),
            }
            instants.retain(|&s| (s - seg.start).abs() > 1e-12);
        } else {
            if end_tight {
                instants.push(seg.end);
            }
            if t_crit - peak <= ACTIVE_TOL && t_peak > seg.start && t_peak < seg.end {
                instants.push(t_peak);
            }
        }
        temp = end_temp;
    }
    instants.sort_by(f64::total_cmp);
    instants.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    instants.retain(|&s| {
        !intervals
            .iter()
            .any(|&(lo, hi)| s >= lo - 1e-9 && s <= hi + 1e-9)
    });
    FeasibilityReport::from_parts(worst_slack, worst_at, instants, intervals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::policy::PowerSegment;

    fn fig() -> ThermalParams {
        ThermalParams::new(0.1, 0.3, 37.0, 38.0).unwrap()
    }

    #[test]
    fn constant_policy_tight_at_deadline() {
        let prof = ArrivalProfile::single(10.0, 4.0).unwrap();
        let rep = check_energy_causality(&PowerPolicy::constant(2.5, 4.0), &prof);
        assert!(rep.feasible);
        assert_eq!(rep.active_instants, vec![4.0]);
    }

    #[test]
    fn depleting_before_first_arrival() {
        let prof = ArrivalProfile::from_pairs(5.0, &[(0.0, 1.0), (1.5, 10.0)]).unwrap();
        let rep = check_energy_causality(&PowerPolicy::constant(1.0, 5.0), &prof);
        assert!(!rep.feasible);
        assert_eq!(rep.worst_at, 1.5);
        assert!((rep.worst_violation - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_policy_is_cool() {
        let rep = check_temperature(&PowerPolicy::zero(3.0), &fig(), 37.0);
        assert!(rep.feasible);
        assert!(rep.active_instants.is_empty() && rep.active_intervals.is_empty());
    }

    #[test]
    fn constant_six_crosses_at_ln2_over_b() {
        let p = fig();
        let cross = 2f64.ln() / 0.3;
        assert!(check_temperature(&PowerPolicy::constant(6.0, cross - 1e-3), &p, 37.0).feasible);
        let bad = check_temperature(&PowerPolicy::constant(6.0, cross + 1e-3), &p, 37.0);
        assert!(!bad.feasible);
        assert!((bad.worst_at - (cross + 1e-3)).abs() < 1e-12);
    }

    #[test]
    fn interior_peak_is_found() {
        let p = fig();
        // P = 50e^{-0.3t} - 1 overheats early and then cools down.
        let pol =
            PowerPolicy::new(vec![PowerSegment::recip_exp(0.0, 8.0, 0.0, 0.02, 0.3)]).unwrap();
        let rep = check_temperature(&pol, &p, 37.0);
        let (t_max, temp_max) = (0..=8000)
            .map(|k| {
                let t = 8.0 * k as f64 / 8000.0;
                (t, super::super::thermal::temperature_at(&pol, &p, 37.0, t))
            })
            .fold(
                (0.0, f64::NEG_INFINITY),
                |acc, x| if x.1 > acc.1 { x } else { acc },
            );
        assert!(t_max > 0.0 && t_max < 8.0);
        assert!((rep.worst_at - t_max).abs() < 2e-3);
        assert!(rep.worst_violation >= temp_max - 38.0 - 1e-12);
    }

    #[test]
    fn saturated_tail_is_one_interval() {
        let p = fig();
        let pol = PowerPolicy::new(vec![
            PowerSegment::constant(0.0, 1.0, 0.0),
            PowerSegment::constant(1.0, 2.0, 3.0),
            PowerSegment::constant(2.0, 3.0, 3.0),
        ])
        .unwrap();
        let rep = check_temperature(&pol, &p, 38.0);
        assert!(rep.feasible);
        assert!(rep.active_intervals.is_empty());
        assert_eq!(rep.active_instants, vec![0.0]);

        let held = PowerPolicy::new(vec![
            PowerSegment::constant(0.0, 1.0, 3.0),
            PowerSegment::constant(1.0, 3.0, 3.0),
        ])
        .unwrap();
        let rep = check_temperature(&held, &p, 38.0);
        assert_eq!(rep.active_intervals, vec![(0.0, 3.0)]);
        assert!(rep.active_instants.is_empty());
    }
}
