//! Structural properties every optimal policy must have, evaluated as
//! pass/fail checks with the measured slack.

use serde::{Deserialize, Serialize};

use super::feasibility::{check_temperature, ACTIVE_TOL, FEAS_TOL};
use super::params::{ArrivalProfile, ThermalParams};
use super::policy::{PowerPolicy, PowerSegment};
use super::thermal::{
    boundary_temperatures, segment_peak, temperature_at, temperature_rate,
    temperature_trajectory_with_marks, Trajectory, TrajectorySample,
};

/// Samples used by the trajectory-based checks (segment boundaries and
/// arrivals are always added).
const CHECK_SAMPLES: usize = 4001;
/// Temperature rate treated as zero when classifying shapes.
const RATE_ZERO: f64 = 1e-7;
/// Power jump size below which a breakpoint is treated as continuous.
const JUMP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    /// Distance to the failure threshold (negative when failed).
    pub slack: f64,
    pub detail: String,
}

impl PropertyCheck {
    fn new(name: &str, slack: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: slack >= 0.0,
            slack,
            detail: detail.into(),
        }
    }

    fn vacuous(name: &str, why: &str) -> Self {
        Self {
            name: name.into(),
            passed: true,
            slack: f64::INFINITY,
            detail: format!("not applicable: {why}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PropertyReport {
    pub checks: Vec<PropertyCheck>,
}

impl PropertyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &PropertyCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Runs every structural check on a policy claimed optimal for
/// `(params, profile)` with the transmitter starting at `T_e`.
pub fn structural_checks(
    policy: &PowerPolicy,
    params: &ThermalParams,
    profile: &ArrivalProfile,
) -> PropertyReport {
    let marks: Vec<f64> = profile.arrivals().iter().map(|a| a.time).collect();
    let traj = match temperature_trajectory_with_marks(
        policy,
        params,
        params.t_env,
        CHECK_SAMPLES,
        &marks,
    ) {
        Ok(t) => t,
        Err(e) => {
            return PropertyReport {
                checks: vec![PropertyCheck::new("well_formed", -1.0, e.to_string())],
            }
        }
    };
    let ctx = Ctx {
        policy,
        params,
        profile,
        traj: &traj,
    };
    let mut checks = vec![
        ctx.temperature_range(),
        ctx.flat_temperature_constant_power(),
        ctx.monotone_power_monotone_temperature(),
        ctx.stable_levels(),
        ctx.terminal_tightness(),
        ctx.intra_epoch_decrease(),
        ctx.jumps(),
        ctx.saturation_continuity(),
        ctx.return_to_boundary(),
        ctx.epoch_unimodality(),
        ctx.no_return_within_epoch(),
        ctx.epoch_trichotomy(),
        ctx.cool_terminal_matches_staircase(),
    ];
    if profile.num_epochs() == 1 {
        checks.extend([
            ctx.power_lower_bound(),
            ctx.battery_nonempty(),
            ctx.temperature_monotone_concave(),
            ctx.saturation_hold(),
        ]);
    }
    PropertyReport { checks }
}

/// Throughput-optimal policy when only energy causality binds: the shortest
/// path under the cumulative-energy staircase, constant between the arrivals
/// where the battery empties.
pub fn staircase_policy(profile: &ArrivalProfile) -> PowerPolicy {
    let n = profile.num_epochs();
    let mut segs = Vec::new();
    let mut start_epoch = 0;
    let mut used = 0.0;
    while start_epoch < n {
        let t_start = profile.epoch(start_epoch).0;
        let mut best = (f64::INFINITY, start_epoch);
        for k in start_epoch..n {
            let end = profile.epoch(k).1;
            let level = (profile.cumulative_energy(k) - used) / (end - t_start);
            if level <= best.0 {
                best = (level, k);
            }
        }
        let (level, k) = best;
        let end = profile.epoch(k).1;
        segs.push(PowerSegment::constant(t_start, end, level.max(0.0)));
        used = profile.cumulative_energy(k);
        start_epoch = k + 1;
    }
    PowerPolicy::new(segs).expect("staircase segments tile the horizon")
}

struct Ctx<'a> {
    policy: &'a PowerPolicy,
    params: &'a ThermalParams,
    profile: &'a ArrivalProfile,
    traj: &'a Trajectory,
}

impl Ctx<'_> {
    fn samples(&self) -> &[TrajectorySample] {
        &self.traj.samples
    }

    fn horizon(&self) -> f64 {
        self.profile.deadline()
    }

    /// Samples of epoch `e`, half-open except for the last epoch.
    fn epoch_samples(&self, e: usize) -> Vec<TrajectorySample> {
        let (lo, hi) = self.profile.epoch(e);
        let last = e + 1 == self.profile.num_epochs();
        self.samples()
            .iter()
            .filter(|s| s.t >= lo && (s.t < hi || (last && s.t <= hi)))
            .copied()
            .collect()
    }

    fn rate(&self, s: &TrajectorySample) -> f64 {
        temperature_rate(self.params, s.power, s.temperature)
    }

    /// Maximal runs of samples whose temperature stays within 1e-8 of the run
    /// mean and that cover a nontrivial stretch of the horizon.
    fn flat_runs(&self) -> Vec<(usize, usize)> {
        let s = self.samples();
        let min_span = 0.05 * self.horizon();
        let mut runs = Vec::new();
        let mut i = 0;
        while i < s.len() {
            let (mut lo, mut hi) = (s[i].temperature, s[i].temperature);
            let mut j = i;
            while j + 1 < s.len() {
                let t = s[j + 1].temperature;
                let (nlo, nhi) = (lo.min(t), hi.max(t));
                if nhi - nlo > 2e-8 {
                    break;
                }
                lo = nlo;
                hi = nhi;
                j += 1;
            }
            if j >= i + 4 && s[j].t - s[i].t >= min_span {
                runs.push((i, j));
                i = j + 1;
            } else {
                i += 1;
            }
        }
        runs
    }

    /// First instant the temperature reaches the ceiling, from the exact
    /// segment boundaries and interior peaks.
    fn hitting_time(&self) -> Option<f64> {
        let tc = self.params.t_crit;
        let temps = boundary_temperatures(self.policy, self.params, self.params.t_env);
        for (k, seg) in self.policy.segments().iter().enumerate() {
            let (t_peak, peak) = segment_peak(seg, self.params, temps[k]);
            if peak >= tc - FEAS_TOL {
                // The earliest point of this segment at the ceiling.
                if temps[k] >= tc - FEAS_TOL {
                    return Some(seg.start);
                }
                return Some(t_peak);
            }
        }
        None
    }

    fn temperature_range(&self) -> PropertyCheck {
        let lower = self.traj.min_temperature() - (self.params.t_env - 1e-9);
        let exact = check_temperature(self.policy, self.params, self.params.t_env);
        let upper = FEAS_TOL - exact.worst_violation;
        PropertyCheck::new(
            "temperature_range",
            lower.min(upper),
            format!(
                "min T = {:.9}, worst overshoot = {:.3e}",
                self.traj.min_temperature(),
                exact.worst_violation
            ),
        )
    }

    fn flat_temperature_constant_power(&self) -> PropertyCheck {
        let s = self.samples();
        let mut slack = f64::INFINITY;
        let mut detail = String::from("no flat stretches");
        // The ceiling is met tangentially, so samples just before a contact
        // sit within the flatness band while the power is still converging.
        // Only samples two spacings inside the run are compared.
        let margin = 2.0 * self.profile.deadline() / (CHECK_SAMPLES - 1) as f64;
        for (i, j) in self.flat_runs() {
            let (lo, hi) = (s[i].t + margin, s[j].t - margin);
            let run: Vec<_> = s[i..=j].iter().filter(|x| x.t >= lo && x.t <= hi).collect();
            if run.is_empty() {
                continue;
            }
            let mean = run.iter().map(|x| x.power).sum::<f64>() / run.len() as f64;
            let dev = run
                .iter()
                .map(|x| (x.power - mean).abs())
                .fold(0.0, f64::max);
            if 1e-6 - dev < slack {
                slack = 1e-6 - dev;
                detail = format!(
                    "flat on [{:.4}, {:.4}], power spread {dev:.3e}",
                    s[i].t, s[j].t
                );
            }
        }
        PropertyCheck::new("flat_temperature_constant_power", slack, detail)
    }

    fn monotone_power_monotone_temperature(&self) -> PropertyCheck {
        let s = self.samples();
        let nondecreasing = s.windows(2).all(|w| w[1].power >= w[0].power - 1e-12);
        if !nondecreasing {
            return PropertyCheck::vacuous(
                "monotone_power_monotone_temperature",
                "power is not nondecreasing",
            );
        }
        let worst = s
            .windows(2)
            .map(|w| w[1].temperature - w[0].temperature)
            .fold(f64::INFINITY, f64::min);
        PropertyCheck::new(
            "monotone_power_monotone_temperature",
            worst + 1e-9,
            format!("smallest temperature step {worst:.3e}"),
        )
    }

    fn stable_levels(&self) -> PropertyCheck {
        let s = self.samples();
        let mut slack = f64::INFINITY;
        let mut detail = String::from("no flat stretches");
        for (i, j) in self.flat_runs() {
            let level = s[i].temperature;
            let dist = (level - self.params.t_env)
                .abs()
                .min((level - self.params.t_crit).abs());
            if 1e-6 - dist < slack {
                slack = 1e-6 - dist;
                detail = format!("flat at {level:.9} on [{:.4}, {:.4}]", s[i].t, s[j].t);
            }
        }
        PropertyCheck::new("stable_levels", slack, detail)
    }

    fn terminal_tightness(&self) -> PropertyCheck {
        let d = self.horizon();
        let energy_slack = self.profile.total_energy() - self.policy.energy_until(d);
        let temp_slack =
            self.params.t_crit - temperature_at(self.policy, self.params, self.params.t_env, d);
        PropertyCheck::new(
            "terminal_tightness",
            ACTIVE_TOL - energy_slack.min(temp_slack),
            format!("energy slack {energy_slack:.3e}, temperature slack {temp_slack:.3e} at the deadline"),
        )
    }

    fn intra_epoch_decrease(&self) -> PropertyCheck {
        let mut slack = f64::INFINITY;
        let mut detail = String::from("power nonincreasing in every epoch");
        for e in 0..self.profile.num_epochs() {
            let samples = self.epoch_samples(e);
            for w in samples.windows(2) {
                let rise = w[1].power - w[0].power;
                if 1e-8 - rise < slack {
                    slack = 1e-8 - rise;
                    if slack < 0.0 {
                        detail = format!(
                            "power rises by {rise:.3e} at t = {:.6} in epoch {e}",
                            w[1].t
                        );
                    }
                }
            }
        }
        PropertyCheck::new("intra_epoch_decrease", slack, detail)
    }

    fn jumps(&self) -> PropertyCheck {
        let mut slack = f64::INFINITY;
        let mut detail = String::from("no jumps");
        let arrivals: Vec<f64> = self.profile.interior_arrival_times().collect();
        let bp = self.policy.breakpoints();
        for &t in &bp[1..bp.len() - 1] {
            let jump = self.policy.power_at(t) - self.policy.power_left(t);
            if jump.abs() <= JUMP_TOL {
                continue;
            }
            let at_arrival = arrivals.iter().any(|&s| (s - t).abs() <= 1e-9);
            let battery = self.profile.available_before(t) - self.policy.energy_until(t);
            let temp = temperature_at(self.policy, self.params, self.params.t_env, t);
            let margins = [
                if at_arrival { f64::INFINITY } else { -1.0 },
                jump,
                ACTIVE_TOL - battery,
                self.params.t_crit - ACTIVE_TOL - temp,
            ];
            let m = margins.iter().copied().fold(f64::INFINITY, f64::min);
            if m < slack {
                slack = m;
                detail = format!(
                    "jump {jump:+.4e} at t = {t:.6} (arrival: {at_arrival}, battery {battery:.3e}, T = {temp:.6})"
                );
            }
        }
        PropertyCheck::new("jumps", slack, detail)
    }

    fn saturation_continuity(&self) -> PropertyCheck {
        let p_sat = self.params.p_sat();
        match self.hitting_time() {
            Some(t) if t > 0.0 && t < self.horizon() - 1e-9 => {
                let dev = (self.policy.power_left(t) - p_sat)
                    .abs()
                    .max((self.policy.power_at(t) - p_sat).abs());
                PropertyCheck::new(
                    "saturation_continuity",
                    1e-6 - dev,
                    format!("|P - p_sat| = {dev:.3e} at first hit t = {t:.6}"),
                )
            }
            _ => PropertyCheck::vacuous("saturation_continuity", "no interior hit of the ceiling"),
        }
    }

    fn return_to_boundary(&self) -> PropertyCheck {
        let tc = self.params.t_crit;
        match self.hitting_time() {
            Some(t_h) if t_h < self.horizon() - 1e-9 => {
                let later = self
                    .samples()
                    .iter()
                    .filter(|s| s.t > t_h + 1e-9)
                    .map(|s| s.temperature)
                    .fold(f64::NEG_INFINITY, f64::max);
                PropertyCheck::new(
                    "return_to_boundary",
                    later - (tc - ACTIVE_TOL),
                    format!("highest later temperature {later:.9} after hit at {t_h:.6}"),
                )
            }
            _ => PropertyCheck::vacuous("return_to_boundary", "no interior hit of the ceiling"),
        }
    }

    /// Sign pattern of `dT/dt` in an epoch: `+`, `-`, `F` (flat at the
    /// ceiling) or `0` (flat elsewhere, compatible with any neighbour).
    fn epoch_shape(&self, e: usize) -> Vec<char> {
        let tc = self.params.t_crit;
        let mut shape: Vec<char> = Vec::new();
        for s in self.epoch_samples(e) {
            let r = self.rate(&s);
            let c = if r > RATE_ZERO {
                '+'
            } else if r < -RATE_ZERO {
                '-'
            } else if s.temperature >= tc - ACTIVE_TOL {
                'F'
            } else {
                '0'
            };
            if shape.last() != Some(&c) {
                shape.push(c);
            }
        }
        shape
    }

    fn epoch_unimodality(&self) -> PropertyCheck {
        let mut bad = Vec::new();
        for e in 0..self.profile.num_epochs() {
            let signs: String = self
                .epoch_shape(e)
                .into_iter()
                .filter(|c| matches!(c, '+' | '-'))
                .collect();
            let changes = signs.as_bytes().windows(2).filter(|w| w[0] != w[1]).count();
            if changes > 1 || signs.starts_with("-+") {
                bad.push(format!("epoch {e}: {signs}"));
            }
        }
        let detail = if bad.is_empty() {
            "unimodal in every epoch".into()
        } else {
            bad.join("; ")
        };
        PropertyCheck::new(
            "epoch_unimodality",
            if bad.is_empty() { 0.0 } else { -1.0 },
            detail,
        )
    }

    fn no_return_within_epoch(&self) -> PropertyCheck {
        let tc = self.params.t_crit;
        let mut slack = f64::INFINITY;
        let mut detail = String::from("temperature never returns to the ceiling within an epoch");
        for e in 0..self.profile.num_epochs() {
            let samples = self.epoch_samples(e);
            let mut was_at = false;
            let mut left_at: Option<usize> = None;
            for (i, s) in samples.iter().enumerate() {
                match left_at {
                    None => {
                        if s.temperature >= tc - 1e-6 {
                            was_at = true;
                        } else if was_at && s.temperature < tc - ACTIVE_TOL {
                            left_at = Some(i);
                        }
                    }
                    Some(_) => {
                        let prev = samples[i - 1].temperature;
                        let m = (tc - 1e-6 - s.temperature).min(prev - s.temperature + 1e-9);
                        if m < slack {
                            slack = m;
                            detail = format!(
                                "after leaving the ceiling in epoch {e}: T = {:.9} at {:.6}",
                                s.temperature, s.t
                            );
                        }
                    }
                }
            }
        }
        PropertyCheck::new("no_return_within_epoch", slack, detail)
    }

    fn epoch_trichotomy(&self) -> PropertyCheck {
        let mut shapes = Vec::new();
        let mut ok = true;
        for e in 0..self.profile.num_epochs() {
            let shape: String = self
                .epoch_shape(e)
                .into_iter()
                .filter(|&c| c != '0')
                .collect();
            let mut dedup = String::new();
            for c in shape.chars() {
                if !dedup.ends_with(c) {
                    dedup.push(c);
                }
            }
            let allowed = ["", "+", "-", "+-", "F", "+F", "F-", "+F-"];
            if !allowed.contains(&dedup.as_str()) {
                ok = false;
            }
            shapes.push(format!(
                "epoch {e}: {}",
                if dedup.is_empty() { "flat" } else { &dedup }
            ));
        }
        PropertyCheck::new(
            "epoch_trichotomy",
            if ok { 0.0 } else { -1.0 },
            shapes.join("; "),
        )
    }

    fn cool_terminal_matches_staircase(&self) -> PropertyCheck {
        let d = self.horizon();
        let t_end = temperature_at(self.policy, self.params, self.params.t_env, d);
        if t_end >= self.params.t_crit - ACTIVE_TOL {
            return PropertyCheck::vacuous(
                "cool_terminal_matches_staircase",
                "temperature tight at the deadline",
            );
        }
        let never_hot = check_temperature(self.policy, self.params, self.params.t_env);
        let max_t = self.traj.max_temperature();
        let reference = staircase_policy(self.profile).throughput();
        let got = self.policy.throughput();
        let gap = (reference - got).abs() / reference.abs().max(1e-12);
        let touch_margin =
            if never_hot.active_instants.is_empty() && never_hot.active_intervals.is_empty() {
                f64::INFINITY
            } else {
                -1.0
            };
        PropertyCheck::new(
            "cool_terminal_matches_staircase",
            (1e-3 - gap).min(touch_margin),
            format!("max T = {max_t:.6}, throughput {got:.6} vs energy-only {reference:.6}"),
        )
    }

    fn power_lower_bound(&self) -> PropertyCheck {
        let bound = self
            .params
            .p_sat()
            .min(self.profile.total_energy() / self.horizon());
        let min_p = self
            .samples()
            .iter()
            .map(|s| s.power)
            .fold(f64::INFINITY, f64::min);
        PropertyCheck::new(
            "power_lower_bound",
            min_p - (bound - 1e-8),
            format!("min P = {min_p:.9}, bound {bound:.9}"),
        )
    }

    fn battery_nonempty(&self) -> PropertyCheck {
        let e = self.profile.total_energy();
        let d = self.horizon();
        let min_battery = self
            .samples()
            .iter()
            .filter(|s| s.t < d - 1e-12)
            .map(|s| e - s.energy)
            .fold(f64::INFINITY, f64::min);
        let slack = if min_battery > 0.0 {
            min_battery
        } else {
            min_battery.min(-f64::MIN_POSITIVE)
        };
        PropertyCheck::new(
            "battery_nonempty",
            slack,
            format!("smallest battery before the deadline {min_battery:.3e}"),
        )
    }

    fn temperature_monotone_concave(&self) -> PropertyCheck {
        let s = self.samples();
        let mut worst_rise = f64::INFINITY;
        let mut worst_curv = f64::INFINITY;
        for w in s.windows(2) {
            worst_rise = worst_rise.min(w[1].temperature - w[0].temperature + 1e-8);
        }
        for w in s.windows(3) {
            let (h0, h1) = (w[1].t - w[0].t, w[2].t - w[1].t);
            let s0 = (w[1].temperature - w[0].temperature) / h0;
            let s1 = (w[2].temperature - w[1].temperature) / h1;
            // Second difference scaled to the local spacing.
            let second = (s1 - s0) * 0.5 * (h0 + h1);
            worst_curv = worst_curv.min(1e-8 - second);
        }
        PropertyCheck::new(
            "temperature_monotone_concave",
            worst_rise.min(worst_curv),
            format!("first-difference margin {worst_rise:.3e}, second-difference margin {worst_curv:.3e}"),
        )
    }

    fn saturation_hold(&self) -> PropertyCheck {
        let p_sat = self.params.p_sat();
        let tc = self.params.t_crit;
        match self.hitting_time() {
            Some(t0) if t0 < self.horizon() - 1e-9 => {
                let dev = self
                    .samples()
                    .iter()
                    .filter(|s| s.t >= t0)
                    .map(|s| (s.power - p_sat).abs().max((s.temperature - tc).abs()))
                    .fold(0.0, f64::max);
                PropertyCheck::new(
                    "saturation_hold",
                    1e-6 - dev,
                    format!("largest deviation from saturation after t0 = {t0:.6}: {dev:.3e}"),
                )
            }
            _ => {
                PropertyCheck::vacuous("saturation_hold", "ceiling not reached before the deadline")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::check_energy_causality;

    fn fig() -> ThermalParams {
        ThermalParams::new(0.1, 0.3, 37.0, 38.0).unwrap()
    }

    #[test]
    fn staircase_of_increasing_arrivals() {
        let prof = ArrivalProfile::from_pairs(4.0, &[(0.0, 1.0), (2.0, 6.0)]).unwrap();
        let pol = staircase_policy(&prof);
        assert_eq!(pol.segments().len(), 2);
        assert!((pol.power_at(1.0) - 0.5).abs() < 1e-12);
        assert!((pol.power_at(3.0) - 3.0).abs() < 1e-12);
        let flat = ArrivalProfile::from_pairs(4.0, &[(0.0, 6.0), (2.0, 1.0)]).unwrap();
        let pol = staircase_policy(&flat);
        assert!((pol.power_at(0.5) - 1.75).abs() < 1e-12);
        assert!(check_energy_causality(&pol, &flat).feasible);
    }

    #[test]
    fn negative_jump_fails_jump_check() {
        let prof = ArrivalProfile::from_pairs(4.0, &[(0.0, 8.0), (2.0, 1.0)]).unwrap();
        let pol = PowerPolicy::new(vec![
            PowerSegment::constant(0.0, 2.0, 3.0),
            PowerSegment::constant(2.0, 4.0, 1.0),
        ])
        .unwrap();
        let rep = structural_checks(
            &pol,
            &ThermalParams::new(0.1, 0.3, 37.0, 60.0).unwrap(),
            &prof,
        );
        let jumps = rep.get("jumps").unwrap();
        assert!(!jumps.passed, "{}", jumps.detail);
        assert!(jumps.detail.contains("t = 2.0"));
    }

    #[test]
    fn constant_below_critical_energy_passes() {
        let prof = ArrivalProfile::single(10.0, 3.5).unwrap();
        let pol = PowerPolicy::constant(10.0 / 3.5, 3.5);
        let rep = structural_checks(&pol, &fig(), &prof);
        for c in &rep.checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn increasing_power_within_epoch_fails() {
        let prof = ArrivalProfile::single(5.0, 3.0).unwrap();
        let pol = PowerPolicy::new(vec![
            PowerSegment::constant(0.0, 1.5, 1.0),
            PowerSegment::constant(1.5, 3.0, 2.0),
        ])
        .unwrap();
        let rep = structural_checks(&pol, &fig(), &prof);
        assert!(!rep.get("intra_epoch_decrease").unwrap().passed);
        assert!(
            rep.get("monotone_power_monotone_temperature")
                .unwrap()
                .passed
        );
    }
}
