use serde::{Deserialize, Serialize};

use super::params::ThermalParams;
use super::policy::{PowerPolicy, PowerSegment, SegmentKind, TILING_EPS};
use crate::error::{Error, Result};

/// Relative slack used to decide that a zero crossing lies strictly inside an interval.
const CROSSING_EPS: f64 = 1e-9;

/// End temperature after holding power `p` for `dt` from `t_start`.
pub fn temperature_const_segment(p: f64, params: &ThermalParams, t_start: f64, dt: f64) -> f64 {
    let decay = (-params.b * dt).exp();
    let target = params.t_env + params.a / params.b * p;
    let mut temp = target + (t_start - target) * decay;
    if params.c != 0.0 {
        temp += params.c / params.b * -(-params.b * dt).exp_m1();
    }
    temp
}

/// End temperature of the reciprocal-exponential segment
/// `P(t) = 1/(β + C·e^{bt}) − 1` on `[t1, t2]`, started at `t_start`.
///
/// The power must stay nonnegative on the whole interval; if it crosses zero
/// strictly inside, [`Error::SignChange`] tells the caller where to split.
pub fn temperature_recip_segment(
    beta: f64,
    c: f64,
    params: &ThermalParams,
    t_start: f64,
    t1: f64,
    t2: f64,
) -> Result<f64> {
    if !(beta >= 0.0 && c >= 0.0) || (beta == 0.0 && c == 0.0) {
        return Err(Error::MalformedPolicy(format!(
            "reciprocal-exponential multipliers must be nonnegative and not both zero (beta = {beta}, C = {c})"
        )));
    }
    if t2 < t1 {
        return Err(Error::MalformedPolicy(format!(
            "interval [{t1}, {t2}] is reversed"
        )));
    }
    let kind = SegmentKind::ReciprocalExp {
        energy_mult: beta,
        temp_mult: c,
        rate: params.b,
    };
    let span = (t2 - t1).max(1.0);
    match kind.zero_crossing() {
        Some(z) if z > t1 + CROSSING_EPS * span && z < t2 - CROSSING_EPS * span => {
            return Err(Error::SignChange {
                t1,
                t2,
                crossing: z,
            });
        }
        // Nonpositive throughout: the clamp makes this a Constant(0) segment.
        Some(z) if z <= t1 + CROSSING_EPS * span => {
            return Ok(temperature_const_segment(0.0, params, t_start, t2 - t1));
        }
        None if beta >= 1.0 => return Ok(temperature_const_segment(0.0, params, t_start, t2 - t1)),
        _ => {}
    }
    Ok(recip_temperature(beta, c, params, t_start, t1, t2))
}

/// Closed-form temperature at `t2` for positive reciprocal-exponential power.
fn recip_temperature(
    beta: f64,
    c: f64,
    params: &ThermalParams,
    t_start: f64,
    t1: f64,
    t2: f64,
) -> f64 {
    let b = params.b;
    let dt = t2 - t1;
    let relax = -(-b * dt).exp_m1(); // 1 − e^{−bΔ}
    let base = temperature_const_segment(0.0, params, t_start, dt);
    // a·e^{−b t2}·∫ e^{bτ}/(β + C e^{bτ}) dτ, rearranged to avoid e^{bt} overflow.
    let d1 = beta + c * (b * t1).exp();
    let y = c * (b * t1).exp() * (b * dt).exp_m1() / d1;
    let ratio = if y.abs() < 1e-8 {
        1.0 - 0.5 * y
    } else {
        y.ln_1p() / y
    };
    let heat = params.a * relax / (b * d1) * ratio;
    base + heat - params.a / b * relax
}

/// Temperature reached at `t` (inside the segment) from `t_start` at the segment start.
pub(crate) fn segment_temperature(
    seg: &PowerSegment,
    params: &ThermalParams,
    t_start: f64,
    t: f64,
) -> f64 {
    let t = t.clamp(seg.start, seg.end);
    match seg.kind {
        SegmentKind::Constant { power } => {
            temperature_const_segment(power, params, t_start, t - seg.start)
        }
        SegmentKind::ReciprocalExp {
            energy_mult,
            temp_mult,
            ..
        } => {
            if seg.power_at(seg.start) <= 0.0 {
                temperature_const_segment(0.0, params, t_start, t - seg.start)
            } else {
                recip_temperature(energy_mult, temp_mult, params, t_start, seg.start, t)
            }
        }
    }
}

/// `dT/dt` at `t` given the current temperature.
pub(crate) fn temperature_rate(params: &ThermalParams, power: f64, temp: f64) -> f64 {
    params.a * power - params.b * (temp - params.t_env) + params.c
}

/// Largest temperature on a segment and where it occurs.
///
/// Power is constant or decreasing on every segment, so `dT/dt` changes sign
/// at most once (from + to −) and the peak is an endpoint or the single root
/// of `dT/dt`, located by bisection.
pub(crate) fn segment_peak(seg: &PowerSegment, params: &ThermalParams, t_start: f64) -> (f64, f64) {
    let t_end = segment_temperature(seg, params, t_start, seg.end);
    let mut best = if t_end > t_start {
        (seg.end, t_end)
    } else {
        (seg.start, t_start)
    };
    if let SegmentKind::ReciprocalExp { .. } = seg.kind {
        let rate = |t: f64| {
            temperature_rate(
                params,
                seg.power_at(t),
                segment_temperature(seg, params, t_start, t),
            )
        };
        let (mut lo, mut hi) = (seg.start, seg.end);
        if rate(lo) > 0.0 && rate(hi) < 0.0 {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if rate(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-14 * hi.abs().max(1.0) {
                    break;
                }
            }
            let t = 0.5 * (lo + hi);
            let temp = segment_temperature(seg, params, t_start, t);
            if temp > best.1 {
                best = (t, temp);
            }
        }
    }
    best
}

/// Temperature at every segment boundary, starting with `t0` at time 0.
pub(crate) fn boundary_temperatures(
    policy: &PowerPolicy,
    params: &ThermalParams,
    t0: f64,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(policy.segments().len() + 1);
    let mut temp = t0;
    out.push(temp);
    for seg in policy.segments() {
        temp = segment_temperature(seg, params, temp, seg.end);
        out.push(temp);
    }
    out
}

/// Exact temperature at time `t`.
pub fn temperature_at(policy: &PowerPolicy, params: &ThermalParams, t0: f64, t: f64) -> f64 {
    let mut temp = t0;
    for seg in policy.segments() {
        if t <= seg.end {
            return segment_temperature(seg, params, temp, t);
        }
        temp = segment_temperature(seg, params, temp, seg.end);
    }
    temp
}

/// One sample of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub power: f64,
    pub temperature: f64,
    /// Cumulative consumed energy `B(t)`.
    pub energy: f64,
    /// Instantaneous rate `½·log₂(1 + P)`.
    pub rate: f64,
}

/// Time series of power, temperature, consumed energy and rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&TrajectorySample> {
        self.samples.last()
    }

    pub fn max_temperature(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.temperature)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_temperature(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.temperature)
            .fold(f64::INFINITY, f64::min)
    }

    /// Samples with `lo <= t <= hi`.
    pub fn window(&self, lo: f64, hi: f64) -> impl Iterator<Item = &TrajectorySample> {
        self.samples.iter().filter(move |s| s.t >= lo && s.t <= hi)
    }
}

fn rate_of(power: f64) -> f64 {
    0.5 * power.ln_1p() / std::f64::consts::LN_2
}

/// Samples the exact trajectory on a uniform grid of `n_samples` points plus
/// every segment boundary.
pub fn temperature_trajectory(
    policy: &PowerPolicy,
    params: &ThermalParams,
    t0: f64,
    n_samples: usize,
) -> Result<Trajectory> {
    temperature_trajectory_with_marks(policy, params, t0, n_samples, &[])
}

/// As [`temperature_trajectory`], also sampling exactly at each of `marks`
/// (typically the arrival instants).
pub fn temperature_trajectory_with_marks(
    policy: &PowerPolicy,
    params: &ThermalParams,
    t0: f64,
    n_samples: usize,
    marks: &[f64],
) -> Result<Trajectory> {
    PowerPolicy::new(policy.segments().to_vec())?;
    let n = n_samples.max(2);
    let horizon = policy.horizon();
    let mut times: Vec<f64> = (0..n)
        .map(|k| horizon * k as f64 / (n - 1) as f64)
        .collect();
    times.extend(policy.breakpoints());
    times.extend(
        marks
            .iter()
            .copied()
            .filter(|&m| (0.0..=horizon).contains(&m)),
    );
    times.sort_by(f64::total_cmp);
    // Drop near-duplicates, preferring exact marks and breakpoints over grid points.
    let exact: Vec<f64> = policy
        .breakpoints()
        .into_iter()
        .chain(marks.iter().copied())
        .collect();
    let mut merged: Vec<f64> = Vec::with_capacity(times.len());
    for t in times {
        match merged.last_mut() {
            Some(prev) if (t - *prev).abs() <= TILING_EPS * horizon.max(1.0) * 10.0 => {
                if exact.contains(&t) {
                    *prev = t;
                }
            }
            _ => merged.push(t),
        }
    }

    let mut samples = Vec::with_capacity(merged.len());
    let segs = policy.segments();
    let mut idx = 0;
    let mut seg_temp = t0;
    let mut seg_energy = 0.0;
    for &t in &merged {
        while idx + 1 < segs.len() && t >= segs[idx].end {
            seg_temp = segment_temperature(&segs[idx], params, seg_temp, segs[idx].end);
            seg_energy += segs[idx].energy_until(segs[idx].end);
            idx += 1;
        }
        let seg = &segs[idx];
        let power = seg.power_at(t);
        samples.push(TrajectorySample {
            t,
            power,
            temperature: segment_temperature(seg, params, seg_temp, t),
            energy: seg_energy + seg.energy_until(t),
            rate: rate_of(power),
        });
    }
    Ok(Trajectory { samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::integrate_ode_rk4;

    fn fig() -> ThermalParams {
        ThermalParams::new(0.1, 0.3, 37.0, 38.0).unwrap()
    }

    #[test]
    fn constant_segment_closed_form() {
        let p = fig();
        assert_eq!(temperature_const_segment(0.0, &p, 37.0, 5.0), 37.0);
        assert_eq!(temperature_const_segment(3.0, &p, 37.4, 0.0), 37.4);
        assert!((temperature_const_segment(3.0, &p, 37.0, 1e4) - 38.0).abs() < 1e-12);
        let t = 2f64.ln() / 0.3;
        assert!((temperature_const_segment(3.0, &p, 37.0, t) - 37.5).abs() < 1e-12);
        assert!((temperature_const_segment(3.0, &p, 37.0, 2.31) - 37.5).abs() < 1e-3);
    }

    #[test]
    fn heat_source_shifts_environment() {
        let p = ThermalParams::with_heat_source(0.1, 0.3, 0.06, 37.0, 38.0).unwrap();
        // Equilibrium of a·0 − b(T − T_e) + c is T_e + c/b = 37.2.
        assert!((temperature_const_segment(0.0, &p, 37.0, 1e3) - 37.2).abs() < 1e-12);
    }

    #[test]
    fn recip_segment_matches_rk4() {
        let p = fig();
        let end = temperature_recip_segment(0.0, 0.09541, &p, 37.0, 0.0, 2.0).unwrap();
        let power = |t: f64| (1.0 / (0.09541 * (0.3 * t).exp()) - 1.0).max(0.0);
        let traj = integrate_ode_rk4(power, &p, 37.0, 2.0, 1e-4);
        assert!((end - traj.last().unwrap().temperature).abs() < 1e-6);
        assert_eq!(
            temperature_recip_segment(0.1, 0.2, &p, 37.3, 1.0, 1.0).unwrap(),
            37.3
        );
    }

    #[test]
    fn recip_segment_rejects_internal_sign_change() {
        let p = fig();
        // 1/(0.5 + 0.1e^{0.3t}) − 1 crosses zero at ln(5)/0.3 ≈ 5.36.
        let err = temperature_recip_segment(0.5, 0.1, &p, 37.0, 0.0, 8.0).unwrap_err();
        match err {
            Error::SignChange { crossing, .. } => {
                assert!((crossing - 5f64.ln() / 0.3).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
        let relax = temperature_recip_segment(2.0, 0.1, &p, 37.5, 0.0, 1.0).unwrap();
        assert!((relax - temperature_const_segment(0.0, &p, 37.5, 1.0)).abs() < 1e-14);
    }

    #[test]
    fn trajectory_of_zero_policy_is_flat() {
        let p = fig();
        let traj = temperature_trajectory(&PowerPolicy::zero(3.0), &p, 37.0, 50).unwrap();
        assert!(traj
            .samples
            .iter()
            .all(|s| s.temperature == 37.0 && s.energy == 0.0));
        assert!(traj.samples.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn trajectory_includes_marks_and_boundaries() {
        let p = fig();
        let pol = PowerPolicy::new(vec![
            PowerSegment::constant(0.0, 1.234, 2.0),
            PowerSegment::constant(1.234, 3.0, 1.0),
        ])
        .unwrap();
        let traj = temperature_trajectory_with_marks(&pol, &p, 37.0, 11, &[2.2222]).unwrap();
        for t in [0.0, 1.234, 2.2222, 3.0] {
            assert!(traj.samples.iter().any(|s| s.t == t), "missing {t}");
        }
        let end = traj.last().unwrap();
        assert!((end.energy - (2.0 * 1.234 + 1.766)).abs() < 1e-12);
        let direct = temperature_at(&pol, &p, 37.0, 3.0);
        assert!((end.temperature - direct).abs() < 1e-14);
    }

    #[test]
    fn peak_inside_recip_segment() {
        let p = fig();
        // Start hot with a moderate decreasing power: rises then falls.
        let seg = PowerSegment::recip_exp(0.0, 4.0, 0.05, 0.1, 0.3);
        let (t_peak, temp_peak) = segment_peak(&seg, &p, 37.0);
        let fine = (0..=4000)
            .map(|k| segment_temperature(&seg, &p, 37.0, 4.0 * k as f64 / 4000.0))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(temp_peak >= fine - 1e-12);
        assert!(t_peak > 0.0 && t_peak <= 4.0);
    }
}
