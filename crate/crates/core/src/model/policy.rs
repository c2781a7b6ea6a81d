use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::quad_adaptive;

/// Boundaries closer than this are treated as coincident when tiling.
pub const TILING_EPS: f64 = 1e-12;

/// Shape of the power on one segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentKind {
    Constant {
        power: f64,
    },
    /// `P(t) = max(0, 1 / (energy_mult + temp_mult·e^{rate·t}) − 1)`, the form
    /// stationarity of the Lagrangian forces between constraint activations.
    ReciprocalExp {
        energy_mult: f64,
        temp_mult: f64,
        rate: f64,
    },
}

impl SegmentKind {
    /// Denominator `β + C·e^{rt}` of a reciprocal-exponential segment.
    fn denominator(energy_mult: f64, temp_mult: f64, rate: f64, t: f64) -> f64 {
        energy_mult + temp_mult * (rate * t).exp()
    }

    /// Instant where `β + C·e^{rt} = 1`, i.e. where the power crosses zero.
    pub fn zero_crossing(&self) -> Option<f64> {
        match *self {
            SegmentKind::Constant { .. } => None,
            SegmentKind::ReciprocalExp {
                energy_mult,
                temp_mult,
                rate,
            } => {
                if temp_mult <= 0.0 || energy_mult >= 1.0 {
                    None
                } else {
                    Some(((1.0 - energy_mult) / temp_mult).ln() / rate)
                }
            }
        }
    }

    pub fn power_at(&self, t: f64) -> f64 {
        match *self {
            SegmentKind::Constant { power } => power,
            SegmentKind::ReciprocalExp {
                energy_mult,
                temp_mult,
                rate,
            } => (1.0 / Self::denominator(energy_mult, temp_mult, rate, t) - 1.0).max(0.0),
        }
    }
}

/// One analytic piece of a policy on the half-open interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSegment {
    pub start: f64,
    pub end: f64,
    pub kind: SegmentKind,
}

impl PowerSegment {
    pub fn constant(start: f64, end: f64, power: f64) -> Self {
        Self {
            start,
            end,
            kind: SegmentKind::Constant { power },
        }
    }

    pub fn recip_exp(start: f64, end: f64, energy_mult: f64, temp_mult: f64, rate: f64) -> Self {
        Self {
            start,
            end,
            kind: SegmentKind::ReciprocalExp {
                energy_mult,
                temp_mult,
                rate,
            },
        }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn power_at(&self, t: f64) -> f64 {
        self.kind.power_at(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start.is_finite() && self.end.is_finite() && self.start < self.end) {
            return Err(Error::MalformedPolicy(format!(
                "segment interval [{}, {}) is empty or not finite",
                self.start, self.end
            )));
        }
        match self.kind {
            SegmentKind::Constant { power } => {
                if !(power.is_finite() && power >= 0.0) {
                    return Err(Error::MalformedPolicy(format!(
                        "constant power {power} is negative"
                    )));
                }
            }
            SegmentKind::ReciprocalExp {
                energy_mult,
                temp_mult,
                rate,
            } => {
                if !(energy_mult >= 0.0 && temp_mult >= 0.0 && rate > 0.0) {
                    return Err(Error::MalformedPolicy(format!(
                        "reciprocal-exponential multipliers must be nonnegative (beta = {energy_mult}, C = {temp_mult})"
                    )));
                }
                if energy_mult == 0.0 && temp_mult == 0.0 {
                    return Err(Error::MalformedPolicy("beta and C are both zero".into()));
                }
            }
        }
        Ok(())
    }

    /// Exact `∫ P` over `[start, min(t, end)]`.
    pub fn energy_until(&self, t: f64) -> f64 {
        let hi = t.min(self.end);
        if hi <= self.start {
            return 0.0;
        }
        match self.kind {
            SegmentKind::Constant { power } => power * (hi - self.start),
            SegmentKind::ReciprocalExp {
                energy_mult,
                temp_mult,
                rate,
            } => recip_energy(energy_mult, temp_mult, rate, self.start, hi),
        }
    }

    /// Exact `∫ e^{rate·τ} P(τ) dτ` over the whole segment.
    pub fn weighted_heat(&self, rate: f64) -> f64 {
        self.weighted_heat_until(rate, self.end)
    }

    pub fn weighted_heat_until(&self, rate: f64, t: f64) -> f64 {
        let hi = t.min(self.end);
        if hi <= self.start {
            return 0.0;
        }
        match self.kind {
            SegmentKind::Constant { power } => power * exp_integral(rate, self.start, hi),
            SegmentKind::ReciprocalExp {
                energy_mult,
                temp_mult,
                rate: r,
            } => {
                debug_assert!((r - rate).abs() <= 1e-12 * rate.max(1.0));
                recip_heat(energy_mult, temp_mult, rate, self.start, hi)
                    - exp_integral(rate, self.start, hi)
            }
        }
    }

    /// `∫ ½·log₂(1 + P)` over the segment.
    pub fn throughput(&self) -> f64 {
        match self.kind {
            SegmentKind::Constant { power } => 0.5 * (1.0 + power).log2() * self.duration(),
            SegmentKind::ReciprocalExp {
                energy_mult,
                temp_mult,
                rate,
            } => {
                if energy_mult == 0.0 {
                    // ½·log₂(1/(C e^{rt})) integrates in closed form.
                    let ln_c = temp_mult.ln();
                    let mid = 0.5 * (self.start + self.end);
                    -(ln_c + rate * mid) * self.duration() / (2.0 * std::f64::consts::LN_2)
                } else {
                    let f = |t: f64| 0.5 * (1.0 + self.kind.power_at(t)).log2();
                    quad_adaptive(f, self.start, self.end, 1e-12).unwrap_or_else(|_| {
                        crate::numerics::simpson_composite(f, self.start, self.end, 20_000)
                    })
                }
            }
        }
    }
}

/// `∫_{t1}^{t2} e^{rτ} dτ`.
pub(crate) fn exp_integral(rate: f64, t1: f64, t2: f64) -> f64 {
    (rate * t1).exp() * (rate * (t2 - t1)).exp_m1() / rate
}

/// `ln(1 + x) / x`, continuous at zero.
fn ln1p_over(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - 0.5 * x + x * x / 3.0
    } else {
        x.ln_1p() / x
    }
}

/// `∫_{t1}^{t2} dτ / (β + C e^{rτ})`, stable as either multiplier goes to zero.
pub(crate) fn recip_integral(beta: f64, c: f64, rate: f64, t1: f64, t2: f64) -> f64 {
    if c == 0.0 {
        return (t2 - t1) / beta;
    }
    // Antiderivative −ln(1 + β e^{−rτ}/C) / (r β).
    let f = |t: f64| {
        let e = (-rate * t).exp();
        let x = beta * e / c;
        -(e / (rate * c)) * ln1p_over(x)
    };
    f(t2) - f(t1)
}

/// `∫_{t1}^{t2} e^{rτ} dτ / (β + C e^{rτ})`.
pub(crate) fn recip_heat(beta: f64, c: f64, rate: f64, t1: f64, t2: f64) -> f64 {
    let d1 = beta + c * (rate * t1).exp();
    let y = c * exp_integral(rate, t1, t2) * rate / d1;
    exp_integral(rate, t1, t2) / d1 * ln1p_over(y)
}

fn recip_energy(beta: f64, c: f64, rate: f64, t1: f64, t2: f64) -> f64 {
    recip_integral(beta, c, rate, t1, t2) - (t2 - t1)
}

/// Ordered segments tiling `[0, D]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPolicy {
    segments: Vec<PowerSegment>,
}

impl PowerPolicy {
    pub fn new(segments: Vec<PowerSegment>) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| Error::MalformedPolicy("policy has no segments".into()))?;
        if first.start.abs() > TILING_EPS {
            return Err(Error::MalformedPolicy(format!(
                "policy starts at {} instead of 0",
                first.start
            )));
        }
        for seg in &segments {
            seg.validate()?;
        }
        for (i, w) in segments.windows(2).enumerate() {
            let gap = w[1].start - w[0].end;
            if gap.abs() > TILING_EPS * w[0].end.abs().max(1.0) {
                let what = if gap > 0.0 { "gap" } else { "overlap" };
                return Err(Error::MalformedPolicy(format!(
                    "{what} between segments {i} and {} ({} vs {})",
                    i + 1,
                    w[0].end,
                    w[1].start
                )));
            }
        }
        Ok(Self { segments })
    }

    pub fn zero(deadline: f64) -> Self {
        Self::constant(0.0, deadline)
    }

    pub fn constant(power: f64, deadline: f64) -> Self {
        Self {
            segments: vec![PowerSegment::constant(0.0, deadline, power)],
        }
    }

    /// Piecewise-constant policy from grid nodes `times[0] = 0 < … < times[n] = D`
    /// and one power value per cell.
    pub fn from_cells(times: &[f64], powers: &[f64]) -> Result<Self> {
        if times.len() != powers.len() + 1 {
            return Err(Error::MalformedPolicy(format!(
                "{} nodes for {} cells",
                times.len(),
                powers.len()
            )));
        }
        let segs = powers
            .iter()
            .enumerate()
            .map(|(i, &p)| PowerSegment::constant(times[i], times[i + 1], p.max(0.0)))
            .collect();
        Self::new(segs)
    }

    pub fn segments(&self) -> &[PowerSegment] {
        &self.segments
    }

    pub fn horizon(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.end)
    }

    /// Segment boundaries including 0 and `D`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self.segments.iter().map(|s| s.start).collect();
        pts.push(self.horizon());
        pts
    }

    fn segment_index(&self, t: f64) -> usize {
        // Half-open segments; the deadline belongs to the last one.
        let idx = self.segments.partition_point(|s| s.end <= t);
        idx.min(self.segments.len() - 1)
    }

    /// Right-continuous value `P(t)`; at the deadline the left limit.
    pub fn power_at(&self, t: f64) -> f64 {
        self.segments[self.segment_index(t)].power_at(t)
    }

    /// Left limit `P(t−)`.
    pub fn power_left(&self, t: f64) -> f64 {
        let idx = self.segments.partition_point(|s| s.end < t);
        let idx = idx.min(self.segments.len() - 1);
        self.segments[idx].power_at(t)
    }

    /// Exact cumulative energy `∫_0^t P`.
    pub fn energy_until(&self, t: f64) -> f64 {
        self.segments
            .iter()
            .take_while(|s| s.start < t)
            .map(|s| s.energy_until(t))
            .sum()
    }

    pub fn total_energy(&self) -> f64 {
        self.energy_until(self.horizon())
    }

    /// `∫_0^D ½·log₂(1 + P)`.
    pub fn throughput(&self) -> f64 {
        self.segments.iter().map(PowerSegment::throughput).sum()
    }

    /// Adds `delta` to the power on `[t1, t2)`; used to build perturbed inputs.
    pub fn perturbed(&self, t1: f64, t2: f64, delta: f64) -> Result<Self> {
        let mut out = Vec::new();
        for seg in &self.segments {
            let cuts = [
                seg.start,
                t1.clamp(seg.start, seg.end),
                t2.clamp(seg.start, seg.end),
                seg.end,
            ];
            for w in cuts.windows(2) {
                if w[1] - w[0] <= TILING_EPS {
                    continue;
                }
                let inside = w[0] >= t1 && w[1] <= t2;
                let piece = PowerSegment {
                    start: w[0],
                    end: w[1],
                    kind: seg.kind,
                };
                if inside {
                    match seg.kind {
                        SegmentKind::Constant { power } => {
                            out.push(PowerSegment::constant(w[0], w[1], (power + delta).max(0.0)))
                        }
                        _ => {
                            // Approximate the shifted curve by fine constant cells.
                            let n = 64;
                            let h = (w[1] - w[0]) / n as f64;
                            for k in 0..n {
                                let a = w[0] + k as f64 * h;
                                let b = if k + 1 == n { w[1] } else { a + h };
                                let p = piece.power_at(0.5 * (a + b)) + delta;
                                out.push(PowerSegment::constant(a, b, p.max(0.0)));
                            }
                        }
                    }
                } else {
                    out.push(piece);
                }
            }
        }
        Self::new(out)
    }
}

/// Appends `[t_a, t_b)` with power `max(0, 1/(β + C e^{rt}) − 1)`, splitting at
/// the zero crossing so every stored segment is sign-definite.
pub fn push_recip_pieces(
    out: &mut Vec<PowerSegment>,
    t_a: f64,
    t_b: f64,
    energy_mult: f64,
    temp_mult: f64,
    rate: f64,
) {
    if t_b - t_a <= TILING_EPS {
        return;
    }
    if temp_mult <= 0.0 {
        let p = if energy_mult > 0.0 {
            (1.0 / energy_mult - 1.0).max(0.0)
        } else {
            0.0
        };
        out.push(PowerSegment::constant(t_a, t_b, p));
        return;
    }
    let kind = SegmentKind::ReciprocalExp {
        energy_mult,
        temp_mult,
        rate,
    };
    match kind.zero_crossing() {
        None => out.push(PowerSegment::constant(t_a, t_b, 0.0)),
        Some(tz) if tz <= t_a + TILING_EPS => out.push(PowerSegment::constant(t_a, t_b, 0.0)),
        Some(tz) if tz >= t_b - TILING_EPS => out.push(PowerSegment {
            start: t_a,
            end: t_b,
            kind,
        }),
        Some(tz) => {
            out.push(PowerSegment {
                start: t_a,
                end: tz,
                kind,
            });
            out.push(PowerSegment::constant(tz, t_b, 0.0));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiling_is_enforced() {
        let ok = PowerPolicy::new(vec![
            PowerSegment::constant(0.0, 1.0, 2.0),
            PowerSegment::constant(1.0, 2.0, 1.0),
        ]);
        assert!(ok.is_ok());
        let gap = PowerPolicy::new(vec![
            PowerSegment::constant(0.0, 1.0, 2.0),
            PowerSegment::constant(1.1, 2.0, 1.0),
        ]);
        assert!(matches!(gap, Err(Error::MalformedPolicy(_))));
        let overlap = PowerPolicy::new(vec![
            PowerSegment::constant(0.0, 1.0, 2.0),
            PowerSegment::constant(0.9, 2.0, 1.0),
        ]);
        assert!(matches!(overlap, Err(Error::MalformedPolicy(_))));
        assert!(PowerPolicy::new(vec![PowerSegment::constant(0.0, 1.0, -1.0)]).is_err());
    }

    #[test]
    fn constant_energy_and_throughput() {
        let pol = PowerPolicy::constant(3.0, 2.0);
        assert!((pol.energy_until(2.0) - 6.0).abs() < 1e-12);
        assert!((pol.energy_until(1.0) - 3.0).abs() < 1e-12);
        assert!((pol.throughput() - 2.0).abs() < 1e-12);
        let zero = PowerPolicy::zero(3.0);
        assert_eq!(zero.energy_until(2.5), 0.0);
        assert_eq!(zero.throughput(), 0.0);
    }

    #[test]
    fn right_continuity_at_boundaries() {
        let pol = PowerPolicy::new(vec![
            PowerSegment::constant(0.0, 1.0, 2.0),
            PowerSegment::constant(1.0, 2.0, 5.0),
        ])
        .unwrap();
        assert_eq!(pol.power_at(1.0), 5.0);
        assert_eq!(pol.power_left(1.0), 2.0);
        assert_eq!(pol.power_at(2.0), 5.0);
        assert_eq!(pol.power_at(0.0), 2.0);
    }

    fn midpoint_rule(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        (0..n).map(|k| f(a + (k as f64 + 0.5) * h)).sum::<f64>() * h
    }

    #[test]
    fn recip_energy_matches_quadrature() {
        for &(beta, c) in &[(0.0, 0.09541), (0.02, 0.08), (0.5, 1e-4), (0.2, 0.0)] {
            let seg = PowerSegment::recip_exp(0.3, 1.7, beta, c, 0.3);
            if seg.kind.zero_crossing().is_some_and(|z| z < 1.7) {
                continue;
            }
            let exact = seg.energy_until(1.7);
            let num = midpoint_rule(|t| seg.power_at(t), 0.3, 1.7, 200_000);
            assert!(
                (exact - num).abs() < 1e-8,
                "beta {beta} C {c}: {exact} vs {num}"
            );
            let heat = seg.weighted_heat(0.3);
            let num_heat = midpoint_rule(|t| (0.3 * t).exp() * seg.power_at(t), 0.3, 1.7, 200_000);
            assert!((heat - num_heat).abs() < 1e-8, "{heat} vs {num_heat}");
        }
    }

    #[test]
    fn recip_throughput_closed_form_matches_quadrature() {
        let seg = PowerSegment::recip_exp(0.0, 2.0, 0.0, 0.09541, 0.3);
        let exact = seg.throughput();
        let num = midpoint_rule(|t| 0.5 * (1.0 + seg.power_at(t)).log2(), 0.0, 2.0, 200_000);
        assert!((exact - num).abs() < 1e-9);
        let seg2 = PowerSegment::recip_exp(0.0, 2.0, 1e-3, 0.09541, 0.3);
        let num2 = midpoint_rule(|t| 0.5 * (1.0 + seg2.power_at(t)).log2(), 0.0, 2.0, 200_000);
        assert!((seg2.throughput() - num2).abs() < 1e-9);
    }

    #[test]
    fn split_at_zero_crossing() {
        let mut segs = Vec::new();
        // 1/(0.5 + 0.1 e^{t}) − 1 crosses zero at t = ln 5.
        push_recip_pieces(&mut segs, 0.0, 3.0, 0.5, 0.1, 1.0);
        assert_eq!(segs.len(), 2);
        assert!((segs[0].end - 5f64.ln()).abs() < 1e-12);
        assert_eq!(segs[1].kind, SegmentKind::Constant { power: 0.0 });
        let pol = PowerPolicy::new(segs).unwrap();
        assert!(pol.power_at(2.0) == 0.0);
        assert!(pol.power_at(1.0) > 0.0);
    }

    #[test]
    fn perturbation_changes_only_window() {
        let pol = PowerPolicy::constant(2.0, 4.0);
        let p = pol.perturbed(1.0, 2.0, 0.1).unwrap();
        assert_eq!(p.power_at(0.5), 2.0);
        assert!((p.power_at(1.5) - 2.1).abs() < 1e-12);
        assert_eq!(p.power_at(3.0), 2.0);
        assert!((p.total_energy() - 8.1).abs() < 1e-12);
    }
}
