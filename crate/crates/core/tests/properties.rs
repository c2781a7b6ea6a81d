use proptest::prelude::*;
use thermosched::model::{temperature_const_segment, temperature_recip_segment};
use thermosched::numerics::integrate_ode_rk4;
use thermosched::single::{e_critical, solve_single, solve_unconstrained};
use thermosched::{Regime, ThermalParams};

fn params_strategy() -> impl Strategy<Value = ThermalParams> {
    (0.05f64..0.3, 0.1f64..1.5, 0.3f64..3.0)
        .prop_map(|(a, b, delta)| ThermalParams::new(a, b, 37.0, 37.0 + delta).unwrap())
}

fn t0_of(regime: &Regime) -> Option<f64> {
    match *regime {
        Regime::UnconstrainedSaturated { t0 } | Regime::EnergyLimitedSaturated { t0, .. } => {
            Some(t0)
        }
        _ => None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn constant_segment_matches_rk4(
        params in params_strategy(),
        p in 0.0f64..30.0,
        start in 30.0f64..40.0,
        dt in 0.01f64..4.0,
    ) {
        let exact = temperature_const_segment(p, &params, start, dt);
        let rk = integrate_ode_rk4(|_| p, &params, start, dt, 1e-3).last().unwrap().temperature;
        prop_assert!((exact - rk).abs() < 1e-6, "{exact} vs {rk}");
    }

    #[test]
    fn recip_segment_matches_rk4(
        params in params_strategy(),
        beta in 0.0f64..0.9,
        frac in 0.05f64..0.95,
        t1 in 0.0f64..2.0,
        len in 0.05f64..2.0,
        start in 36.0f64..39.0,
    ) {
        let b = params.b;
        let t2 = t1 + len;
        // Keeps β + C·e^{b t} below one on the whole interval.
        let c = (1.0 - beta) * frac * (-b * t2).exp();
        let exact = temperature_recip_segment(beta, c, &params, start, t1, t2).unwrap();
        let power = |t: f64| 1.0 / (beta + c * (b * (t1 + t)).exp()) - 1.0;
        let rk = integrate_ode_rk4(power, &params, start, len, 1e-3).last().unwrap().temperature;
        prop_assert!((exact - rk).abs() < 1e-6, "{exact} vs {rk}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn single_arrival_is_certified_and_feasible(
        params in params_strategy(),
        deadline in 0.5f64..6.0,
        scale in 0.05f64..2.0,
    ) {
        let energy = scale * params.p_sat() * deadline;
        let rep = solve_single(&params, energy, deadline).unwrap();
        prop_assert!(rep.certified, "{:?}", rep.kkt);
        prop_assert!(rep.energy_used <= energy * (1.0 + 1e-9));
    }

    #[test]
    fn throughput_is_continuous_across_regimes(
        params in params_strategy(),
        deadline in 0.5f64..6.0,
    ) {
        let req = solve_unconstrained(&params, deadline).unwrap().energy;
        for edge in [e_critical(&params, deadline), req] {
            let lo = solve_single(&params, edge * (1.0 - 1e-7), deadline).unwrap();
            let hi = solve_single(&params, edge * (1.0 + 1e-7), deadline).unwrap();
            prop_assert!((lo.throughput - hi.throughput).abs() <= 1e-4, "{} vs {}", lo.throughput, hi.throughput);
        }
    }

    #[test]
    fn throughput_and_t0_are_monotone_in_energy(
        params in params_strategy(),
        deadline in 0.5f64..6.0,
    ) {
        let lo = e_critical(&params, deadline);
        let hi = solve_unconstrained(&params, deadline).unwrap().energy;
        let mut prev: Option<(f64, Option<f64>)> = None;
        for k in 0..=12 {
            let e = lo + (hi - lo) * k as f64 / 12.0;
            let rep = solve_single(&params, e, deadline).unwrap();
            let t0 = t0_of(&rep.regime);
            if let Some((thr, t0_prev)) = prev {
                prop_assert!(rep.throughput >= thr - 1e-9);
                if let (Some(a), Some(b)) = (t0_prev, t0) {
                    prop_assert!(b <= a + 1e-9, "t0 grew from {a} to {b}");
                }
            }
            prev = Some((rep.throughput, t0));
        }
    }
}
