use crate::model::{ThermalParams, Trajectory, TrajectorySample};

/// Classical fixed-step RK4 for `dT/dt = a·P − b·(T − T_e) + c` together with
/// `dB/dt = P`. Reference integrator for tests; the solvers use closed forms.
pub fn integrate_ode_rk4(
    power: impl Fn(f64) -> f64,
    params: &ThermalParams,
    t0: f64,
    t_end: f64,
    step: f64,
) -> Trajectory {
    let n = ((t_end / step).ceil() as usize).max(1);
    let h = t_end / n as f64;
    let rhs = |t: f64, temp: f64| {
        let p = power(t);
        (
            params.a * p - params.b * (temp - params.t_env) + params.c,
            p,
        )
    };
    let sample = |t: f64, temp: f64, energy: f64| {
        let p = power(t);
        TrajectorySample {
            t,
            power: p,
            temperature: temp,
            energy,
            rate: 0.5 * p.ln_1p() / std::f64::consts::LN_2,
        }
    };
    let mut samples = Vec::with_capacity(n + 1);
    let (mut temp, mut energy) = (t0, 0.0);
    samples.push(sample(0.0, temp, energy));
    for k in 0..n {
        let t = k as f64 * h;
        let (k1, e1) = rhs(t, temp);
        let (k2, e2) = rhs(t + 0.5 * h, temp + 0.5 * h * k1);
        let (k3, e3) = rhs(t + 0.5 * h, temp + 0.5 * h * k2);
        let (k4, e4) = rhs(t + h, temp + h * k3);
        temp += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        energy += h / 6.0 * (e1 + 2.0 * e2 + 2.0 * e3 + e4);
        let t_next = if k + 1 == n {
            t_end
        } else {
            (k + 1) as f64 * h
        };
        samples.push(sample(t_next, temp, energy));
    }
    Trajectory { samples }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::temperature_const_segment;

    fn fig() -> ThermalParams {
        ThermalParams::new(0.1, 0.3, 37.0, 38.0).unwrap()
    }

    #[test]
    fn idle_stays_at_environment() {
        let traj = integrate_ode_rk4(|_| 0.0, &fig(), 37.0, 3.0, 0.01);
        assert!(traj
            .samples
            .iter()
            .all(|s| (s.temperature - 37.0).abs() < 1e-14));
    }

    #[test]
    fn saturation_power_is_an_equilibrium() {
        let p = fig();
        let traj = integrate_ode_rk4(|_| p.p_sat(), &p, 38.0, 5.0, 0.01);
        assert!((traj.max_temperature() - 38.0).abs() < 1e-12);
        assert!((traj.min_temperature() - 38.0).abs() < 1e-12);
    }

    #[test]
    fn constant_power_matches_closed_form() {
        let p = fig();
        let traj = integrate_ode_rk4(|_| 3.0, &p, 37.0, 2.0, 1e-4);
        let exact = temperature_const_segment(3.0, &p, 37.0, 2.0);
        assert!((traj.last().unwrap().temperature - exact).abs() < 1e-8);
        assert!((traj.last().unwrap().energy - 6.0).abs() < 1e-10);
    }

    #[test]
    fn fourth_order_convergence() {
        let p = fig();
        // A smooth, time-varying input so the error is not trivially zero.
        let power = |t: f64| 5.0 / (1.0 + t);
        let reference = integrate_ode_rk4(power, &p, 37.0, 3.0, 1e-4)
            .last()
            .unwrap()
            .temperature;
        let coarse = integrate_ode_rk4(power, &p, 37.0, 3.0, 0.2)
            .last()
            .unwrap()
            .temperature;
        let fine = integrate_ode_rk4(power, &p, 37.0, 3.0, 0.05)
            .last()
            .unwrap()
            .temperature;
        let ratio = (coarse - reference).abs() / (fine - reference).abs();
        assert!(ratio >= 200.0, "ratio {ratio}");
    }
}
