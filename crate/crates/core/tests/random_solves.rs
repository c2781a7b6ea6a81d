//! Seeded random scenarios through the solvers, the structural checks and the oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thermosched::model::structural_checks;
use thermosched::oracle::{build_discrete, oracle_solve};
use thermosched::{solve, ArrivalProfile, MultiConfig, ThermalParams};

fn random_params(rng: &mut ChaCha8Rng) -> ThermalParams {
    let a = rng.gen_range(0.05..0.2);
    let b = rng.gen_range(0.2..1.2);
    let t_delta = rng.gen_range(0.5..2.0);
    ThermalParams::new(a, b, 37.0, 37.0 + t_delta).unwrap()
}

fn random_profile(rng: &mut ChaCha8Rng, params: &ThermalParams, arrivals: usize) -> ArrivalProfile {
    let d = rng.gen_range(1.5..6.0);
    let scale = params.p_sat() * d;
    let mut pairs = vec![(0.0, scale * rng.gen_range(0.1..1.5))];
    let mut t = 0.0;
    for k in 1..arrivals {
        let left = arrivals - k;
        t += (d - t) * rng.gen_range(0.2..0.8) / left as f64;
        pairs.push((t, scale * rng.gen_range(0.1..1.5)));
    }
    ArrivalProfile::from_pairs(d, &pairs).unwrap()
}

fn run(seed: u64, trials: usize, arrivals: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for trial in 0..trials {
        let params = random_params(&mut rng);
        let profile = random_profile(&mut rng, &params, arrivals);
        let rep = solve(&params, &profile, &MultiConfig::default())
            .unwrap_or_else(|e| panic!("trial {trial}: {e} {params:?} {profile:?}"));
        if !rep.certified {
            failures.push(format!(
                "trial {trial}: not certified {:?} {:?} {:?}",
                params, profile, rep.notes
            ));
            continue;
        }
        let checks = structural_checks(&rep.policy, &params, &profile);
        for f in checks.failures() {
            failures.push(format!(
                "trial {trial}: {} ({}) {:?} {:?}",
                f.name, f.detail, params, profile
            ));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn random_single_arrival_solves_pass_all_checks() {
    run(1, 100, 1);
}

#[test]
fn random_two_arrival_solves_pass_all_checks() {
    run(2, 50, 2);
}

#[test]
fn random_three_arrival_solves_pass_all_checks() {
    run(3, 20, 3);
}

#[test]
fn oracle_agrees_on_random_scenarios() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..8 {
        let params = random_params(&mut rng);
        let arrivals = rng.gen_range(1..=3);
        let profile = random_profile(&mut rng, &params, arrivals);
        let rep = solve(&params, &profile, &MultiConfig::default()).unwrap();
        let oracle = oracle_solve(&build_discrete(&params, &profile, 1024).unwrap(), 1e-6).unwrap();
        let rel = (rep.throughput - oracle.objective).abs() / rep.throughput;
        assert!(rel < 1e-3, "{rel} {params:?} {profile:?}");
    }
}
