use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reinvest_core::metering::*;
use reinvest_core::{solve, EnergyModelParams, ProblemInstance, SolverConfig, WorkingPrecision};

fn laplace_trace(prec: WorkingPrecision, eps: f64) -> reinvest_core::SolveTrace {
    let n = 500;
    let prob = ProblemInstance::laplace(n).unwrap();
    solve(&prob, &vec![0.0; n], &SolverConfig::default().with_epsilon(eps), prec).unwrap()
}

proptest! {
    #[test]
    fn wrapped_counter_reconstructs_consumption(
        max in 1_000u64..1_000_000_000,
        start_frac in 0.0f64..1.0,
        used_frac in 0.0f64..1.0,
    ) {
        let start = ((max as f64) * start_frac) as u64 % max;
        let used = ((max as f64 - 1.0) * used_frac) as u64;
        let end = (start + used) % max;
        prop_assert_eq!(energy_delta_uj(start, end, max), used);

        let mut stub = StubCounter::from_readings([start, end], max);
        let (sample, _) = measured_energy(&mut stub, 1, || ()).unwrap();
        prop_assert_eq!(sample.joules, used as f64 / 1e6);
    }
}

#[test]
fn stub_median_and_spread() {
    let mut stub = StubCounter::from_readings([0, 4_000_000, 10, 5_000_010, 20, 6_000_020], u64::MAX);
    let (sample, outs) = measured_energy(&mut stub, 3, || 7).unwrap();
    assert_eq!(outs, vec![7, 7, 7]);
    assert_eq!(sample.joules, 5.0);
    assert!((sample.std_dev - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
    assert_eq!(sample.sample_count, 3);
    assert_eq!(sample.backend, Backend::Measured);
}

#[test]
fn stub_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("energy_uj");
    std::fs::write(&path, "9\n\n3\n").unwrap();
    let mut stub = StubCounter::from_file(&path, 10).unwrap();
    let (sample, _) = measured_energy(&mut stub, 1, || ()).unwrap();
    assert_eq!(sample.joules, 4e-6);
    assert!(matches!(measured_energy(&mut stub, 1, || ()), Err(MeteringError::StubExhausted)));
}

#[test]
fn modeled_energy_is_deterministic_and_additive() {
    let params = EnergyModelParams::default();
    let tr = laplace_trace(WorkingPrecision::Binary64, 1e-8);
    let a = modeled_energy(&tr, &params).unwrap();
    let b = modeled_energy(&tr, &params).unwrap();
    assert_eq!(a.joules.to_bits(), b.joules.to_bits());

    let (head, tail) = tr.records.split_at(tr.records.len() / 2);
    let sum = modeled_energy_records(head, &params).unwrap() + modeled_energy_records(tail, &params).unwrap();
    assert!((sum - a.joules).abs() <= 1e-12 * a.joules);

    let mut concat = tr.clone();
    concat.records.extend(tr.records.iter().cloned());
    let doubled = modeled_energy(&concat, &params).unwrap();
    assert!((doubled.joules - 2.0 * a.joules).abs() <= 1e-12 * a.joules);
}

#[test]
fn modeled_energy_matches_the_closed_form() {
    let params = EnergyModelParams::default();
    let tr = laplace_trace(WorkingPrecision::Binary32, 1e-4);
    let c = tr.total_counts();
    let p = 32.0;
    let expect = c.flops as f64 * params.e_c * p + c.loads as f64 * params.r * params.e_t * p * p;
    let got = modeled_energy(&tr, &params).unwrap().joules;
    assert!((got - expect).abs() <= 1e-12 * expect);
}

fn synthetic_joules(s: &CalibrationSample, e_c: f64, rt: f64) -> f64 {
    let p = s.bits as f64;
    s.flops * p * e_c + s.loads * p * p * rt
}

fn calibration_samples() -> Vec<CalibrationSample> {
    let mut out = Vec::new();
    for eps in [1e-2, 1e-4, 1e-6] {
        for prec in [WorkingPrecision::Binary32, WorkingPrecision::Binary64] {
            out.push(CalibrationSample::from_trace(&laplace_trace(prec, eps), 500, 0.0));
        }
    }
    out
}

#[test]
fn calibration_recovers_exact_costs() {
    let (e_c, e_t, r) = (2.5, 30.0, 1e-4);
    let mut samples = calibration_samples();
    for s in &mut samples {
        s.joules = synthetic_joules(s, e_c, r * e_t);
    }
    let fit = calibrate_params(&samples, r).unwrap();
    assert!((fit.e_c - e_c).abs() <= 1e-9 * e_c);
    assert!((fit.e_t - e_t).abs() <= 1e-9 * e_t);
    assert_eq!(fit.r, r);
}

#[test]
fn calibration_tolerates_small_noise() {
    // Transfer and compute terms of comparable size.
    let (e_c, e_t, r) = (2.5, 500.0, 1e-4);
    let mut samples = calibration_samples();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for s in &mut samples {
        s.joules = synthetic_joules(s, e_c, r * e_t) * rng.gen_range(0.99..1.01);
    }
    let fit = calibrate_params(&samples, r).unwrap();
    assert!((fit.e_c / e_c - 1.0).abs() < 0.05, "{}", fit.e_c);
    assert!((fit.e_t / e_t - 1.0).abs() < 0.05, "{}", fit.e_t);
}

#[test]
fn powercap_smoke() {
    match PowercapCounter::open(DEFAULT_POWERCAP_PATH) {
        Ok(mut c) => match c.read_uj() {
            Ok(v) => assert!(v <= c.max_range_uj()),
            Err(MeteringError::PermissionDenied(_)) => {}
            Err(e) => panic!("{e}"),
        },
        Err(_) => eprintln!("powercap counter not available; skipping"),
    }
}
