use glonet::device::{DeviceVector, OperatingCondition};
use glonet::error::Error;
use glonet::local_opt::{boundary_optimize, random_grayscale_init, topology_optimize, TopoOptConfig};
use glonet::rcwa::Simulator;
use glonet::validation::random_binary_device;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cond() -> OperatingCondition {
    OperatingCondition::new(900.0, 60.0)
}

fn init(n: usize, seed: u64) -> DeviceVector {
    random_grayscale_init(n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn zero_step_leaves_the_device_unchanged() {
    let sim = Simulator::default();
    let d = init(256, 1);
    let cfg = TopoOptConfig { iterations: 6, step_size: 0.0, ..TopoOptConfig::default() };
    let trace = topology_optimize(&sim, &d, &cond(), &cfg).unwrap();
    assert_eq!(trace.final_device, d);
    assert!(trace.efficiencies.iter().all(|&e| e == trace.efficiencies[0]));
    assert!(trace.binary_efficiencies.iter().all(|&e| e == trace.binary_efficiencies[0]));
}

#[test]
fn trace_bookkeeping() {
    let sim = Simulator::default();
    let d = init(256, 2);
    let cfg = TopoOptConfig { iterations: 40, ..TopoOptConfig::default() };
    let trace = topology_optimize(&sim, &d, &cond(), &cfg).unwrap();
    assert_eq!(trace.efficiencies.len(), 40);
    assert_eq!(trace.best_so_far.len(), 40);
    assert!(trace.skipped.is_empty());
    assert_eq!(trace.initial, d);
    let start = sim.efficiency(&d.binarized(), &cond()).unwrap();
    assert_eq!(trace.binary_efficiencies[0], start);
    assert!(trace.best_binary_efficiency >= start);
    assert!(trace.best_so_far.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(*trace.best_so_far.last().unwrap(), trace.best_binary_efficiency);
    assert!(trace.best_binary.is_binary());
    assert_eq!(sim.efficiency(&trace.best_binary, &cond()).unwrap(), trace.best_binary_efficiency);
    assert!(trace.final_device.as_slice().iter().all(|v| v.abs() <= 1.0));

    let again = topology_optimize(&sim, &d, &cond(), &cfg).unwrap();
    assert_eq!(trace, again);
}

#[test]
fn invalid_configs_are_rejected() {
    let sim = Simulator::default();
    let d = init(32, 1);
    for cfg in [
        TopoOptConfig { iterations: 0, ..TopoOptConfig::default() },
        TopoOptConfig { step_size: -0.1, ..TopoOptConfig::default() },
        TopoOptConfig { sharpness_end: 0.5, ..TopoOptConfig::default() },
    ] {
        assert!(topology_optimize(&sim, &d, &cond(), &cfg).is_err());
    }
}

#[test]
fn independent_runs_have_widely_spread_results() {
    let sim = Simulator::default();
    let cfg = TopoOptConfig::default();
    let best: Vec<f64> = (0..20)
        .map(|s| topology_optimize(&sim, &init(256, 1000 + s), &cond(), &cfg).unwrap().best_binary_efficiency)
        .collect();
    let mean = best.iter().sum::<f64>() / 20.0;
    let std = (best.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / 20.0).sqrt();
    let max = best.iter().cloned().fold(0.0, f64::max);
    assert!(max > mean + std, "max {max}, mean {mean}, std {std}");
}

#[test]
fn uniform_devices_have_nothing_to_refine() {
    let sim = Simulator::default();
    for v in [1.0, -1.0] {
        let d = DeviceVector::uniform(64, v).unwrap();
        let r = boundary_optimize(&sim, &d, &cond(), 10).unwrap();
        assert_eq!(r.device, d);
        assert_eq!(r.accepted_flips, 0);
        assert_eq!(r.gain(), 0.0);
    }
}

#[test]
fn grayscale_input_is_rejected_with_its_index() {
    let sim = Simulator::default();
    let mut v = vec![1.0; 16];
    v[5] = 0.25;
    let err = boundary_optimize(&sim, &DeviceVector::new(v).unwrap(), &cond(), 10).unwrap_err();
    assert!(matches!(err, Error::NotBinary { index: 5, .. }));
    assert!(err.to_string().contains('5'));
}

#[test]
fn refined_device_is_a_flip_local_optimum() {
    let sim = Simulator::default();
    let d = random_binary_device(128, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let first = boundary_optimize(&sim, &d, &cond(), 200).unwrap();
    assert!(first.efficiency >= first.initial_efficiency);
    let second = boundary_optimize(&sim, &first.device, &cond(), 10).unwrap();
    assert_eq!(second.device, first.device);
    assert_eq!(second.accepted_flips, 0);
    assert_eq!(second.efficiency, first.efficiency);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn refinement_never_loses_efficiency(seed in any::<u64>(), lam in 600.0..1300.0f64, th in 40.0..80.0f64) {
        let sim = Simulator::with_half_order(8);
        let d = random_binary_device(64, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let c = OperatingCondition::new(lam, th);
        let r = boundary_optimize(&sim, &d, &c, 3).unwrap();
        prop_assert!(r.device.is_binary());
        prop_assert!(r.efficiency >= r.initial_efficiency);
        prop_assert_eq!(r.initial_efficiency, sim.efficiency(&d, &c).unwrap());
        prop_assert_eq!(r.efficiency, sim.efficiency(&r.device, &c).unwrap());
    }
}
