//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero when any criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use glonet::analysis::{efficiency_histogram, pca_fit, pca_project, take_snapshot, total_variance, Snapshot, DEFAULT_BIN_WIDTH};
use glonet::config::RunConfig;
use glonet::device::OperatingCondition;
use glonet::generator::{Architecture, GeneratorParameters};
use glonet::local_opt::{boundary_optimize, random_grayscale_init, topology_optimize, TopoOptConfig};
use glonet::rcwa::Simulator;
use glonet::trainer::{bias_weight, device_loss, device_loss_gradient, generate_ensemble, sample_devices, Trainer, TrainingConfig};
use glonet::validation::{adjoint_check, energy_check, network_check, slab_check, translation_check, CheckResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 2024;

struct Outcome {
    id: u32,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn report(o: &Outcome) {
    println!(
        "{} [{}] {}: {}",
        if o.passed { "PASS" } else { "FAIL" },
        o.id,
        o.name,
        o.detail
    );
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed.as_secs_f64() < limit_s as f64
}

fn checks_line(checks: &[CheckResult]) -> String {
    checks
        .iter()
        .map(|c| format!("{} {:.2e} < {:.0e}", c.name, c.worst, c.tolerance))
        .collect::<Vec<_>>()
        .join("; ")
}

fn physics_battery(sim: &Simulator) -> Outcome {
    let t = Instant::now();
    let checks = vec![
        slab_check(sim.rcwa.fourier_half_order).expect("slab check runs"),
        energy_check(sim, 100, SEED).expect("energy check runs"),
        translation_check(sim, 20, SEED).expect("translation check runs"),
    ];
    let elapsed = t.elapsed();
    Outcome {
        id: 1,
        name: "physics oracle battery",
        passed: checks.iter().all(|c| c.passed) && within(elapsed, 120),
        detail: format!("{} in {:.1}s", checks_line(&checks), elapsed.as_secs_f64()),
    }
}

fn adjoint_gradients(sim: &Simulator) -> Outcome {
    let t = Instant::now();
    let conditions = [OperatingCondition::new(900.0, 60.0), OperatingCondition::new(700.0, 50.0)];
    let check = adjoint_check(sim, &conditions, 10, SEED).expect("adjoint check runs");
    let elapsed = t.elapsed();
    Outcome {
        id: 2,
        name: "adjoint gradient vs central differences",
        passed: check.passed && within(elapsed, 600),
        detail: format!(
            "worst relative L2 {:.2e} < 1e-2 with dominant signs agreeing: {}; 20 devices in {:.1}s",
            check.worst,
            check.passed,
            elapsed.as_secs_f64()
        ),
    }
}

fn network_gradients() -> Outcome {
    let t = Instant::now();
    let check = network_check(SEED).expect("network check runs");
    let elapsed = t.elapsed();
    Outcome {
        id: 3,
        name: "network gradcheck",
        passed: check.passed && within(elapsed, 60),
        detail: format!("worst relative error {:.2e} < 1e-4 in {:.1}s", check.worst, elapsed.as_secs_f64()),
    }
}

fn loss_analytics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst_fd: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    let mut binary_zero = true;
    for _ in 0..200 {
        let n_len = rng.random_range(4..64);
        let n: Vec<f64> = (0..n_len)
            .map(|_| {
                let v: f64 = rng.random_range(0.01..0.99);
                if rng.random::<bool>() { v } else { -v }
            })
            .collect();
        let g: Vec<f64> = (0..n_len).map(|_| rng.random_range(-0.1..0.1)).collect();
        let eff = rng.random_range(0.0..1.0);
        let eff_max = rng.random_range(0.0..1.0);
        let sigma = rng.random_range(0.05..2.0);
        let beta = rng.random_range(0.0..1.0);
        let m = rng.random_range(1..30);
        let analytic = device_loss_gradient(&n, eff, &g, eff_max, sigma, beta, m).unwrap();
        // Quadratic on each sign branch: central differences are exact up to rounding.
        let h = 1e-3;
        for i in 0..n_len {
            let mut up = n.clone();
            let mut dn = n.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (device_loss(&up, eff, &g, eff_max, sigma, beta, m)
                - device_loss(&dn, eff, &g, eff_max, sigma, beta, m))
                / (2.0 * h);
            worst_fd = worst_fd.max((fd - analytic[i]).abs());
        }

        let binary: Vec<f64> = n.iter().map(|v| v.signum()).collect();
        let zero_g = vec![0.0; n_len];
        let reg = device_loss_gradient(&binary, eff, &zero_g, eff_max, sigma, beta, m).unwrap();
        binary_zero &= reg.iter().all(|&v| v == 0.0);

        let (a, b) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let ratio = bias_weight(a, 1.0, sigma) / bias_weight(b, 1.0, sigma);
        let want: f64 = ((a - b) / sigma).exp();
        worst_ratio = worst_ratio.max((ratio / want - 1.0).abs());
    }
    // exp(x)/exp(y) and exp(x - y) agree up to rounding of arguments of
    // magnitude at most 1/0.05 = 20.
    let ratio_bound = 4.0 * 21.0 * f64::EPSILON;
    Outcome {
        id: 4,
        name: "loss analytics",
        passed: worst_fd < 1e-10 && binary_zero && worst_ratio <= ratio_bound,
        detail: format!(
            "gradient vs differences {worst_fd:.2e} < 1e-10; binary regularizer zero: {binary_zero}; \
             bias ratio relative deviation {worst_ratio:.2e} (rounding bound {ratio_bound:.1e})"
        ),
    }
}

struct DeskRun {
    first_mean: f64,
    final_mean: f64,
    generated: Vec<glonet::trainer::GeneratedDevice>,
    baseline_best: Vec<(glonet::device::DeviceVector, f64)>,
    raw_fraction: f64,
    snapshots: [Snapshot; 2],
    elapsed: Duration,
}

fn desk_run(sim: &Simulator) -> DeskRun {
    let t = Instant::now();
    let condition = OperatingCondition::new(900.0, 60.0);
    let config = TrainingConfig {
        batch_size: 10,
        iterations: 300,
        wavelength_range: [900.0, 900.0],
        angle_range: [60.0, 60.0],
        seed: SEED,
        ..TrainingConfig::default()
    };
    let mut trainer = Trainer::new(config, Architecture::default(), *sim).expect("trainer builds");
    let mut first = None;
    trainer
        .run(|t| {
            if t.iteration() == 1 {
                first = Some(take_snapshot(&t.params, &t.sim, &condition, 100, SEED, 1)?);
            }
            Ok(())
        })
        .expect("training runs");
    let last = take_snapshot(&trainer.params, sim, &condition, 100, SEED, 300).expect("snapshot");
    let history = &trainer.history;
    let params: &GeneratorParameters = &trainer.params;

    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 0x5eed);
    let generated = generate_ensemble(params, sim, &condition, 100, &mut rng).expect("generation");
    let raw = sample_devices(params, &condition, 100, &mut rng).expect("sampling");
    let total: usize = raw.iter().map(|d| d.len()).sum();
    let saturated: usize = raw
        .iter()
        .map(|d| d.as_slice().iter().filter(|v| v.abs() > 0.8).count())
        .sum();

    let topo = TopoOptConfig { iterations: 200, seed: SEED, ..TopoOptConfig::default() };
    let mut init_rng = ChaCha8Rng::seed_from_u64(SEED ^ 0xba5e);
    let baseline_best = (0..20)
        .map(|_| {
            let init = random_grayscale_init(256, &mut init_rng).expect("init");
            let trace = topology_optimize(sim, &init, &condition, &topo).expect("topology optimization");
            (trace.best_binary, trace.best_binary_efficiency)
        })
        .collect();

    DeskRun {
        first_mean: history[0].mean_eff,
        final_mean: history[history.len() - 1].mean_eff,
        generated,
        baseline_best,
        raw_fraction: saturated as f64 / total as f64,
        snapshots: [first.expect("first snapshot"), last],
        elapsed: t.elapsed(),
    }
}

fn end_to_end(run: &DeskRun) -> Outcome {
    let best_generated = run.generated[0].efficiency;
    let best_baseline = run.baseline_best.iter().map(|b| b.1).fold(0.0, f64::max);
    let a = run.final_mean >= 2.0 * run.first_mean;
    let b = best_generated >= best_baseline - 0.05;
    let c = run.raw_fraction >= 0.9;
    Outcome {
        id: 5,
        name: "desk-scale end to end",
        passed: a && b && c && within(run.elapsed, 45 * 60),
        detail: format!(
            "(a) mean {:.4} -> {:.4} (need >= 2x): {a}; (b) best generated {:.4} vs baseline best {:.4} - 0.05: {b}; \
             (c) |n|>0.8 fraction {:.3} >= 0.9: {c}; {:.0}s",
            run.first_mean,
            run.final_mean,
            best_generated,
            best_baseline,
            run.raw_fraction,
            run.elapsed.as_secs_f64()
        ),
    }
}

fn boundary_refinement(sim: &Simulator, run: &DeskRun) -> Outcome {
    let condition = OperatingCondition::new(900.0, 60.0);
    let mut gains = Vec::new();
    let mut never_worse = true;
    for g in run.generated.iter().take(20) {
        let r = boundary_optimize(sim, &g.device, &condition, 10).expect("refinement");
        never_worse &= r.efficiency >= r.initial_efficiency && r.device.is_binary();
        gains.push(r.gain());
    }
    gains.sort_by(f64::total_cmp);
    let median = 0.5 * (gains[9] + gains[10]);
    Outcome {
        id: 6,
        name: "boundary refinement of generated devices",
        passed: never_worse && median < 0.05,
        detail: format!(
            "never decreases: {never_worse}; median gain {median:.4} < 0.05; largest gain {:.4}",
            gains[19]
        ),
    }
}

fn evolution(run: &DeskRun) -> Outcome {
    let basis: Vec<_> = run.baseline_best.iter().map(|b| b.0.clone()).collect();
    let model = pca_fit(&basis).expect("pca fit");
    let variance = |s: &Snapshot| {
        let pts: Vec<(f64, f64)> = s
            .devices
            .iter()
            .map(|d| pca_project(&model, &d.device).expect("projection"))
            .collect();
        total_variance(&pts)
    };
    let mean = |s: &Snapshot| {
        let effs: Vec<f64> = s.devices.iter().map(|d| d.efficiency).collect();
        efficiency_histogram(&effs, DEFAULT_BIN_WIDTH).expect("histogram").mean.unwrap_or(0.0)
    };
    let [first, last] = &run.snapshots;
    let (v0, v1) = (variance(first), variance(last));
    let (m0, m1) = (mean(first), mean(last));
    Outcome {
        id: 7,
        name: "design-space evolution",
        passed: v1 < v0 && m1 > m0,
        detail: format!(
            "projected variance {v0:.3} -> {v1:.3} (must shrink): {}; histogram mean {m0:.4} -> {m1:.4} (must grow): {}",
            v1 < v0,
            m1 > m0
        ),
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut cfg = RunConfig::default();
    cfg.seed = SEED;
    cfg.architecture = Architecture {
        segments: 64,
        fc_channels: 16,
        dconv_channels: vec![8, 4],
        ..Architecture::default()
    };
    cfg.training.batch_size = 5;
    cfg.training.iterations = 30;
    let cfg_path = dir.path().join("run.json");
    cfg.save(&cfg_path).expect("config written");
    let mut histories = Vec::new();
    for name in ["first", "second"] {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_glonet"))
            .args(["--config", path(&cfg_path), "--out", path(&out), "--threads", "1", "train"])
            .output()
            .expect("binary runs");
        if !status.status.success() {
            return Outcome {
                id: 8,
                name: "serial determinism",
                passed: false,
                detail: String::from_utf8_lossy(&status.stderr).into_owned(),
            };
        }
        histories.push(fs::read(out.join("history.csv")).expect("history written"));
    }
    let same = histories[0] == histories[1];
    Outcome {
        id: 8,
        name: "serial determinism",
        passed: same,
        detail: format!("history.csv byte-identical across two --threads 1 runs: {same} ({} bytes)", histories[0].len()),
    }
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn main() {
    let sim = Simulator::default();
    let mut outcomes = Vec::new();
    let mut run = |o: Outcome| {
        report(&o);
        outcomes.push(o.passed);
    };
    run(physics_battery(&sim));
    run(adjoint_gradients(&sim));
    run(network_gradients());
    run(loss_analytics());
    let desk = desk_run(&sim);
    run(end_to_end(&desk));
    run(boundary_refinement(&sim, &desk));
    run(evolution(&desk));
    run(determinism());
    let failed = outcomes.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
