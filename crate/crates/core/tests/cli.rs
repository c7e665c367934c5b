use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use glonet::config::RunConfig;
use glonet::device::DeviceVector;
use glonet::generator::Architecture;
use glonet::records::{read_csv, DeviceLibrary, DeviceRecord, Provenance};
use glonet::rcwa::Simulator;

fn glonet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glonet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn smoke_config(dir: &Path) -> PathBuf {
    let mut cfg = RunConfig::default();
    cfg.seed = 11;
    cfg.architecture = Architecture {
        segments: 64,
        fc_channels: 8,
        dconv_channels: vec![4, 4],
        ..Architecture::default()
    };
    cfg.training.batch_size = 5;
    cfg.training.iterations = 20;
    cfg.snapshots.every = 10;
    cfg.snapshots.count = 8;
    cfg.benchmark.settings.per_cell = 1;
    cfg.benchmark.settings.topology.iterations = 3;
    let path = dir.join("smoke.json");
    cfg.save(&path).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn missing_config_names_the_path() {
    let o = glonet(&["--config", "/nonexistent/run.json", "train"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/run.json"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"schema_version": 1, "learning_rate": 0.1}"#).unwrap();
    let o = glonet(&["--config", s(&path), "--out", s(dir.path()), "train"]);
    assert!(!o.status.success());
}

#[test]
fn zero_threads_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = glonet(&["--threads", "0", "--out", s(dir.path()), "validate"]);
    assert!(!o.status.success());
}

#[test]
fn train_generate_refine_analyze_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path());
    let config_before = fs::read(&cfg).unwrap();
    let run = dir.path().join("run");
    let o = glonet(&["--config", s(&cfg), "--out", s(&run), "--threads", "1", "train"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["checkpoint.json", "history.csv", "effmax.csv", "timing.csv", "snapshots.json", "config.json"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    assert_eq!(fs::read(&cfg).unwrap(), config_before);

    let text = fs::read_to_string(run.join("history.csv")).unwrap();
    assert!(text.starts_with("# config_sha256="));
    assert!(text.contains("seed=11"));
    let (header, rows) = read_csv(&run.join("history.csv")).unwrap();
    assert_eq!(header, ["iteration", "mean_eff", "max_eff", "loss", "mean_abs_n"]);
    assert_eq!(rows.len(), 20);
    let (header, rows) = read_csv(&run.join("effmax.csv")).unwrap();
    assert_eq!(header.len(), 3);
    assert_eq!(rows.len(), 15 * 9);

    let ckpt = run.join("checkpoint.json");
    let gen = dir.path().join("gen");
    let o = glonet(&["--config", s(&cfg), "--out", s(&gen), "generate", "--checkpoint", s(&ckpt), "--count", "6"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("generated 6 devices; best efficiency"));
    let library = gen.join("library");
    let records = DeviceLibrary::new(&library).read().unwrap();
    assert_eq!(records.len(), 6);
    let sim = Simulator::default();
    for r in &records {
        assert!(r.device.is_binary());
        assert_eq!(r.provenance, Provenance::Glonet);
        assert_eq!(r.generator_seed, Some(11));
        assert!(!r.extrapolated);
        let again = sim.efficiency(&r.device, &r.condition).unwrap();
        assert!((again - r.efficiency).abs() < 1e-10);
    }
    assert!(records.windows(2).all(|w| w[0].efficiency >= w[1].efficiency));

    let refined = dir.path().join("refined_run");
    let o = glonet(&["--config", s(&cfg), "--out", s(&refined), "refine", "--input", s(&library), "--iterations", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let after = DeviceLibrary::new(refined.join("refined")).read().unwrap();
    assert_eq!(after.len(), 6);
    for (a, b) in records.iter().zip(&after) {
        assert!(b.efficiency >= a.efficiency);
        assert_eq!(b.provenance, Provenance::BoundaryRefined);
    }

    let analysis = dir.path().join("analysis");
    let o = glonet(&[
        "--config", s(&cfg), "--out", s(&analysis), "analyze",
        "--library", s(&library), "--snapshots", s(&run.join("snapshots.json")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&analysis.join("pca.csv")).unwrap();
    assert_eq!(header, ["device_id", "x", "y", "eff", "iteration"]);
    // Snapshots at iterations 1, 10 and 20.
    assert_eq!(rows.len(), 3 * 8);
    let (header, rows) = read_csv(&analysis.join("hist.csv")).unwrap();
    assert_eq!(header, ["bin_lo", "bin_hi", "count"]);
    let total: usize = rows.iter().map(|r| r[2].parse::<usize>().unwrap()).sum();
    assert_eq!(total, 6);

    let none = dir.path().join("none");
    let o = glonet(&["--config", s(&cfg), "--out", s(&none), "generate", "--checkpoint", s(&ckpt), "--count", "0"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("generated 0 devices"));
    assert!(DeviceLibrary::new(none.join("library")).read().unwrap().is_empty());

    let far = dir.path().join("far");
    let o = glonet(&[
        "--config", s(&cfg), "--out", s(&far), "generate", "--checkpoint", s(&ckpt),
        "--count", "1", "--wavelength", "1400", "--angle", "60",
    ]);
    assert!(o.status.success());
    assert!(DeviceLibrary::new(far.join("library")).read().unwrap()[0].extrapolated);

    let wrong = dir.path().join("wrong.json");
    let mut other = RunConfig::load(&cfg).unwrap();
    other.architecture.fc_channels = 4;
    other.save(&wrong).unwrap();
    let o = glonet(&["--config", s(&wrong), "--out", s(&far), "generate", "--checkpoint", s(&ckpt), "--count", "1"]);
    assert!(!o.status.success());
}

#[test]
fn serial_reruns_reproduce_history_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path());
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = glonet(&["--config", s(&cfg), "--out", s(&out), "--threads", "1", "--seed", "5", "train"]);
        assert!(o.status.success());
        outputs.push(fs::read_to_string(out.join("history.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn refine_rejects_grayscale_records() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = vec![1.0; 64];
    v[17] = 0.3;
    let record = DeviceRecord {
        id: 0,
        device: DeviceVector::new(v).unwrap(),
        condition: glonet::device::OperatingCondition::new(900.0, 60.0),
        efficiency: 0.0,
        provenance: Provenance::Baseline,
        generator_seed: None,
        checkpoint: None,
        extrapolated: false,
        created_unix_s: 0,
    };
    let path = dir.path().join("device.json");
    record.save(&path).unwrap();
    let o = glonet(&["--out", s(dir.path()), "refine", "--input", s(&path)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("17"));
}

#[test]
fn desk_benchmark_writes_nine_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path());
    let out = dir.path().join("bench");
    let o = glonet(&["--config", s(&cfg), "--out", s(&out), "benchmark", "--method", "baseline"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out.join("grid.csv")).unwrap();
    assert_eq!(header, ["lambda_nm", "theta_deg", "best_eff", "device_id"]);
    assert_eq!(rows.len(), 9);
    assert!(out.join("grid.json").exists());
    assert_eq!(DeviceLibrary::new(out.join("library")).read().unwrap().len(), 9);

    let o = glonet(&["--config", s(&cfg), "--out", s(&out), "benchmark", "--method", "glonet"]);
    assert!(!o.status.success());
    let o = glonet(&["--config", s(&cfg), "--out", s(&out), "benchmark", "--method", "nonsense"]);
    assert!(!o.status.success());

    let cmp = dir.path().join("cmp");
    let grid = out.join("grid.json");
    let o = glonet(&[
        "--config", s(&cfg), "--out", s(&cmp), "analyze",
        "--library", s(&out.join("library")), "--compare", s(&grid), s(&grid),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("b >= a in 100.0% of cells"));
}

#[test]
fn validate_passes_on_a_correct_build() {
    let dir = tempfile::tempdir().unwrap();
    let o = glonet(&["--out", s(dir.path()), "validate"]);
    let text = stdout(&o);
    assert!(o.status.success(), "{text}");
    assert!(text.contains("all checks passed"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn config_round_trip_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path());
    let a = RunConfig::load(&cfg).unwrap();
    let b = RunConfig::from_json(&a.to_json()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.hash(), b.hash());
}
