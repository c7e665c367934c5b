//! Command-line front end: argument parsing and the six commands.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    compare_grids, efficiency_histogram, pca_fit, project_snapshots, run_benchmark, take_snapshot,
    BenchmarkGrid, Method, Snapshot, DEFAULT_BIN_WIDTH,
};
use crate::config::RunConfig;
use crate::device::OperatingCondition;
use crate::error::{Error, Result};
use crate::generator::GeneratorParameters;
use crate::local_opt::boundary_optimize;
use crate::records::{
    cell_device_id, unix_now, write_effmax, write_grid, write_histogram, write_history, write_pca,
    write_timing, DeviceLibrary, DeviceRecord, Provenance, RunStamp,
};
use crate::trainer::{generate_ensemble, Trainer};
use crate::validation::run_battery;

#[derive(Debug, Parser)]
#[command(name = "glonet", version, about = "Metagrating inverse design with a conditional generative optimizer")]
pub struct Cli {
    /// JSON run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration's master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 runs everything serially.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory; overrides the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the generator; writes checkpoint.json, history.csv, effmax.csv.
    Train,
    /// Sample devices from a checkpoint into a device library.
    Generate(GenerateArgs),
    /// Best device per wavelength/angle cell for one method.
    Benchmark(BenchmarkArgs),
    /// Boundary refinement of binary device records.
    Refine(RefineArgs),
    /// PCA projections, histograms and grid comparisons.
    Analyze(AnalyzeArgs),
    /// Run the solver, adjoint and network self-checks.
    Validate,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 900.0)]
    pub wavelength: f64,
    #[arg(long, default_value_t = 60.0)]
    pub angle: f64,
    #[arg(long, default_value_t = 500)]
    pub count: usize,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long, default_value = "baseline")]
    pub method: String,
    /// Trained generator, required by the glonet methods.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Devices per cell; overrides the configuration.
    #[arg(long)]
    pub per_cell: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    /// A device record (.json) or a device library directory.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub iterations: usize,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Device library whose devices define the PCA basis and histogram.
    #[arg(long)]
    pub library: PathBuf,
    /// Training snapshots to project into the basis.
    #[arg(long)]
    pub snapshots: Option<PathBuf>,
    /// Two grid.json files to compare (reference first).
    #[arg(long, num_args = 2)]
    pub compare: Option<Vec<PathBuf>>,
    #[arg(long, default_value_t = DEFAULT_BIN_WIDTH)]
    pub bin_width: f64,
}

/// Configuration after applying command-line overrides.
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub stamp: RunStamp,
}

impl Context {
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let mut config = match &cli.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = cli.seed {
            config.seed = seed;
        }
        if let Some(out) = &cli.out {
            config.output_dir = out.clone();
        }
        let config = config.resolve();
        config.validate()?;
        let out = config.output_dir.clone();
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        let stamp = RunStamp {
            config_sha256: config.hash(),
            seed: config.seed,
        };
        Ok(Self { config, out, stamp })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Parses `args` and runs the command; returns the process exit status.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // Fails only when a pool already exists, e.g. in repeated in-process
        // calls; the existing pool is kept.
        if rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .is_err()
        {
            warn!("thread pool already initialized; --threads ignored");
        }
    }
    let ctx = Context::from_cli(cli)?;
    match &cli.command {
        Command::Train => cmd_train(&ctx),
        Command::Generate(a) => cmd_generate(&ctx, a),
        Command::Benchmark(a) => cmd_benchmark(&ctx, a),
        Command::Refine(a) => cmd_refine(&ctx, a),
        Command::Analyze(a) => cmd_analyze(&ctx, a),
        Command::Validate => cmd_validate(&ctx),
    }
}

pub fn cmd_train(ctx: &Context) -> Result<i32> {
    let cfg = &ctx.config;
    ctx.config.save(&ctx.path("config.json"))?;
    let mut trainer = Trainer::new(cfg.training.clone(), cfg.architecture.clone(), cfg.simulator)?;
    let total = cfg.training.iterations;
    let mut snapshots: Vec<Snapshot> = Vec::new();
    let snap_cfg = &cfg.snapshots;
    let ckpt_dir = ctx.path("checkpoints");
    if snap_cfg.every > 0 && total == 0 {
        snapshots.push(take_snapshot(
            &trainer.params,
            &trainer.sim,
            &snap_cfg.condition,
            snap_cfg.count,
            cfg.seed,
            0,
        )?);
    }
    trainer.run(|t| {
        let it = t.iteration();
        let h = t.history.last().expect("record after step");
        info!(
            "iteration {it}: mean {:.4} max {:.4} |n| {:.3}",
            h.mean_eff, h.max_eff, h.mean_abs_n
        );
        if snap_cfg.due(it, total) {
            snapshots.push(take_snapshot(
                &t.params,
                &t.sim,
                &snap_cfg.condition,
                snap_cfg.count,
                cfg.seed,
                it,
            )?);
        }
        if cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0 && it < total {
            std::fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
            t.params.save(&ckpt_dir.join(format!("iter_{it:05}.json")))?;
        }
        Ok(())
    })?;
    trainer.params.save(&ctx.path("checkpoint.json"))?;
    write_history(&ctx.path("history.csv"), &ctx.stamp, &trainer.history)?;
    write_timing(&ctx.path("timing.csv"), &ctx.stamp, &trainer.history)?;
    write_effmax(&ctx.path("effmax.csv"), &ctx.stamp, &trainer.table)?;
    if !snapshots.is_empty() {
        write_json(&ctx.path("snapshots.json"), &snapshots)?;
    }
    match trainer.history.last() {
        Some(h) => println!(
            "trained {} iterations; final mean efficiency {:.4}, max {:.4}",
            h.iteration, h.mean_eff, h.max_eff
        ),
        None => println!("trained 0 iterations"),
    }
    Ok(0)
}

fn load_checkpoint(ctx: &Context, path: &Path) -> Result<GeneratorParameters> {
    GeneratorParameters::load(path, Some(&ctx.config.architecture))
}

pub fn cmd_generate(ctx: &Context, args: &GenerateArgs) -> Result<i32> {
    let params = load_checkpoint(ctx, &args.checkpoint)?;
    let condition = OperatingCondition::new(args.wavelength, args.angle);
    condition.period_nm()?;
    let extrapolated = !ctx.config.training.contains(&condition);
    if extrapolated {
        warn!(
            "({}, {}) lies outside the trained range; generating anyway",
            args.wavelength, args.angle
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.config.seed);
    let sim = &ctx.config.simulator;
    let devices = generate_ensemble(&params, sim, &condition, args.count, &mut rng)?;
    let now = unix_now();
    let records: Vec<DeviceRecord> = devices
        .into_iter()
        .enumerate()
        .map(|(id, g)| DeviceRecord {
            id,
            device: g.device,
            condition,
            efficiency: g.efficiency,
            provenance: Provenance::Glonet,
            generator_seed: Some(params.seed),
            checkpoint: Some(args.checkpoint.display().to_string()),
            extrapolated,
            created_unix_s: now,
        })
        .collect();
    DeviceLibrary::new(ctx.path("library")).write(&ctx.stamp, &records)?;
    match records.first() {
        Some(best) => println!(
            "generated {} devices; best efficiency {:.4}",
            records.len(),
            best.efficiency
        ),
        None => println!("generated 0 devices"),
    }
    Ok(0)
}

pub fn cmd_benchmark(ctx: &Context, args: &BenchmarkArgs) -> Result<i32> {
    let method: Method = args.method.parse()?;
    let bench = &ctx.config.benchmark;
    let spec = bench.effective_grid();
    let mut settings = bench.settings.clone();
    if let Some(k) = args.per_cell {
        settings.per_cell = k;
    }
    let cells = spec.wavelengths_nm.len() * spec.angles_deg.len();
    if cells * settings.per_cell > 10_000 {
        warn!(
            "benchmark of {} optimizations will take a long time",
            cells * settings.per_cell
        );
    }
    let generator = match (method.needs_generator(), &args.checkpoint) {
        (true, None) => {
            return Err(Error::InvalidInput(format!(
                "method {} requires --checkpoint",
                method.tag()
            )))
        }
        (true, Some(p)) => Some(load_checkpoint(ctx, p)?),
        (false, _) => None,
    };
    let sim = &ctx.config.simulator;
    let grid = run_benchmark(sim, method, &spec, &settings, generator.as_ref())?;
    write_grid(&ctx.path("grid.csv"), &ctx.stamp, &grid)?;
    write_json(&ctx.path("grid.json"), &grid)?;
    let all: Vec<f64> = grid.cells.iter().flat_map(|c| c.efficiencies.clone()).collect();
    write_histogram(
        &ctx.path("hist.csv"),
        &ctx.stamp,
        &efficiency_histogram(&all, DEFAULT_BIN_WIDTH)?,
    )?;
    let provenance = match method {
        Method::Baseline => Provenance::Baseline,
        Method::Glonet => Provenance::Glonet,
        Method::GlonetBoundary => Provenance::BoundaryRefined,
    };
    let now = unix_now();
    let records: Vec<DeviceRecord> = grid
        .cells
        .iter()
        .enumerate()
        .map(|(id, c)| DeviceRecord {
            id,
            device: c.best_device.clone(),
            condition: c.condition,
            efficiency: c.best_efficiency,
            provenance,
            generator_seed: generator.as_ref().map(|g| g.seed),
            checkpoint: args.checkpoint.as_ref().map(|p| p.display().to_string()),
            extrapolated: false,
            created_unix_s: now,
        })
        .collect();
    DeviceLibrary::new(ctx.path("library")).write(&ctx.stamp, &records)?;
    for (k, c) in grid.cells.iter().enumerate() {
        println!(
            "{} lambda={} theta={} best={:.4}",
            cell_device_id(k),
            c.condition.wavelength_nm,
            c.condition.angle_deg,
            c.best_efficiency
        );
    }
    Ok(0)
}

pub fn cmd_refine(ctx: &Context, args: &RefineArgs) -> Result<i32> {
    let records = if args.input.is_dir() {
        DeviceLibrary::new(&args.input).read()?
    } else {
        vec![DeviceRecord::load(&args.input)?]
    };
    let sim = &ctx.config.simulator;
    let mut refined = Vec::with_capacity(records.len());
    for r in &records {
        let res = boundary_optimize(sim, &r.device, &r.condition, args.iterations)?;
        println!(
            "device {}: {:.4} -> {:.4} ({} flips)",
            r.id, res.initial_efficiency, res.efficiency, res.accepted_flips
        );
        refined.push(DeviceRecord {
            device: res.device,
            efficiency: res.efficiency,
            provenance: Provenance::BoundaryRefined,
            created_unix_s: unix_now(),
            ..r.clone()
        });
    }
    DeviceLibrary::new(ctx.path("refined")).write(&ctx.stamp, &refined)?;
    Ok(0)
}

pub fn cmd_analyze(ctx: &Context, args: &AnalyzeArgs) -> Result<i32> {
    let records = DeviceLibrary::new(&args.library).read()?;
    let effs: Vec<f64> = records.iter().map(|r| r.efficiency).collect();
    let hist = efficiency_histogram(&effs, args.bin_width)?;
    write_histogram(&ctx.path("hist.csv"), &ctx.stamp, &hist)?;
    println!(
        "{} devices; max efficiency {}",
        hist.total(),
        hist.max.map_or("n/a".to_string(), |m| format!("{m:.4}"))
    );

    let devices: Vec<_> = records.iter().map(|r| r.device.clone()).collect();
    let model = pca_fit(&devices)?;
    write_json(&ctx.path("pca_model.json"), &model)?;
    let snapshots: Vec<Snapshot> = match &args.snapshots {
        Some(p) => read_json(p)?,
        None => Vec::new(),
    };
    let points = if snapshots.is_empty() {
        let own = Snapshot {
            iteration: 0,
            devices: records
                .iter()
                .map(|r| crate::trainer::GeneratedDevice {
                    device: r.device.clone(),
                    efficiency: r.efficiency,
                })
                .collect(),
        };
        project_snapshots(&model, &[own])?
    } else {
        project_snapshots(&model, &snapshots)?
    };
    write_pca(&ctx.path("pca.csv"), &ctx.stamp, &points)?;

    if let Some(paths) = &args.compare {
        let a: BenchmarkGrid = read_json(&paths[0])?;
        let b: BenchmarkGrid = read_json(&paths[1])?;
        let cmp = compare_grids(&a, &b)?;
        println!(
            "b >= a in {:.1}% of cells; within 0.05 in {:.1}%",
            100.0 * cmp.fraction_higher,
            100.0 * cmp.fraction_within
        );
        write_json(&ctx.path("comparison.json"), &cmp)?;
    }
    Ok(0)
}

pub fn cmd_validate(ctx: &Context) -> Result<i32> {
    let mut failures = Vec::new();
    for (name, result) in run_battery(&ctx.config.simulator, ctx.config.seed) {
        match result {
            Ok(check) => {
                println!("{check}");
                if !check.passed {
                    failures.push(name);
                }
            }
            Err(e) => {
                println!("FAIL {name}: {e}");
                failures.push(name);
            }
        }
    }
    if failures.is_empty() {
        println!("all checks passed");
        Ok(0)
    } else {
        eprintln!("failed checks: {}", failures.join(", "));
        Ok(1)
    }
}
