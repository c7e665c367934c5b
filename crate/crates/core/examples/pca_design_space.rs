//! Projects generated devices onto the principal plane of optimized ones,
//! before and after a short training run.

use glonet::analysis::{
    efficiency_histogram, pca_fit, project_snapshots, take_snapshot, total_variance, DEFAULT_BIN_WIDTH,
};
use glonet::device::OperatingCondition;
use glonet::generator::Architecture;
use glonet::local_opt::{random_grayscale_init, topology_optimize, TopoOptConfig};
use glonet::rcwa::Simulator;
use glonet::trainer::{Trainer, TrainingConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> glonet::error::Result<()> {
    let sim = Simulator::default();
    let condition = OperatingCondition::new(900.0, 60.0);
    let arch = Architecture {
        segments: 64,
        fc_channels: 16,
        dconv_channels: vec![8, 4],
        ..Architecture::default()
    };

    let topo = TopoOptConfig { iterations: 60, ..TopoOptConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut basis = Vec::new();
    for _ in 0..6 {
        let init = random_grayscale_init(arch.segments, &mut rng)?;
        basis.push(topology_optimize(&sim, &init, &condition, &topo)?.best_binary);
    }
    let model = pca_fit(&basis)?;

    let config = TrainingConfig {
        batch_size: 6,
        iterations: 40,
        wavelength_range: [900.0, 900.0],
        angle_range: [60.0, 60.0],
        ..TrainingConfig::default()
    };
    let mut trainer = Trainer::new(config, arch, sim)?;
    let before = take_snapshot(&trainer.params, &sim, &condition, 30, 9, 0)?;
    trainer.run(|_| Ok(()))?;
    let after = take_snapshot(&trainer.params, &sim, &condition, 30, 9, 40)?;

    for snap in [&before, &after] {
        let points: Vec<(f64, f64)> = project_snapshots(&model, std::slice::from_ref(snap))?
            .iter()
            .map(|p| (p.x, p.y))
            .collect();
        let effs: Vec<f64> = snap.devices.iter().map(|d| d.efficiency).collect();
        let hist = efficiency_histogram(&effs, DEFAULT_BIN_WIDTH)?;
        println!(
            "iteration {:3}: projected variance {:.3}, mean efficiency {:.4}",
            snap.iteration,
            total_variance(&points),
            hist.mean.unwrap_or(0.0)
        );
    }
    Ok(())
}
