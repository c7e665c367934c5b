//! Trains a reduced generator over the full condition range and prints the
//! learning curve.

use glonet::generator::Architecture;
use glonet::rcwa::Simulator;
use glonet::trainer::{train, TrainingConfig};

fn main() -> glonet::error::Result<()> {
    let config = TrainingConfig {
        batch_size: 8,
        iterations: 60,
        seed: 11,
        ..TrainingConfig::default()
    };
    let arch = Architecture {
        segments: 64,
        fc_channels: 16,
        dconv_channels: vec![8, 4],
        ..Architecture::default()
    };
    let (_, history, table) = train(config, arch, Simulator::default())?;
    for r in history.iter().step_by(10) {
        println!(
            "iter {:3}  mean {:.4}  max {:.4}  loss {:+.3e}  |n| {:.3}",
            r.iteration, r.mean_eff, r.max_eff, r.loss, r.mean_abs_n
        );
    }
    let visited = table.entries().iter().filter(|e| e.2 > 0.0).count();
    println!("effmax cells visited: {visited}");
    Ok(())
}
