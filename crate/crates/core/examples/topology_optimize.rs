//! Runs adjoint topology optimization from a smoothed random start.

use glonet::device::OperatingCondition;
use glonet::local_opt::{random_grayscale_init, topology_optimize, TopoOptConfig};
use glonet::rcwa::Simulator;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> glonet::error::Result<()> {
    let sim = Simulator::default();
    let condition = OperatingCondition::new(900.0, 60.0);
    let config = TopoOptConfig { iterations: 100, ..TopoOptConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = random_grayscale_init(256, &mut rng)?;

    let trace = topology_optimize(&sim, &init, &condition, &config)?;
    for k in (0..config.iterations).step_by(10) {
        println!(
            "iter {k:3}  grayscale {:.4}  binary {:.4}",
            trace.efficiencies[k], trace.binary_efficiencies[k]
        );
    }
    println!("best binary efficiency {:.4}", trace.best_binary_efficiency);
    println!("final |n| mean {:.3}", trace.final_device.mean_abs());
    Ok(())
}
