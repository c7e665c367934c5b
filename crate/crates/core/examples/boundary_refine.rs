//! Optimizes a device and then polishes it with boundary flips.

use glonet::device::OperatingCondition;
use glonet::local_opt::{boundary_optimize, random_grayscale_init, topology_optimize, TopoOptConfig};
use glonet::rcwa::Simulator;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> glonet::error::Result<()> {
    let sim = Simulator::default();
    let condition = OperatingCondition::new(1100.0, 55.0);
    let config = TopoOptConfig { iterations: 60, ..TopoOptConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let init = random_grayscale_init(256, &mut rng)?;
    let trace = topology_optimize(&sim, &init, &condition, &config)?;

    let refined = boundary_optimize(&sim, &trace.best_binary, &condition, 10)?;
    println!(
        "efficiency {:.4} -> {:.4} after {} flips",
        refined.initial_efficiency, refined.efficiency, refined.accepted_flips
    );
    Ok(())
}
