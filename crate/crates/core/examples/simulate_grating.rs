//! Solves one random binary grating and prints every propagating order.

use glonet::device::OperatingCondition;
use glonet::local_opt::random_grayscale_init;
use glonet::rcwa::{Incidence, Simulator};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> glonet::error::Result<()> {
    let sim = Simulator::default();
    let condition = OperatingCondition::new(900.0, 60.0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let device = random_grayscale_init(256, &mut rng)?.binarized();

    let solution = sim.simulate(&device, &condition, Incidence::SubstrateNormal)?;
    println!("period {:.2} nm", condition.period_nm()?);
    for order in -3..=3 {
        if solution.transmitted.is_propagating(order)? {
            println!("T{order:+}: {:.6}", solution.transmitted.efficiency(order)?);
        }
        if solution.reflected.is_propagating(order)? {
            println!("R{order:+}: {:.6}", solution.reflected.efficiency(order)?);
        }
    }
    println!("sum of propagating orders: {:.12}", solution.total_efficiency());
    println!("deflection efficiency: {:.6}", sim.efficiency(&device, &condition)?);
    Ok(())
}
