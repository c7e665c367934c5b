//! Compares the adjoint gradient with central differences on a small device.

use glonet::adjoint::{evaluate, finite_difference_gradient, relative_l2_error};
use glonet::device::OperatingCondition;
use glonet::local_opt::random_grayscale_init;
use glonet::rcwa::{solve_count, Simulator};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> glonet::error::Result<()> {
    let sim = Simulator::default();
    let condition = OperatingCondition::new(700.0, 50.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let device = random_grayscale_init(32, &mut rng)?;

    let before = solve_count();
    let result = evaluate(&sim, &device, &condition)?;
    println!("efficiency {:.6} from {} solves", result.efficiency, solve_count() - before);

    let fd = finite_difference_gradient(&sim, &device, &condition, 1e-4)?;
    println!("relative L2 error vs differences: {:.3e}", relative_l2_error(&result.gradient, &fd));
    for i in (0..device.len()).step_by(4) {
        println!("segment {i:3}: adjoint {:+.6e}  difference {:+.6e}", result.gradient[i], fd[i]);
    }
    Ok(())
}
