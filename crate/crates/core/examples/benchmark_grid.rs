//! Benchmarks topology optimization on a 2 x 2 grid of conditions.

use glonet::analysis::{run_benchmark, BenchmarkSettings, GridSpec, Method};
use glonet::local_opt::TopoOptConfig;
use glonet::rcwa::Simulator;

fn main() -> glonet::error::Result<()> {
    let spec = GridSpec {
        wavelengths_nm: vec![800.0, 1000.0],
        angles_deg: vec![50.0, 70.0],
    };
    let settings = BenchmarkSettings {
        per_cell: 2,
        topology: TopoOptConfig { iterations: 40, ..TopoOptConfig::default() },
        ..BenchmarkSettings::default()
    };
    let grid = run_benchmark(&Simulator::default(), Method::Baseline, &spec, &settings, None)?;
    for cell in &grid.cells {
        println!(
            "{:6.0} nm {:4.0} deg  best {:.4} of {}",
            cell.condition.wavelength_nm, cell.condition.angle_deg, cell.best_efficiency, cell.device_count
        );
    }
    Ok(())
}
