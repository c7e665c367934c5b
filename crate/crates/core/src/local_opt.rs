//! Single-device reference optimizers: grayscale topology optimization and
//! binary boundary refinement.

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adjoint::evaluate;
use crate::device::{DeviceVector, OperatingCondition};
use crate::error::{Error, Result};
use crate::generator::layers::{circular_filter, gaussian_kernel};
use crate::rcwa::Simulator;

/// Filter width of the smooth random start, in segments.
pub const INIT_FILTER_SIGMA: f64 = 2.0;
pub const INIT_FILTER_TRUNCATE: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopoOptConfig {
    pub iterations: usize,
    /// Step in index units after normalizing g by its largest magnitude.
    pub step_size: f64,
    /// Projection sharpness at the first and last iteration.
    pub sharpness_start: f64,
    pub sharpness_end: f64,
    /// Weight of the pull towards the projected device, first and last
    /// iteration.
    pub pull_start: f64,
    pub pull_end: f64,
    pub seed: u64,
}

impl Default for TopoOptConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            step_size: 0.05,
            sharpness_start: 1.0,
            sharpness_end: 16.0,
            pull_start: 0.0,
            pull_end: 1.0,
            seed: 0,
        }
    }
}

impl TopoOptConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.iterations < 1 {
            return bad("topology optimization needs at least one iteration");
        }
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return bad("step_size must be finite and non-negative");
        }
        if !(self.sharpness_start > 0.0 && self.sharpness_end >= self.sharpness_start) {
            return bad("projection sharpness must be positive and non-decreasing");
        }
        if !(self.pull_start >= 0.0 && self.pull_end >= self.pull_start) {
            return bad("projection pull must be non-negative and non-decreasing");
        }
        Ok(())
    }

    /// Linear schedule value at 0-based iteration `k`.
    fn ramp(&self, start: f64, end: f64, k: usize) -> f64 {
        if self.iterations <= 1 {
            return end;
        }
        start + (end - start) * k as f64 / (self.iterations - 1) as f64
    }
}

/// `tanh(s n) / tanh(s)`, a smoothed sign that keeps ±1 fixed.
pub fn project(n: f64, sharpness: f64) -> f64 {
    (sharpness * n).tanh() / sharpness.tanh()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub condition: OperatingCondition,
    /// Grayscale efficiency per iteration (NaN where the solve failed).
    pub efficiencies: Vec<f64>,
    /// Efficiency of the sign-thresholded device per iteration.
    pub binary_efficiencies: Vec<f64>,
    /// Best binary efficiency seen up to and including each iteration.
    pub best_so_far: Vec<f64>,
    pub skipped: Vec<usize>,
    pub initial: DeviceVector,
    pub final_device: DeviceVector,
    pub best_binary: DeviceVector,
    pub best_binary_efficiency: f64,
}

/// Uniform draws in [-0.5, 0.5] smoothed by a circular Gaussian filter.
pub fn random_grayscale_init<R: Rng>(segments: usize, rng: &mut R) -> Result<DeviceVector> {
    if segments < 2 {
        return Err(Error::InvalidInput(format!("segments must be >= 2, got {segments}")));
    }
    let raw: Vec<f64> = (0..segments).map(|_| rng.random::<f64>() - 0.5).collect();
    let kernel = gaussian_kernel(INIT_FILTER_SIGMA, INIT_FILTER_TRUNCATE);
    DeviceVector::clamped(circular_filter(&raw, &kernel))
}

/// Gradient ascent with a sharpening binarization pull:
/// `n <- clamp(n + a (g/max|g| + gamma_k (P_k(n) - n)))`.
pub fn topology_optimize(
    sim: &Simulator,
    init: &DeviceVector,
    condition: &OperatingCondition,
    config: &TopoOptConfig,
) -> Result<OptimizationTrace> {
    config.validate()?;
    let iters = config.iterations;
    let mut n = init.clone();
    let mut trace = OptimizationTrace {
        condition: *condition,
        efficiencies: Vec::with_capacity(iters),
        binary_efficiencies: Vec::with_capacity(iters),
        best_so_far: Vec::with_capacity(iters),
        skipped: Vec::new(),
        initial: init.clone(),
        final_device: init.clone(),
        best_binary: init.binarized(),
        best_binary_efficiency: f64::NEG_INFINITY,
    };

    for k in 0..iters {
        let binary = n.binarized();
        match sim.efficiency(&binary, condition) {
            Ok(e) => {
                if e > trace.best_binary_efficiency {
                    trace.best_binary_efficiency = e;
                    trace.best_binary = binary;
                }
                trace.binary_efficiencies.push(e);
            }
            Err(err) => {
                warn!("binary evaluation failed at iteration {k}: {err}");
                trace.binary_efficiencies.push(f64::NAN);
            }
        }
        let eval = match evaluate(sim, &n, condition) {
            Ok(e) => e,
            Err(err) => {
                warn!("iteration {k} skipped: {err}");
                trace.skipped.push(k);
                trace.efficiencies.push(f64::NAN);
                trace.best_so_far.push(trace.best_binary_efficiency);
                continue;
            }
        };
        trace.efficiencies.push(eval.efficiency);
        trace.best_so_far.push(trace.best_binary_efficiency);

        let gmax = eval.gradient.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        let s = config.ramp(config.sharpness_start, config.sharpness_end, k);
        let gamma = config.ramp(config.pull_start, config.pull_end, k);
        let a = config.step_size;
        let next: Vec<f64> = n
            .as_slice()
            .iter()
            .zip(&eval.gradient)
            .map(|(&v, &g)| {
                let ghat = if gmax > 0.0 { g / gmax } else { 0.0 };
                v + a * (ghat + gamma * (project(v, s) - v))
            })
            .collect();
        n = DeviceVector::clamped(next)?;
    }
    trace.final_device = n;
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryResult {
    pub device: DeviceVector,
    pub initial_efficiency: f64,
    pub efficiency: f64,
    pub accepted_flips: usize,
}

impl BoundaryResult {
    pub fn gain(&self) -> f64 {
        self.efficiency - self.initial_efficiency
    }
}

fn on_boundary(n: &[f64], i: usize) -> bool {
    let len = n.len();
    n[i] != n[(i + 1) % len] || n[i] != n[(i + len - 1) % len]
}

/// Single-segment flips at silicon/air boundaries, ordered by gradient
/// magnitude and kept only when the efficiency does not drop.
pub fn boundary_optimize(
    sim: &Simulator,
    device: &DeviceVector,
    condition: &OperatingCondition,
    iterations: usize,
) -> Result<BoundaryResult> {
    if let Some((index, value)) = device.first_non_binary() {
        return Err(Error::NotBinary { index, value });
    }
    let mut n = device.as_slice().to_vec();
    let initial_efficiency = sim.efficiency(device, condition)?;
    let mut eff = initial_efficiency;
    let mut accepted = 0;

    for _ in 0..iterations {
        let current = DeviceVector::new(n.clone())?;
        let g = evaluate(sim, &current, condition)?.gradient;
        let mut candidates: Vec<usize> = (0..n.len())
            .filter(|&i| on_boundary(&n, i) && g[i] * n[i] < 0.0)
            .collect();
        candidates.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()).then(a.cmp(&b)));

        let mut changed = false;
        let mut flipped = vec![false; n.len()];
        for i in candidates {
            if flipped[i] || !on_boundary(&n, i) {
                continue;
            }
            n[i] = -n[i];
            let trial = DeviceVector::new(n.clone())?;
            match sim.efficiency(&trial, condition) {
                Ok(e) if e >= eff => {
                    if e > eff {
                        changed = true;
                    }
                    eff = e;
                    flipped[i] = true;
                    accepted += 1;
                }
                Ok(_) => n[i] = -n[i],
                Err(err) => {
                    warn!("flip of segment {i} not evaluated: {err}");
                    n[i] = -n[i];
                }
            }
        }
        if !changed {
            break;
        }
    }
    Ok(BoundaryResult {
        device: DeviceVector::new(n)?,
        initial_efficiency,
        efficiency: eff,
        accepted_flips: accepted,
    })
}
