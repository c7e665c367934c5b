//! Training loop of the conditional generator, driven by adjoint
//! efficiency gradients.
//!
//! Per device the loss is
//!
//! ```text
//! L_m = -(1/M) [ exp((Eff_m - Eff_max(lambda_m, theta_m)) / sigma) n_m . g_m
//!               + beta |n_m| . (2 - |n_m|) ]
//! ```
//!
//! with `Eff_m` and `g_m` treated as constants of `n_m`.

use std::time::Instant;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjoint::{evaluate, EvaluationResult};
use crate::device::{DeviceVector, OperatingCondition};
use crate::error::{Error, Result};
use crate::generator::{Architecture, GeneratorParameters, NoiseVector, Weights};
use crate::optim::{Adam, AdamConfig};
use crate::rcwa::Simulator;

/// Consecutive fully failed batches tolerated before training aborts.
pub const MAX_CONSECUTIVE_FAILURES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    /// Devices per iteration (M).
    pub batch_size: usize,
    /// Efficiency-bias temperature.
    pub sigma: f64,
    /// Final binarization weight.
    pub beta_max: f64,
    /// Fraction of the run over which beta ramps linearly from 0.
    pub beta_ramp_fraction: f64,
    pub adam: AdamConfig,
    pub iterations: usize,
    pub wavelength_range: [f64; 2],
    pub angle_range: [f64; 2],
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 20,
            sigma: 0.5,
            beta_max: 0.005,
            beta_ramp_fraction: 0.5,
            adam: AdamConfig::default(),
            iterations: 300,
            wavelength_range: [600.0, 1300.0],
            angle_range: [40.0, 80.0],
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        if !(self.sigma > 0.0) {
            return bad("sigma must be positive");
        }
        if !(self.beta_max >= 0.0) {
            return bad("beta_max must be non-negative");
        }
        if !(self.beta_ramp_fraction >= 0.0 && self.beta_ramp_fraction <= 1.0) {
            return bad("beta_ramp_fraction must lie in [0, 1]");
        }
        if !(self.adam.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        let [l0, l1] = self.wavelength_range;
        let [t0, t1] = self.angle_range;
        if !(l0 > 0.0 && l0 <= l1) {
            return bad("wavelength_range must be non-empty and positive");
        }
        if !(t0 > 0.0 && t0 <= t1 && t1 < 90.0) {
            return bad("angle_range must be non-empty and inside (0, 90)");
        }
        Ok(())
    }

    /// Binarization weight used at 1-based `iteration`.
    pub fn beta_at(&self, iteration: usize) -> f64 {
        let ramp = self.beta_ramp_fraction * self.iterations as f64;
        if ramp <= 0.0 {
            return self.beta_max;
        }
        self.beta_max * (iteration as f64 / ramp).min(1.0)
    }

    pub fn contains(&self, condition: &OperatingCondition) -> bool {
        let [l0, l1] = self.wavelength_range;
        let [t0, t1] = self.angle_range;
        (l0..=l1).contains(&condition.wavelength_nm) && (t0..=t1).contains(&condition.angle_deg)
    }
}

/// Binning of the running best-efficiency table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSpec {
    pub wavelength_min: f64,
    pub wavelength_max: f64,
    pub wavelength_step: f64,
    pub angle_min: f64,
    pub angle_max: f64,
    pub angle_step: f64,
}

impl Default for TableSpec {
    fn default() -> Self {
        Self {
            wavelength_min: 600.0,
            wavelength_max: 1300.0,
            wavelength_step: 50.0,
            angle_min: 40.0,
            angle_max: 80.0,
            angle_step: 5.0,
        }
    }
}

impl TableSpec {
    pub fn shape(&self) -> (usize, usize) {
        let nl = ((self.wavelength_max - self.wavelength_min) / self.wavelength_step).round() as usize + 1;
        let nt = ((self.angle_max - self.angle_min) / self.angle_step).round() as usize + 1;
        (nl, nt)
    }
}

/// Best efficiency observed so far per (wavelength, angle) cell. Cells are
/// centred on the grid points `min + k * step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffMaxTable {
    pub spec: TableSpec,
    values: Vec<f64>,
}

impl Default for EffMaxTable {
    fn default() -> Self {
        Self::new(TableSpec::default())
    }
}

impl EffMaxTable {
    pub fn new(spec: TableSpec) -> Self {
        let (nl, nt) = spec.shape();
        Self {
            spec,
            values: vec![0.0; nl * nt],
        }
    }

    pub fn cell(&self, condition: &OperatingCondition) -> Result<(usize, usize)> {
        let s = &self.spec;
        let tol = 1e-9;
        let (lam, th) = (condition.wavelength_nm, condition.angle_deg);
        if !(lam >= s.wavelength_min - tol
            && lam <= s.wavelength_max + tol
            && th >= s.angle_min - tol
            && th <= s.angle_max + tol)
        {
            return Err(Error::OutOfRange {
                lambda_nm: lam,
                theta_deg: th,
            });
        }
        let (nl, nt) = s.shape();
        let i = (((lam - s.wavelength_min) / s.wavelength_step).round() as usize).min(nl - 1);
        let j = (((th - s.angle_min) / s.angle_step).round() as usize).min(nt - 1);
        Ok((i, j))
    }

    fn flat(&self, (i, j): (usize, usize)) -> usize {
        i * self.spec.shape().1 + j
    }

    pub fn get(&self, condition: &OperatingCondition) -> Result<f64> {
        Ok(self.values[self.flat(self.cell(condition)?)])
    }

    /// Raises the cell of `condition` to `efficiency` if that is higher.
    pub fn update(&mut self, condition: &OperatingCondition, efficiency: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&efficiency) {
            return Err(Error::InvalidInput(format!(
                "efficiency {efficiency} outside [0, 1]"
            )));
        }
        let k = self.flat(self.cell(condition)?);
        self.values[k] = self.values[k].max(efficiency);
        Ok(())
    }

    /// `(wavelength, angle, value)` for every cell, wavelength-major.
    pub fn entries(&self) -> Vec<(f64, f64, f64)> {
        let s = &self.spec;
        let (nl, nt) = s.shape();
        let mut out = Vec::with_capacity(nl * nt);
        for i in 0..nl {
            for j in 0..nt {
                out.push((
                    s.wavelength_min + i as f64 * s.wavelength_step,
                    s.angle_min + j as f64 * s.angle_step,
                    self.values[i * nt + j],
                ));
            }
        }
        out
    }
}

/// One iteration's summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub iteration: usize,
    pub mean_eff: f64,
    pub max_eff: f64,
    pub loss: f64,
    pub mean_abs_n: f64,
    /// Wall-clock seconds since training started.
    pub seconds: f64,
    pub failed_devices: usize,
}

pub type TrainingHistory = Vec<HistoryRecord>;

/// Draws `m` noise vectors and operating conditions.
pub fn sample_batch<R: Rng>(
    m: usize,
    segments: usize,
    config: &TrainingConfig,
    rng: &mut R,
) -> Vec<(NoiseVector, OperatingCondition)> {
    let uniform = |rng: &mut R, [lo, hi]: [f64; 2]| lo + (hi - lo) * rng.random::<f64>();
    (0..m)
        .map(|_| {
            let z = NoiseVector::sample(segments, rng);
            let lam = uniform(rng, config.wavelength_range);
            let th = uniform(rng, config.angle_range);
            (z, OperatingCondition::new(lam, th))
        })
        .collect()
}

/// `exp((eff - eff_max) / sigma)` with the exponent clamped at zero.
pub fn bias_weight(efficiency: f64, eff_max: f64, sigma: f64) -> f64 {
    ((efficiency - eff_max).min(0.0) / sigma).exp()
}

fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_finite(what: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Per-device loss term `L_m`.
pub fn device_loss(
    n: &[f64],
    efficiency: f64,
    gradient: &[f64],
    eff_max: f64,
    sigma: f64,
    beta: f64,
    m: usize,
) -> f64 {
    let w = bias_weight(efficiency, eff_max, sigma);
    let dot: f64 = n.iter().zip(gradient).map(|(a, b)| a * b).sum();
    let reg: f64 = n.iter().map(|v| v.abs() * (2.0 - v.abs())).sum();
    -(w * dot + beta * reg) / m as f64
}

/// `dL_m / dn_m = -(1/M) [w g + 2 beta (sign(n) - n)]`.
pub fn device_loss_gradient(
    n: &[f64],
    efficiency: f64,
    gradient: &[f64],
    eff_max: f64,
    sigma: f64,
    beta: f64,
    m: usize,
) -> Result<Vec<f64>> {
    check_finite("device vector", n)?;
    check_finite("efficiency gradient", gradient)?;
    check_finite("loss scalars", &[efficiency, eff_max, sigma, beta])?;
    if n.len() != gradient.len() {
        return Err(Error::ShapeMismatch(format!(
            "device length {} != gradient length {}",
            n.len(),
            gradient.len()
        )));
    }
    let w = bias_weight(efficiency, eff_max, sigma);
    let inv_m = 1.0 / m as f64;
    Ok(n.iter()
        .zip(gradient)
        .map(|(&v, &g)| -inv_m * (w * g + 2.0 * beta * (sign0(v) - v)))
        .collect())
}

/// A generated device with its efficiency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedDevice {
    pub device: DeviceVector,
    pub efficiency: f64,
}

/// Samples `k` devices at a fixed condition, thresholds them by sign and
/// returns them sorted by efficiency, best first.
pub fn generate_ensemble<R: Rng>(
    params: &GeneratorParameters,
    sim: &Simulator,
    condition: &OperatingCondition,
    k: usize,
    rng: &mut R,
) -> Result<Vec<GeneratedDevice>> {
    let n = params.architecture.segments;
    let noise: Vec<NoiseVector> = (0..k).map(|_| NoiseVector::sample(n, rng)).collect();
    let mut out = noise
        .par_iter()
        .map(|z| {
            let (device, _) = params.forward(z, condition)?;
            let device = device.binarized();
            let efficiency = sim.efficiency(&device, condition)?;
            Ok(GeneratedDevice { device, efficiency })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| b.efficiency.total_cmp(&a.efficiency));
    Ok(out)
}

/// Raw (unthresholded) generator outputs at one condition.
pub fn sample_devices<R: Rng>(
    params: &GeneratorParameters,
    condition: &OperatingCondition,
    k: usize,
    rng: &mut R,
) -> Result<Vec<DeviceVector>> {
    let n = params.architecture.segments;
    (0..k)
        .map(|_| Ok(params.forward(&NoiseVector::sample(n, rng), condition)?.0))
        .collect()
}

/// Full training state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainingConfig,
    pub sim: Simulator,
    pub params: GeneratorParameters,
    pub table: EffMaxTable,
    pub history: TrainingHistory,
    adam: Adam,
    rng: ChaCha8Rng,
    iteration: usize,
    consecutive_failures: usize,
    started: Instant,
}

impl Trainer {
    pub fn new(config: TrainingConfig, architecture: Architecture, sim: Simulator) -> Result<Self> {
        Self::with_table(config, architecture, sim, TableSpec::default())
    }

    pub fn with_table(
        config: TrainingConfig,
        architecture: Architecture,
        sim: Simulator,
        table: TableSpec,
    ) -> Result<Self> {
        config.validate()?;
        sim.validate()?;
        let table = EffMaxTable::new(table);
        for corner in [
            OperatingCondition::new(config.wavelength_range[0], config.angle_range[0]),
            OperatingCondition::new(config.wavelength_range[1], config.angle_range[1]),
        ] {
            table.cell(&corner)?;
        }
        let params = GeneratorParameters::init(architecture, config.seed)?;
        let adam = Adam::new(config.adam, &params.architecture);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Ok(Self {
            config,
            sim,
            params,
            table,
            history: Vec::new(),
            adam,
            rng,
            iteration: 0,
            consecutive_failures: 0,
            started: Instant::now(),
        })
    }

    /// Number of completed iterations.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// One full iteration: sample, generate, evaluate, weight, backpropagate
    /// and update.
    pub fn train_step(&mut self) -> Result<&HistoryRecord> {
        let iteration = self.iteration + 1;
        let n = self.params.architecture.segments;
        let beta = self.config.beta_at(iteration);
        let batch = sample_batch(self.config.batch_size, n, &self.config, &mut self.rng);

        let params = &self.params;
        let sim = &self.sim;
        let evaluated: Vec<Result<(DeviceVector, crate::generator::ForwardCache, EvaluationResult)>> =
            batch
                .par_iter()
                .map(|(z, cond)| {
                    let (device, cache) = params.forward(z, cond)?;
                    let eval = evaluate(sim, &device, cond)?;
                    Ok((device, cache, eval))
                })
                .collect();

        let mut ok = Vec::with_capacity(evaluated.len());
        for (item, (_, cond)) in evaluated.into_iter().zip(&batch) {
            match item {
                Ok((d, c, e)) => ok.push((d, c, e, *cond)),
                Err(e) => warn!(
                    "iteration {iteration}: skipping device at ({}, {}): {e}",
                    cond.wavelength_nm, cond.angle_deg
                ),
            }
        }
        let failed = batch.len() - ok.len();
        if ok.is_empty() {
            self.consecutive_failures += 1;
            if self.consecutive_failures >= MAX_CONSECUTIVE_FAILURES {
                return Err(Error::RepeatedFailure(self.consecutive_failures));
            }
            self.iteration = iteration;
            self.history.push(HistoryRecord {
                iteration,
                mean_eff: f64::NAN,
                max_eff: f64::NAN,
                loss: f64::NAN,
                mean_abs_n: f64::NAN,
                seconds: self.started.elapsed().as_secs_f64(),
                failed_devices: failed,
            });
            return Ok(self.history.last().unwrap());
        }
        self.consecutive_failures = 0;

        let m = ok.len();
        let sigma = self.config.sigma;
        // Weights use the table as it stood before this batch.
        let eff_max: Vec<f64> = ok
            .iter()
            .map(|(_, _, _, c)| self.table.get(c))
            .collect::<Result<_>>()?;
        for (_, _, e, c) in &ok {
            self.table.update(c, e.efficiency.clamp(0.0, 1.0))?;
        }

        let mut loss = 0.0;
        let mut dl_dn = Vec::with_capacity(m);
        for ((d, _, e, _), &emax) in ok.iter().zip(&eff_max) {
            let n_vec = d.as_slice();
            loss += device_loss(n_vec, e.efficiency, &e.gradient, emax, sigma, beta, m);
            dl_dn.push(device_loss_gradient(
                n_vec,
                e.efficiency,
                &e.gradient,
                emax,
                sigma,
                beta,
                m,
            )?);
        }

        let grads: Vec<Weights> = ok
            .par_iter()
            .zip(&dl_dn)
            .map(|((_, cache, _, _), g)| self.params.backward(cache, g))
            .collect::<Result<_>>()?;
        let mut total = Weights::zeros_like(&self.params.architecture);
        for g in &grads {
            total.add_assign(g);
        }
        self.adam.step(&mut self.params.weights, &total);
        self.params.touch();

        let effs: Vec<f64> = ok.iter().map(|(_, _, e, _)| e.efficiency).collect();
        let mean_abs_n = ok.iter().map(|(d, _, _, _)| d.mean_abs()).sum::<f64>() / m as f64;
        self.iteration = iteration;
        self.history.push(HistoryRecord {
            iteration,
            mean_eff: effs.iter().sum::<f64>() / m as f64,
            max_eff: effs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            loss,
            mean_abs_n,
            seconds: self.started.elapsed().as_secs_f64(),
            failed_devices: failed,
        });
        Ok(self.history.last().unwrap())
    }

    /// Runs the remaining iterations, calling `observer` after each one.
    pub fn run<F>(&mut self, mut observer: F) -> Result<()>
    where
        F: FnMut(&Trainer) -> Result<()>,
    {
        while self.iteration < self.config.iterations {
            self.train_step()?;
            observer(self)?;
        }
        Ok(())
    }
}

/// Trains a generator from scratch for `config.iterations` iterations.
pub fn train(
    config: TrainingConfig,
    architecture: Architecture,
    sim: Simulator,
) -> Result<(GeneratorParameters, TrainingHistory, EffMaxTable)> {
    let mut trainer = Trainer::new(config, architecture, sim)?;
    trainer.run(|_| Ok(()))?;
    Ok((trainer.params, trainer.history, trainer.table))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_keeps_running_maximum() {
        let mut t = EffMaxTable::default();
        let c = OperatingCondition::new(900.0, 60.0);
        assert_eq!(t.get(&c).unwrap(), 0.0);
        t.update(&c, 0.6).unwrap();
        t.update(&c, 0.72).unwrap();
        assert_eq!(t.get(&c).unwrap(), 0.72);
        t.update(&c, 0.5).unwrap();
        assert_eq!(t.get(&c).unwrap(), 0.72);
        // neighbouring cell untouched
        assert_eq!(t.get(&OperatingCondition::new(950.0, 60.0)).unwrap(), 0.0);
        // same cell within half a bin
        assert_eq!(t.get(&OperatingCondition::new(915.0, 62.0)).unwrap(), 0.72);
    }

    #[test]
    fn table_rejects_outside_conditions() {
        let mut t = EffMaxTable::default();
        let c = OperatingCondition::new(1400.0, 60.0);
        assert!(matches!(t.update(&c, 0.3), Err(Error::OutOfRange { .. })));
        assert!(t.get(&OperatingCondition::new(900.0, 85.0)).is_err());
        assert_eq!(EffMaxTable::default().entries().len(), 15 * 9);
    }

    #[test]
    fn loss_gradient_examples() {
        let n = [0.3, -0.5, 0.9];
        let g = [0.1, -0.2, 0.05];
        // eff == effmax: weight 1, no regularizer
        let d = device_loss_gradient(&n, 0.4, &g, 0.4, 0.5, 0.0, 4).unwrap();
        for (a, b) in d.iter().zip(&g) {
            assert_eq!(*a, -b / 4.0);
        }
        // binary devices: regularizer vanishes
        let nb = [1.0, -1.0, 1.0];
        let d = device_loss_gradient(&nb, 0.4, &[0.0; 3], 0.4, 0.5, 3.0, 1).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));
        // n = 0, g = 0
        let d = device_loss_gradient(&[0.0; 3], 0.1, &[0.0; 3], 0.4, 0.5, 1.0, 1).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));
        assert!(device_loss_gradient(&[f64::NAN], 0.1, &[0.0], 0.4, 0.5, 1.0, 1).is_err());
    }

    #[test]
    fn bias_weight_is_clamped() {
        assert_eq!(bias_weight(0.9, 0.5, 0.1), 1.0);
        assert!((bias_weight(0.3, 0.5, 0.1) - (-2.0_f64).exp()).abs() < 1e-15);
        assert!((bias_weight(0.3, 0.5, 1e12) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn batch_sampling_is_seeded_and_in_range() {
        let cfg = TrainingConfig::default();
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        let a = sample_batch(3, 16, &cfg, &mut r1);
        let b = sample_batch(3, 16, &cfg, &mut r2);
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        for (z, c) in &a {
            assert!((600.0..=1300.0).contains(&c.wavelength_nm));
            assert!((40.0..=80.0).contains(&c.angle_deg));
            assert!(z.as_slice().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn beta_ramps_over_first_half() {
        let cfg = TrainingConfig {
            iterations: 100,
            ..Default::default()
        };
        assert_eq!(cfg.beta_at(0), 0.0);
        assert!((cfg.beta_at(25) - 0.0025).abs() < 1e-15);
        assert_eq!(cfg.beta_at(50), 0.005);
        assert_eq!(cfg.beta_at(100), 0.005);
    }
}
