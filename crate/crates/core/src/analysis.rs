//! Benchmarks over wavelength/angle grids and the statistics used to
//! compare and visualize device ensembles.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::{DeviceVector, OperatingCondition};
use crate::error::{Error, Result};
use crate::generator::GeneratorParameters;
use crate::local_opt::{boundary_optimize, random_grayscale_init, topology_optimize, TopoOptConfig};
use crate::rcwa::Simulator;
use crate::trainer::{generate_ensemble, GeneratedDevice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Baseline,
    Glonet,
    #[serde(rename = "glonet+boundary")]
    GlonetBoundary,
}

impl Method {
    pub fn needs_generator(self) -> bool {
        !matches!(self, Method::Baseline)
    }

    pub fn tag(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Glonet => "glonet",
            Method::GlonetBoundary => "glonet+boundary",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Method::Baseline),
            "glonet" => Ok(Method::Glonet),
            "glonet+boundary" => Ok(Method::GlonetBoundary),
            other => Err(Error::InvalidInput(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub wavelengths_nm: Vec<f64>,
    pub angles_deg: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            wavelengths_nm: vec![700.0, 900.0, 1100.0],
            angles_deg: vec![50.0, 60.0, 70.0],
        }
    }
}

impl GridSpec {
    /// 600..=1300 nm in 50 nm steps by 40..=80 deg in 5 deg steps.
    pub fn full() -> Self {
        Self {
            wavelengths_nm: (0..15).map(|i| 600.0 + 50.0 * i as f64).collect(),
            angles_deg: (0..9).map(|j| 40.0 + 5.0 * j as f64).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.wavelengths_nm.is_empty() || self.angles_deg.is_empty() {
            return Err(Error::Config("benchmark grid must not be empty".into()));
        }
        for &l in &self.wavelengths_nm {
            for &t in &self.angles_deg {
                OperatingCondition::new(l, t).period_nm()?;
            }
        }
        Ok(())
    }

    /// Conditions in wavelength-major order.
    pub fn conditions(&self) -> Vec<OperatingCondition> {
        self.wavelengths_nm
            .iter()
            .flat_map(|&l| self.angles_deg.iter().map(move |&t| OperatingCondition::new(l, t)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSettings {
    /// Devices per cell (K).
    pub per_cell: usize,
    pub topology: TopoOptConfig,
    pub boundary_iterations: usize,
    pub seed: u64,
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        Self {
            per_cell: 20,
            topology: TopoOptConfig::default(),
            boundary_iterations: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub condition: OperatingCondition,
    pub best_efficiency: f64,
    pub best_device: DeviceVector,
    pub device_count: usize,
    /// Efficiency of every device produced in this cell, in production order.
    pub efficiencies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkGrid {
    pub method: Method,
    pub spec: GridSpec,
    /// Wavelength-major.
    pub cells: Vec<GridCell>,
}

impl BenchmarkGrid {
    pub fn shape(&self) -> (usize, usize) {
        (self.spec.wavelengths_nm.len(), self.spec.angles_deg.len())
    }

    pub fn best_efficiencies(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.best_efficiency).collect()
    }
}

/// Random stream of one grid cell.
pub fn cell_rng(seed: u64, cell: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cell as u64);
    rng
}

fn best_of(
    condition: OperatingCondition,
    devices: Vec<(DeviceVector, f64)>,
) -> Result<GridCell> {
    let efficiencies: Vec<f64> = devices.iter().map(|d| d.1).collect();
    let (best_device, best_efficiency) = devices
        .into_iter()
        .reduce(|a, b| if b.1 > a.1 { b } else { a })
        .ok_or_else(|| Error::InvalidInput("per_cell must be at least 1".into()))?;
    Ok(GridCell {
        condition,
        best_efficiency,
        best_device,
        device_count: efficiencies.len(),
        efficiencies,
    })
}

/// Runs K devices per cell with the chosen method and keeps each cell's best.
pub fn run_benchmark(
    sim: &Simulator,
    method: Method,
    spec: &GridSpec,
    settings: &BenchmarkSettings,
    generator: Option<&GeneratorParameters>,
) -> Result<BenchmarkGrid> {
    spec.validate()?;
    settings.topology.validate()?;
    if settings.per_cell < 1 {
        return Err(Error::Config("per_cell must be at least 1".into()));
    }
    let generator = match (method.needs_generator(), generator) {
        (true, None) => {
            return Err(Error::InvalidInput(format!(
                "method {} requires a trained generator",
                method.tag()
            )))
        }
        (_, g) => g,
    };
    let segments = generator.map_or(crate::device::DEFAULT_SEGMENTS, |g| g.architecture.segments);

    let mut cells = Vec::new();
    for (idx, condition) in spec.conditions().into_iter().enumerate() {
        let mut rng = cell_rng(settings.seed, idx);
        let devices: Vec<(DeviceVector, f64)> = match method {
            Method::Baseline => {
                let inits = (0..settings.per_cell)
                    .map(|_| random_grayscale_init(segments, &mut rng))
                    .collect::<Result<Vec<_>>>()?;
                inits
                    .par_iter()
                    .map(|init| {
                        let t = topology_optimize(sim, init, &condition, &settings.topology)?;
                        Ok((t.best_binary, t.best_binary_efficiency))
                    })
                    .collect::<Result<_>>()?
            }
            Method::Glonet | Method::GlonetBoundary => {
                let params = generator.expect("checked above");
                let ens = generate_ensemble(params, sim, &condition, settings.per_cell, &mut rng)?;
                if method == Method::Glonet {
                    ens.into_iter().map(|g| (g.device, g.efficiency)).collect()
                } else {
                    ens.par_iter()
                        .map(|g| {
                            let r = boundary_optimize(
                                sim,
                                &g.device,
                                &condition,
                                settings.boundary_iterations,
                            )?;
                            Ok((r.device, r.efficiency))
                        })
                        .collect::<Result<_>>()?
                }
            }
        };
        cells.push(best_of(condition, devices)?);
    }
    Ok(BenchmarkGrid {
        method,
        spec: spec.clone(),
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridComparison {
    /// Fraction of cells where b >= a.
    pub fraction_higher: f64,
    /// Fraction of cells where b >= a - 0.05.
    pub fraction_within: f64,
    /// b - a per cell, wavelength-major.
    pub deltas: Vec<f64>,
}

pub const COMPARISON_MARGIN: f64 = 0.05;

pub fn compare_grids(a: &BenchmarkGrid, b: &BenchmarkGrid) -> Result<GridComparison> {
    if a.spec != b.spec || a.cells.len() != b.cells.len() {
        return Err(Error::ShapeMismatch(format!(
            "grids {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    let deltas: Vec<f64> = a
        .cells
        .iter()
        .zip(&b.cells)
        .map(|(x, y)| y.best_efficiency - x.best_efficiency)
        .collect();
    let pairs = a.cells.iter().zip(&b.cells);
    let n = deltas.len() as f64;
    let higher = pairs
        .clone()
        .filter(|(x, y)| y.best_efficiency >= x.best_efficiency)
        .count();
    let within = pairs
        .filter(|(x, y)| y.best_efficiency >= x.best_efficiency - COMPARISON_MARGIN)
        .count();
    Ok(GridComparison {
        fraction_higher: higher as f64 / n,
        fraction_within: within as f64 / n,
        deltas,
    })
}

/// Two-component principal axes of a device ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub axes: [Vec<f64>; 2],
    pub explained_variance: [f64; 2],
}

fn fix_sign(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

pub fn pca_fit(devices: &[DeviceVector]) -> Result<PcaModel> {
    if devices.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "PCA needs at least 3 devices, got {}",
            devices.len()
        )));
    }
    let n = devices[0].len();
    if let Some(d) = devices.iter().find(|d| d.len() != n) {
        return Err(Error::ShapeMismatch(format!(
            "device length {} != {n}",
            d.len()
        )));
    }
    let m = devices.len();
    let mut mean = vec![0.0; n];
    for d in devices {
        for (acc, v) in mean.iter_mut().zip(d.as_slice()) {
            *acc += v / m as f64;
        }
    }
    let x = DMatrix::from_fn(m, n, |i, j| devices[i].as_slice()[j] - mean[j]);
    // Covariance eigenvectors are the right singular vectors of the centred
    // data; nalgebra's SVD of wide matrices proved unreliable here.
    let cov = (x.transpose() * &x) / (m - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let var = |k: usize| eig.eigenvalues[order[k]].max(0.0);
    if !(var(0) > 1e-24) {
        return Err(Error::InvalidInput("devices have zero variance".into()));
    }
    let axis = |k: usize| {
        let mut v: Vec<f64> = eig.eigenvectors.column(order[k]).iter().copied().collect();
        fix_sign(&mut v);
        v
    };
    Ok(PcaModel {
        mean,
        axes: [axis(0), axis(1)],
        explained_variance: [var(0), var(1)],
    })
}

pub fn pca_project(model: &PcaModel, device: &DeviceVector) -> Result<(f64, f64)> {
    if device.len() != model.mean.len() {
        return Err(Error::ShapeMismatch(format!(
            "device length {} != model length {}",
            device.len(),
            model.mean.len()
        )));
    }
    let dot = |axis: &[f64]| {
        device
            .as_slice()
            .iter()
            .zip(&model.mean)
            .zip(axis)
            .map(|((v, m), a)| (v - m) * a)
            .sum::<f64>()
    };
    Ok((dot(&model.axes[0]), dot(&model.axes[1])))
}

/// Sum of the sample variances of the x and y coordinates.
pub fn total_variance(points: &[(f64, f64)]) -> f64 {
    let k = points.len();
    if k < 2 {
        return 0.0;
    }
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + p.0 / k as f64, b + p.1 / k as f64));
    points
        .iter()
        .map(|p| (p.0 - mx).powi(2) + (p.1 - my).powi(2))
        .sum::<f64>()
        / (k - 1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyHistogram {
    pub bin_width: f64,
    pub counts: Vec<usize>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
}

impl EfficiencyHistogram {
    /// `(lo, hi)` edges of bin `k`.
    pub fn edges(&self, k: usize) -> (f64, f64) {
        let lo = k as f64 * self.bin_width;
        (lo, (lo + self.bin_width).min(1.0))
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub const DEFAULT_BIN_WIDTH: f64 = 0.05;

pub fn efficiency_histogram(efficiencies: &[f64], bin_width: f64) -> Result<EfficiencyHistogram> {
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return Err(Error::InvalidInput(format!("bin width {bin_width} outside (0, 1]")));
    }
    let bins = ((1.0 / bin_width) - 1e-9).ceil() as usize;
    let mut counts = vec![0; bins];
    for &e in efficiencies {
        if !(0.0..=1.0).contains(&e) {
            return Err(Error::InvalidInput(format!("efficiency {e} outside [0, 1]")));
        }
        counts[((e / bin_width) as usize).min(bins - 1)] += 1;
    }
    let max = efficiencies.iter().copied().reduce(f64::max);
    let mean = (!efficiencies.is_empty())
        .then(|| efficiencies.iter().sum::<f64>() / efficiencies.len() as f64);
    Ok(EfficiencyHistogram {
        bin_width,
        counts,
        max,
        mean,
    })
}

/// Devices sampled from the generator at one training iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iteration: usize,
    pub devices: Vec<GeneratedDevice>,
}

/// Samples `count` thresholded devices with a private random stream, so
/// taking snapshots never perturbs training.
pub fn take_snapshot(
    params: &GeneratorParameters,
    sim: &Simulator,
    condition: &OperatingCondition,
    count: usize,
    seed: u64,
    iteration: usize,
) -> Result<Snapshot> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    Ok(Snapshot {
        iteration,
        devices: generate_ensemble(params, sim, condition, count, &mut rng)?,
    })
}

/// One projected point per snapshot device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedDevice {
    pub device_id: usize,
    pub x: f64,
    pub y: f64,
    pub efficiency: f64,
    pub iteration: usize,
}

pub fn project_snapshots(model: &PcaModel, snapshots: &[Snapshot]) -> Result<Vec<ProjectedDevice>> {
    let mut out = Vec::new();
    for s in snapshots {
        for (id, d) in s.devices.iter().enumerate() {
            let (x, y) = pca_project(model, &d.device)?;
            out.push(ProjectedDevice {
                device_id: id,
                x,
                y,
                efficiency: d.efficiency,
                iteration: s.iteration,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(values: &[f64]) -> BenchmarkGrid {
        let spec = GridSpec {
            wavelengths_nm: vec![800.0],
            angles_deg: (0..values.len()).map(|i| 50.0 + i as f64).collect(),
        };
        let cells = spec
            .conditions()
            .into_iter()
            .zip(values)
            .map(|(c, &v)| GridCell {
                condition: c,
                best_efficiency: v,
                best_device: DeviceVector::uniform(4, 1.0).unwrap(),
                device_count: 1,
                efficiencies: vec![v],
            })
            .collect();
        BenchmarkGrid {
            method: Method::Baseline,
            spec,
            cells,
        }
    }

    #[test]
    fn comparison_fractions() {
        let a = grid(&[0.5, 0.6, 0.7, 0.8]);
        let same = compare_grids(&a, &a).unwrap();
        assert_eq!((same.fraction_higher, same.fraction_within), (1.0, 1.0));
        let up = grid(&[0.51, 0.61, 0.71, 0.81]);
        assert_eq!(compare_grids(&a, &up).unwrap().fraction_higher, 1.0);
        let mixed = grid(&[0.4, 0.58, 0.8, 0.8]);
        let c = compare_grids(&a, &mixed).unwrap();
        assert_eq!(c.fraction_higher, 0.5);
        assert_eq!(c.fraction_within, 0.75);
        assert!(compare_grids(&a, &grid(&[0.5])).is_err());
    }

    #[test]
    fn histogram_counts() {
        let h = efficiency_histogram(&[], 0.05).unwrap();
        assert_eq!(h.counts, vec![0; 20]);
        assert!(h.max.is_none());
        let h = efficiency_histogram(&[0.5; 7], 0.1).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.counts[5], 7);
        assert_eq!(h.max, Some(0.5));
        let h = efficiency_histogram(&[0.0, 1.0], 0.05).unwrap();
        assert_eq!((h.counts[0], h.counts[19]), (1, 1));
        assert!(efficiency_histogram(&[1.2], 0.05).is_err());
    }

    #[test]
    fn pca_recovers_single_axis() {
        let n = 16;
        let axis: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.7).sin()).collect();
        let norm = axis.iter().map(|v| v * v).sum::<f64>().sqrt();
        let devices: Vec<DeviceVector> = (0..9)
            .map(|k| {
                let a = (k as f64 - 4.0) * 0.05;
                DeviceVector::new(axis.iter().map(|v| 0.1 + a * v / norm).collect()).unwrap()
            })
            .collect();
        let model = pca_fit(&devices).unwrap();
        let cos: f64 = model.axes[0].iter().zip(&axis).map(|(a, b)| a * b / norm).sum();
        assert!(cos.abs() > 0.999);
        assert!(model.explained_variance[0] >= model.explained_variance[1]);
        let mean = DeviceVector::new(model.mean.clone()).unwrap();
        let (x, y) = pca_project(&model, &mean).unwrap();
        assert!(x.abs() < 1e-12 && y.abs() < 1e-12);
    }

    #[test]
    fn pca_rejects_degenerate_input() {
        let d = DeviceVector::uniform(8, 0.5).unwrap();
        assert!(pca_fit(&[d.clone(), d.clone()]).is_err());
        assert!(pca_fit(&[d.clone(), d.clone(), d]).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in [Method::Baseline, Method::Glonet, Method::GlonetBoundary] {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
        }
    }
}
