//! Conditional generator mapping `(z, wavelength, angle)` to a device.
//!
//! Pipeline: dense layer -> reshape to channels -> transposed convolutions
//! -> 1x1 convolution to a single length-N map -> `+ z` -> Gaussian filter
//! -> `tanh`. Forward and backward passes are written out by hand.

pub mod layers;

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::device::{DeviceVector, OperatingCondition};
use crate::error::{Error, Result};
use layers::{circular_filter, gaussian_kernel, leaky, leaky_grad, Dense, Pointwise, TransposedConv};

/// Wavelength and angle are mapped onto [-1, 1] over the design ranges.
pub fn normalize_condition(condition: &OperatingCondition) -> (f64, f64) {
    (
        (condition.wavelength_nm - 950.0) / 350.0,
        (condition.angle_deg - 60.0) / 20.0,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub segments: usize,
    /// Channels after reshaping the dense output.
    pub fc_channels: usize,
    /// Output channels of each transposed convolution.
    pub dconv_channels: Vec<usize>,
    pub kernel_size: usize,
    pub stride: usize,
    pub leaky_slope: f64,
    /// Gaussian filter width in segments.
    pub filter_sigma: f64,
    /// Filter half-width in units of `filter_sigma`.
    pub filter_truncate: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            segments: 256,
            fc_channels: 64,
            dconv_channels: vec![32, 16],
            kernel_size: 5,
            stride: 2,
            leaky_slope: 0.2,
            filter_sigma: 2.0,
            filter_truncate: 4.0,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.segments < 2 {
            return bad(format!("segments = {} must be at least 2", self.segments));
        }
        if self.fc_channels == 0 || self.dconv_channels.contains(&0) {
            return bad("channel counts must be positive".into());
        }
        if self.kernel_size == 0 || self.stride == 0 {
            return bad("kernel_size and stride must be positive".into());
        }
        let up = self.stride.pow(self.dconv_channels.len() as u32);
        if !self.segments.is_multiple_of(up) {
            return bad(format!(
                "segments = {} is not divisible by stride^layers = {up}",
                self.segments
            ));
        }
        if !(self.filter_sigma > 0.0 && self.filter_truncate > 0.0) {
            return bad("filter_sigma and filter_truncate must be positive".into());
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return bad("leaky_slope must lie in [0, 1)".into());
        }
        Ok(())
    }

    /// Spatial length right after the dense layer.
    pub fn base_length(&self) -> usize {
        self.segments / self.stride.pow(self.dconv_channels.len() as u32)
    }

    pub fn input_dim(&self) -> usize {
        self.segments + 2
    }

    pub fn kernel(&self) -> Vec<f64> {
        gaussian_kernel(self.filter_sigma, self.filter_truncate)
    }
}

/// Trainable tensors. Also used as the gradient record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub fc: Dense,
    pub dconv: Vec<TransposedConv>,
    pub head: Pointwise,
}

impl Weights {
    fn build(arch: &Architecture, mut init: Option<&mut ChaCha8Rng>) -> Self {
        let l0 = arch.base_length();
        let fc_out = arch.fc_channels * l0;
        let fc = match init.as_deref_mut() {
            Some(rng) => Dense::xavier(arch.input_dim(), fc_out, rng),
            None => Dense::zeros(arch.input_dim(), fc_out),
        };
        let mut dconv = Vec::with_capacity(arch.dconv_channels.len());
        let (mut ch, mut len) = (arch.fc_channels, l0);
        for &out in &arch.dconv_channels {
            dconv.push(match init.as_deref_mut() {
                Some(rng) => TransposedConv::xavier(ch, out, arch.kernel_size, arch.stride, len, rng),
                None => TransposedConv::zeros(ch, out, arch.kernel_size, arch.stride, len),
            });
            ch = out;
            len *= arch.stride;
        }
        let head = match init {
            Some(rng) => Pointwise::xavier(ch, rng),
            None => Pointwise::zeros(ch),
        };
        Self { fc, dconv, head }
    }

    pub fn zeros_like(arch: &Architecture) -> Self {
        Self::build(arch, None)
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![&self.fc.weight, &self.fc.bias];
        for d in &self.dconv {
            v.push(&d.weight);
            v.push(&d.bias);
        }
        v.push(&self.head.weight);
        v.push(&self.head.bias);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![&mut self.fc.weight, &mut self.fc.bias];
        for d in &mut self.dconv {
            v.push(&mut d.weight);
            v.push(&mut d.bias);
        }
        v.push(&mut self.head.weight);
        v.push(&mut self.head.bias);
        v
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Weights) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|&x| x == 0.0))
    }

    fn check_shapes(&self, arch: &Architecture) -> Result<()> {
        let want = Self::zeros_like(arch);
        let got: Vec<usize> = self.tensors().iter().map(|t| t.len()).collect();
        let exp: Vec<usize> = want.tensors().iter().map(|t| t.len()).collect();
        if got != exp || self.dconv.len() != want.dconv.len() {
            return Err(Error::ArchitectureMismatch(format!(
                "tensor sizes {got:?} do not match the architecture ({exp:?})"
            )));
        }
        Ok(())
    }
}

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// All generator weights plus the fixed filter kernel.
#[derive(Debug, Clone)]
pub struct GeneratorParameters {
    pub architecture: Architecture,
    pub seed: u64,
    pub weights: Weights,
    kernel: Vec<f64>,
    version: u64,
}

impl PartialEq for GeneratorParameters {
    fn eq(&self, other: &Self) -> bool {
        self.architecture == other.architecture
            && self.seed == other.seed
            && self.weights == other.weights
    }
}

/// Noise input, one component per segment, uniform on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseVector(Vec<f64>);

impl NoiseVector {
    pub fn sample<R: Rng>(len: usize, rng: &mut R) -> Self {
        Self((0..len).map(|_| rng.random_range(-1.0..=1.0)).collect())
    }

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput("noise components must lie in [-1, 1]".into()));
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Activations recorded by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    input: Vec<f64>,
    fc_pre: Vec<f64>,
    /// Input of each transposed convolution, then input of the head.
    acts: Vec<Vec<f64>>,
    dconv_pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

impl GeneratorParameters {
    /// Xavier-initialized weights, zero biases.
    pub fn init(architecture: Architecture, seed: u64) -> Result<Self> {
        architecture.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = Weights::build(&architecture, Some(&mut rng));
        Ok(Self::from_weights(architecture, seed, weights))
    }

    pub fn from_weights(architecture: Architecture, seed: u64, weights: Weights) -> Self {
        let kernel = architecture.kernel();
        Self {
            architecture,
            seed,
            weights,
            kernel,
            version: fresh_version(),
        }
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    /// Marks outstanding forward caches as stale. Call after mutating
    /// `weights`.
    pub fn touch(&mut self) {
        self.version = fresh_version();
    }

    pub fn forward(
        &self,
        z: &NoiseVector,
        condition: &OperatingCondition,
    ) -> Result<(DeviceVector, ForwardCache)> {
        let arch = &self.architecture;
        let n = arch.segments;
        if z.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "noise length {} != segments {n}",
                z.len()
            )));
        }
        let slope = arch.leaky_slope;
        let (lam, th) = normalize_condition(condition);
        let mut input = z.as_slice().to_vec();
        input.push(lam);
        input.push(th);

        let w = &self.weights;
        let mut fc_pre = vec![0.0; w.fc.out_dim];
        w.fc.forward(&input, &mut fc_pre);
        let mut acts = vec![fc_pre.iter().map(|&x| leaky(x, slope)).collect::<Vec<_>>()];
        let mut dconv_pre = Vec::with_capacity(w.dconv.len());
        for layer in &w.dconv {
            let mut pre = vec![0.0; layer.out_ch * layer.out_len()];
            layer.forward(acts.last().unwrap(), &mut pre);
            acts.push(pre.iter().map(|&x| leaky(x, slope)).collect());
            dconv_pre.push(pre);
        }
        let mut head = vec![0.0; n];
        w.head.forward(acts.last().unwrap(), n, &mut head);
        for (h, zi) in head.iter_mut().zip(z.as_slice()) {
            *h += zi;
        }
        let filtered = circular_filter(&head, &self.kernel);
        let output: Vec<f64> = filtered.iter().map(|x| x.tanh()).collect();
        let device = DeviceVector::clamped(output.clone())?;
        Ok((
            device,
            ForwardCache {
                version: self.version,
                input,
                fc_pre,
                acts,
                dconv_pre,
                output,
            },
        ))
    }

    /// Reverse-mode gradients of a scalar loss given `dl_dn = dL/d(output)`.
    pub fn backward(&self, cache: &ForwardCache, dl_dn: &[f64]) -> Result<Weights> {
        if cache.version != self.version {
            return Err(Error::StaleCache(
                "parameters changed since the forward pass".into(),
            ));
        }
        let arch = &self.architecture;
        let n = arch.segments;
        if dl_dn.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "output gradient length {} != segments {n}",
                dl_dn.len()
            )));
        }
        let slope = arch.leaky_slope;
        let w = &self.weights;
        let mut grad = Weights::zeros_like(arch);

        let d_filtered: Vec<f64> = dl_dn
            .iter()
            .zip(&cache.output)
            .map(|(g, y)| g * (1.0 - y * y))
            .collect();
        // Shortcut: d(head + z)/d(head) = 1.
        let d_head = circular_filter(&d_filtered, &self.kernel);

        let last = cache.acts.len() - 1;
        let mut d_act = w.head.backward(&cache.acts[last], &d_head, &mut grad.head);
        for (idx, layer) in w.dconv.iter().enumerate().rev() {
            let d_pre: Vec<f64> = d_act
                .iter()
                .zip(&cache.dconv_pre[idx])
                .map(|(g, p)| g * leaky_grad(*p, slope))
                .collect();
            d_act = layer.backward(&cache.acts[idx], &d_pre, &mut grad.dconv[idx]);
        }
        let d_fc: Vec<f64> = d_act
            .iter()
            .zip(&cache.fc_pre)
            .map(|(g, p)| g * leaky_grad(*p, slope))
            .collect();
        w.fc.backward(&cache.input, &d_fc, &mut grad.fc);
        Ok(grad)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            seed: self.seed,
            architecture: self.architecture.clone(),
            weights: self.weights.clone(),
        };
        let text = serde_json::to_string(&file).map_err(|e| Error::json(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Loads a checkpoint; `expected`, when given, must match the stored
    /// architecture exactly.
    pub fn load(path: &Path, expected: Option<&Architecture>) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
            return Err(Error::ArchitectureMismatch(format!(
                "unsupported checkpoint format {} v{}",
                file.format, file.version
            )));
        }
        if let Some(arch) = expected {
            if *arch != file.architecture {
                return Err(Error::ArchitectureMismatch(format!(
                    "checkpoint has {:?}, configuration expects {:?}",
                    file.architecture, arch
                )));
            }
        }
        file.architecture.validate()?;
        file.weights.check_shapes(&file.architecture)?;
        Ok(Self::from_weights(file.architecture, file.seed, file.weights))
    }
}

const CHECKPOINT_FORMAT: &str = "glonet-generator";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: String,
    version: u32,
    seed: u64,
    architecture: Architecture,
    weights: Weights,
}
