//! Self-checks of the solver, the adjoint gradients and the network
//! backward pass against independent references.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adjoint::{evaluate, finite_difference_gradient, relative_l2_error, signs_agree};
use crate::device::{DeviceVector, MaterialConfig, OperatingCondition};
use crate::error::Result;
use crate::generator::layers::{circular_filter, gaussian_kernel, Dense, Pointwise, TransposedConv};
use crate::generator::{Architecture, GeneratorParameters, NoiseVector};
use crate::local_opt::random_grayscale_init;
use crate::oracle::{film_transmittance, interface_transmittance};
use crate::rcwa::{Incidence, RcwaSettings, Simulator};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed deviation.
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckResult {
    fn new(name: &str, worst: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            passed: worst < tolerance,
            worst,
            tolerance,
        }
    }
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: worst {:.3e} (tolerance {:.0e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.worst,
            self.tolerance
        )
    }
}

/// (wavelength nm, thickness nm, film index) combinations of the slab check.
pub const SLAB_CASES: [(f64, f64, f64); 5] = [
    (900.0, 325.0, 3.45),
    (700.0, 325.0, 3.45),
    (1200.0, 250.0, 2.0),
    (633.0, 100.0, 1.8),
    (1064.0, 500.0, 2.6),
];

/// Uniform film between SiO2 and air against the characteristic-matrix
/// transmittance.
pub fn slab_check(half_order: usize) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for (lam, d, n) in SLAB_CASES {
        let materials = MaterialConfig {
            n_si: n,
            ..MaterialConfig::default()
        };
        let sim = Simulator::new(
            materials,
            RcwaSettings {
                fourier_half_order: half_order,
                thickness_nm: d,
            },
        );
        let device = DeviceVector::uniform(64, 1.0)?;
        let sol = sim.simulate(&device, &OperatingCondition::new(lam, 60.0), Incidence::SubstrateNormal)?;
        let expected = film_transmittance(materials.n_sio2, n, materials.n_air, d, lam);
        worst = worst.max((sol.transmitted.total() - expected).abs());
    }
    Ok(CheckResult::new("homogeneous slab vs transfer matrix", worst, 1e-8))
}

/// An all-air layer reduces to a bare SiO2/air interface.
pub fn fresnel_check(sim: &Simulator) -> Result<CheckResult> {
    let m = sim.materials;
    let device = DeviceVector::uniform(64, -1.0)?;
    let sol = sim.simulate(&device, &OperatingCondition::new(900.0, 60.0), Incidence::SubstrateNormal)?;
    let worst = (sol.transmitted.total() - interface_transmittance(m.n_sio2, m.n_air)).abs();
    Ok(CheckResult::new("air layer vs Fresnel interface", worst, 1e-8))
}

/// Random binary device with smooth features.
pub fn random_binary_device<R: Rng>(segments: usize, rng: &mut R) -> Result<DeviceVector> {
    Ok(random_grayscale_init(segments, rng)?.binarized())
}

pub fn random_condition<R: Rng>(rng: &mut R) -> OperatingCondition {
    OperatingCondition::new(
        600.0 + 700.0 * rng.random::<f64>(),
        40.0 + 40.0 * rng.random::<f64>(),
    )
}

pub fn energy_check(sim: &Simulator, count: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let device = random_binary_device(256, &mut rng)?;
        let cond = random_condition(&mut rng);
        let sol = sim.simulate(&device, &cond, Incidence::SubstrateNormal)?;
        worst = worst.max((sol.total_efficiency() - 1.0).abs());
    }
    Ok(CheckResult::new("energy conservation", worst, 1e-8))
}

pub fn translation_check(sim: &Simulator, count: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let device = random_binary_device(256, &mut rng)?;
        let cond = random_condition(&mut rng);
        let shift = rng.random_range(1..256);
        let a = sim.simulate(&device, &cond, Incidence::SubstrateNormal)?;
        let b = sim.simulate(&device.rotated(shift), &cond, Incidence::SubstrateNormal)?;
        for (x, y) in [(&a.reflected, &b.reflected), (&a.transmitted, &b.transmitted)] {
            for (p, q) in x.efficiencies.iter().zip(&y.efficiencies) {
                worst = worst.max((p - q).abs());
            }
        }
    }
    Ok(CheckResult::new("translation invariance", worst, 1e-10))
}

/// Adjoint vs central differences on random grayscale devices. Returns the
/// worst relative L2 error; sign disagreement on any significant component
/// counts as a failure.
pub fn adjoint_check(
    sim: &Simulator,
    conditions: &[OperatingCondition],
    devices_per_condition: usize,
    seed: u64,
) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut signs_ok = true;
    for cond in conditions {
        for _ in 0..devices_per_condition {
            let device = random_grayscale_init(256, &mut rng)?;
            let adj = evaluate(sim, &device, cond)?.gradient;
            let fd = finite_difference_gradient(sim, &device, cond, 1e-3)?;
            worst = worst.max(relative_l2_error(&adj, &fd));
            signs_ok &= signs_agree(&adj, &fd, 0.01);
        }
    }
    let mut check = CheckResult::new("adjoint vs finite differences", worst, 1e-2);
    check.passed &= signs_ok;
    Ok(check)
}

/// Relative L2 error between an analytic gradient and central differences
/// of a scalar function.
fn gradcheck_vector<F>(params: &mut [f64], analytic: &[f64], h: f64, mut f: F) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let mut fd = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let v = params[i];
        params[i] = v + h;
        let up = f(params);
        params[i] = v - h;
        let down = f(params);
        params[i] = v;
        fd.push((up - down) / (2.0 * h));
    }
    relative_l2_error(analytic, &fd)
}

fn random_vec<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Reverse-mode vs finite-difference gradients for every layer type and the
/// assembled generator. Returns `(name, relative error)` pairs.
pub fn network_gradcheck(seed: u64, h: f64) -> Result<Vec<(String, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    // dense: weights, bias
    let mut dense = Dense::xavier(7, 5, &mut rng);
    dense.bias = random_vec(5, &mut rng);
    let x = random_vec(7, &mut rng);
    let r = random_vec(5, &mut rng);
    let mut grad = Dense::zeros(7, 5);
    dense.backward(&x, &r, &mut grad);
    let mut y = vec![0.0; 5];
    let mut w = dense.weight.clone();
    let e = gradcheck_vector(&mut w, &grad.weight, h, |w| {
        let mut l = dense.clone();
        l.weight.copy_from_slice(w);
        l.forward(&x, &mut y);
        dot(&y, &r)
    });
    out.push(("dense weights".to_string(), e));
    let mut b = dense.bias.clone();
    let e = gradcheck_vector(&mut b, &grad.bias, h, |b| {
        let mut l = dense.clone();
        l.bias.copy_from_slice(b);
        l.forward(&x, &mut y);
        dot(&y, &r)
    });
    out.push(("dense bias".to_string(), e));

    // transposed convolution: weights, bias, input
    let mut tc = TransposedConv::xavier(3, 2, 5, 2, 6, &mut rng);
    tc.bias = random_vec(2, &mut rng);
    let x = random_vec(3 * 6, &mut rng);
    let r = random_vec(2 * 12, &mut rng);
    let mut grad = TransposedConv::zeros(3, 2, 5, 2, 6);
    let dx = tc.backward(&x, &r, &mut grad);
    let mut y = vec![0.0; 2 * 12];
    let mut w = tc.weight.clone();
    let e = gradcheck_vector(&mut w, &grad.weight, h, |w| {
        let mut l = tc.clone();
        l.weight.copy_from_slice(w);
        l.forward(&x, &mut y);
        dot(&y, &r)
    });
    out.push(("transposed conv weights".to_string(), e));
    let mut b = tc.bias.clone();
    let e = gradcheck_vector(&mut b, &grad.bias, h, |b| {
        let mut l = tc.clone();
        l.bias.copy_from_slice(b);
        l.forward(&x, &mut y);
        dot(&y, &r)
    });
    out.push(("transposed conv bias".to_string(), e));
    let mut xi = x.clone();
    let e = gradcheck_vector(&mut xi, &dx, h, |xi| {
        tc.forward(xi, &mut y);
        dot(&y, &r)
    });
    out.push(("transposed conv input".to_string(), e));

    // pointwise head
    let mut pw = Pointwise::xavier(3, &mut rng);
    pw.bias = random_vec(1, &mut rng);
    let x = random_vec(3 * 8, &mut rng);
    let r = random_vec(8, &mut rng);
    let mut grad = Pointwise::zeros(3);
    let dx = pw.backward(&x, &r, &mut grad);
    let mut y = vec![0.0; 8];
    let mut w = pw.weight.clone();
    let e = gradcheck_vector(&mut w, &grad.weight, h, |w| {
        let mut l = pw.clone();
        l.weight.copy_from_slice(w);
        l.forward(&x, 8, &mut y);
        dot(&y, &r)
    });
    out.push(("pointwise weights".to_string(), e));
    let mut xi = x.clone();
    let e = gradcheck_vector(&mut xi, &dx, h, |xi| {
        pw.forward(xi, 8, &mut y);
        dot(&y, &r)
    });
    out.push(("pointwise input".to_string(), e));

    // gaussian filter (self-adjoint)
    let kernel = gaussian_kernel(2.0, 4.0);
    let x = random_vec(16, &mut rng);
    let r = random_vec(16, &mut rng);
    let analytic = circular_filter(&r, &kernel);
    let mut xi = x.clone();
    let e = gradcheck_vector(&mut xi, &analytic, h, |xi| dot(&circular_filter(xi, &kernel), &r));
    out.push(("gaussian filter input".to_string(), e));

    // assembled generator: dense, leaky, transposed convs, head, shortcut,
    // filter, tanh
    let arch = Architecture {
        segments: 16,
        fc_channels: 4,
        dconv_channels: vec![3, 2],
        ..Architecture::default()
    };
    let mut params = GeneratorParameters::init(arch, seed)?;
    for t in params.weights.tensors_mut() {
        for v in t.iter_mut() {
            *v += 0.05 * (rng.random::<f64>() * 2.0 - 1.0);
        }
    }
    params.touch();
    let z = NoiseVector::sample(16, &mut rng);
    let cond = OperatingCondition::new(850.0, 55.0);
    let r = random_vec(16, &mut rng);
    let (_, cache) = params.forward(&z, &cond)?;
    let grads = params.backward(&cache, &r)?;
    let analytic: Vec<f64> = grads.tensors().concat();
    let mut flat: Vec<f64> = params.weights.tensors().concat();
    let base = params.clone();
    let e = gradcheck_vector(&mut flat, &analytic, h, |w| {
        let mut p = base.clone();
        let mut offset = 0;
        for t in p.weights.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&w[offset..offset + n]);
            offset += n;
        }
        p.touch();
        let (d, _) = p.forward(&z, &cond).expect("forward");
        dot(d.as_slice(), &r)
    });
    out.push(("generator end to end".to_string(), e));
    Ok(out)
}

pub fn network_check(seed: u64) -> Result<CheckResult> {
    let worst = network_gradcheck(seed, 1e-5)?
        .into_iter()
        .map(|(_, e)| e)
        .fold(0.0, f64::max);
    Ok(CheckResult::new("network gradients vs finite differences", worst, 1e-4))
}

/// The complete battery run by the `validate` command.
pub fn run_battery(sim: &Simulator, seed: u64) -> Vec<(String, Result<CheckResult>)> {
    let conditions = [
        OperatingCondition::new(900.0, 60.0),
        OperatingCondition::new(700.0, 50.0),
    ];
    vec![
        ("slab".to_string(), slab_check(sim.rcwa.fourier_half_order)),
        ("fresnel".to_string(), fresnel_check(sim)),
        ("energy".to_string(), energy_check(sim, 100, seed)),
        ("translation".to_string(), translation_check(sim, 10, seed)),
        ("adjoint".to_string(), adjoint_check(sim, &conditions, 1, seed)),
        ("network".to_string(), network_check(seed)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_gradients_match_differences() {
        for (name, e) in network_gradcheck(1, 1e-5).unwrap() {
            assert!(e < 1e-4, "{name}: {e}");
        }
    }

    #[test]
    fn slab_and_interface_agree_with_references() {
        assert!(slab_check(6).unwrap().passed);
        assert!(fresnel_check(&Simulator::with_half_order(6)).unwrap().passed);
    }
}
