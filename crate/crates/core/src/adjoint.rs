//! Deflection efficiency and its gradient with respect to every segment,
//! from one forward and one adjoint solve.
//!
//! The adjoint illumination is a unit plane wave entering from the air
//! along the reverse of the +1 transmitted order (order -1 coming down).
//! Reciprocity of the truncated modal system gives, for a permittivity
//! change confined to segment `i`,
//!
//! ```text
//! dt/d(eps_i) = -i eps_air / (2 q) * int_layer 1_i(x) (D_fwd D_adj / eps_i^2 + E_z,fwd E_z,adj)
//! ```
//!
//! where `t` is the +1 amplitude and `q` its normalized longitudinal
//! wavenumber. The segment integral is evaluated exactly on the retained
//! harmonics, so the result is the derivative of the discretized solver.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::{DeviceVector, OperatingCondition};
use crate::error::{Error, Result};
use crate::rcwa::toeplitz::segment_coefficient;
use crate::rcwa::{deflection_efficiency, Incidence, Simulator};

/// Overall scale applied to the adjoint gradient. The closed-form
/// normalization above makes this exactly one; `fit_gradient_scale`
/// re-derives it against finite differences.
pub const GRADIENT_SCALE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub efficiency: f64,
    /// d(efficiency)/d(n_i) per unit change of the normalized index.
    pub gradient: Vec<f64>,
}

/// Efficiency and adjoint gradient of one device.
pub fn evaluate(
    sim: &Simulator,
    device: &DeviceVector,
    condition: &OperatingCondition,
) -> Result<EvaluationResult> {
    let grating = sim.grating(device, condition)?;
    let forward = grating.solve(Incidence::SubstrateNormal)?;
    let adjoint = grating.solve(Incidence::FromAir { order: -1 })?;

    let efficiency = deflection_efficiency(&forward)?;
    let t = forward.transmitted.amplitude(1)?;
    let out = grating.order_index(1)?;
    let q_out = grating.air.q[out];
    let inc = grating.order_index(0)?;
    let incident_power = (grating.substrate.q[inc] / grating.eps_substrate).re;
    let out_flux = (q_out / grating.eps_air).re;

    let (pd, pw) = grating.layer.product_spectra(
        grating.depth,
        (&forward.layer.c_plus, &forward.layer.c_minus),
        (&adjoint.layer.c_plus, &adjoint.layer.c_minus),
    );

    let n_seg = device.len();
    let max_h = 2 * grating.half as i64;
    let dt_prefactor = Complex64::new(0.0, -0.5 * grating.eps_air) / q_out;
    let scale = 2.0 * out_flux / incident_power;
    let t_conj = t.conj();

    let gradient: Vec<f64> = device
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let eps_i = grating.eps[i];
            let inv_eps2 = 1.0 / (eps_i * eps_i);
            let mut acc = Complex64::new(0.0, 0.0);
            for h in -max_h..=max_h {
                let idx = (h + max_h) as usize;
                acc += segment_coefficient(i, -h, n_seg) * (pd[idx] * inv_eps2 + pw[idx]);
            }
            let dt = dt_prefactor * acc;
            let deff_deps = scale * (t_conj * dt).re;
            GRADIENT_SCALE * deff_deps * sim.materials.permittivity_slope(v)
        })
        .collect();

    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("adjoint gradient"));
    }
    Ok(EvaluationResult {
        efficiency,
        gradient,
    })
}

/// Evaluates a list of devices concurrently. Results are returned in input
/// order and each is independent of scheduling.
pub fn evaluate_batch(
    sim: &Simulator,
    items: &[(DeviceVector, OperatingCondition)],
) -> Vec<Result<EvaluationResult>> {
    items
        .par_iter()
        .map(|(d, c)| evaluate(sim, d, c))
        .collect()
}

/// Central finite differences of the deflection efficiency. Components
/// closer than `h` to a bound fall back to a one-sided difference.
pub fn finite_difference_gradient(
    sim: &Simulator,
    device: &DeviceVector,
    condition: &OperatingCondition,
    h: f64,
) -> Result<Vec<f64>> {
    if !(h > 0.0 && h <= 1e-2) {
        return Err(Error::InvalidInput(format!(
            "finite-difference step must lie in (0, 1e-2], got {h}"
        )));
    }
    let base = device.as_slice();
    let eff_at = |i: usize, v: f64| -> Result<f64> {
        let mut d = base.to_vec();
        d[i] = v;
        sim.efficiency(&DeviceVector::new(d)?, condition)
    };
    let mut center: Option<f64> = None;
    let mut out = Vec::with_capacity(base.len());
    for (i, &v) in base.iter().enumerate() {
        let g = if v + h > 1.0 {
            let c = match center {
                Some(c) => c,
                None => *center.insert(sim.efficiency(device, condition)?),
            };
            (c - eff_at(i, v - h)?) / h
        } else if v - h < -1.0 {
            let c = match center {
                Some(c) => c,
                None => *center.insert(sim.efficiency(device, condition)?),
            };
            (eff_at(i, v + h)? - c) / h
        } else {
            (eff_at(i, v + h)? - eff_at(i, v - h)?) / (2.0 * h)
        };
        out.push(g);
    }
    Ok(out)
}

/// Least-squares scale `c` minimizing `|c * adjoint - fd|^2` over a set of
/// gradient pairs.
pub fn fit_gradient_scale(pairs: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (adj, fd) in pairs {
        for (a, f) in adj.iter().zip(fd) {
            num += a * f;
            den += a * a;
        }
    }
    num / den
}

/// `|a - b| / |b|` in the Euclidean norm.
pub fn relative_l2_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let norm: f64 = b.iter().map(|y| y * y).sum();
    (diff / norm).sqrt()
}

/// True when `a` and `b` agree in sign on every component whose magnitude
/// in `a` exceeds `fraction` of `max |a|`.
pub fn signs_agree(a: &[f64], b: &[f64], fraction: f64) -> bool {
    let max = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    a.iter()
        .zip(b)
        .filter(|(x, _)| x.abs() > fraction * max)
        .all(|(x, y)| x.signum() == y.signum())
}
