//! Device parameterization: the normalized index vector of one grating
//! period, the material set, and the operating condition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grating thickness used throughout, in nanometres.
pub const DEFAULT_THICKNESS_NM: f64 = 325.0;

/// Default number of segments per period.
pub const DEFAULT_SEGMENTS: usize = 256;

/// Refractive indices of the three media. All lossless and dispersionless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub n_si: f64,
    pub n_sio2: f64,
    pub n_air: f64,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        Self {
            n_si: 3.45,
            n_sio2: 1.45,
            n_air: 1.0,
        }
    }
}

impl MaterialConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_si", self.n_si),
            ("n_sio2", self.n_sio2),
            ("n_air", self.n_air),
        ] {
            if !v.is_finite() || v < 1.0 {
                return Err(Error::InvalidInput(format!(
                    "{name} = {v} must be real and >= 1"
                )));
            }
        }
        Ok(())
    }

    /// Refractive index of a segment with normalized value `v`.
    #[inline]
    pub fn index_of(&self, v: f64) -> f64 {
        self.n_air + 0.5 * (v + 1.0) * (self.n_si - self.n_air)
    }

    /// Permittivity of a segment with normalized value `v`.
    #[inline]
    pub fn permittivity_of(&self, v: f64) -> f64 {
        let n = self.index_of(v);
        n * n
    }

    /// d(permittivity)/dv for the linear index map.
    #[inline]
    pub fn permittivity_slope(&self, v: f64) -> f64 {
        self.index_of(v) * (self.n_si - self.n_air)
    }
}

/// Wavelength and deflection angle a device is designed for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingCondition {
    pub wavelength_nm: f64,
    pub angle_deg: f64,
}

impl OperatingCondition {
    pub fn new(wavelength_nm: f64, angle_deg: f64) -> Self {
        Self {
            wavelength_nm,
            angle_deg,
        }
    }

    pub fn period_nm(&self) -> Result<f64> {
        grating_period(self.wavelength_nm, self.angle_deg)
    }
}

/// Period that sends the +1 transmitted order into air at `angle_deg` for
/// normal incidence: `wavelength / sin(angle)`.
pub fn grating_period(wavelength_nm: f64, angle_deg: f64) -> Result<f64> {
    if !(wavelength_nm.is_finite() && wavelength_nm > 0.0) {
        return Err(Error::InvalidInput(format!(
            "wavelength must be positive, got {wavelength_nm}"
        )));
    }
    if !(angle_deg > 0.0 && angle_deg < 90.0) {
        return Err(Error::InvalidInput(format!(
            "deflection angle must lie in (0, 90) degrees, got {angle_deg}"
        )));
    }
    Ok(wavelength_nm / angle_deg.to_radians().sin())
}

/// Normalized refractive-index profile of one period: -1 is air, +1 is
/// silicon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DeviceVector(Vec<f64>);

impl DeviceVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "device needs at least 2 segments, got {}",
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (-1.0..=1.0).contains(*v)))
        {
            return Err(Error::InvalidInput(format!(
                "device component {i} = {v} is outside [-1, 1]"
            )));
        }
        Ok(Self(values))
    }

    /// Clamps every component into [-1, 1]; non-finite values are rejected.
    pub fn clamped(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("device vector"));
        }
        Self::new(values.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect())
    }

    pub fn uniform(len: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Thresholds each component by sign (zero maps to silicon).
    pub fn binarized(&self) -> Self {
        Self(
            self.0
                .iter()
                .map(|&v| if v >= 0.0 { 1.0 } else { -1.0 })
                .collect(),
        )
    }

    pub fn is_binary(&self) -> bool {
        self.first_non_binary().is_none()
    }

    pub fn first_non_binary(&self) -> Option<(usize, f64)> {
        self.0
            .iter()
            .copied()
            .enumerate()
            .find(|&(_, v)| v != 1.0 && v != -1.0)
    }

    /// Circular shift by `k` segments towards higher indices.
    pub fn rotated(&self, k: usize) -> Self {
        let mut v = self.0.clone();
        let n = v.len();
        v.rotate_right(k % n);
        Self(v)
    }

    /// Mirror image `v[i] -> v[N-1-i]`.
    pub fn mirrored(&self) -> Self {
        Self(self.0.iter().rev().copied().collect())
    }

    pub fn mean_abs(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum::<f64>() / self.0.len() as f64
    }
}

impl TryFrom<Vec<f64>> for DeviceVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DeviceVector> for Vec<f64> {
    fn from(d: DeviceVector) -> Self {
        d.0
    }
}

impl AsRef<[f64]> for DeviceVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Per-segment permittivity of a device.
pub fn index_profile(device: &DeviceVector, materials: &MaterialConfig) -> Vec<f64> {
    device
        .as_slice()
        .iter()
        .map(|&v| materials.permittivity_of(v))
        .collect()
}
