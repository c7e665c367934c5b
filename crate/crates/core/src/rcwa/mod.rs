//! Rigorous coupled-wave analysis of a single-layer, one-dimensionally
//! periodic grating under TM illumination.
//!
//! The grating sits on a substrate (below, `z < 0`) and is covered by air
//! (above, `z > d`). The layer permittivity is factorized with the inverse
//! rule, the layer modes come from a Hermitian-definite eigenproblem, and
//! the substrate/layer/air interfaces are combined as scattering matrices so
//! only decaying exponentials are ever formed.

pub mod modes;
pub mod smatrix;
pub mod toeplitz;

use std::cell::Cell;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::device::{
    index_profile, DeviceVector, MaterialConfig, OperatingCondition, DEFAULT_THICKNESS_NM,
};
use crate::error::{Error, Result};
use modes::{LayerModes, ModeSet};
use smatrix::ScatteringMatrix;

/// Solver truncation settings. Polarization is always TM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RcwaSettings {
    /// Orders `-F..=F` are retained.
    pub fourier_half_order: usize,
    /// Grating thickness in nanometres.
    #[serde(default = "default_thickness")]
    pub thickness_nm: f64,
}

fn default_thickness() -> f64 {
    DEFAULT_THICKNESS_NM
}

impl Default for RcwaSettings {
    fn default() -> Self {
        Self {
            fourier_half_order: 14,
            thickness_nm: DEFAULT_THICKNESS_NM,
        }
    }
}

impl RcwaSettings {
    pub fn with_half_order(fourier_half_order: usize) -> Self {
        Self {
            fourier_half_order,
            ..Self::default()
        }
    }

    pub fn num_orders(&self) -> usize {
        2 * self.fourier_half_order + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.fourier_half_order < 1 {
            return Err(Error::InvalidInput(
                "fourier_half_order must be at least 1".into(),
            ));
        }
        if !(self.thickness_nm.is_finite() && self.thickness_nm > 0.0) {
            return Err(Error::InvalidInput(format!(
                "thickness must be positive, got {}",
                self.thickness_nm
            )));
        }
        Ok(())
    }
}

/// Illumination of the grating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Incidence {
    /// Unit plane wave travelling up from the substrate at normal incidence.
    SubstrateNormal,
    /// Unit plane wave travelling down from the air with the transverse
    /// wavevector of diffraction order `order`.
    FromAir { order: i32 },
}

/// A grating prepared for solving: geometry, media and all mode sets and
/// interface scattering matrices. Several illuminations can share it.
#[derive(Debug, Clone)]
pub struct Grating {
    pub half: usize,
    /// Normalized transverse wavenumbers `m * lambda / period`.
    pub kx: Vec<f64>,
    /// Normalized thickness `k0 * d`.
    pub depth: f64,
    pub eps_substrate: f64,
    pub eps_air: f64,
    /// Segment permittivities.
    pub eps: Vec<f64>,
    pub substrate: ModeSet,
    pub air: ModeSet,
    pub layer: Arc<LayerModes>,
    phases: Vec<Complex64>,
    bottom: ScatteringMatrix,
    top: ScatteringMatrix,
}

impl Grating {
    pub fn new(
        device: &DeviceVector,
        condition: &OperatingCondition,
        materials: &MaterialConfig,
        settings: &RcwaSettings,
    ) -> Result<Self> {
        settings.validate()?;
        materials.validate()?;
        let period = condition.period_nm()?;
        let half = settings.fourier_half_order;
        let ratio = condition.wavelength_nm / period;
        let kx: Vec<f64> = (-(half as i64)..=half as i64)
            .map(|m| m as f64 * ratio)
            .collect();
        let depth = 2.0 * PI * settings.thickness_nm / condition.wavelength_nm;

        let eps = index_profile(device, materials);
        let inv: Vec<f64> = eps.iter().map(|e| 1.0 / e).collect();
        let e_mat = toeplitz::toeplitz(&toeplitz::fourier_coefficients(&eps, 2 * half), half);
        let a_mat = toeplitz::toeplitz(&toeplitz::fourier_coefficients(&inv, 2 * half), half);
        let layer = LayerModes::solve(&e_mat, &a_mat, &kx)?;

        let eps_substrate = materials.n_sio2 * materials.n_sio2;
        let eps_air = materials.n_air * materials.n_air;
        let substrate = ModeSet::homogeneous(eps_substrate, &kx);
        let air = ModeSet::homogeneous(eps_air, &kx);
        let bottom = ScatteringMatrix::interface(&substrate, &layer.modes)?;
        let top = ScatteringMatrix::interface(&layer.modes, &air)?;
        let phases = layer.modes.phases(depth);

        Ok(Self {
            half,
            kx,
            depth,
            eps_substrate,
            eps_air,
            eps,
            substrate,
            air,
            layer: Arc::new(layer),
            phases,
            bottom,
            top,
        })
    }

    pub fn num_orders(&self) -> usize {
        self.kx.len()
    }

    pub fn order_index(&self, order: i32) -> Result<usize> {
        if order.unsigned_abs() as usize > self.half {
            return Err(Error::OrderNotRetained {
                order,
                half: self.half,
            });
        }
        Ok((order + self.half as i32) as usize)
    }

    /// Full substrate-to-air scattering matrix assembled by star products.
    pub fn scattering_matrix(&self) -> Result<ScatteringMatrix> {
        self.bottom
            .star(&ScatteringMatrix::propagation(&self.phases))?
            .star(&self.top)
    }

    /// Power flux (per unit incident amplitude squared) carried upwards by
    /// order `idx` in air, or downwards in the substrate.
    fn air_flux(&self, idx: usize) -> f64 {
        (self.air.q[idx] / self.eps_air).re
    }

    fn substrate_flux(&self, idx: usize) -> f64 {
        (self.substrate.q[idx] / self.eps_substrate).re
    }

    pub fn solve(&self, incidence: Incidence) -> Result<DiffractionSolution> {
        SOLVES.with(|c| c.set(c.get() + 1));
        let n = self.num_orders();
        let mut a_in = DVector::<Complex64>::zeros(n);
        let mut b_in = DVector::<Complex64>::zeros(n);
        let incident_power = match incidence {
            Incidence::SubstrateNormal => {
                let idx = self.order_index(0)?;
                a_in[idx] = Complex64::new(1.0, 0.0);
                self.substrate_flux(idx)
            }
            Incidence::FromAir { order } => {
                let idx = self.order_index(order)?;
                let p = self.air_flux(idx);
                if p <= 0.0 {
                    return Err(Error::EvanescentOrder(order));
                }
                b_in[idx] = Complex64::new(1.0, 0.0);
                p
            }
        };

        // c+ = S1_21 a + S1_22 X c-,   c- = S2_11 X c+ + S2_12 b
        let x = DMatrix::from_diagonal(&DVector::from_column_slice(&self.phases));
        let id = DMatrix::<Complex64>::identity(n, n);
        let mut sys = DMatrix::<Complex64>::zeros(2 * n, 2 * n);
        sys.view_mut((0, 0), (n, n)).copy_from(&id);
        sys.view_mut((0, n), (n, n))
            .copy_from(&(-(&self.bottom.s22 * &x)));
        sys.view_mut((n, 0), (n, n)).copy_from(&(-(&self.top.s11 * &x)));
        sys.view_mut((n, n), (n, n)).copy_from(&id);
        let mut rhs = DVector::<Complex64>::zeros(2 * n);
        rhs.rows_mut(0, n).copy_from(&(&self.bottom.s21 * &a_in));
        rhs.rows_mut(n, n).copy_from(&(&self.top.s12 * &b_in));
        let c = sys
            .lu()
            .solve(&rhs)
            .ok_or(Error::Singular("solving for the layer amplitudes"))?;
        let c_plus: Vec<Complex64> = c.rows(0, n).iter().copied().collect();
        let c_minus: Vec<Complex64> = c.rows(n, n).iter().copied().collect();
        let cp = DVector::from_column_slice(&c_plus);
        let cm = DVector::from_column_slice(&c_minus);

        let down = &self.bottom.s11 * &a_in + &self.bottom.s12 * (&x * &cm);
        let up = &self.top.s21 * (&x * &cp) + &self.top.s22 * &b_in;

        let sub_eff: Vec<f64> = (0..n)
            .map(|i| self.substrate_flux(i) * down[i].norm_sqr() / incident_power)
            .collect();
        let air_eff: Vec<f64> = (0..n)
            .map(|i| self.air_flux(i) * up[i].norm_sqr() / incident_power)
            .collect();
        let sub_prop: Vec<bool> = (0..n).map(|i| self.substrate_flux(i) > 0.0).collect();
        let air_prop: Vec<bool> = (0..n).map(|i| self.air_flux(i) > 0.0).collect();

        let down: Vec<Complex64> = down.iter().copied().collect();
        let up: Vec<Complex64> = up.iter().copied().collect();
        let (reflected, transmitted) = match incidence {
            Incidence::SubstrateNormal => (
                OrderSet::new(down, sub_eff, sub_prop, self.half),
                OrderSet::new(up, air_eff, air_prop, self.half),
            ),
            Incidence::FromAir { .. } => (
                OrderSet::new(up, air_eff, air_prop, self.half),
                OrderSet::new(down, sub_eff, sub_prop, self.half),
            ),
        };

        Ok(DiffractionSolution {
            incidence,
            reflected,
            transmitted,
            layer: LayerField {
                modes: Arc::clone(&self.layer),
                c_plus,
                c_minus,
                depth: self.depth,
                eps: self.eps.clone(),
                half: self.half,
            },
        })
    }
}

/// Outgoing amplitudes and efficiencies of every retained order on one
/// side of the grating.
#[derive(Debug, Clone)]
pub struct OrderSet {
    half: usize,
    pub amplitudes: Vec<Complex64>,
    pub efficiencies: Vec<f64>,
    pub propagating: Vec<bool>,
}

impl OrderSet {
    fn new(
        amplitudes: Vec<Complex64>,
        mut efficiencies: Vec<f64>,
        propagating: Vec<bool>,
        half: usize,
    ) -> Self {
        for (e, &p) in efficiencies.iter_mut().zip(&propagating) {
            if !p {
                *e = 0.0;
            }
        }
        Self {
            half,
            amplitudes,
            efficiencies,
            propagating,
        }
    }

    fn index(&self, order: i32) -> Result<usize> {
        if order.unsigned_abs() as usize > self.half {
            return Err(Error::OrderNotRetained {
                order,
                half: self.half,
            });
        }
        Ok((order + self.half as i32) as usize)
    }

    pub fn amplitude(&self, order: i32) -> Result<Complex64> {
        Ok(self.amplitudes[self.index(order)?])
    }

    pub fn efficiency(&self, order: i32) -> Result<f64> {
        Ok(self.efficiencies[self.index(order)?])
    }

    pub fn is_propagating(&self, order: i32) -> Result<bool> {
        Ok(self.propagating[self.index(order)?])
    }

    pub fn total(&self) -> f64 {
        self.efficiencies.iter().sum()
    }
}

/// Modal amplitudes inside the grating layer, enough to rebuild the field
/// anywhere in it.
#[derive(Debug, Clone)]
pub struct LayerField {
    pub modes: Arc<LayerModes>,
    /// Forward amplitudes referenced at the bottom of the layer.
    pub c_plus: Vec<Complex64>,
    /// Backward amplitudes referenced at the top of the layer.
    pub c_minus: Vec<Complex64>,
    pub depth: f64,
    pub eps: Vec<f64>,
    half: usize,
}

/// Field sample inside the layer, normalized so that `h_y` is
/// `eta0 * H_y`.
#[derive(Debug, Clone, Copy)]
pub struct FieldSample {
    pub e_x: Complex64,
    pub e_z: Complex64,
    pub h_y: Complex64,
}

impl LayerField {
    /// Field at fractional position `x` in [0, 1) of the period and
    /// fractional height `z` in [0, 1] of the layer.
    pub fn sample(&self, x: f64, z: f64) -> FieldSample {
        let n = self.c_plus.len();
        let zz = z * self.depth;
        let q = &self.modes.modes.q;
        let i = Complex64::new(0.0, 1.0);
        let mut sum_amp = Vec::with_capacity(n);
        let mut diff_amp = Vec::with_capacity(n);
        for j in 0..n {
            let fp = (i * q[j] * zz).exp() * self.c_plus[j];
            let fm = (i * q[j] * (self.depth - zz)).exp() * self.c_minus[j];
            sum_amp.push(fp + fm);
            diff_amp.push(fp - fm);
        }
        let sum_amp = DVector::from_vec(sum_amp);
        let diff_amp = DVector::from_vec(diff_amp);
        let u = &self.modes.modes.w * &sum_amp;
        let dx = &self.modes.wd * &diff_amp;
        let wz = &self.modes.ww * &sum_amp;
        let mut hy = Complex64::new(0.0, 0.0);
        let mut d = Complex64::new(0.0, 0.0);
        let mut ez = Complex64::new(0.0, 0.0);
        for m in 0..n {
            let order = m as f64 - self.half as f64;
            let ph = Complex64::from_polar(1.0, 2.0 * PI * order * x);
            hy += u[m] * ph;
            d += dx[m] * ph;
            ez -= wz[m] * ph;
        }
        let seg = ((x.rem_euclid(1.0)) * self.eps.len() as f64) as usize;
        let seg = seg.min(self.eps.len() - 1);
        FieldSample {
            e_x: d / self.eps[seg],
            e_z: ez,
            h_y: hy,
        }
    }
}

/// Complete result of one RCWA solve.
#[derive(Debug, Clone)]
pub struct DiffractionSolution {
    pub incidence: Incidence,
    /// Orders returned to the incidence side.
    pub reflected: OrderSet,
    /// Orders emerging on the far side.
    pub transmitted: OrderSet,
    pub layer: LayerField,
}

impl DiffractionSolution {
    /// Sum of all propagating-order efficiencies; 1 for lossless media.
    pub fn total_efficiency(&self) -> f64 {
        self.reflected.total() + self.transmitted.total()
    }
}

thread_local! {
    static SOLVES: Cell<u64> = const { Cell::new(0) };
}

/// Number of field solves performed on the current thread.
pub fn solve_count() -> u64 {
    SOLVES.with(|c| c.get())
}

/// Material set plus truncation settings: everything needed to turn a
/// device and an operating condition into a diffraction solution.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Simulator {
    #[serde(default)]
    pub materials: MaterialConfig,
    #[serde(default)]
    pub rcwa: RcwaSettings,
}

impl Simulator {
    pub fn new(materials: MaterialConfig, rcwa: RcwaSettings) -> Self {
        Self { materials, rcwa }
    }

    pub fn with_half_order(half: usize) -> Self {
        Self {
            rcwa: RcwaSettings::with_half_order(half),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.materials.validate()?;
        self.rcwa.validate()
    }

    pub fn grating(&self, device: &DeviceVector, condition: &OperatingCondition) -> Result<Grating> {
        Grating::new(device, condition, &self.materials, &self.rcwa)
    }

    pub fn simulate(
        &self,
        device: &DeviceVector,
        condition: &OperatingCondition,
        incidence: Incidence,
    ) -> Result<DiffractionSolution> {
        self.grating(device, condition)?.solve(incidence)
    }

    /// Deflection efficiency of `device` under normal substrate illumination.
    pub fn efficiency(&self, device: &DeviceVector, condition: &OperatingCondition) -> Result<f64> {
        deflection_efficiency(&self.simulate(device, condition, Incidence::SubstrateNormal)?)
    }
}

/// Solves the grating for one illumination.
pub fn simulate(
    device: &DeviceVector,
    condition: &OperatingCondition,
    materials: &MaterialConfig,
    settings: &RcwaSettings,
    incidence: Incidence,
) -> Result<DiffractionSolution> {
    Grating::new(device, condition, materials, settings)?.solve(incidence)
}

/// Fraction of the incident power carried by the +1 transmitted order.
pub fn deflection_efficiency(solution: &DiffractionSolution) -> Result<f64> {
    if !solution.transmitted.is_propagating(1)? {
        return Err(Error::EvanescentOrder(1));
    }
    solution.transmitted.efficiency(1)
}
