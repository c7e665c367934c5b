//! Scattering matrices for interfaces and layers, combined with the
//! Redheffer star product.
//!
//! Convention: outgoing `[b1; a2] = S [a1; b2]`, where `a` amplitudes travel
//! towards +z, `b` towards -z, side 1 lies below and side 2 above.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::modes::ModeSet;
use crate::error::{Error, Result};

type CMat = DMatrix<Complex64>;

#[derive(Debug, Clone)]
pub struct ScatteringMatrix {
    pub s11: CMat,
    pub s12: CMat,
    pub s21: CMat,
    pub s22: CMat,
}

impl ScatteringMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            s11: CMat::zeros(n, n),
            s12: CMat::identity(n, n),
            s21: CMat::identity(n, n),
            s22: CMat::zeros(n, n),
        }
    }

    /// Interface between region `lower` and region `upper`, with tangential
    /// `u` and `e_x` continuous.
    pub fn interface(lower: &ModeSet, upper: &ModeSet) -> Result<Self> {
        let n = lower.len();
        // W1 b1 - W2 a2 = -W1 a1 + W2 b2
        // -V1 b1 - V2 a2 = -V1 a1 - V2 b2
        let mut m = CMat::zeros(2 * n, 2 * n);
        let mut rhs = CMat::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&lower.w);
        m.view_mut((0, n), (n, n)).copy_from(&(-&upper.w));
        m.view_mut((n, 0), (n, n)).copy_from(&(-&lower.v));
        m.view_mut((n, n), (n, n)).copy_from(&(-&upper.v));
        rhs.view_mut((0, 0), (n, n)).copy_from(&(-&lower.w));
        rhs.view_mut((0, n), (n, n)).copy_from(&upper.w);
        rhs.view_mut((n, 0), (n, n)).copy_from(&(-&lower.v));
        rhs.view_mut((n, n), (n, n)).copy_from(&(-&upper.v));
        let s = m
            .lu()
            .solve(&rhs)
            .ok_or(Error::Singular("assembling an interface scattering matrix"))?;
        Ok(Self::from_blocks(&s, n))
    }

    /// Homogeneous propagation over a slab with diagonal phases.
    pub fn propagation(phases: &[Complex64]) -> Self {
        let n = phases.len();
        let x = CMat::from_diagonal(&nalgebra::DVector::from_column_slice(phases));
        Self {
            s11: CMat::zeros(n, n),
            s12: x.clone(),
            s21: x,
            s22: CMat::zeros(n, n),
        }
    }

    fn from_blocks(s: &CMat, n: usize) -> Self {
        Self {
            s11: s.view((0, 0), (n, n)).into_owned(),
            s12: s.view((0, n), (n, n)).into_owned(),
            s21: s.view((n, 0), (n, n)).into_owned(),
            s22: s.view((n, n), (n, n)).into_owned(),
        }
    }

    /// Redheffer star product: `self` below, `upper` above.
    pub fn star(&self, upper: &Self) -> Result<Self> {
        let n = self.s11.nrows();
        let id = CMat::identity(n, n);
        let lu1 = (&id - &upper.s11 * &self.s22).lu();
        let lu2 = (&id - &self.s22 * &upper.s11).lu();
        // (I - B11 A22)^-1 B11 A21  and  (I - B11 A22)^-1 B12
        let f1 = lu1
            .solve(&(&upper.s11 * &self.s21))
            .ok_or(Error::Singular("cascading scattering matrices"))?;
        let f2 = lu1
            .solve(&upper.s12)
            .ok_or(Error::Singular("cascading scattering matrices"))?;
        let g1 = lu2
            .solve(&self.s21)
            .ok_or(Error::Singular("cascading scattering matrices"))?;
        let g2 = lu2
            .solve(&(&self.s22 * &upper.s12))
            .ok_or(Error::Singular("cascading scattering matrices"))?;
        Ok(Self {
            s11: &self.s11 + &self.s12 * f1,
            s12: &self.s12 * f2,
            s21: &upper.s21 * g1,
            s22: &upper.s22 + &upper.s21 * g2,
        })
    }
}
