//! Eigenmodes of the grating layer and of the homogeneous half-spaces.
//!
//! Fields are expanded as `U = eta0 * H_y = sum_m u_m exp(i kx_m x)` with
//! `x` and `z` scaled by the free-space wavenumber. Inside the layer the
//! truncated TM system reads
//!
//! ```text
//! u'  = i A^-1 e_x          A = [[1/eps]]   (inverse rule)
//! e_x' = i (I - K E^-1 K) u  E = [[eps]]
//! ```
//!
//! so `u'' = A^-1 (K E^-1 K - I) u`. Both `A` and `K E^-1 K - I` are
//! Hermitian and `A` is positive definite, so the modes follow from a
//! Hermitian-definite generalized eigenproblem with real eigenvalues.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Longitudinal wavenumber for a mode with `u'' = lambda u`: forward modes
/// vary as `exp(i q z)`, propagating (`q > 0`) or decaying (`Im q > 0`).
#[inline]
pub fn longitudinal(lambda: f64) -> Complex64 {
    if lambda <= 0.0 {
        Complex64::new((-lambda).sqrt(), 0.0)
    } else {
        Complex64::new(0.0, lambda.sqrt())
    }
}

/// Mode set of one region: tangential `u` and `e_x` profiles per mode.
#[derive(Debug, Clone)]
pub struct ModeSet {
    pub q: Vec<Complex64>,
    /// `u` Fourier profile of each mode (columns).
    pub w: DMatrix<Complex64>,
    /// `e_x` Fourier profile of each forward mode (columns).
    pub v: DMatrix<Complex64>,
}

impl ModeSet {
    /// Plane-wave modes of a homogeneous medium.
    pub fn homogeneous(eps: f64, kx: &[f64]) -> Self {
        let n = kx.len();
        let q: Vec<Complex64> = kx.iter().map(|k| longitudinal(k * k - eps)).collect();
        let w = DMatrix::identity(n, n);
        let v = DMatrix::from_diagonal(&DVector::from_iterator(n, q.iter().map(|q| q / eps)));
        Self { q, w, v }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Diagonal propagation phases `exp(i q d)` over a thickness `d`.
    pub fn phases(&self, d: f64) -> Vec<Complex64> {
        self.q.iter().map(|q| (I * q * d).exp()).collect()
    }
}

/// Eigenmodes of the grating layer together with the auxiliary bases used
/// to rebuild `D_x` and `E_z` from modal amplitudes.
#[derive(Debug, Clone)]
pub struct LayerModes {
    pub modes: ModeSet,
    /// `D_x = eps E_x` Fourier profile per forward mode: `W Q`.
    pub wd: DMatrix<Complex64>,
    /// `E^-1 K W`; `E_z = -(E^-1 K W)(phi+ c+ + phi- c-)`.
    pub ww: DMatrix<Complex64>,
    pub eigenvalues: Vec<f64>,
}

impl LayerModes {
    /// Solves the layer eigenproblem from the Toeplitz matrices of `eps`
    /// and `1/eps`.
    pub fn solve(
        eps_toeplitz: &DMatrix<Complex64>,
        inv_eps_toeplitz: &DMatrix<Complex64>,
        kx: &[f64],
    ) -> Result<Self> {
        let n = kx.len();
        let kmat = DMatrix::from_diagonal(&DVector::from_iterator(
            n,
            kx.iter().map(|&k| Complex64::new(k, 0.0)),
        ));

        let e_chol = eps_toeplitz.clone().cholesky().ok_or_else(|| Error::EigenSolver {
            reason: "permittivity Toeplitz matrix is not positive definite".into(),
            report: condition_report(eps_toeplitz),
        })?;
        let e_inv_k = e_chol.solve(&kmat);
        let mut b = &kmat * &e_inv_k;
        for i in 0..n {
            b[(i, i)] -= Complex64::new(1.0, 0.0);
        }

        let a_chol = inv_eps_toeplitz
            .clone()
            .cholesky()
            .ok_or_else(|| Error::EigenSolver {
                reason: "inverse-permittivity Toeplitz matrix is not positive definite".into(),
                report: condition_report(inv_eps_toeplitz),
            })?;
        let l = a_chol.l();
        // C = L^-1 B L^-H
        let t = l
            .solve_lower_triangular(&b)
            .ok_or(Error::Singular("reducing the layer eigenproblem"))?;
        let c = l
            .solve_lower_triangular(&t.adjoint())
            .ok_or(Error::Singular("reducing the layer eigenproblem"))?
            .adjoint();
        let c = (&c + c.adjoint()).scale(0.5);

        let eig = SymmetricEigen::try_new(c.clone(), f64::EPSILON, 10_000).ok_or_else(|| {
            Error::EigenSolver {
                reason: "Hermitian eigen-iteration did not converge".into(),
                report: condition_report(&c),
            }
        })?;
        let eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        if eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::EigenSolver {
                reason: "non-finite eigenvalue".into(),
                report: condition_report(&c),
            });
        }
        let y = eig.eigenvectors;
        let w = l
            .adjoint()
            .solve_upper_triangular(&y)
            .ok_or(Error::Singular("recovering layer eigenvectors"))?;

        let q: Vec<Complex64> = eigenvalues.iter().map(|&lam| longitudinal(lam)).collect();
        let qdiag = DMatrix::from_diagonal(&DVector::from_column_slice(&q));
        let wd = &w * &qdiag;
        let v = inv_eps_toeplitz * &wd;
        let ww = e_chol.solve(&(&kmat * &w));

        Ok(Self {
            modes: ModeSet { q, w, v },
            wd,
            ww,
            eigenvalues,
        })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Depth-integrated products of two layer solutions, projected onto the
    /// harmonics of the field product.
    ///
    /// For solutions with amplitudes `(c1p, c1m)` and `(c2p, c2m)` returns
    /// `(pd, pw)` where `pd[h + 2F] = sum_{a+b=h} int_0^d d1_a(z) d2_b(z) dz`
    /// (`D_x` components) and `pw` is the same for `E^-1 K u` (minus `E_z`).
    pub fn product_spectra(
        &self,
        d: f64,
        c1: (&[Complex64], &[Complex64]),
        c2: (&[Complex64], &[Complex64]),
    ) -> (Vec<Complex64>, Vec<Complex64>) {
        let n = self.len();
        let q = &self.modes.q;
        let mut same = DMatrix::zeros(n, n);
        let mut cross = DMatrix::zeros(n, n);
        for j in 0..n {
            for l in 0..n {
                let s = depth_integral(q[j] + q[l], Complex64::new(0.0, 0.0), d);
                let x = depth_integral(q[j], q[l], d);
                same[(j, l)] = s * (c1.0[j] * c2.0[l] + c1.1[j] * c2.1[l]);
                cross[(j, l)] = x * (c1.0[j] * c2.1[l] + c1.1[j] * c2.0[l]);
            }
        }
        let gd = &same - &cross;
        let gw = &same + &cross;
        let rd = &self.wd * gd * self.wd.transpose();
        let rw = &self.ww * gw * self.ww.transpose();
        (antidiagonal_sums(&rd), antidiagonal_sums(&rw))
    }
}

fn antidiagonal_sums(r: &DMatrix<Complex64>) -> Vec<Complex64> {
    let n = r.nrows();
    let mut out = vec![Complex64::new(0.0, 0.0); 2 * n - 1];
    for a in 0..n {
        for b in 0..n {
            out[a + b] += r[(a, b)];
        }
    }
    out
}

/// `int_0^d exp(i a z) exp(i b (d - z)) dz` for `Im a, Im b >= 0`, evaluated
/// without forming growing exponentials.
pub fn depth_integral(a: Complex64, b: Complex64, d: f64) -> Complex64 {
    let delta = (a - b) * (0.5 * d);
    if delta.norm() < 0.1 {
        let mid = (I * (a + b) * (0.5 * d)).exp();
        let x2 = delta * delta;
        // sin(x)/x to x^10
        let sinc = 1.0
            - x2 / 6.0
                * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0 * (1.0 - x2 / 110.0))));
        mid * sinc * d
    } else {
        ((I * a * d).exp() - (I * b * d).exp()) / (I * (a - b))
    }
}

/// Short diagnostic for a matrix the eigen-solver choked on.
pub fn condition_report(m: &DMatrix<Complex64>) -> String {
    let svd = m.clone().svd(false, false);
    let s = &svd.singular_values;
    let max = s.iter().cloned().fold(0.0_f64, f64::max);
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    format!(
        "{}x{} matrix, largest singular value {max:.3e}, smallest {min:.3e}, condition {:.3e}",
        m.nrows(),
        m.ncols(),
        if min > 0.0 { max / min } else { f64::INFINITY }
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(a: Complex64, b: Complex64, d: f64) -> Complex64 {
        // composite Simpson, fine grid
        let n = 20_000;
        let h = d / n as f64;
        let f = |z: f64| (I * a * z).exp() * (I * b * (d - z)).exp();
        let mut acc = f(0.0) + f(d);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += f(k as f64 * h) * w;
        }
        acc * (h / 3.0)
    }

    #[test]
    fn depth_integral_matches_quadrature() {
        let d = 2.3;
        let cases = [
            (Complex64::new(1.3, 0.0), Complex64::new(0.7, 0.0)),
            (Complex64::new(1.3, 0.0), Complex64::new(1.3 + 1e-4, 0.0)),
            (Complex64::new(0.0, 3.0), Complex64::new(0.4, 0.0)),
            (Complex64::new(0.0, 3.0), Complex64::new(0.0, 3.01)),
            (Complex64::new(2.0, 0.0), Complex64::new(0.0, 0.0)),
        ];
        for (a, b) in cases {
            let got = depth_integral(a, b, d);
            let want = quad(a, b, d);
            assert!((got - want).norm() < 1e-9 * (1.0 + want.norm()), "{a} {b}: {got} vs {want}");
        }
    }

    #[test]
    fn homogeneous_modes_are_plane_waves() {
        let kx = [-1.5, -0.75, 0.0, 0.75, 1.5];
        let m = ModeSet::homogeneous(2.1025, &kx);
        assert!((m.q[2].re - 1.45).abs() < 1e-14);
        assert!(m.q[0].re == 0.0 && m.q[0].im > 0.0);
        assert!((m.v[(1, 1)] - m.q[1] / 2.1025).norm() < 1e-15);
    }

    #[test]
    fn uniform_layer_eigenvalues_are_kx2_minus_eps() {
        let half = 3;
        let kx: Vec<f64> = (-3..=3).map(|m| m as f64 * 0.8).collect();
        let eps = 11.9025;
        let n = 2 * half + 1;
        let e = DMatrix::from_diagonal_element(n, n, Complex64::new(eps, 0.0));
        let a = DMatrix::from_diagonal_element(n, n, Complex64::new(1.0 / eps, 0.0));
        let modes = LayerModes::solve(&e, &a, &kx).unwrap();
        let mut got = modes.eigenvalues.clone();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want: Vec<f64> = kx.iter().map(|k| k * k - eps).collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-10, "{g} vs {w}");
        }
    }
}
