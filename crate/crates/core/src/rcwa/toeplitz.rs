//! Fourier coefficients of piecewise-constant profiles and the Toeplitz
//! convolution matrices built from them.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Fourier coefficient `k` of the indicator function of segment `i` out of
/// `n_seg` equal segments, under the `exp(+i 2 pi k x / period)` convention.
#[inline]
pub fn segment_coefficient(i: usize, k: i64, n_seg: usize) -> Complex64 {
    if k == 0 {
        return Complex64::new(1.0 / n_seg as f64, 0.0);
    }
    let arg = PI * k as f64 / n_seg as f64;
    let sinc = arg.sin() / arg;
    let phase = -arg * (2 * i + 1) as f64;
    Complex64::from_polar(sinc / n_seg as f64, phase)
}

/// Fourier coefficients `-max_k..=max_k` of a profile sampled as
/// `values[i]` on segment `i`. Index `k + max_k` of the result holds
/// coefficient `k`.
pub fn fourier_coefficients(values: &[f64], max_k: usize) -> Vec<Complex64> {
    let n_seg = values.len();
    let mk = max_k as i64;
    (-mk..=mk)
        .map(|k| {
            values
                .iter()
                .enumerate()
                .map(|(i, &v)| segment_coefficient(i, k, n_seg) * v)
                .sum()
        })
        .collect()
}

/// Toeplitz matrix `T[m][n] = coeffs[m - n]` for orders `-half..=half`,
/// where `coeffs` covers `-2 half..=2 half`.
pub fn toeplitz(coeffs: &[Complex64], half: usize) -> DMatrix<Complex64> {
    let n = 2 * half + 1;
    debug_assert_eq!(coeffs.len(), 4 * half + 1);
    DMatrix::from_fn(n, n, |m, k| coeffs[m + 2 * half - k])
}
