//! Layer primitives of the generator. Spatial layers are circular so the
//! output respects the periodicity of the grating.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Fully connected layer, weights stored row-major `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn xavier<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let mut layer = Self::zeros(in_dim, out_dim);
        xavier_fill(&mut layer.weight, in_dim, out_dim, rng);
        layer
    }

    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weight.chunks_exact(self.in_dim).zip(&self.bias))
        {
            *o = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    /// Accumulates parameter gradients for output gradient `dy`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense) {
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.bias[o] += g;
            let row = &mut grad.weight[o * self.in_dim..(o + 1) * self.in_dim];
            for (w, v) in row.iter_mut().zip(x) {
                *w += g * v;
            }
        }
    }
}

/// One-dimensional transposed convolution with stride, wrapping at the
/// period boundary. Weights are indexed `[in_ch][out_ch][tap]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransposedConv {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub in_len: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl TransposedConv {
    pub fn zeros(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, in_len: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            kernel,
            stride,
            in_len,
            weight: vec![0.0; in_ch * out_ch * kernel],
            bias: vec![0.0; out_ch],
        }
    }

    pub fn xavier<R: Rng>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        in_len: usize,
        rng: &mut R,
    ) -> Self {
        let mut layer = Self::zeros(in_ch, out_ch, kernel, stride, in_len);
        xavier_fill(&mut layer.weight, in_ch * kernel, out_ch * kernel, rng);
        layer
    }

    pub fn out_len(&self) -> usize {
        self.in_len * self.stride
    }

    #[inline]
    fn target(&self, i: usize, k: usize) -> usize {
        let l = self.out_len();
        (self.stride * i + k + l - self.kernel / 2) % l
    }

    #[inline]
    fn w(&self, ci: usize, co: usize, k: usize) -> f64 {
        self.weight[(ci * self.out_ch + co) * self.kernel + k]
    }

    /// `x` is `in_ch x in_len`, `out` is `out_ch x out_len`, both row-major.
    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        let l = self.out_len();
        for co in 0..self.out_ch {
            out[co * l..(co + 1) * l].fill(self.bias[co]);
        }
        for ci in 0..self.in_ch {
            let xrow = &x[ci * self.in_len..(ci + 1) * self.in_len];
            for co in 0..self.out_ch {
                for k in 0..self.kernel {
                    let w = self.w(ci, co, k);
                    for (i, &v) in xrow.iter().enumerate() {
                        out[co * l + self.target(i, k)] += w * v;
                    }
                }
            }
        }
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut TransposedConv) -> Vec<f64> {
        let l = self.out_len();
        let mut dx = vec![0.0; self.in_ch * self.in_len];
        for co in 0..self.out_ch {
            grad.bias[co] += dy[co * l..(co + 1) * l].iter().sum::<f64>();
        }
        for ci in 0..self.in_ch {
            for co in 0..self.out_ch {
                for k in 0..self.kernel {
                    let w = self.w(ci, co, k);
                    let mut gw = 0.0;
                    for i in 0..self.in_len {
                        let g = dy[co * l + self.target(i, k)];
                        gw += g * x[ci * self.in_len + i];
                        dx[ci * self.in_len + i] += w * g;
                    }
                    grad.weight[(ci * self.out_ch + co) * self.kernel + k] += gw;
                }
            }
        }
        dx
    }
}

/// 1x1 convolution collapsing all channels to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pointwise {
    pub in_ch: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Pointwise {
    pub fn zeros(in_ch: usize) -> Self {
        Self {
            in_ch,
            weight: vec![0.0; in_ch],
            bias: vec![0.0],
        }
    }

    pub fn xavier<R: Rng>(in_ch: usize, rng: &mut R) -> Self {
        let mut layer = Self::zeros(in_ch);
        xavier_fill(&mut layer.weight, in_ch, 1, rng);
        layer
    }

    pub fn forward(&self, x: &[f64], len: usize, out: &mut [f64]) {
        out.fill(self.bias[0]);
        for (ci, &w) in self.weight.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(&x[ci * len..(ci + 1) * len]) {
                *o += w * v;
            }
        }
    }

    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Pointwise) -> Vec<f64> {
        let len = dy.len();
        grad.bias[0] += dy.iter().sum::<f64>();
        let mut dx = vec![0.0; self.in_ch * len];
        for (ci, &w) in self.weight.iter().enumerate() {
            let xrow = &x[ci * len..(ci + 1) * len];
            grad.weight[ci] += xrow.iter().zip(dy).map(|(a, b)| a * b).sum::<f64>();
            for (d, g) in dx[ci * len..(ci + 1) * len].iter_mut().zip(dy) {
                *d = w * g;
            }
        }
        dx
    }
}

/// Normalized, symmetric Gaussian taps `-r..=r` with `r = ceil(truncate * sigma)`.
pub fn gaussian_kernel(sigma: f64, truncate: f64) -> Vec<f64> {
    let r = (truncate * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Circular convolution with a symmetric kernel centred on its middle tap.
/// Being symmetric, the same call is its own adjoint.
pub fn circular_filter(x: &[f64], kernel: &[f64]) -> Vec<f64> {
    let n = x.len() as i64;
    let r = (kernel.len() / 2) as i64;
    (0..n)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(t, &k)| k * x[(i + t as i64 - r).rem_euclid(n) as usize])
                .sum()
        })
        .collect()
}

#[inline]
pub fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

#[inline]
pub fn leaky_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

fn xavier_fill<R: Rng>(w: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut R) {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in w.iter_mut() {
        *v = rng.random_range(-a..=a);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel(2.0, 4.0);
        assert_eq!(k.len(), 17);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..k.len() {
            assert_eq!(k[i], k[k.len() - 1 - i]);
        }
    }

    #[test]
    fn filter_preserves_constants_and_is_self_adjoint() {
        let k = gaussian_kernel(2.0, 4.0);
        let c = circular_filter(&[0.3; 32], &k);
        assert!(c.iter().all(|v| (v - 0.3).abs() < 1e-15));
        let a: Vec<f64> = (0..32).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..32).map(|i| (i as f64 * 1.1).cos()).collect();
        let lhs: f64 = circular_filter(&a, &k).iter().zip(&b).map(|(x, y)| x * y).sum();
        let rhs: f64 = a.iter().zip(circular_filter(&b, &k)).map(|(x, y)| x * y).sum();
        assert!((lhs - rhs).abs() < 1e-13);
    }

    #[test]
    fn transposed_conv_doubles_length() {
        let mut t = TransposedConv::zeros(1, 1, 5, 2, 4);
        t.weight = vec![0.0, 0.0, 1.0, 0.0, 0.0];
        let mut out = vec![0.0; 8];
        t.forward(&[1.0, 2.0, 3.0, 4.0], &mut out);
        assert_eq!(out, vec![1.0, 0.0, 2.0, 0.0, 3.0, 0.0, 4.0, 0.0]);
    }
}
