//! Weight initialization.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Scalar, Tensor};

/// Kaiming-uniform fan-in initialization for convolution kernels.
pub fn kaiming_uniform<T: Scalar>(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data: Vec<T> = (0..numel)
        .map(|_| T::cast((rng.gen::<f64>() * 2.0 - 1.0) * bound))
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Small uniform values for bias vectors. Exact zeros would make the
/// zero-padded regions of a feature map constant within their layer-norm
/// groups (variance 0), which turns the normalization into a gradient
/// amplifier; a small random offset keeps every group non-degenerate.
pub fn small_uniform<T: Scalar>(shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let numel: usize = shape.iter().product();
    let data: Vec<T> = (0..numel)
        .map(|_| T::cast((rng.gen::<f64>() * 2.0 - 1.0) * bound))
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Random matrix with orthonormal rows (Gram-Schmidt on Gaussian draws),
/// reshaped to `shape`; rows = last axis, columns = everything else.
pub fn orthogonal<T: Scalar>(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<T> {
    let numel: usize = shape.iter().product();
    let cols = *shape.last().unwrap_or(&1);
    let rows = numel / cols.max(1);
    // Gaussian by Box-Muller on uniform draws
    let gauss = |rng: &mut ChaCha8Rng| -> f64 {
        let u1: f64 = rng.gen::<f64>().max(1e-12);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * core::f64::consts::PI * u2).cos()
    };
    // orthonormalize the shorter side
    let (m, n, transpose) = if rows <= cols {
        (rows, cols, false)
    } else {
        (cols, rows, true)
    };
    let mut q = vec![0.0f64; m * n];
    for v in q.iter_mut() {
        *v = gauss(rng);
    }
    for i in 0..m {
        for j in 0..i {
            let mut dot = 0.0;
            for k in 0..n {
                dot += q[i * n + k] * q[j * n + k];
            }
            for k in 0..n {
                q[i * n + k] -= dot * q[j * n + k];
            }
        }
        let norm: f64 = q[i * n..(i + 1) * n].iter().map(|v| v * v).sum::<f64>().sqrt();
        let inv = if norm > 1e-12 { 1.0 / norm } else { 0.0 };
        for k in 0..n {
            q[i * n + k] *= inv;
        }
    }
    let data: Vec<T> = if transpose {
        let mut out = vec![T::zero(); numel];
        for r in 0..rows {
            for c in 0..cols {
                out[r * cols + c] = T::cast(q[c * rows + r]);
            }
        }
        out
    } else {
        q.into_iter().map(T::cast).collect()
    };
    Tensor::from_vec(shape, data).unwrap()
}
