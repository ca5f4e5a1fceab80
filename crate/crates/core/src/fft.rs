//! Iterative radix-2 FFT over split real/imaginary buffers.
//!
//! Sized for the 256-point analysis transform; any power of two works. A
//! `Plan` precomputes the twiddle table and the bit-reversal permutation.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{param_err, Result};
use crate::tensor::Scalar;

pub struct Plan<T> {
    n: usize,
    // exp(-2*pi*i*k/n) for k in 0..n/2
    tw_re: Vec<T>,
    tw_im: Vec<T>,
    bitrev: Vec<u32>,
}

impl<T: Scalar> Plan<T> {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(param_err!("fft", "size {n} is not a power of two >= 2"));
        }
        let half = n / 2;
        let mut tw_re = Vec::with_capacity(half);
        let mut tw_im = Vec::with_capacity(half);
        for k in 0..half {
            let ang = -2.0 * core::f64::consts::PI * k as f64 / n as f64;
            tw_re.push(T::cast(ang.cos()));
            tw_im.push(T::cast(ang.sin()));
        }
        let bits = n.trailing_zeros();
        let bitrev = (0..n as u32)
            .map(|i| i.reverse_bits() >> (32 - bits))
            .collect();
        Ok(Plan {
            n,
            tw_re,
            tw_im,
            bitrev,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    /// In-place transform. `inverse` applies conjugate twiddles and the 1/n
    /// scale, making `inverse(forward(x)) == x`.
    pub fn process(&self, re: &mut [T], im: &mut [T], inverse: bool) {
        let n = self.n;
        debug_assert_eq!(re.len(), n);
        debug_assert_eq!(im.len(), n);
        for i in 0..n {
            let j = self.bitrev[i] as usize;
            if i < j {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
        let mut len = 2usize;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let wr = self.tw_re[k * stride];
                    let wi = if inverse {
                        -self.tw_im[k * stride]
                    } else {
                        self.tw_im[k * stride]
                    };
                    let i0 = start + k;
                    let i1 = i0 + half;
                    let tr = re[i1] * wr - im[i1] * wi;
                    let ti = re[i1] * wi + im[i1] * wr;
                    re[i1] = re[i0] - tr;
                    im[i1] = im[i0] - ti;
                    re[i0] = re[i0] + tr;
                    im[i0] = im[i0] + ti;
                }
            }
            len *= 2;
        }
        if inverse {
            let scale = T::cast(1.0 / n as f64);
            for v in re.iter_mut() {
                *v = *v * scale;
            }
            for v in im.iter_mut() {
                *v = *v * scale;
            }
        }
    }
}
