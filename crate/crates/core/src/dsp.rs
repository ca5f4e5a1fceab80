//! STFT analysis/synthesis with square-root Hann windows and exact
//! overlap-add normalization.
//!
//! Signals are padded with `N - R` zeros at both ends before framing, so
//! every input sample is covered by a full window-square sum and
//! `istft(stft(x))` reconstructs `x` exactly (up to rounding).

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{dim_err, param_err, Result};
use crate::fft::Plan;
use crate::tensor::{Scalar, Tensor};

/// Analysis/synthesis configuration: 8 kHz, 32 ms frames, 8 ms hop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            sample_rate: 8000,
            frame_len: 256,
            hop: 64,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frame_len < 2 || !self.frame_len.is_power_of_two() {
            return Err(param_err!(
                "stft",
                "frame_len {} must be a power of two",
                self.frame_len
            ));
        }
        if self.hop == 0 || self.frame_len % self.hop != 0 {
            return Err(param_err!(
                "stft",
                "hop {} must divide frame_len {}",
                self.hop,
                self.frame_len
            ));
        }
        Ok(())
    }

    /// Retained bins: N/2 + 1.
    pub fn bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    /// Zero padding placed at each end of the signal before framing.
    pub fn edge_pad(&self) -> usize {
        self.frame_len - self.hop
    }

    /// Frame count for a signal of `len` samples.
    pub fn frames_for(&self, len: usize) -> usize {
        let padded = len + 2 * self.edge_pad();
        (padded - self.frame_len) / self.hop + 1
    }
}

/// Square-root periodic Hann window: `sqrt(0.5 - 0.5 cos(2 pi n / N))`.
pub fn sqrt_hann<T: Scalar>(n: usize) -> Result<Vec<T>> {
    if n == 0 || n % 2 != 0 {
        return Err(param_err!("sqrt_hann", "window length {n} must be even and positive"));
    }
    Ok((0..n)
        .map(|i| {
            let hann = 0.5 - 0.5 * (2.0 * core::f64::consts::PI * i as f64 / n as f64).cos();
            T::cast(hann.max(0.0).sqrt())
        })
        .collect())
}

/// Complex T x F spectrogram stored as split real/imaginary planes.
#[derive(Debug, Clone)]
pub struct Spectrogram<T> {
    pub frames: usize,
    pub bins: usize,
    pub re: Vec<T>,
    pub im: Vec<T>,
}

impl<T: Scalar> Spectrogram<T> {
    pub fn zeros(frames: usize, bins: usize) -> Self {
        Spectrogram {
            frames,
            bins,
            re: vec![T::zero(); frames * bins],
            im: vec![T::zero(); frames * bins],
        }
    }

    pub fn at(&self, t: usize, f: usize) -> (T, T) {
        let i = t * self.bins + f;
        (self.re[i], self.im[i])
    }

    pub fn magnitude(&self) -> Vec<T> {
        self.re
            .iter()
            .zip(self.im.iter())
            .map(|(&r, &i)| (r * r + i * i).sqrt())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().chain(self.im.iter()).all(|v| v.is_finite())
    }

    /// Packs the planes as a `[T, F, 2]` tensor (re, im in the last axis).
    pub fn to_tensor(&self) -> Tensor<T> {
        let mut data = Vec::with_capacity(self.frames * self.bins * 2);
        for i in 0..self.frames * self.bins {
            data.push(self.re[i]);
            data.push(self.im[i]);
        }
        Tensor::from_vec(&[self.frames, self.bins, 2], data).unwrap()
    }

    /// Inverse of [`Spectrogram::to_tensor`].
    pub fn from_tensor(t: &Tensor<T>) -> Result<Self> {
        let s = t.shape();
        if s.len() != 3 || s[2] != 2 {
            return Err(dim_err!("spectrogram", "expected [T, F, 2], got {:?}", s));
        }
        let (frames, bins) = (s[0], s[1]);
        let mut sp = Spectrogram::zeros(frames, bins);
        let d = t.data();
        for i in 0..frames * bins {
            sp.re[i] = d[2 * i];
            sp.im[i] = d[2 * i + 1];
        }
        Ok(sp)
    }

    /// Pointwise complex multiply (mask application).
    pub fn mul(&self, other: &Spectrogram<T>) -> Result<Spectrogram<T>> {
        if self.frames != other.frames || self.bins != other.bins {
            return Err(dim_err!(
                "complex-mul",
                "{}x{} vs {}x{}",
                self.frames,
                self.bins,
                other.frames,
                other.bins
            ));
        }
        let mut out = Spectrogram::zeros(self.frames, self.bins);
        for i in 0..self.re.len() {
            out.re[i] = self.re[i] * other.re[i] - self.im[i] * other.im[i];
            out.im[i] = self.re[i] * other.im[i] + self.im[i] * other.re[i];
        }
        Ok(out)
    }
}

/// Forward STFT with edge padding and square-root Hann analysis window.
pub fn stft<T: Scalar>(x: &[T], cfg: &StftConfig) -> Result<Spectrogram<T>> {
    cfg.validate()?;
    if x.is_empty() {
        return Err(param_err!("stft", "empty input signal"));
    }
    let n = cfg.frame_len;
    let pad = cfg.edge_pad();
    let frames = cfg.frames_for(x.len());
    let bins = cfg.bins();
    let window = sqrt_hann::<T>(n)?;
    let plan = Plan::<T>::new(n)?;

    let mut out = Spectrogram::zeros(frames, bins);
    let mut re = vec![T::zero(); n];
    let mut im = vec![T::zero(); n];
    for t in 0..frames {
        let start = t * cfg.hop; // position in padded coordinates
        for i in 0..n {
            let src = start + i;
            let v = if src >= pad && src < pad + x.len() {
                x[src - pad]
            } else {
                T::zero()
            };
            re[i] = v * window[i];
            im[i] = T::zero();
        }
        plan.process(&mut re, &mut im, false);
        let row = t * bins;
        out.re[row..row + bins].copy_from_slice(&re[..bins]);
        out.im[row..row + bins].copy_from_slice(&im[..bins]);
    }
    Ok(out)
}

/// Window-square overlap sum over the padded support.
fn window_square_sum<T: Scalar>(cfg: &StftConfig, frames: usize) -> Vec<T> {
    let n = cfg.frame_len;
    let window = sqrt_hann::<T>(n).expect("validated");
    let padded = (frames - 1) * cfg.hop + n;
    let mut den = vec![T::zero(); padded];
    for t in 0..frames {
        let start = t * cfg.hop;
        for i in 0..n {
            den[start + i] = den[start + i] + window[i] * window[i];
        }
    }
    den
}

/// Inverse STFT: conjugate-symmetric extension, inverse DFT, windowed
/// overlap-add divided by the window-square sum, edge padding trimmed.
pub fn istft<T: Scalar>(s: &Spectrogram<T>, cfg: &StftConfig, out_len: usize) -> Result<Vec<T>> {
    cfg.validate()?;
    let n = cfg.frame_len;
    let bins = cfg.bins();
    if s.bins != bins {
        return Err(dim_err!("istft", "bins {} but config wants {}", s.bins, bins));
    }
    let pad = cfg.edge_pad();
    let padded = (s.frames - 1) * cfg.hop + n;
    if pad + out_len > padded {
        return Err(dim_err!(
            "istft",
            "out_len {} exceeds synthesizable range {}",
            out_len,
            padded - pad
        ));
    }
    let window = sqrt_hann::<T>(n)?;
    let plan = Plan::<T>::new(n)?;
    let den = window_square_sum::<T>(cfg, s.frames);

    let mut acc = vec![T::zero(); padded];
    let mut re = vec![T::zero(); n];
    let mut im = vec![T::zero(); n];
    for t in 0..s.frames {
        let row = t * bins;
        // conjugate-symmetric spectrum; imaginary parts of DC/Nyquist are
        // discarded by taking the real part below
        re[..bins].copy_from_slice(&s.re[row..row + bins]);
        im[..bins].copy_from_slice(&s.im[row..row + bins]);
        for f in 1..bins - 1 {
            re[n - f] = s.re[row + f];
            im[n - f] = -s.im[row + f];
        }
        im[0] = T::zero();
        im[bins - 1] = T::zero();
        plan.process(&mut re, &mut im, true);
        let start = t * cfg.hop;
        for i in 0..n {
            acc[start + i] = acc[start + i] + re[i] * window[i];
        }
    }
    let tiny = T::cast(1e-30);
    Ok((0..out_len)
        .map(|i| {
            let p = pad + i;
            if den[p] > tiny {
                acc[p] / den[p]
            } else {
                T::zero()
            }
        })
        .collect())
}

/// Adjoint of [`istft`] as an R-linear map from waveform gradients back to
/// spectrogram-plane gradients; gradients of the unused DC/Nyquist imaginary
/// parts are zero.
pub fn istft_adjoint<T: Scalar>(
    grad_wave: &[T],
    cfg: &StftConfig,
    frames: usize,
) -> Result<Spectrogram<T>> {
    cfg.validate()?;
    let n = cfg.frame_len;
    let bins = cfg.bins();
    let pad = cfg.edge_pad();
    let padded = (frames - 1) * cfg.hop + n;
    if pad + grad_wave.len() > padded {
        return Err(dim_err!(
            "istft-adjoint",
            "gradient length {} exceeds synthesizable range {}",
            grad_wave.len(),
            padded - pad
        ));
    }
    let window = sqrt_hann::<T>(n)?;
    let plan = Plan::<T>::new(n)?;
    let den = window_square_sum::<T>(cfg, frames);
    let tiny = T::cast(1e-30);

    // scaled gradient in padded coordinates
    let mut q = vec![T::zero(); padded];
    for (i, &g) in grad_wave.iter().enumerate() {
        let p = pad + i;
        if den[p] > tiny {
            q[p] = g / den[p];
        }
    }

    let mut out = Spectrogram::zeros(frames, bins);
    let mut re = vec![T::zero(); n];
    let mut im = vec![T::zero(); n];
    let interior = T::cast(2.0 / n as f64);
    let edge = T::cast(1.0 / n as f64);
    for t in 0..frames {
        let start = t * cfg.hop;
        for i in 0..n {
            re[i] = window[i] * q[start + i];
            im[i] = T::zero();
        }
        plan.process(&mut re, &mut im, false);
        let row = t * bins;
        out.re[row] = re[0] * edge;
        out.re[row + bins - 1] = re[bins - 1] * edge;
        for f in 1..bins - 1 {
            out.re[row + f] = re[f] * interior;
            out.im[row + f] = im[f] * interior;
        }
    }
    Ok(out)
}
