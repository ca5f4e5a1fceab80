//! Training objectives and permutation machinery: phase-sensitive
//! approximation, complex approximation, frame organization, the
//! time-domain SNR objective and frame/utterance-level PIT reductions.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::dsp::{istft, Spectrogram, StftConfig};
use crate::error::{dim_err, numeric_err, param_err, Result};
use crate::graph::{Graph, NodeId};
use crate::tensor::{Scalar, Tensor};

/// All orderings of `{0..c}`, identity first, lexicographic.
pub fn permutations(c: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..rest.len() {
            let v = rest.remove(i);
            prefix.push(v);
            rec(prefix, rest, out);
            prefix.pop();
            rest.insert(i, v);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut (0..c).collect(), &mut out);
    out
}

/// Per-frame, per-permutation loss matrix.
#[derive(Debug, Clone)]
pub struct LossTable<T> {
    pub frames: usize,
    pub perms: Vec<Vec<usize>>,
    /// `[frames][n_perms]` row-major.
    pub values: Vec<T>,
}

impl<T: Scalar> LossTable<T> {
    pub fn new(frames: usize, perms: Vec<Vec<usize>>) -> Self {
        let n = perms.len();
        LossTable {
            frames,
            perms,
            values: vec![T::zero(); frames * n],
        }
    }

    pub fn at(&self, t: usize, p: usize) -> T {
        self.values[t * self.perms.len() + p]
    }

    pub fn set(&mut self, t: usize, p: usize, v: T) {
        self.values[t * self.perms.len() + p] = v;
    }

    pub fn n_perms(&self) -> usize {
        self.perms.len()
    }
}

/// Frame-level PIT reduction: per-frame minimum over permutations.
/// Ties break toward the earlier permutation (identity first).
pub fn tpit_reduce<T: Scalar>(table: &LossTable<T>) -> (T, Vec<usize>) {
    let mut total = T::zero();
    let mut chosen = Vec::with_capacity(table.frames);
    for t in 0..table.frames {
        let mut best = 0usize;
        let mut best_v = table.at(t, 0);
        for p in 1..table.n_perms() {
            let v = table.at(t, p);
            if v < best_v {
                best_v = v;
                best = p;
            }
        }
        total = total + best_v;
        chosen.push(best);
    }
    (total, chosen)
}

/// Utterance-level PIT reduction over per-permutation utterance losses.
/// Ties break toward the earlier permutation.
pub fn upit_reduce<T: Scalar>(losses: &[T]) -> (T, usize) {
    let mut best = 0usize;
    let mut best_v = losses[0];
    for (p, &v) in losses.iter().enumerate().skip(1) {
        if v < best_v {
            best_v = v;
            best = p;
        }
    }
    (best_v, best)
}

/// Two-class assignment indicator from per-frame chosen permutations:
/// 0 encodes `[1 0]` (identity pairing optimal), 1 encodes `[0 1]`.
pub fn assignment_labels(chosen: &[usize]) -> Vec<u8> {
    chosen.iter().map(|&p| if p == 0 { 0 } else { 1 }).collect()
}

/// Loss-difference weights `w(t) = |LD(t)| / sum |LD(t)|` for a two-speaker
/// table; uniform when every difference vanishes.
pub fn ld_weights<T: Scalar>(table: &LossTable<T>) -> Result<Vec<T>> {
    if table.n_perms() != 2 {
        return Err(param_err!(
            "ld_weights",
            "defined for 2 speakers, table has {} permutations",
            table.n_perms()
        ));
    }
    let mut w: Vec<T> = (0..table.frames)
        .map(|t| (table.at(t, 0) - table.at(t, 1)).abs())
        .collect();
    let mut total = T::zero();
    for &v in &w {
        total = total + v;
    }
    if total > T::zero() {
        for v in w.iter_mut() {
            *v = *v / total;
        }
    } else {
        let uniform = T::cast(1.0 / table.frames.max(1) as f64);
        for v in w.iter_mut() {
            *v = uniform;
        }
    }
    Ok(w)
}

// ---------------------------------------------------------------------------
// Phase-sensitive approximation
// ---------------------------------------------------------------------------

/// Precomputed PSA quantities for one mixture: `|Y|` and the per-source
/// targets `|X_c| cos(phase(Y) - phase(X_c))`, unclipped.
pub struct PsaContext<T> {
    pub frames: usize,
    pub bins: usize,
    pub y_mag: Vec<T>,
    pub targets: [Vec<T>; 2],
}

pub fn psa_context<T: Scalar>(y: &Spectrogram<T>, x: [&Spectrogram<T>; 2]) -> PsaContext<T> {
    let y_mag = y.magnitude();
    let target = |xc: &Spectrogram<T>| -> Vec<T> {
        (0..y.re.len())
            .map(|i| {
                let m = y_mag[i];
                if m.as_f64() < 1e-8 {
                    T::zero()
                } else {
                    (y.re[i] * xc.re[i] + y.im[i] * xc.im[i]) / m
                }
            })
            .collect()
    };
    let targets = [target(x[0]), target(x[1])];
    PsaContext {
        frames: y.frames,
        bins: y.bins,
        y_mag,
        targets,
    }
}

/// Per-frame PSA loss (Eq.-level l1 over frequency and sources) for one
/// output-to-source pairing.
pub fn psa_frame_loss<T: Scalar>(
    masks: [&Tensor<T>; 2],
    ctx: &PsaContext<T>,
    perm: &[usize],
) -> Result<Vec<T>> {
    for m in &masks {
        if m.numel() != ctx.frames * ctx.bins {
            return Err(dim_err!(
                "psa_frame_loss",
                "mask has {} elements, expected {}x{}",
                m.numel(),
                ctx.frames,
                ctx.bins
            ));
        }
        if !m.is_finite() {
            return Err(numeric_err!("psa_frame_loss", "non-finite mask"));
        }
    }
    let mut out = vec![T::zero(); ctx.frames];
    for (c, mask) in masks.iter().enumerate() {
        let target = &ctx.targets[perm[c]];
        let md = mask.data();
        for t in 0..ctx.frames {
            let mut acc = T::zero();
            for f in 0..ctx.bins {
                let i = t * ctx.bins + f;
                acc = acc + (md[i] * ctx.y_mag[i] - target[i]).abs();
            }
            out[t] = out[t] + acc;
        }
    }
    Ok(out)
}

pub fn psa_loss_table<T: Scalar>(
    masks: [&Tensor<T>; 2],
    ctx: &PsaContext<T>,
) -> Result<LossTable<T>> {
    let perms = permutations(2);
    let mut table = LossTable::new(ctx.frames, perms.clone());
    for (p, perm) in perms.iter().enumerate() {
        let losses = psa_frame_loss(masks, ctx, perm)?;
        for (t, v) in losses.into_iter().enumerate() {
            table.set(t, p, v);
        }
    }
    Ok(table)
}

// ---------------------------------------------------------------------------
// Complex approximation
// ---------------------------------------------------------------------------

/// Per-frame complex l1 loss between estimates and sources for one pairing:
/// `sum_f sum_c |Re(Xhat_c - X_{perm(c)})| + |Im(...)|`.
pub fn complex_l1_frame_loss<T: Scalar>(
    est: [&Spectrogram<T>; 2],
    x: [&Spectrogram<T>; 2],
    perm: &[usize],
) -> Result<Vec<T>> {
    let (frames, bins) = (est[0].frames, est[0].bins);
    for s in est.iter().chain(x.iter()) {
        if s.frames != frames || s.bins != bins {
            return Err(dim_err!(
                "complex_l1",
                "spectrogram {}x{} vs {}x{}",
                s.frames,
                s.bins,
                frames,
                bins
            ));
        }
        if !s.is_finite() {
            return Err(numeric_err!("complex_l1", "non-finite spectrogram"));
        }
    }
    let mut out = vec![T::zero(); frames];
    for (c, e) in est.iter().enumerate() {
        let xc = x[perm[c]];
        for t in 0..frames {
            let mut acc = T::zero();
            for f in 0..bins {
                let i = t * bins + f;
                acc = acc + (e.re[i] - xc.re[i]).abs() + (e.im[i] - xc.im[i]).abs();
            }
            out[t] = out[t] + acc;
        }
    }
    Ok(out)
}

/// Complex-approximation loss for masks applied to the mixture.
pub fn ca_frame_loss<T: Scalar>(
    cmasks: [&Spectrogram<T>; 2],
    y: &Spectrogram<T>,
    x: [&Spectrogram<T>; 2],
    perm: &[usize],
) -> Result<Vec<T>> {
    let e0 = cmasks[0].mul(y)?;
    let e1 = cmasks[1].mul(y)?;
    complex_l1_frame_loss([&e0, &e1], x, perm)
}

pub fn complex_l1_table<T: Scalar>(
    est: [&Spectrogram<T>; 2],
    x: [&Spectrogram<T>; 2],
) -> Result<LossTable<T>> {
    let perms = permutations(2);
    let mut table = LossTable::new(est[0].frames, perms.clone());
    for (p, perm) in perms.iter().enumerate() {
        let losses = complex_l1_frame_loss(est, x, perm)?;
        for (t, v) in losses.into_iter().enumerate() {
            table.set(t, p, v);
        }
    }
    Ok(table)
}

/// Reorders the two frame estimates so each output tracks one source,
/// choosing the per-frame pairing that minimizes the complex STFT l1 loss.
/// Returns the organized pair and the per-frame chosen permutation.
pub fn organize_frames<T: Scalar>(
    est: [&Spectrogram<T>; 2],
    x: [&Spectrogram<T>; 2],
) -> Result<(Spectrogram<T>, Spectrogram<T>, Vec<usize>)> {
    let table = complex_l1_table(est, x)?;
    let (_, chosen) = tpit_reduce(&table);
    let (a, b) = reorder_frames(est, &chosen);
    Ok((a, b, chosen))
}

/// Applies per-frame swaps: frames where `chosen[t] != 0` exchange the two
/// estimates.
pub fn reorder_frames<T: Scalar>(
    est: [&Spectrogram<T>; 2],
    chosen: &[usize],
) -> (Spectrogram<T>, Spectrogram<T>) {
    let (frames, bins) = (est[0].frames, est[0].bins);
    let mut a = Spectrogram::zeros(frames, bins);
    let mut b = Spectrogram::zeros(frames, bins);
    for t in 0..frames {
        let row = t * bins..(t + 1) * bins;
        // chosen permutation p maps output c to source perm[c]; placing each
        // output on its source slot swaps the pair when p != identity
        let (src_a, src_b) = if chosen[t] == 0 {
            (est[0], est[1])
        } else {
            (est[1], est[0])
        };
        a.re[row.clone()].copy_from_slice(&src_a.re[row.clone()]);
        a.im[row.clone()].copy_from_slice(&src_a.im[row.clone()]);
        b.re[row.clone()].copy_from_slice(&src_b.re[row.clone()]);
        b.im[row.clone()].copy_from_slice(&src_b.im[row]);
    }
    (a, b)
}

/// Complex ideal ratio mask `X ./ Y`, zeroed where `|Y| < 1e-8`.
pub fn cirm<T: Scalar>(y: &Spectrogram<T>, x: &Spectrogram<T>) -> Result<Spectrogram<T>> {
    if y.frames != x.frames || y.bins != x.bins {
        return Err(dim_err!(
            "cirm",
            "{}x{} vs {}x{}",
            y.frames,
            y.bins,
            x.frames,
            x.bins
        ));
    }
    let mut out = Spectrogram::zeros(y.frames, y.bins);
    for i in 0..y.re.len() {
        let mag2 = y.re[i] * y.re[i] + y.im[i] * y.im[i];
        if mag2.as_f64().sqrt() < 1e-8 {
            continue;
        }
        out.re[i] = (x.re[i] * y.re[i] + x.im[i] * y.im[i]) / mag2;
        out.im[i] = (x.im[i] * y.re[i] - x.re[i] * y.im[i]) / mag2;
    }
    Ok(out)
}

/// Utterance SNR objective value (to maximize): per-source
/// `10 log10(sum x^2 / sum (x - xhat)^2)` with the error energy clamped at
/// 1e-10.
pub fn snr_objective_value<T: Scalar>(
    organized: [&Spectrogram<T>; 2],
    x_waves: [&[T]; 2],
    cfg: &StftConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for c in 0..2 {
        let est = istft(organized[c], cfg, x_waves[c].len())?;
        let mut sig = 0.0;
        let mut err = 0.0;
        for (o, &x) in est.iter().zip(x_waves[c].iter()) {
            let xf = x.as_f64();
            sig += xf * xf;
            err += (xf - o.as_f64()).powi(2);
        }
        total += 10.0 * (sig / err.max(1e-10)).log10();
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Graph builders (training losses with a frozen per-frame assignment)
// ---------------------------------------------------------------------------

/// `[T, F]` indicator for frames whose chosen permutation equals `p`.
fn perm_selector<T: Scalar>(chosen: &[usize], bins: usize, planes: usize, p: usize) -> Tensor<T> {
    let frames = chosen.len();
    let mut data = vec![T::zero(); frames * bins * planes];
    for (t, &c) in chosen.iter().enumerate() {
        if c == p {
            for v in data[t * bins * planes..(t + 1) * bins * planes].iter_mut() {
                *v = T::one();
            }
        }
    }
    if planes == 1 {
        Tensor::from_vec(&[frames, bins], data).unwrap()
    } else {
        Tensor::from_vec(&[frames, bins, planes], data).unwrap()
    }
}

/// Differentiable PSA loss under a fixed per-frame assignment. Masks are
/// `[T, F]` nodes.
pub fn build_psa_loss<T: Scalar>(
    g: &mut Graph<T>,
    masks: [NodeId; 2],
    ctx: &PsaContext<T>,
    chosen: &[usize],
) -> Result<NodeId> {
    let shape = [ctx.frames, ctx.bins];
    let y_mag = g.constant(Tensor::from_vec(&shape, ctx.y_mag.clone())?);
    let perms = permutations(2);
    let mut acc: Option<NodeId> = None;
    for (p, perm) in perms.iter().enumerate() {
        let sel = g.constant(perm_selector(chosen, ctx.bins, 1, p));
        for c in 0..2 {
            let target = g.constant(Tensor::from_vec(&shape, ctx.targets[perm[c]].clone())?);
            let masked = g.mul(masks[c], y_mag)?;
            let diff = g.sub(masked, target)?;
            let a = g.abs(diff);
            let gated = g.mul(a, sel)?;
            let s = g.sum_all(gated);
            acc = Some(match acc {
                Some(prev) => g.add(prev, s)?,
                None => s,
            });
        }
    }
    Ok(acc.unwrap())
}

/// Differentiable complex-approximation loss under a fixed assignment.
/// Estimates are `[T, F, 2]` nodes.
pub fn build_ca_loss<T: Scalar>(
    g: &mut Graph<T>,
    est: [NodeId; 2],
    x: [&Spectrogram<T>; 2],
    chosen: &[usize],
) -> Result<NodeId> {
    let perms = permutations(2);
    let bins = x[0].bins;
    let mut acc: Option<NodeId> = None;
    for (p, perm) in perms.iter().enumerate() {
        let sel = g.constant(perm_selector(chosen, bins, 2, p));
        for c in 0..2 {
            let target = g.constant(x[perm[c]].to_tensor());
            let diff = g.sub(est[c], target)?;
            let a = g.abs(diff);
            let gated = g.mul(a, sel)?;
            let s = g.sum_all(gated);
            acc = Some(match acc {
                Some(prev) => g.add(prev, s)?,
                None => s,
            });
        }
    }
    Ok(acc.unwrap())
}

/// Reorders two `[T, F, 2]` estimate nodes by a fixed per-frame assignment.
pub fn build_organized_pair<T: Scalar>(
    g: &mut Graph<T>,
    est: [NodeId; 2],
    chosen: &[usize],
    bins: usize,
) -> Result<[NodeId; 2]> {
    let keep = g.constant(perm_selector(chosen, bins, 2, 0));
    let swap = g.constant(perm_selector(chosen, bins, 2, 1));
    let k0 = g.mul(est[0], keep)?;
    let s1 = g.mul(est[1], swap)?;
    let out0 = g.add(k0, s1)?;
    let k1 = g.mul(est[1], keep)?;
    let s0 = g.mul(est[0], swap)?;
    let out1 = g.add(k1, s0)?;
    Ok([out0, out1])
}

/// Differentiable utterance SNR objective (a value to maximize); the
/// gradient flows through the inverse STFT into the organized estimates.
pub fn build_snr_objective<T: Scalar>(
    g: &mut Graph<T>,
    organized: [NodeId; 2],
    x_waves: [&[T]; 2],
    cfg: &StftConfig,
) -> Result<NodeId> {
    const LN10_OVER_10: f64 = core::f64::consts::LN_10 / 10.0;
    let mut total: Option<NodeId> = None;
    for c in 0..2 {
        let xw = x_waves[c];
        let wave = g.istft_wave(organized[c], *cfg, xw.len())?;
        let x_node = g.constant(Tensor::from_vec(&[xw.len()], xw.to_vec())?);
        let err = g.sub(x_node, wave)?;
        let sq = g.mul(err, err)?;
        let err_energy = g.sum_all(sq);
        let clamped = g.clamp_min(err_energy, 1e-10);
        let ln_err = g.ln(clamped);
        let neg = g.scale(ln_err, -1.0 / LN10_OVER_10);
        let sig_energy: f64 = xw.iter().map(|v| v.as_f64() * v.as_f64()).sum();
        let sig_term = g.constant(Tensor::scalar(T::cast(10.0 * sig_energy.max(1e-300).log10())));
        let term = g.add(neg, sig_term)?;
        total = Some(match total {
            Some(prev) => g.add(prev, term)?,
            None => term,
        });
    }
    Ok(total.unwrap())
}
