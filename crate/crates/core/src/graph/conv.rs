//! Convolution ops over `[T, F, C]` feature maps.
//!
//! `conv2d` is cross-correlation (no kernel flip). Downsampling is a strided
//! 2x2 depthwise convolution, upsampling a 2x2 stride-2 transpose
//! convolution (its exact linear adjoint). The 1-D depthwise op taps at
//! offsets `{-d, 0, +d}` with non-causal same padding.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, param_err, Result};
use crate::tensor::{Scalar, Tensor};

use super::{Graph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

#[derive(Clone, Copy)]
struct Geom {
    ti: usize,
    fi: usize,
    ci: usize,
    kt: usize,
    kf: usize,
    co: usize,
    st: usize,
    sf: usize,
    pt_lo: usize,
    pf_lo: usize,
    to: usize,
    fo: usize,
}

fn geometry(
    x_shape: &[usize],
    k_shape: &[usize],
    stride: (usize, usize),
    padding: Padding,
) -> Result<Geom> {
    if x_shape.len() != 3 {
        return Err(dim_err!("conv2d", "input must be [T, F, C], got {:?}", x_shape));
    }
    if k_shape.len() != 4 {
        return Err(dim_err!(
            "conv2d",
            "kernel must be [kT, kF, Cin, Cout], got {:?}",
            k_shape
        ));
    }
    let (ti, fi, ci) = (x_shape[0], x_shape[1], x_shape[2]);
    let (kt, kf, kci, co) = (k_shape[0], k_shape[1], k_shape[2], k_shape[3]);
    if kci != ci {
        return Err(dim_err!(
            "conv2d",
            "channel axis: input has {ci}, kernel expects {kci}"
        ));
    }
    let (st, sf) = stride;
    if st == 0 || sf == 0 {
        return Err(param_err!("conv2d", "stride must be positive"));
    }
    let (to, fo, pt_lo, pf_lo) = match padding {
        Padding::Valid => {
            if ti < kt {
                return Err(dim_err!("conv2d", "time axis: input {ti} smaller than kernel {kt}"));
            }
            if fi < kf {
                return Err(dim_err!(
                    "conv2d",
                    "frequency axis: input {fi} smaller than kernel {kf}"
                ));
            }
            ((ti - kt) / st + 1, (fi - kf) / sf + 1, 0, 0)
        }
        Padding::Same => {
            let to = ti.div_ceil(st);
            let fo = fi.div_ceil(sf);
            let pad_t = ((to - 1) * st + kt).saturating_sub(ti);
            let pad_f = ((fo - 1) * sf + kf).saturating_sub(fi);
            (to, fo, pad_t / 2, pad_f / 2)
        }
    };
    Ok(Geom {
        ti,
        fi,
        ci,
        kt,
        kf,
        co,
        st,
        sf,
        pt_lo,
        pf_lo,
        to,
        fo,
    })
}

/// Valid output-column range for one kernel column.
fn of_range(g: &Geom, kfi: usize) -> (usize, usize) {
    let lo = if g.pf_lo > kfi {
        (g.pf_lo - kfi).div_ceil(g.sf)
    } else {
        0
    };
    let hi = if g.fi + g.pf_lo > kfi {
        (((g.fi - 1 + g.pf_lo - kfi) / g.sf) + 1).min(g.fo)
    } else {
        0
    };
    (lo.min(hi), hi)
}

/// 16-wide fused multiply-accumulate chunk; the accumulator lives on the
/// stack so the compiler keeps it in vector registers across the reduction.
#[inline(always)]
fn axpy16<T: Scalar>(acc: &mut [T; 16], a: T, b: &[T]) {
    let b = &b[..16];
    for j in 0..16 {
        acc[j] = acc[j] + a * b[j];
    }
}

fn conv2d_forward<T: Scalar>(x: &[T], k: &[T], g: &Geom) -> Vec<T> {
    let mut out = vec![T::zero(); g.to * g.fo * g.co];
    let (ci, co) = (g.ci, g.co);
    for ot in 0..g.to {
        // taps with a valid input row for this output row
        let taps: Vec<(usize, &[T])> = (0..g.kt)
            .filter_map(|kti| {
                let it = ot * g.st + kti;
                if it < g.pt_lo || it - g.pt_lo >= g.ti {
                    None
                } else {
                    Some((kti, &x[(it - g.pt_lo) * g.fi * ci..(it - g.pt_lo + 1) * g.fi * ci]))
                }
            })
            .collect();
        let orow = &mut out[ot * g.fo * co..(ot + 1) * g.fo * co];
        for of in 0..g.fo {
            let mut cs = 0;
            while cs + 16 <= co {
                let mut acc = [T::zero(); 16];
                for &(kti, xrow) in &taps {
                    for kfi in 0..g.kf {
                        let (lo, hi) = of_range(g, kfi);
                        if of < lo || of >= hi {
                            continue;
                        }
                        let fidx = of * g.sf + kfi - g.pf_lo;
                        let ktap = &k[(kti * g.kf + kfi) * ci * co..];
                        let xs = &xrow[fidx * ci..(fidx + 1) * ci];
                        for (c, &xv) in xs.iter().enumerate() {
                            axpy16(&mut acc, xv, &ktap[c * co + cs..]);
                        }
                    }
                }
                orow[of * co + cs..of * co + cs + 16].copy_from_slice(&acc);
                cs += 16;
            }
            if cs < co {
                let width = co - cs;
                let os = &mut orow[of * co + cs..(of + 1) * co];
                for &(kti, xrow) in &taps {
                    for kfi in 0..g.kf {
                        let (lo, hi) = of_range(g, kfi);
                        if of < lo || of >= hi {
                            continue;
                        }
                        let fidx = of * g.sf + kfi - g.pf_lo;
                        let ktap = &k[(kti * g.kf + kfi) * ci * co..];
                        let xs = &xrow[fidx * ci..(fidx + 1) * ci];
                        for (c, &xv) in xs.iter().enumerate() {
                            let kr = &ktap[c * co + cs..c * co + cs + width];
                            for (o, &kv) in os.iter_mut().zip(kr.iter()) {
                                *o = *o + xv * kv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Kernel reordered to `[kT, kF, Cout, Cin]` so the backward-input reduction
/// runs over contiguous input-channel rows.
fn transpose_kernel<T: Scalar>(k: &[T], g: &Geom) -> Vec<T> {
    let (ci, co) = (g.ci, g.co);
    let mut kt = vec![T::zero(); k.len()];
    for tap in 0..g.kt * g.kf {
        let src = &k[tap * ci * co..(tap + 1) * ci * co];
        let dst = &mut kt[tap * ci * co..(tap + 1) * ci * co];
        for c in 0..ci {
            for o in 0..co {
                dst[o * ci + c] = src[c * co + o];
            }
        }
    }
    kt
}

fn conv2d_backward_input<T: Scalar>(grad: &[T], k: &[T], g: &Geom) -> Vec<T> {
    let kt_t = transpose_kernel(k, g);
    let mut gin = vec![T::zero(); g.ti * g.fi * g.ci];
    let (ci, co) = (g.ci, g.co);
    for it in 0..g.ti {
        // taps mapping this input row onto a valid output row
        let taps: Vec<(usize, &[T])> = (0..g.kt)
            .filter_map(|kti| {
                let tnum = it + g.pt_lo;
                if tnum < kti || (tnum - kti) % g.st != 0 {
                    return None;
                }
                let ot = (tnum - kti) / g.st;
                if ot >= g.to {
                    return None;
                }
                Some((kti, &grad[ot * g.fo * co..(ot + 1) * g.fo * co]))
            })
            .collect();
        let girow = &mut gin[it * g.fi * ci..(it + 1) * g.fi * ci];
        for fidx in 0..g.fi {
            let mut cs = 0;
            loop {
                let chunk16 = cs + 16 <= ci;
                if !chunk16 && cs >= ci {
                    break;
                }
                let mut acc = [T::zero(); 16];
                let width = if chunk16 { 16 } else { ci - cs };
                for &(kti, grow) in &taps {
                    for kfi in 0..g.kf {
                        // output column writing to this input column
                        let fnum = fidx + g.pf_lo;
                        if fnum < kfi || (fnum - kfi) % g.sf != 0 {
                            continue;
                        }
                        let of = (fnum - kfi) / g.sf;
                        if of >= g.fo {
                            continue;
                        }
                        let ktap = &kt_t[(kti * g.kf + kfi) * ci * co..];
                        let gs = &grow[of * co..(of + 1) * co];
                        if chunk16 {
                            for (o, &gv) in gs.iter().enumerate() {
                                axpy16(&mut acc, gv, &ktap[o * ci + cs..]);
                            }
                        } else {
                            for (o, &gv) in gs.iter().enumerate() {
                                let kr = &ktap[o * ci + cs..o * ci + cs + width];
                                for (a, &kv) in acc[..width].iter_mut().zip(kr.iter()) {
                                    *a = *a + gv * kv;
                                }
                            }
                        }
                    }
                }
                girow[fidx * ci + cs..fidx * ci + cs + width].copy_from_slice(&acc[..width]);
                cs += width;
            }
        }
    }
    gin
}

fn conv2d_backward_kernel<T: Scalar>(x: &[T], grad: &[T], g: &Geom) -> Vec<T> {
    let mut gk = vec![T::zero(); g.kt * g.kf * g.ci * g.co];
    let (ci, co) = (g.ci, g.co);
    // rows outermost: each (grad row, input row) pair is swept once per tap
    // with register accumulation per (channel, chunk), keeping the big
    // buffers cache-resident
    for kti in 0..g.kt {
        for ot in 0..g.to {
            let it = ot * g.st + kti;
            if it < g.pt_lo || it - g.pt_lo >= g.ti {
                continue;
            }
            let grow = &grad[ot * g.fo * co..(ot + 1) * g.fo * co];
            let xrow = &x[(it - g.pt_lo) * g.fi * ci..(it - g.pt_lo + 1) * g.fi * ci];
            for kfi in 0..g.kf {
                let (lo, hi) = of_range(g, kfi);
                let gtap =
                    &mut gk[(kti * g.kf + kfi) * ci * co..(kti * g.kf + kfi + 1) * ci * co];
                for c in 0..ci {
                    let mut cs = 0;
                    loop {
                        let chunk16 = cs + 16 <= co;
                        if !chunk16 && cs >= co {
                            break;
                        }
                        let width = if chunk16 { 16 } else { co - cs };
                        let mut acc = [T::zero(); 16];
                        if chunk16 {
                            for of in lo..hi {
                                let fidx = of * g.sf + kfi - g.pf_lo;
                                axpy16(&mut acc, xrow[fidx * ci + c], &grow[of * co + cs..]);
                            }
                        } else {
                            for of in lo..hi {
                                let fidx = of * g.sf + kfi - g.pf_lo;
                                let xv = xrow[fidx * ci + c];
                                let gs = &grow[of * co + cs..of * co + cs + width];
                                for (a, &gv) in acc[..width].iter_mut().zip(gs.iter()) {
                                    *a = *a + xv * gv;
                                }
                            }
                        }
                        for (slot, &a) in gtap[c * co + cs..c * co + cs + width]
                            .iter_mut()
                            .zip(acc[..width].iter())
                        {
                            *slot = *slot + a;
                        }
                        cs += width;
                    }
                }
            }
        }
    }
    gk
}

impl<T: Scalar> Graph<T> {
    /// Cross-correlation of `[T, F, Cin]` with `[kT, kF, Cin, Cout]`.
    pub fn conv2d(
        &mut self,
        x: NodeId,
        kernel: NodeId,
        stride: (usize, usize),
        padding: Padding,
    ) -> Result<NodeId> {
        let vx = self.val(x);
        let vk = self.val(kernel);
        let geom = geometry(vx.shape(), vk.shape(), stride, padding)?;
        let out = Tensor::from_vec(
            &[geom.to, geom.fo, geom.co],
            conv2d_forward(vx.data(), vk.data(), &geom),
        )?;
        let rg = self.needs_grad(&[x, kernel]);
        let back = rg.then(|| -> super::BackFn<T> {
            Box::new(move |g, sink| {
                sink.add(
                    x,
                    Tensor::from_vec(
                        vx.shape(),
                        conv2d_backward_input(g.data(), vk.data(), &geom),
                    )
                    .unwrap(),
                );
                sink.add(
                    kernel,
                    Tensor::from_vec(
                        vk.shape(),
                        conv2d_backward_kernel(vx.data(), g.data(), &geom),
                    )
                    .unwrap(),
                );
            })
        });
        Ok(self.push(out, rg, back))
    }

    /// 2x2 stride-2 transpose convolution: doubles both spatial axes. With
    /// kernel `[2, 2, Cin, Cout]` it consumes `Cout` channels and produces
    /// `Cin`, making it the exact linear adjoint of `conv2d` with stride
    /// (2, 2), valid padding and the identical kernel.
    pub fn transpose_conv2d(&mut self, x: NodeId, kernel: NodeId) -> Result<NodeId> {
        let vx = self.val(x);
        let vk = self.val(kernel);
        let (xs, ks) = (vx.shape(), vk.shape());
        if xs.len() != 3 || xs.iter().any(|&d| d == 0) {
            return Err(dim_err!(
                "transpose_conv2d",
                "input must be [T, F, C] with positive dims, got {:?}",
                xs
            ));
        }
        if ks.len() != 4 || ks[0] != 2 || ks[1] != 2 {
            return Err(dim_err!(
                "transpose_conv2d",
                "kernel must be [2, 2, Cout, Cin], got {:?}",
                ks
            ));
        }
        if ks[3] != xs[2] {
            return Err(dim_err!(
                "transpose_conv2d",
                "channel axis: input has {}, kernel expects {}",
                xs[2],
                ks[3]
            ));
        }
        let (ti, fi, ci, co) = (xs[0], xs[1], xs[2], ks[2]);
        let (to, fo) = (2 * ti, 2 * fi);
        let xd = vx.data();
        let kd = vk.data();
        let mut out = vec![T::zero(); to * fo * co];
        for i in 0..ti {
            for a in 0..2usize {
                let orow = &mut out[(2 * i + a) * fo * co..(2 * i + a + 1) * fo * co];
                for j in 0..fi {
                    let xv = &xd[(i * fi + j) * ci..(i * fi + j + 1) * ci];
                    for b in 0..2usize {
                        let ktap = &kd[(a * 2 + b) * co * ci..(a * 2 + b + 1) * co * ci];
                        let os = &mut orow[(2 * j + b) * co..(2 * j + b + 1) * co];
                        for (o, slot) in os.iter_mut().enumerate() {
                            let kr = &ktap[o * ci..(o + 1) * ci];
                            let mut acc = T::zero();
                            for (&v, &kv) in xv.iter().zip(kr.iter()) {
                                acc = acc + v * kv;
                            }
                            *slot = *slot + acc;
                        }
                    }
                }
            }
        }
        let out = Tensor::from_vec(&[to, fo, co], out)?;
        let rg = self.needs_grad(&[x, kernel]);
        let back = rg.then(|| -> super::BackFn<T> {
            Box::new(move |g, sink| {
                let gd = g.data();
                let mut gin = vec![T::zero(); ti * fi * ci];
                let mut gk = vec![T::zero(); 4 * co * ci];
                for i in 0..ti {
                    for j in 0..fi {
                        let xv = &vx.data()[(i * fi + j) * ci..(i * fi + j + 1) * ci];
                        let gi = &mut gin[(i * fi + j) * ci..(i * fi + j + 1) * ci];
                        for a in 0..2usize {
                            for b in 0..2usize {
                                let ktap =
                                    &vk.data()[(a * 2 + b) * co * ci..(a * 2 + b + 1) * co * ci];
                                let gs = &gd[((2 * i + a) * fo + 2 * j + b) * co
                                    ..((2 * i + a) * fo + 2 * j + b + 1) * co];
                                let gkt =
                                    &mut gk[(a * 2 + b) * co * ci..(a * 2 + b + 1) * co * ci];
                                for (o, &gv) in gs.iter().enumerate() {
                                    let kr = &ktap[o * ci..(o + 1) * ci];
                                    let gkr = &mut gkt[o * ci..(o + 1) * ci];
                                    for c in 0..ci {
                                        gi[c] = gi[c] + gv * kr[c];
                                        gkr[c] = gkr[c] + xv[c] * gv;
                                    }
                                }
                            }
                        }
                    }
                }
                sink.add(x, Tensor::from_vec(&[ti, fi, ci], gin).unwrap());
                sink.add(kernel, Tensor::from_vec(&[2, 2, co, ci], gk).unwrap());
            })
        });
        Ok(self.push(out, rg, back))
    }

    /// 2x2 stride-2 depthwise convolution (downsampling); halves both
    /// spatial axes, which must be even.
    pub fn depthwise_conv2d_s2(&mut self, x: NodeId, kernel: NodeId) -> Result<NodeId> {
        let vx = self.val(x);
        let vk = self.val(kernel);
        let (xs, ks) = (vx.shape(), vk.shape());
        if xs.len() != 3 {
            return Err(dim_err!("depthwise2d", "input must be [T, F, C], got {:?}", xs));
        }
        if ks.len() != 3 || ks[0] != 2 || ks[1] != 2 || ks[2] != xs[2] {
            return Err(dim_err!(
                "depthwise2d",
                "kernel must be [2, 2, {}], got {:?}",
                xs[2],
                ks
            ));
        }
        if xs[0] % 2 != 0 || xs[1] % 2 != 0 {
            return Err(dim_err!(
                "depthwise2d",
                "spatial axes must be even for stride 2, got {:?}",
                xs
            ));
        }
        let (ti, fi, c) = (xs[0], xs[1], xs[2]);
        let (to, fo) = (ti / 2, fi / 2);
        let xd = vx.data();
        let kd = vk.data();
        let mut out = vec![T::zero(); to * fo * c];
        for i in 0..to {
            for j in 0..fo {
                let os = &mut out[(i * fo + j) * c..(i * fo + j + 1) * c];
                for a in 0..2usize {
                    for b in 0..2usize {
                        let xv =
                            &xd[((2 * i + a) * fi + 2 * j + b) * c..((2 * i + a) * fi + 2 * j + b + 1) * c];
                        let kt = &kd[(a * 2 + b) * c..(a * 2 + b + 1) * c];
                        for ((o, &v), &kv) in os.iter_mut().zip(xv.iter()).zip(kt.iter()) {
                            *o = *o + v * kv;
                        }
                    }
                }
            }
        }
        let out = Tensor::from_vec(&[to, fo, c], out)?;
        let rg = self.needs_grad(&[x, kernel]);
        let back = rg.then(|| -> super::BackFn<T> {
            Box::new(move |g, sink| {
                let gd = g.data();
                let xd = vx.data();
                let kd = vk.data();
                let mut gin = vec![T::zero(); ti * fi * c];
                let mut gk = vec![T::zero(); 4 * c];
                for i in 0..to {
                    for j in 0..fo {
                        let gs = &gd[(i * fo + j) * c..(i * fo + j + 1) * c];
                        for a in 0..2usize {
                            for b in 0..2usize {
                                let base = ((2 * i + a) * fi + 2 * j + b) * c;
                                let kt = &kd[(a * 2 + b) * c..(a * 2 + b + 1) * c];
                                let gkt = &mut gk[(a * 2 + b) * c..(a * 2 + b + 1) * c];
                                for ch in 0..c {
                                    gin[base + ch] = gin[base + ch] + gs[ch] * kt[ch];
                                    gkt[ch] = gkt[ch] + xd[base + ch] * gs[ch];
                                }
                            }
                        }
                    }
                }
                sink.add(x, Tensor::from_vec(&[ti, fi, c], gin).unwrap());
                sink.add(kernel, Tensor::from_vec(&[2, 2, c], gk).unwrap());
            })
        });
        Ok(self.push(out, rg, back))
    }

    /// Depthwise kernel-3 temporal convolution with dilation `d`, taps at
    /// offsets `{-d, 0, +d}`, non-causal same padding. `tap_mask` carries the
    /// dropDilation multipliers for the two dilated taps (already rescaled by
    /// the inverted-dropout convention).
    pub fn depthwise_conv1d_dilated(
        &mut self,
        x: NodeId,
        kernel: NodeId,
        dilation: usize,
        tap_mask: Option<(T, T)>,
    ) -> Result<NodeId> {
        if dilation < 1 {
            return Err(param_err!("depthwise1d", "dilation must be >= 1"));
        }
        let vx = self.val(x);
        let vk = self.val(kernel);
        let (xs, ks) = (vx.shape(), vk.shape());
        if xs.len() != 2 {
            return Err(dim_err!("depthwise1d", "input must be [T, C], got {:?}", xs));
        }
        if ks.len() != 2 || ks[0] != 3 || ks[1] != xs[1] {
            return Err(dim_err!(
                "depthwise1d",
                "kernel must be [3, {}], got {:?}",
                xs[1],
                ks
            ));
        }
        let (tn, c) = (xs[0], xs[1]);
        let (m_neg, m_pos) = tap_mask.unwrap_or((T::one(), T::one()));
        let mask = [m_neg, T::one(), m_pos];
        let xd = vx.data();
        let kd = vk.data();
        let mut out = vec![T::zero(); tn * c];
        for t in 0..tn {
            let os = &mut out[t * c..(t + 1) * c];
            for (j, &mj) in mask.iter().enumerate() {
                let offs = (j as isize - 1) * dilation as isize;
                let src = t as isize + offs;
                if src < 0 || src >= tn as isize || mj == T::zero() {
                    continue;
                }
                let xsrc = &xd[src as usize * c..(src as usize + 1) * c];
                let kt = &kd[j * c..(j + 1) * c];
                for ((o, &v), &kv) in os.iter_mut().zip(xsrc.iter()).zip(kt.iter()) {
                    *o = *o + mj * v * kv;
                }
            }
        }
        let out = Tensor::from_vec(&[tn, c], out)?;
        let rg = self.needs_grad(&[x, kernel]);
        let back = rg.then(|| -> super::BackFn<T> {
            Box::new(move |g, sink| {
                let gd = g.data();
                let xd = vx.data();
                let kd = vk.data();
                let mut gin = vec![T::zero(); tn * c];
                let mut gk = vec![T::zero(); 3 * c];
                for t in 0..tn {
                    let gs = &gd[t * c..(t + 1) * c];
                    for (j, &mj) in mask.iter().enumerate() {
                        let offs = (j as isize - 1) * dilation as isize;
                        let src = t as isize + offs;
                        if src < 0 || src >= tn as isize || mj == T::zero() {
                            continue;
                        }
                        let src = src as usize;
                        let kt = &kd[j * c..(j + 1) * c];
                        let gkt = &mut gk[j * c..(j + 1) * c];
                        for ch in 0..c {
                            gin[src * c + ch] = gin[src * c + ch] + mj * gs[ch] * kt[ch];
                            gkt[ch] = gkt[ch] + mj * xd[src * c + ch] * gs[ch];
                        }
                    }
                }
                sink.add(x, Tensor::from_vec(&[tn, c], gin).unwrap());
                sink.add(kernel, Tensor::from_vec(&[3, c], gk).unwrap());
            })
        });
        Ok(self.push(out, rg, back))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one_identity_kernel_is_identity() {
        // 1x1 kernel holding the channel identity matrix, same padding
        let mut g = Graph::<f64>::new();
        let data: Vec<f64> = (0..24).map(|v| v as f64 * 0.1).collect();
        let x = g.constant(Tensor::from_vec(&[4, 2, 3], data.clone()).unwrap());
        let mut ident = vec![0.0; 9];
        for c in 0..3 {
            ident[c * 3 + c] = 1.0;
        }
        let k = g.constant(Tensor::from_vec(&[1, 1, 3, 3], ident).unwrap());
        let y = g.conv2d(x, k, (1, 1), Padding::Same).unwrap();
        for (a, b) in g.value(y).data().iter().zip(data.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ones_kernel_on_ramp_matches_loop_oracle() {
        // 3x3 all-ones kernel over a 5x5 ramp, valid padding -> local sums
        let ramp: Vec<f64> = (0..25).map(|v| v as f64).collect();
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_vec(&[5, 5, 1], ramp.clone()).unwrap());
        let k = g.constant(Tensor::from_vec(&[3, 3, 1, 1], vec![1.0; 9]).unwrap());
        let y = g.conv2d(x, k, (1, 1), Padding::Valid).unwrap();
        assert_eq!(g.value(y).shape(), &[3, 3, 1]);
        // independent nested-loop summation oracle
        for ot in 0..3 {
            for of in 0..3 {
                let mut want = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        want += ramp[(ot + a) * 5 + of + b];
                    }
                }
                let got = g.value(y).data()[ot * 3 + of];
                assert!((got - want).abs() < 1e-12, "({ot},{of})");
            }
        }
    }

    #[test]
    fn same_padding_shape_rule() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::zeros(&[100, 129, 2]));
        let k = g.constant(Tensor::zeros(&[3, 3, 2, 64]));
        let y = g.conv2d(x, k, (1, 1), Padding::Same).unwrap();
        assert_eq!(g.value(y).shape(), &[100, 129, 64]);
    }

    #[test]
    fn channel_mismatch_names_axis() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::zeros(&[4, 4, 2]));
        let k = g.constant(Tensor::zeros(&[3, 3, 3, 8]));
        let err = g.conv2d(x, k, (1, 1), Padding::Same).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("channel"), "{msg}");
    }

    #[test]
    fn transpose_conv_doubles_and_scatters_kernel() {
        let mut g = Graph::<f64>::new();
        // delta input: kernel copied at the stride-2 grid
        let mut xd = vec![0.0; 3 * 4];
        xd[(1 * 4 + 2) * 1] = 1.0;
        let x = g.constant(Tensor::from_vec(&[3, 4, 1], xd).unwrap());
        let k = g.constant(Tensor::from_vec(&[2, 2, 1, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let y = g.transpose_conv2d(x, k).unwrap();
        assert_eq!(g.value(y).shape(), &[6, 8, 1]);
        let yd = g.value(y).data();
        assert_eq!(yd[2 * 8 + 4], 1.0);
        assert_eq!(yd[2 * 8 + 5], 2.0);
        assert_eq!(yd[3 * 8 + 4], 3.0);
        assert_eq!(yd[3 * 8 + 5], 4.0);
        let total: f64 = yd.iter().sum();
        assert_eq!(total, 10.0);
    }

    #[test]
    fn upsample_shape_rule() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::zeros(&[50, 64, 8]));
        let k = g.constant(Tensor::zeros(&[2, 2, 16, 8]));
        let y = g.transpose_conv2d(x, k).unwrap();
        assert_eq!(g.value(y).shape(), &[100, 128, 16]);
    }

    #[test]
    fn transpose_conv_is_adjoint_of_strided_conv() {
        // <conv(x; k), y> == <x, transpose_conv(y; k)> with the same kernel
        let mut rng = crate::rng::rng_for(41, 0);
        use rand::Rng;
        let mut g = Graph::<f64>::new();
        let x = g.constant(
            Tensor::from_vec(&[8, 10, 3], (0..240).map(|_| rng.gen::<f64>() - 0.5).collect())
                .unwrap(),
        );
        let k = g.constant(
            Tensor::from_vec(&[2, 2, 3, 5], (0..60).map(|_| rng.gen::<f64>() - 0.5).collect())
                .unwrap(),
        );
        let y = g.constant(
            Tensor::from_vec(&[4, 5, 5], (0..100).map(|_| rng.gen::<f64>() - 0.5).collect())
                .unwrap(),
        );
        let z = g.conv2d(x, k, (2, 2), Padding::Valid).unwrap();
        assert_eq!(g.value(z).shape(), &[4, 5, 5]);
        let lhs: f64 = g
            .value(z)
            .data()
            .iter()
            .zip(g.value(y).data().iter())
            .map(|(a, b)| a * b)
            .sum();
        let w = g.transpose_conv2d(y, k).unwrap();
        assert_eq!(g.value(w).shape(), &[8, 10, 3]);
        let rhs: f64 = g
            .value(w)
            .data()
            .iter()
            .zip(g.value(x).data().iter())
            .map(|(a, b)| a * b)
            .sum();
        assert!(
            (lhs - rhs).abs() < 1e-5 * lhs.abs().max(1.0),
            "{lhs} vs {rhs}"
        );
    }

    #[test]
    fn depthwise2d_shape_rule() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::zeros(&[100, 128, 64]));
        let k = g.constant(Tensor::zeros(&[2, 2, 64]));
        let y = g.depthwise_conv2d_s2(x, k).unwrap();
        assert_eq!(g.value(y).shape(), &[50, 64, 64]);
    }

    #[test]
    fn dilated_identity_kernel() {
        // kernel [0, 1, 0] per channel is the identity at any dilation
        let mut g = Graph::<f64>::new();
        let data: Vec<f64> = (0..40).map(|v| (v as f64).sin()).collect();
        let x = g.constant(Tensor::from_vec(&[20, 2], data.clone()).unwrap());
        let k = g.constant(Tensor::from_vec(&[3, 2], vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0]).unwrap());
        let y = g.depthwise_conv1d_dilated(x, k, 5, None).unwrap();
        assert_eq!(g.value(y).data(), &data[..]);
    }

    #[test]
    fn dilated_left_tap_shifts_impulse() {
        // kernel [1, 0, 0], dilation 4: impulse at t=10 appears at t=14
        let mut g = Graph::<f64>::new();
        let mut xd = vec![0.0; 32];
        xd[10] = 1.0;
        let x = g.constant(Tensor::from_vec(&[32, 1], xd).unwrap());
        let k = g.constant(Tensor::from_vec(&[3, 1], vec![1.0, 0.0, 0.0]).unwrap());
        let y = g.depthwise_conv1d_dilated(x, k, 4, None).unwrap();
        let yd = g.value(y).data();
        for (t, &v) in yd.iter().enumerate() {
            if t == 14 {
                assert_eq!(v, 1.0);
            } else {
                assert_eq!(v, 0.0, "t={t}");
            }
        }
    }

    #[test]
    fn dilation_zero_rejected() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::zeros(&[8, 1]));
        let k = g.constant(Tensor::zeros(&[3, 1]));
        assert!(matches!(
            g.depthwise_conv1d_dilated(x, k, 0, None),
            Err(crate::Error::Param { .. })
        ));
    }
}
