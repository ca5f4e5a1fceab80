//! Normalization layers.

use alloc::boxed::Box;
use alloc::vec;

use crate::error::{dim_err, Result};
use crate::tensor::{Scalar, Tensor};

use super::{Graph, NodeId};

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl<T: Scalar> Graph<T> {
    /// Layer normalization over every non-time axis (per time step), with a
    /// per-channel affine over the last axis. Epsilon 1e-5 is added to the
    /// variance.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        let vx = self.val(x);
        let vgain = self.val(gain);
        let vbias = self.val(bias);
        let shape = vx.shape().to_vec();
        if shape.is_empty() {
            return Err(dim_err!("layer_norm", "input must have a time axis"));
        }
        let channels = *shape.last().unwrap();
        if vgain.shape() != [channels] || vbias.shape() != [channels] {
            return Err(dim_err!(
                "layer_norm",
                "affine shapes {:?}/{:?} vs {} channels",
                vgain.shape(),
                vbias.shape(),
                channels
            ));
        }
        let t_len = shape[0];
        let group = vx.numel() / t_len.max(1);
        let eps = T::cast(LAYER_NORM_EPS);

        let xd = vx.data();
        let gd = vgain.data();
        let bd = vbias.data();
        let mut normed = vec![T::zero(); vx.numel()];
        let mut out = vec![T::zero(); vx.numel()];
        let mut inv_std = vec![T::zero(); t_len];
        let denom = T::cast(group as f64);
        for t in 0..t_len {
            let xs = &xd[t * group..(t + 1) * group];
            let mut mean = T::zero();
            for &v in xs {
                mean = mean + v;
            }
            mean = mean / denom;
            let mut var = T::zero();
            for &v in xs {
                let d = v - mean;
                var = var + d * d;
            }
            var = var / denom;
            let istd = (var + eps).sqrt().recip();
            inv_std[t] = istd;
            let nrow = &mut normed[t * group..(t + 1) * group];
            let orow = &mut out[t * group..(t + 1) * group];
            for (base, xrow) in xs.chunks_exact(channels).enumerate() {
                let off = base * channels;
                for (c, &v) in xrow.iter().enumerate() {
                    let nh = (v - mean) * istd;
                    nrow[off + c] = nh;
                    orow[off + c] = nh * gd[c] + bd[c];
                }
            }
        }
        let out = Tensor::from_vec(&shape, out)?;
        let rg = self.needs_grad(&[x, gain, bias]);
        let back = rg.then(|| -> super::BackFn<T> {
            let normed = Tensor::from_vec(&shape, normed).unwrap();
            let shape = shape.clone();
            Box::new(move |g, sink| {
                let gd_out = g.data();
                let nh = normed.data();
                let gains = vgain.data();
                let mut gx = vec![T::zero(); nh.len()];
                let mut ggain = vec![T::zero(); channels];
                let mut gbias = vec![T::zero(); channels];
                let denom = T::cast(group as f64);
                for t in 0..t_len {
                    let base = t * group;
                    let grow = &gd_out[base..base + group];
                    let nrow = &nh[base..base + group];
                    let mut mean_h = T::zero();
                    let mut mean_hx = T::zero();
                    for (gchunk, nchunk) in grow
                        .chunks_exact(channels)
                        .zip(nrow.chunks_exact(channels))
                    {
                        for c in 0..channels {
                            let gv = gchunk[c];
                            let h = gv * gains[c];
                            mean_h = mean_h + h;
                            mean_hx = mean_hx + h * nchunk[c];
                            ggain[c] = ggain[c] + gv * nchunk[c];
                            gbias[c] = gbias[c] + gv;
                        }
                    }
                    mean_h = mean_h / denom;
                    mean_hx = mean_hx / denom;
                    let istd = inv_std[t];
                    let gxrow = &mut gx[base..base + group];
                    for ((gchunk, nchunk), gxchunk) in grow
                        .chunks_exact(channels)
                        .zip(nrow.chunks_exact(channels))
                        .zip(gxrow.chunks_exact_mut(channels))
                    {
                        for c in 0..channels {
                            let h = gchunk[c] * gains[c];
                            gxchunk[c] = istd * (h - mean_h - nchunk[c] * mean_hx);
                        }
                    }
                }
                sink.add(x, Tensor::from_vec(&shape, gx).unwrap());
                sink.add(gain, Tensor::from_vec(&[channels], ggain).unwrap());
                sink.add(bias, Tensor::from_vec(&[channels], gbias).unwrap());
            })
        });
        Ok(self.push(out, rg, back))
    }

    /// Normalizes each row of a `[T, D]` matrix to unit l2 norm.
    pub fn row_l2_normalize(&mut self, x: NodeId) -> Result<NodeId> {
        let vx = self.val(x);
        let shape = vx.shape().to_vec();
        if shape.len() != 2 {
            return Err(dim_err!(
                "row_l2_normalize",
                "expected [T, D], got {:?}",
                shape
            ));
        }
        let (t_len, d) = (shape[0], shape[1]);
        let eps = T::cast(1e-12);
        let xd = vx.data();
        let mut out = vec![T::zero(); xd.len()];
        let mut norms = vec![T::zero(); t_len];
        for t in 0..t_len {
            let xs = &xd[t * d..(t + 1) * d];
            let mut s = T::zero();
            for &v in xs {
                s = s + v * v;
            }
            let n = (s + eps).sqrt();
            norms[t] = n;
            for (i, &v) in xs.iter().enumerate() {
                out[t * d + i] = v / n;
            }
        }
        let out_t = Tensor::from_vec(&shape, out)?;
        let rg = self.needs_grad(&[x]);
        let back = rg.then(|| -> super::BackFn<T> {
            let shape = shape.clone();
            Box::new(move |g, sink| {
                let gd = g.data();
                let xd = vx.data();
                let mut gx = vec![T::zero(); gd.len()];
                for t in 0..t_len {
                    let base = t * d;
                    let mut dot = T::zero();
                    for i in 0..d {
                        dot = dot + gd[base + i] * xd[base + i];
                    }
                    let n = norms[t];
                    let n3 = n * n * n;
                    for i in 0..d {
                        gx[base + i] = gd[base + i] / n - xd[base + i] * dot / n3;
                    }
                }
                sink.add(x, Tensor::from_vec(&shape, gx).unwrap());
            })
        });
        Ok(self.push(out_t, rg, back))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_yields_bias() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::full(&[3, 4, 2], 5.0));
        let gain = g.constant(Tensor::full(&[2], 3.0));
        let bias = g.constant(Tensor::from_vec(&[2], vec![0.25, -0.75]).unwrap());
        let y = g.layer_norm(x, gain, bias).unwrap();
        for (i, &v) in g.value(y).data().iter().enumerate() {
            let want = if i % 2 == 0 { 0.25 } else { -0.75 };
            assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn two_channel_closed_form() {
        // input (1, 3): mean 2, variance 1 -> normalized (-1, 1)/sqrt(1+eps)
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_vec(&[1, 2], vec![1.0, 3.0]).unwrap());
        let gain = g.constant(Tensor::from_vec(&[2], vec![2.0, 2.0]).unwrap());
        let bias = g.constant(Tensor::from_vec(&[2], vec![0.5, 0.5]).unwrap());
        let y = g.layer_norm(x, gain, bias).unwrap();
        let scale = 1.0 / (1.0 + LAYER_NORM_EPS).sqrt();
        let want = [-scale * 2.0 + 0.5, scale * 2.0 + 0.5];
        for (a, b) in g.value(y).data().iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn normalized_moments() {
        let mut rng = crate::rng::rng_for(5, 0);
        use rand::Rng;
        let data: Vec<f64> = (0..6 * 8 * 4).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_vec(&[6, 8, 4], data).unwrap());
        let gain = g.constant(Tensor::full(&[4], 1.0));
        let bias = g.constant(Tensor::zeros(&[4]));
        let y = g.layer_norm(x, gain, bias).unwrap();
        let yd = g.value(y).data();
        let group = 32;
        for t in 0..6 {
            let row = &yd[t * group..(t + 1) * group];
            let mean: f64 = row.iter().sum::<f64>() / group as f64;
            let var: f64 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / group as f64;
            assert!(mean.abs() < 1e-6, "t={t} mean={mean}");
            assert!((var - 1.0).abs() < 1e-4, "t={t} var={var}");
        }
    }

    #[test]
    fn rows_become_unit_norm() {
        let mut rng = crate::rng::rng_for(6, 0);
        use rand::Rng;
        let data: Vec<f64> = (0..5 * 7).map(|_| rng.gen::<f64>() - 0.5).collect();
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_vec(&[5, 7], data).unwrap());
        let y = g.row_l2_normalize(x).unwrap();
        let yd = g.value(y).data();
        for t in 0..5 {
            let n: f64 = yd[t * 7..(t + 1) * 7].iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-5);
        }
    }
}
