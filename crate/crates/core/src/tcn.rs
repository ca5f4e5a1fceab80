//! Temporal convolutional network for sequential grouping: a 2-D dense
//! preprocessing block over `[T, F, 9]` features, a bottleneck projection,
//! stacks of dilated depthwise convolutional blocks with identity residuals,
//! and a unit-norm embedding head. DropDilation randomly silences the two
//! dilated taps of each depthwise kernel during training.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{dim_err, numeric_err, param_err, Result};
use crate::graph::conv::Padding;
use crate::graph::{Graph, NodeId};
use crate::init;
use crate::params::{Binding, ParamSet};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct TcnConfig {
    /// Bottleneck channels (B).
    pub bottleneck: usize,
    /// Channels inside each dilated block (H).
    pub hidden: usize,
    /// Dilated blocks per stack (M); dilation of block `i` is `2^i`.
    pub dilations_per_stack: usize,
    pub repeats: usize,
    /// DropDilation keep rate.
    pub keep_prob: f64,
    /// Embedding dimensionality (D).
    pub embed_dim: usize,
    /// Growth of the 2-D preprocessing dense block.
    pub preproc_growth: usize,
    pub preproc_layers: usize,
}

impl TcnConfig {
    pub fn paper() -> Self {
        TcnConfig {
            bottleneck: 256,
            hidden: 512,
            dilations_per_stack: 7,
            repeats: 3,
            keep_prob: 0.7,
            embed_dim: 40,
            preproc_growth: 16,
            preproc_layers: 4,
        }
    }

    pub fn desk() -> Self {
        TcnConfig {
            bottleneck: 48,
            hidden: 96,
            dilations_per_stack: 6,
            repeats: 2,
            keep_prob: 0.7,
            embed_dim: 40,
            preproc_growth: 8,
            preproc_layers: 3,
        }
    }

    /// Tiny configuration for finite-difference verification.
    pub fn micro() -> Self {
        TcnConfig {
            bottleneck: 8,
            hidden: 16,
            dilations_per_stack: 2,
            repeats: 1,
            keep_prob: 1.0,
            embed_dim: 4,
            preproc_growth: 4,
            preproc_layers: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dilations_per_stack == 0 || self.repeats == 0 {
            return Err(param_err!("tcn", "need at least one dilated block"));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(param_err!("tcn", "keep probability out of (0, 1]"));
        }
        Ok(())
    }

    pub fn n_blocks(&self) -> usize {
        self.repeats * self.dilations_per_stack
    }

    /// Frames covered by the dilated stack: `1 + 2 (2^M - 1) repeats`.
    pub fn receptive_field(&self) -> usize {
        1 + 2 * ((1usize << self.dilations_per_stack) - 1) * self.repeats
    }
}

/// Per-block multipliers `(m_{-d}, m_{+d})` for the dilated taps, already
/// rescaled by `1/p`; the center tap is never dropped.
#[derive(Debug, Clone)]
pub struct DropMasks<T> {
    pub taps: Vec<(T, T)>,
}

pub fn drop_dilation_masks<T: Scalar>(
    cfg: &TcnConfig,
    rng: &mut ChaCha8Rng,
) -> Result<DropMasks<T>> {
    crate::graph::elementwise::check_keep_prob("drop_dilation", cfg.keep_prob)?;
    let p = cfg.keep_prob;
    let inv = T::cast(1.0 / p);
    let taps = (0..cfg.n_blocks())
        .map(|_| {
            let neg = if rng.gen::<f64>() < p { inv } else { T::zero() };
            let pos = if rng.gen::<f64>() < p { inv } else { T::zero() };
            (neg, pos)
        })
        .collect();
    Ok(DropMasks { taps })
}

pub struct Tcn<T> {
    pub cfg: TcnConfig,
    pub f_bins: usize,
    pub params: ParamSet<T>,
}

impl<T: Scalar> Tcn<T> {
    pub fn new(cfg: TcnConfig, f_bins: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        let k = cfg.preproc_growth;
        for l in 1..=cfg.preproc_layers {
            let c_l = 9 + (l - 1) * k;
            let p = format!("pre.l{l}");
            params.add(
                format!("{p}.conv.w"),
                init::kaiming_uniform(&[1, 3, c_l, k], 3 * c_l, rng),
            );
            params.add(format!("{p}.conv.b"), init::small_uniform(&[k], 0.05, rng));
            params.add(format!("{p}.gain"), Tensor::full(&[k], T::one()));
            params.add(format!("{p}.bias"), Tensor::zeros(&[k]));
        }
        let b = cfg.bottleneck;
        let h = cfg.hidden;
        params.add(
            "bottleneck.w",
            init::kaiming_uniform(&[f_bins * k, b], f_bins * k, rng),
        );
        params.add("bottleneck.b", init::small_uniform(&[b], 0.05, rng));
        params.add("bottleneck.gain", Tensor::full(&[b], T::one()));
        params.add("bottleneck.bias", Tensor::zeros(&[b]));
        for r in 0..cfg.repeats {
            for d in 0..cfg.dilations_per_stack {
                let p = format!("tcn.r{r}.d{d}");
                params.add(format!("{p}.in.w"), init::kaiming_uniform(&[b, h], b, rng));
                params.add(format!("{p}.in.b"), init::small_uniform(&[h], 0.05, rng));
                params.add(format!("{p}.in.alpha"), Tensor::full(&[h], T::cast(0.25)));
                params.add(format!("{p}.in.gain"), Tensor::full(&[h], T::one()));
                params.add(format!("{p}.in.bias"), Tensor::zeros(&[h]));
                params.add(
                    format!("{p}.dw.w"),
                    init::kaiming_uniform(&[3, h], 3, rng),
                );
                params.add(format!("{p}.dw.b"), init::small_uniform(&[h], 0.05, rng));
                params.add(format!("{p}.dw.alpha"), Tensor::full(&[h], T::cast(0.25)));
                params.add(format!("{p}.dw.gain"), Tensor::full(&[h], T::one()));
                params.add(format!("{p}.dw.bias"), Tensor::zeros(&[h]));
                params.add(format!("{p}.out.w"), init::kaiming_uniform(&[h, b], h, rng));
                params.add(format!("{p}.out.b"), Tensor::zeros(&[b]));
            }
        }
        params.add(
            "embed.w",
            init::kaiming_uniform(&[b, cfg.embed_dim], b, rng),
        );
        params.add("embed.b", Tensor::zeros(&[cfg.embed_dim]));
        Ok(Tcn {
            cfg,
            f_bins,
            params,
        })
    }

    fn id(&self, b: &Binding, name: &str) -> NodeId {
        b.id(self
            .params
            .index_of(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}")))
    }

    fn linear(&self, g: &mut Graph<T>, b: &Binding, x: NodeId, prefix: &str) -> Result<NodeId> {
        let w = self.id(b, &format!("{prefix}.w"));
        let bias = self.id(b, &format!("{prefix}.b"));
        let y = g.matmul(x, w)?;
        g.add_bias(y, bias)
    }

    /// `[T, F, 9]` stacked features to `[T, D]` unit-norm embeddings.
    /// `drop` must be present exactly in training mode.
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        b: &Binding,
        input: &Tensor<T>,
        drop: Option<&DropMasks<T>>,
    ) -> Result<NodeId> {
        let s = input.shape();
        if s.len() != 3 || s[1] != self.f_bins || s[2] != 9 {
            return Err(dim_err!(
                "tcn",
                "input must be [T, {}, 9], got {:?}",
                self.f_bins,
                s
            ));
        }
        if let Some(d) = drop {
            if d.taps.len() != self.cfg.n_blocks() {
                return Err(dim_err!(
                    "tcn",
                    "{} drop masks for {} blocks",
                    d.taps.len(),
                    self.cfg.n_blocks()
                ));
            }
        }
        let frames = s[0];
        let mut x = g.constant(input.clone());
        // 2-D dense preprocessing block, 1x3 kernels, all same padding
        let mut feats: Vec<NodeId> = vec![x];
        for l in 1..=self.cfg.preproc_layers {
            let xin = if feats.len() == 1 {
                feats[0]
            } else {
                g.concat_last(&feats)?
            };
            let p = format!("pre.l{l}");
            let w = self.id(b, &format!("{p}.conv.w"));
            let bias = self.id(b, &format!("{p}.conv.b"));
            let gain = self.id(b, &format!("{p}.gain"));
            let nbias = self.id(b, &format!("{p}.bias"));
            let c = g.conv2d(xin, w, (1, 1), Padding::Same)?;
            let c = g.add_bias(c, bias)?;
            let a = g.elu(c);
            let out = g.layer_norm(a, gain, nbias)?;
            feats.push(out);
        }
        x = *feats.last().unwrap();

        // flatten frequency into the channel axis and project to B
        let k = self.cfg.preproc_growth;
        x = g.reshape(x, &[frames, self.f_bins * k])?;
        x = self.linear(g, b, x, "bottleneck")?;
        let gain = self.id(b, "bottleneck.gain");
        let nbias = self.id(b, "bottleneck.bias");
        x = g.layer_norm(x, gain, nbias)?;

        for r in 0..self.cfg.repeats {
            for d in 0..self.cfg.dilations_per_stack {
                let p = format!("tcn.r{r}.d{d}");
                let residual = x;
                let mut h = self.linear(g, b, x, &format!("{p}.in"))?;
                let alpha = self.id(b, &format!("{p}.in.alpha"));
                h = g.prelu(h, alpha)?;
                let gain = self.id(b, &format!("{p}.in.gain"));
                let nb = self.id(b, &format!("{p}.in.bias"));
                h = g.layer_norm(h, gain, nb)?;

                let dilation = 1usize << d;
                let w = self.id(b, &format!("{p}.dw.w"));
                let taps = drop.map(|m| m.taps[r * self.cfg.dilations_per_stack + d]);
                h = g.depthwise_conv1d_dilated(h, w, dilation, taps)?;
                let bias = self.id(b, &format!("{p}.dw.b"));
                h = g.add_bias(h, bias)?;
                let alpha = self.id(b, &format!("{p}.dw.alpha"));
                h = g.prelu(h, alpha)?;
                let gain = self.id(b, &format!("{p}.dw.gain"));
                let nb = self.id(b, &format!("{p}.dw.bias"));
                h = g.layer_norm(h, gain, nb)?;

                let out = self.linear(g, b, h, &format!("{p}.out"))?;
                x = g.add(residual, out)?;
            }
            if !g.value(x).is_finite() {
                return Err(numeric_err!("tcn", "non-finite activations after stack {r}"));
            }
        }

        let e = self.linear(g, b, x, "embed")?;
        g.row_l2_normalize(e)
    }

    pub fn param_count(&self) -> usize {
        self.params.numel()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    fn random_input(frames: usize, bins: usize, seed: u64) -> Tensor<f64> {
        let mut rng = rng_for(seed, 70);
        Tensor::from_vec(
            &[frames, bins, 9],
            (0..frames * bins * 9).map(|_| rng.gen::<f64>() - 0.5).collect(),
        )
        .unwrap()
    }

    #[test]
    fn output_rows_unit_norm() {
        let cfg = TcnConfig::micro();
        let mut rng = rng_for(1, 0);
        let net = Tcn::<f64>::new(cfg, 11, &mut rng).unwrap();
        let mut g = Graph::inference();
        let b = net.params.bind(&mut g);
        let out = net
            .forward(&mut g, &b, &random_input(20, 11, 2), None)
            .unwrap();
        let v = g.value(out);
        assert_eq!(v.shape(), &[20, 4]);
        for t in 0..20 {
            let n: f64 = v.data()[t * 4..(t + 1) * 4].iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-5, "row {t}: {n}");
        }
    }

    #[test]
    fn zero_input_zero_bias_rows_identical_after_normalization() {
        let cfg = TcnConfig::micro();
        let mut rng = rng_for(3, 0);
        let mut net = Tcn::<f64>::new(cfg, 7, &mut rng).unwrap();
        for p in net.params.iter_mut() {
            if p.name.ends_with(".b") {
                p.value = Tensor::zeros(p.value.shape());
            }
        }
        let net = net;
        let mut g = Graph::inference();
        let b = net.params.bind(&mut g);
        let out = net
            .forward(&mut g, &b, &Tensor::zeros(&[12, 7, 9]), None)
            .unwrap();
        let v = g.value(out);
        let first = v.data()[0..4].to_vec();
        for t in 1..12 {
            for k in 0..4 {
                assert_eq!(v.data()[t * 4 + k], first[k]);
            }
        }
    }

    #[test]
    fn receptive_field_formula() {
        let paper = TcnConfig::paper();
        assert_eq!(paper.receptive_field(), 1 + 2 * 127 * 3); // 763 frames
        let desk = TcnConfig::desk();
        assert_eq!(desk.receptive_field(), 1 + 2 * 63 * 2);
    }

    #[test]
    fn receptive_field_matches_impulse_probe() {
        // untrained network, all PReLU slopes 1 (linearized): perturbing one
        // frame affects exactly the frames within the formula's reach
        let cfg = TcnConfig {
            bottleneck: 6,
            hidden: 8,
            dilations_per_stack: 3,
            repeats: 2,
            keep_prob: 1.0,
            embed_dim: 3,
            preproc_growth: 4,
            preproc_layers: 2,
        };
        let rf = cfg.receptive_field(); // 1 + 2*7*2 = 29
        assert_eq!(rf, 29);
        let mut rng = rng_for(4, 0);
        let mut net = Tcn::<f64>::new(cfg, 5, &mut rng).unwrap();
        for p in net.params.iter_mut() {
            if p.name.ends_with(".alpha") {
                p.value = Tensor::full(p.value.shape(), 1.0);
            }
        }
        let frames = 80;
        let base = random_input(frames, 5, 5);
        let run = |input: &Tensor<f64>| -> Vec<f64> {
            let mut g = Graph::inference();
            let b = net.params.bind(&mut g);
            let out = net.forward(&mut g, &b, input, None).unwrap();
            g.value(out).data().to_vec()
        };
        let baseline = run(&base);
        let t0 = 40usize;
        let mut bumped = base.data().to_vec();
        for c in 0..5 * 9 {
            bumped[t0 * 5 * 9 + c] += 1.0;
        }
        let probed = run(&Tensor::from_vec(base.shape(), bumped).unwrap());
        let affected: Vec<usize> = (0..frames)
            .filter(|&t| {
                (0..3).any(|k| (probed[t * 3 + k] - baseline[t * 3 + k]).abs() > 0.0)
            })
            .collect();
        let reach = (rf - 1) / 2;
        let expect: Vec<usize> = (t0 - reach..=t0 + reach).collect();
        assert_eq!(affected, expect);
    }

    #[test]
    fn drop_dilation_statistics_and_center_tap() {
        let mut cfg = TcnConfig::desk();
        cfg.keep_prob = 0.7;
        let mut rng = rng_for(6, 0);
        let mut kept = 0usize;
        let mut total = 0usize;
        for _ in 0..10_000 / cfg.n_blocks() + 1 {
            let m = drop_dilation_masks::<f64>(&cfg, &mut rng).unwrap();
            for (a, bq) in m.taps {
                for v in [a, bq] {
                    total += 1;
                    if v != 0.0 {
                        kept += 1;
                        assert!((v - 1.0 / 0.7).abs() < 1e-12);
                    }
                }
            }
        }
        let rate = kept as f64 / total as f64;
        assert!((rate - 0.7).abs() < 0.02, "keep rate {rate}");
    }

    #[test]
    fn keep_prob_one_is_bit_identical_to_no_drop() {
        let mut cfg = TcnConfig::micro();
        cfg.keep_prob = 1.0;
        let mut rng = rng_for(7, 0);
        let net = Tcn::<f64>::new(cfg, 6, &mut rng).unwrap();
        let input = random_input(25, 6, 8);
        let mut rng2 = rng_for(8, 0);
        let masks = drop_dilation_masks::<f64>(&cfg, &mut rng2).unwrap();
        assert!(masks.taps.iter().all(|&(a, b)| a == 1.0 && b == 1.0));
        let run = |drop: Option<&DropMasks<f64>>| -> Vec<f64> {
            let mut g = Graph::inference();
            let b = net.params.bind(&mut g);
            let out = net.forward(&mut g, &b, &input, drop).unwrap();
            g.value(out).data().to_vec()
        };
        let with_mask = run(Some(&masks));
        let without = run(None);
        assert!(with_mask
            .iter()
            .zip(without.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn invalid_keep_prob_rejected() {
        let mut cfg = TcnConfig::desk();
        cfg.keep_prob = 0.0;
        let mut rng = rng_for(9, 0);
        assert!(matches!(
            drop_dilation_masks::<f32>(&cfg, &mut rng),
            Err(crate::Error::Param { .. })
        ));
    }
}
