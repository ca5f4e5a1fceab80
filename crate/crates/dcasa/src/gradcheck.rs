//! The `grad-check` command: central-difference verification of every
//! differentiable op and both micro models, in f64.

use dcasa_core::dense_unet::{DenseUNet, DenseUNetConfig, MaskDomain};
use dcasa_core::dsp::StftConfig;
use dcasa_core::graph::{grad_check, Padding};
use dcasa_core::params::Binding;
use dcasa_core::rng::rng_for;
use dcasa_core::seq::build_dc_loss;
use dcasa_core::tcn::{Tcn, TcnConfig};
use dcasa_core::tensor::Tensor;
use rand::Rng;

use crate::error::Result;

pub const OP_TOLERANCE: f64 = 1e-4;
pub const MODEL_TOLERANCE: f64 = 1e-3;
const EPS: f64 = 1e-5;

pub struct CheckRow {
    pub name: &'static str,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

fn rand_t(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = rng_for(seed, 300);
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen::<f64>() - 0.5).collect()).unwrap()
}

fn rand_off_zero(shape: &[usize], seed: u64, margin: f64) -> Tensor<f64> {
    let mut rng = rng_for(seed, 301);
    let n: usize = shape.iter().product();
    Tensor::from_vec(
        shape,
        (0..n)
            .map(|_| {
                let v = rng.gen::<f64>() - 0.5;
                if v >= 0.0 {
                    v + margin
                } else {
                    v - margin
                }
            })
            .collect(),
    )
    .unwrap()
}

/// Runs the whole suite; one row per op plus the two micro models.
pub fn run_suite() -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    let mut push = |name: &'static str, err: f64, tol: f64| {
        rows.push(CheckRow {
            name,
            max_rel_error: err,
            tolerance: tol,
        });
    };

    push(
        "conv2d(3x3, same)",
        grad_check(
            |g, ids| {
                let c = g.conv2d(ids[0], ids[1], (1, 1), Padding::Same)?;
                let s = g.mul(c, c)?;
                Ok(g.sum_all(s))
            },
            &[rand_t(&[4, 6, 3], 1), rand_t(&[3, 3, 3, 4], 2)],
            EPS,
            60,
        )?,
        OP_TOLERANCE,
    );
    push(
        "conv2d(2x2, stride 2, valid)",
        grad_check(
            |g, ids| {
                let c = g.conv2d(ids[0], ids[1], (2, 2), Padding::Valid)?;
                let s = g.mul(c, c)?;
                Ok(g.sum_all(s))
            },
            &[rand_t(&[6, 8, 2], 3), rand_t(&[2, 2, 2, 3], 4)],
            EPS,
            60,
        )?,
        OP_TOLERANCE,
    );
    push(
        "transpose_conv2d",
        grad_check(
            |g, ids| {
                let c = g.transpose_conv2d(ids[0], ids[1])?;
                let s = g.mul(c, c)?;
                Ok(g.sum_all(s))
            },
            &[rand_t(&[3, 4, 3], 5), rand_t(&[2, 2, 2, 3], 6)],
            EPS,
            60,
        )?,
        OP_TOLERANCE,
    );
    push(
        "depthwise_conv2d(stride 2)",
        grad_check(
            |g, ids| {
                let c = g.depthwise_conv2d_s2(ids[0], ids[1])?;
                let s = g.mul(c, c)?;
                Ok(g.sum_all(s))
            },
            &[rand_t(&[4, 6, 3], 7), rand_t(&[2, 2, 3], 8)],
            EPS,
            60,
        )?,
        OP_TOLERANCE,
    );
    push(
        "depthwise_conv1d(dilated)",
        grad_check(
            |g, ids| {
                let c = g.depthwise_conv1d_dilated(ids[0], ids[1], 4, None)?;
                let s = g.mul(c, c)?;
                Ok(g.sum_all(s))
            },
            &[rand_t(&[16, 4], 9), rand_t(&[3, 4], 10)],
            EPS,
            60,
        )?,
        OP_TOLERANCE,
    );
    push(
        "layer_norm",
        grad_check(
            |g, ids| {
                let n = g.layer_norm(ids[0], ids[1], ids[2])?;
                let s = g.mul(n, n)?;
                Ok(g.sum_all(s))
            },
            &[rand_t(&[4, 6, 3], 11), rand_t(&[3], 12), rand_t(&[3], 13)],
            EPS,
            60,
        )?,
        OP_TOLERANCE,
    );
    push(
        "elu",
        grad_check(
            |g, ids| {
                let e = g.elu(ids[0]);
                let s = g.mul(e, e)?;
                Ok(g.sum_all(s))
            },
            &[rand_t(&[4, 6, 3], 14)],
            EPS,
            60,
        )?,
        OP_TOLERANCE,
    );
    push(
        "prelu (|x| > 0.1)",
        grad_check(
            |g, ids| {
                let p = g.prelu(ids[0], ids[1])?;
                let s = g.mul(p, p)?;
                Ok(g.sum_all(s))
            },
            &[rand_off_zero(&[4, 6, 3], 15, 0.1), rand_t(&[3], 16)],
            EPS,
            60,
        )?,
        OP_TOLERANCE,
    );
    push(
        "matmul + shape ops",
        grad_check(
            |g, ids| {
                let t = g.transpose_axes(ids[0], 1, 2)?;
                let r = g.reshape(t, &[12, 6])?;
                let m = g.matmul(r, ids[1])?;
                let sl = g.slice(m, &[2, 1], &[8, 3])?;
                let cat = g.concat_last(&[sl, sl])?;
                let s = g.mul(cat, cat)?;
                Ok(g.sum_all(s))
            },
            &[rand_t(&[4, 6, 3], 17), rand_t(&[6, 4], 18)],
            EPS,
            60,
        )?,
        OP_TOLERANCE,
    );
    push(
        "row_l2_normalize",
        grad_check(
            |g, ids| {
                let n = g.row_l2_normalize(ids[0])?;
                let w = g.constant(rand_t(&[6, 5], 19));
                let p = g.mul(n, w)?;
                Ok(g.sum_all(p))
            },
            &[rand_off_zero(&[6, 5], 20, 0.05)],
            EPS,
            60,
        )?,
        OP_TOLERANCE,
    );
    push(
        "istft",
        grad_check(
            |g, ids| {
                let cfg = StftConfig::default();
                let w = g.istft_wave(ids[0], cfg, 500)?;
                let s = g.mul(w, w)?;
                Ok(g.sum_all(s))
            },
            &[rand_t(&[StftConfig::default().frames_for(500), 129, 2], 21)],
            EPS,
            40,
        )?,
        OP_TOLERANCE,
    );

    // micro models
    {
        let cfg = DenseUNetConfig::micro(MaskDomain::Complex);
        let mut rng = rng_for(22, 0);
        let net = DenseUNet::<f64>::new(cfg, 17, &mut rng)?;
        let input = rand_t(&[12, 17, 2], 23);
        let values: Vec<Tensor<f64>> = net.params.iter().map(|p| p.value.clone()).collect();
        let err = grad_check(
            |g, ids| {
                let binding = Binding::from_ids(ids.to_vec());
                let masks = net.forward(g, &binding, &input, None)?;
                let s0 = g.mul(masks[0], masks[0])?;
                let s1 = g.mul(masks[1], masks[1])?;
                let a = g.sum_all(s0);
                let b = g.sum_all(s1);
                g.add(a, b)
            },
            &values,
            EPS,
            4,
        )?;
        push("micro dense-unet", err, MODEL_TOLERANCE);
    }
    {
        let cfg = TcnConfig::micro();
        let mut rng = rng_for(24, 0);
        let net = Tcn::<f64>::new(cfg, 7, &mut rng)?;
        let input = rand_t(&[18, 7, 9], 25);
        let labels: Vec<u8> = (0..18).map(|t| (t % 3 == 0) as u8).collect();
        let values: Vec<Tensor<f64>> = net.params.iter().map(|p| p.value.clone()).collect();
        let err = grad_check(
            |g, ids| {
                let binding = Binding::from_ids(ids.to_vec());
                let v = net.forward(g, &binding, &input, None)?;
                build_dc_loss(g, v, &labels, None)
            },
            &values,
            EPS,
            4,
        )?;
        push("micro tcn", err, MODEL_TOLERANCE);
    }
    Ok(rows)
}
