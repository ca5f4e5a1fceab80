//! Sequential-grouping support: the stacked frame-level input features, the
//! deep-clustering objectives over frame embeddings, and output organization
//! from cluster labels.

use alloc::vec;
use alloc::vec::Vec;

use crate::dsp::Spectrogram;
use crate::error::{dim_err, param_err, Result};
use crate::graph::{Graph, NodeId};
use crate::tensor::{Scalar, Tensor};

/// Stacks mixture and both estimates as `[T, F, 9]`:
/// `(Y.re, Y.im, |Y|, X1.re, X1.im, |X1|, X2.re, X2.im, |X2|)`.
pub fn build_input_stack<T: Scalar>(
    y: &Spectrogram<T>,
    est: [&Spectrogram<T>; 2],
) -> Result<Tensor<T>> {
    let (frames, bins) = (y.frames, y.bins);
    for s in est {
        if s.frames != frames || s.bins != bins {
            return Err(dim_err!(
                "input_stack",
                "estimate {}x{} vs mixture {}x{}",
                s.frames,
                s.bins,
                frames,
                bins
            ));
        }
    }
    let mut data = Vec::with_capacity(frames * bins * 9);
    for i in 0..frames * bins {
        for s in [y, est[0], est[1]] {
            let (r, im) = (s.re[i], s.im[i]);
            data.push(r);
            data.push(im);
            data.push((r * r + im * im).sqrt());
        }
    }
    Tensor::from_vec(&[frames, bins, 9], data)
}

/// Deep-clustering loss `||V V' - A A'||_F^2` via the low-rank expansion
/// `||V'V||^2 - 2 ||V'A||^2 + ||A'A||^2`. `labels` holds the per-frame
/// class (0 or 1); `weights`, when given, scales rows by `sqrt(w(t))`.
pub fn build_dc_loss<T: Scalar>(
    g: &mut Graph<T>,
    v: NodeId,
    labels: &[u8],
    weights: Option<&[T]>,
) -> Result<NodeId> {
    let shape = g.value(v).shape().to_vec();
    if shape.len() != 2 {
        return Err(dim_err!("dc_loss", "V must be [T, D], got {:?}", shape));
    }
    let frames = shape[0];
    if labels.len() != frames {
        return Err(dim_err!(
            "dc_loss",
            "labels length {} vs {} frames",
            labels.len(),
            frames
        ));
    }
    let sqrt_w: Vec<T> = match weights {
        Some(w) => {
            if w.len() != frames {
                return Err(dim_err!(
                    "dc_loss",
                    "weights length {} vs {} frames",
                    w.len(),
                    frames
                ));
            }
            if w.iter().any(|v| *v < T::zero()) {
                return Err(param_err!("dc_loss", "negative weight"));
            }
            w.iter().map(|v| v.sqrt()).collect()
        }
        None => vec![T::one(); frames],
    };

    // weighted indicator matrix, and its Gram term computed as a constant
    let mut a_data = vec![T::zero(); frames * 2];
    for (t, &l) in labels.iter().enumerate() {
        a_data[t * 2 + l as usize] = sqrt_w[t];
    }
    let mut ata = [[0.0f64; 2]; 2];
    for t in 0..frames {
        for i in 0..2 {
            for j in 0..2 {
                ata[i][j] += a_data[t * 2 + i].as_f64() * a_data[t * 2 + j].as_f64();
            }
        }
    }
    let ata_fro2: f64 = ata.iter().flatten().map(|v| v * v).sum();

    let vw = g.scale_rows(v, sqrt_w)?;
    let vt = g.transpose_axes(vw, 0, 1)?;
    let vtv = g.matmul(vt, vw)?;
    let vtv2 = g.mul(vtv, vtv)?;
    let s1 = g.sum_all(vtv2);
    let a = g.constant(Tensor::from_vec(&[frames, 2], a_data)?);
    let vta = g.matmul(vt, a)?;
    let vta2 = g.mul(vta, vta)?;
    let s2 = g.sum_all(vta2);
    let s2_scaled = g.scale(s2, -2.0);
    let partial = g.add(s1, s2_scaled)?;
    let c = g.constant(Tensor::scalar(T::cast(ata_fro2)));
    g.add(partial, c)
}

/// Routes frame estimates to streams: label 0 keeps `(X1 -> s1, X2 -> s2)`,
/// label 1 swaps.
pub fn organize_outputs<T: Scalar>(
    est: [&Spectrogram<T>; 2],
    labels: &[u8],
) -> Result<(Spectrogram<T>, Spectrogram<T>)> {
    let frames = est[0].frames;
    if labels.len() != frames {
        return Err(dim_err!(
            "organize_outputs",
            "labels length {} vs {} frames",
            labels.len(),
            frames
        ));
    }
    let chosen: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let (a, b) = crate::objectives::reorder_frames(est, &chosen);
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_spec(frames: usize, bins: usize, seed: u64) -> Spectrogram<f64> {
        let mut rng = crate::rng::rng_for(seed, 60);
        let mut s = Spectrogram::zeros(frames, bins);
        for v in s.re.iter_mut().chain(s.im.iter_mut()) {
            *v = rng.gen::<f64>() * 2.0 - 1.0;
        }
        s
    }

    /// Direct T x T Frobenius evaluation, the independent oracle.
    fn dc_direct(v: &[f64], a: &[f64], w: Option<&[f64]>, t: usize, d: usize) -> f64 {
        let mut total = 0.0;
        for i in 0..t {
            for j in 0..t {
                let mut vv = 0.0;
                for k in 0..d {
                    vv += v[i * d + k] * v[j * d + k];
                }
                let mut aa = 0.0;
                for k in 0..2 {
                    aa += a[i * 2 + k] * a[j * 2 + k];
                }
                // W^(1/2) (VV' - AA') W^(1/2) entry (i, j) scales by sqrt(wi wj)
                let elem = match w {
                    Some(w) => (w[i].sqrt() * w[j].sqrt()) * (vv - aa),
                    None => vv - aa,
                };
                total += elem * elem;
            }
        }
        total
    }

    #[test]
    fn input_stack_layout_and_magnitude() {
        let y = random_spec(4, 3, 1);
        let e0 = random_spec(4, 3, 2);
        let zero = Spectrogram::zeros(4, 3);
        let t = build_input_stack(&y, [&e0, &zero]).unwrap();
        assert_eq!(t.shape(), &[4, 3, 9]);
        let d = t.data();
        for i in 0..12 {
            // plane 2 of each signal group is the magnitude of planes 0, 1
            for s in 0..3 {
                let (r, im, m) = (d[i * 9 + s * 3], d[i * 9 + s * 3 + 1], d[i * 9 + s * 3 + 2]);
                assert!((m - (r * r + im * im).sqrt()).abs() < 1e-12);
            }
            // planes 7..9 are zero for the zero estimate
            assert_eq!(d[i * 9 + 6], 0.0);
            assert_eq!(d[i * 9 + 7], 0.0);
            assert_eq!(d[i * 9 + 8], 0.0);
        }
        // swapping estimates permutes the plane groups exactly
        let swapped = build_input_stack(&y, [&zero, &e0]).unwrap();
        let sd = swapped.data();
        for i in 0..12 {
            for p in 0..3 {
                assert_eq!(d[i * 9 + 3 + p], sd[i * 9 + 6 + p]);
                assert_eq!(d[i * 9 + 6 + p], sd[i * 9 + 3 + p]);
            }
        }
    }

    #[test]
    fn dc_loss_zero_for_orthonormal_match() {
        // V rows orthonormal, A identity-like: VV' == AA' == I
        let mut g = Graph::<f64>::new();
        let v = g.constant(Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let loss = build_dc_loss(&mut g, v, &[0, 1], None).unwrap();
        assert!(g.value(loss).item().abs() < 1e-12);
    }

    #[test]
    fn dc_loss_invariant_to_label_complement() {
        let mut rng = crate::rng::rng_for(3, 0);
        let data: Vec<f64> = (0..10 * 4).map(|_| rng.gen::<f64>() - 0.5).collect();
        let labels: Vec<u8> = (0..10).map(|_| rng.gen_range(0..2) as u8).collect();
        let complement: Vec<u8> = labels.iter().map(|&l| 1 - l).collect();
        let mut g = Graph::<f64>::new();
        let v = g.constant(Tensor::from_vec(&[10, 4], data.clone()).unwrap());
        let l1 = build_dc_loss(&mut g, v, &labels, None).unwrap();
        let l2 = build_dc_loss(&mut g, v, &complement, None).unwrap();
        assert!((g.value(l1).item() - g.value(l2).item()).abs() < 1e-9);
    }

    #[test]
    fn dc_loss_matches_direct_oracle() {
        let mut rng = crate::rng::rng_for(4, 0);
        for case in 0..50 {
            let (t, d) = (20, 5);
            let data: Vec<f64> = (0..t * d).map(|_| rng.gen::<f64>() - 0.5).collect();
            let labels: Vec<u8> = (0..t).map(|_| rng.gen_range(0..2) as u8).collect();
            let mut a = vec![0.0f64; t * 2];
            for (i, &l) in labels.iter().enumerate() {
                a[i * 2 + l as usize] = 1.0;
            }
            let mut g = Graph::<f64>::new();
            let v = g.constant(Tensor::from_vec(&[t, d], data.clone()).unwrap());
            let loss = build_dc_loss(&mut g, v, &labels, None).unwrap();
            let want = dc_direct(&data, &a, None, t, d);
            let got = g.value(loss).item();
            assert!(
                (got - want).abs() < 1e-8 * want.max(1.0),
                "case {case}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn weighted_dc_matches_oracle_and_reduces_to_unweighted() {
        let mut rng = crate::rng::rng_for(5, 0);
        let (t, d) = (15, 4);
        let data: Vec<f64> = (0..t * d).map(|_| rng.gen::<f64>() - 0.5).collect();
        let labels: Vec<u8> = (0..t).map(|_| rng.gen_range(0..2) as u8).collect();
        let mut w: Vec<f64> = (0..t).map(|_| rng.gen::<f64>()).collect();
        let total: f64 = w.iter().sum();
        for v in w.iter_mut() {
            *v /= total;
        }
        let mut a = vec![0.0f64; t * 2];
        for (i, &l) in labels.iter().enumerate() {
            a[i * 2 + l as usize] = 1.0;
        }

        let mut g = Graph::<f64>::new();
        let v = g.constant(Tensor::from_vec(&[t, d], data.clone()).unwrap());
        let weighted = build_dc_loss(&mut g, v, &labels, Some(&w)).unwrap();
        let want = dc_direct(&data, &a, Some(&w), t, d);
        let got = g.value(weighted).item();
        assert!((got - want).abs() < 1e-8 * want.max(1.0), "{got} vs {want}");

        // identity weights equal the plain loss to 1e-10
        let ones = vec![1.0f64; t];
        let wi = build_dc_loss(&mut g, v, &labels, Some(&ones)).unwrap();
        let plain = build_dc_loss(&mut g, v, &labels, None).unwrap();
        assert!((g.value(wi).item() - g.value(plain).item()).abs() < 1e-10);
    }

    #[test]
    fn zero_weight_rows_do_not_matter() {
        let mut rng = crate::rng::rng_for(6, 0);
        let (t, d) = (8, 3);
        let mut data: Vec<f64> = (0..t * d).map(|_| rng.gen::<f64>() - 0.5).collect();
        let labels: Vec<u8> = (0..t).map(|_| rng.gen_range(0..2) as u8).collect();
        let mut w = vec![1.0f64; t];
        w[3] = 0.0;
        let eval = |data: &[f64]| -> f64 {
            let mut g = Graph::<f64>::new();
            let v = g.constant(Tensor::from_vec(&[t, d], data.to_vec()).unwrap());
            let loss = build_dc_loss(&mut g, v, &labels, Some(&w)).unwrap();
            g.value(loss).item()
        };
        let before = eval(&data);
        for k in 0..d {
            data[3 * d + k] = rng.gen::<f64>() * 10.0;
        }
        let after = eval(&data);
        assert!((before - after).abs() < 1e-9);
    }

    #[test]
    fn negative_weight_rejected() {
        let mut g = Graph::<f64>::new();
        let v = g.constant(Tensor::zeros(&[3, 2]));
        let err = build_dc_loss(&mut g, v, &[0, 0, 1], Some(&[0.5, -0.1, 0.6])).unwrap_err();
        assert!(matches!(err, crate::Error::Param { .. }));
    }

    #[test]
    fn organize_outputs_trivial_paths() {
        let e0 = random_spec(5, 3, 7);
        let e1 = random_spec(5, 3, 8);
        let (a, b) = organize_outputs([&e0, &e1], &[0; 5]).unwrap();
        assert_eq!(a.re, e0.re);
        assert_eq!(b.re, e1.re);
        let (a, b) = organize_outputs([&e0, &e1], &[1; 5]).unwrap();
        assert_eq!(a.re, e1.re);
        assert_eq!(b.re, e0.re);
    }
}
