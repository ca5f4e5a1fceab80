//! Pointwise ops, activations, reductions and broadcasting helpers.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::error::{dim_err, param_err, Result};
use crate::tensor::{Scalar, Tensor};

use super::{Graph, NodeId};

impl<T: Scalar> Graph<T> {
    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(dim_err!(op, "shape {:?} vs {:?}", sa, sb));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let out = self.val(a).zip_map(&self.val(b), |x, y| x + y)?;
        let rg = self.needs_grad(&[a, b]);
        let back = rg.then(|| -> super::BackFn<T> {
            Box::new(move |g, sink| {
                sink.add(a, g.clone());
                sink.add(b, g.clone());
            })
        });
        Ok(self.push(out, rg, back))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let out = self.val(a).zip_map(&self.val(b), |x, y| x - y)?;
        let rg = self.needs_grad(&[a, b]);
        let back = rg.then(|| -> super::BackFn<T> {
            Box::new(move |g, sink| {
                sink.add(a, g.clone());
                sink.add(b, g.map(|v| -v));
            })
        });
        Ok(self.push(out, rg, back))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let (va, vb) = (self.val(a), self.val(b));
        let out = va.zip_map(&vb, |x, y| x * y)?;
        let rg = self.needs_grad(&[a, b]);
        let back = rg.then(|| -> super::BackFn<T> {
            Box::new(move |g, sink| {
                sink.add(a, g.zip_map(&vb, |gv, y| gv * y).unwrap());
                sink.add(b, g.zip_map(&va, |gv, x| gv * x).unwrap());
            })
        });
        Ok(self.push(out, rg, back))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let c = T::cast(factor);
        let out = self.val(a).map(|v| v * c);
        let rg = self.needs_grad(&[a]);
        let back = rg.then(|| -> super::BackFn<T> {
            Box::new(move |g, sink| sink.add(a, g.map(|v| v * c)))
        });
        self.push(out, rg, back)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.scale(a, -1.0)
    }

    /// Element-wise absolute value; the subgradient at zero is zero.
    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let va = self.val(a);
        let out = va.map(|v| v.abs());
        let rg = self.needs_grad(&[a]);
        let back = rg.then(|| -> super::BackFn<T> {
            Box::new(move |g, sink| {
                sink.add(
                    a,
                    g.zip_map(&va, |gv, x| {
                        if x > T::zero() {
                            gv
                        } else if x < T::zero() {
                            -gv
                        } else {
                            T::zero()
                        }
                    })
                    .unwrap(),
                )
            })
        });
        self.push(out, rg, back)
    }

    /// Natural logarithm (inputs must be positive at call sites).
    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let va = self.val(a);
        let out = va.map(|v| v.ln());
        let rg = self.needs_grad(&[a]);
        let back = rg.then(|| -> super::BackFn<T> {
            Box::new(move |g, sink| sink.add(a, g.zip_map(&va, |gv, x| gv / x).unwrap()))
        });
        self.push(out, rg, back)
    }

    /// `max(x, floor)`; gradient passes only where `x > floor`.
    pub fn clamp_min(&mut self, a: NodeId, floor: f64) -> NodeId {
        let c = T::cast(floor);
        let va = self.val(a);
        let out = va.map(|v| v.max(c));
        let rg = self.needs_grad(&[a]);
        let back = rg.then(|| -> super::BackFn<T> {
            Box::new(move |g, sink| {
                sink.add(
                    a,
                    g.zip_map(&va, |gv, x| if x > c { gv } else { T::zero() })
                        .unwrap(),
                )
            })
        });
        self.push(out, rg, back)
    }

    /// ELU: `x` for `x > 0`, `exp(x) - 1` otherwise.
    pub fn elu(&mut self, a: NodeId) -> NodeId {
        let va = self.val(a);
        let out = va.map(|v| {
            if v > T::zero() {
                v
            } else {
                v.exp() - T::one()
            }
        });
        let rg = self.needs_grad(&[a]);
        let back = rg.then(|| -> super::BackFn<T> {
            // for x <= 0 the derivative is exp(x) = y + 1; reuse the output
            let vy = out.clone();
            Box::new(move |g, sink| {
                let mut data = Vec::with_capacity(g.numel());
                for ((&gv, &x), &y) in g.data().iter().zip(va.data()).zip(vy.data()) {
                    data.push(if x > T::zero() { gv } else { gv * (y + T::one()) });
                }
                sink.add(a, Tensor::from_vec(vy.shape(), data).unwrap());
            })
        });
        self.push(out, rg, back)
    }

    /// PReLU with one learned slope per channel (last axis).
    pub fn prelu(&mut self, a: NodeId, alpha: NodeId) -> Result<NodeId> {
        let va = self.val(a);
        let valpha = self.val(alpha);
        let channels = *va.shape().last().ok_or_else(|| {
            dim_err!("prelu", "input must have at least one axis")
        })?;
        if valpha.shape() != [channels] {
            return Err(dim_err!(
                "prelu",
                "alpha shape {:?} does not match channel count {}",
                valpha.shape(),
                channels
            ));
        }
        let ad = valpha.data();
        let mut data = Vec::with_capacity(va.numel());
        for row in va.data().chunks_exact(channels) {
            for (&x, &al) in row.iter().zip(ad.iter()) {
                data.push(if x > T::zero() { x } else { al * x });
            }
        }
        let out = Tensor::from_vec(va.shape(), data)?;
        let rg = self.needs_grad(&[a, alpha]);
        let back = rg.then(|| -> super::BackFn<T> {
            Box::new(move |g, sink| {
                let ad = valpha.data();
                let mut gx = Vec::with_capacity(va.numel());
                let mut galpha = alloc::vec![T::zero(); channels];
                for (grow, xrow) in g
                    .data()
                    .chunks_exact(channels)
                    .zip(va.data().chunks_exact(channels))
                {
                    for c in 0..channels {
                        let (gv, x) = (grow[c], xrow[c]);
                        if x > T::zero() {
                            gx.push(gv);
                        } else {
                            gx.push(gv * ad[c]);
                            galpha[c] = galpha[c] + gv * x;
                        }
                    }
                }
                sink.add(a, Tensor::from_vec(va.shape(), gx).unwrap());
                sink.add(alpha, Tensor::from_vec(&[channels], galpha).unwrap());
            })
        });
        Ok(self.push(out, rg, back))
    }

    /// Multiplies each channel (last axis) by a fixed factor; used for
    /// channel dropout masks.
    pub fn mul_channels(&mut self, a: NodeId, mask: Vec<T>) -> Result<NodeId> {
        let va = self.val(a);
        let channels = *va
            .shape()
            .last()
            .ok_or_else(|| dim_err!("mul_channels", "input must have at least one axis"))?;
        if mask.len() != channels {
            return Err(dim_err!(
                "mul_channels",
                "mask length {} vs {} channels",
                mask.len(),
                channels
            ));
        }
        let mut data = Vec::with_capacity(va.numel());
        for row in va.data().chunks_exact(channels) {
            for (&x, &m) in row.iter().zip(mask.iter()) {
                data.push(x * m);
            }
        }
        let out = Tensor::from_vec(va.shape(), data)?;
        let rg = self.needs_grad(&[a]);
        let shape = va.shape().to_vec();
        let back = rg.then(|| -> super::BackFn<T> {
            Box::new(move |g, sink| {
                let mut data = Vec::with_capacity(g.numel());
                for row in g.data().chunks_exact(channels) {
                    for (&gv, &m) in row.iter().zip(mask.iter()) {
                        data.push(gv * m);
                    }
                }
                sink.add(a, Tensor::from_vec(&shape, data).unwrap());
            })
        });
        Ok(self.push(out, rg, back))
    }

    /// Multiplies each axis-0 row by a fixed weight (loss weighting).
    pub fn scale_rows(&mut self, a: NodeId, weights: Vec<T>) -> Result<NodeId> {
        let va = self.val(a);
        let rows = va.shape()[0];
        if weights.len() != rows {
            return Err(dim_err!(
                "scale_rows",
                "weights length {} vs axis 0 length {}",
                weights.len(),
                rows
            ));
        }
        let row_len = va.numel() / rows.max(1);
        let mut data = Vec::with_capacity(va.numel());
        for (row, &w) in va.data().chunks_exact(row_len.max(1)).zip(weights.iter()) {
            for &x in row {
                data.push(x * w);
            }
        }
        let out = Tensor::from_vec(va.shape(), data)?;
        let rg = self.needs_grad(&[a]);
        let shape = va.shape().to_vec();
        let back = rg.then(|| -> super::BackFn<T> {
            Box::new(move |g, sink| {
                let mut data = Vec::with_capacity(g.numel());
                for (row, &w) in g.data().chunks_exact(row_len.max(1)).zip(weights.iter()) {
                    for &gv in row {
                        data.push(gv * w);
                    }
                }
                sink.add(a, Tensor::from_vec(&shape, data).unwrap());
            })
        });
        Ok(self.push(out, rg, back))
    }

    /// Adds a per-channel bias over the last axis.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let va = self.val(a);
        let vb = self.val(bias);
        let channels = *va
            .shape()
            .last()
            .ok_or_else(|| dim_err!("add_bias", "input must have at least one axis"))?;
        if vb.shape() != [channels] {
            return Err(dim_err!(
                "add_bias",
                "bias shape {:?} vs {} channels",
                vb.shape(),
                channels
            ));
        }
        let bd = vb.data();
        let mut data = Vec::with_capacity(va.numel());
        for row in va.data().chunks_exact(channels) {
            for (&x, &b) in row.iter().zip(bd.iter()) {
                data.push(x + b);
            }
        }
        let out = Tensor::from_vec(va.shape(), data)?;
        let rg = self.needs_grad(&[a, bias]);
        let back = rg.then(|| -> super::BackFn<T> {
            Box::new(move |g, sink| {
                sink.add(a, g.clone());
                let mut gb = alloc::vec![T::zero(); channels];
                for row in g.data().chunks_exact(channels) {
                    for (acc, &gv) in gb.iter_mut().zip(row.iter()) {
                        *acc = *acc + gv;
                    }
                }
                sink.add(bias, Tensor::from_vec(&[channels], gb).unwrap());
            })
        });
        Ok(self.push(out, rg, back))
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let va = self.val(a);
        let mut acc = T::zero();
        for &v in va.data() {
            acc = acc + v;
        }
        let out = Tensor::scalar(acc);
        let rg = self.needs_grad(&[a]);
        let shape = va.shape().to_vec();
        let back = rg.then(|| -> super::BackFn<T> {
            Box::new(move |g, sink| {
                sink.add(a, Tensor::full(&shape, g.item()));
            })
        });
        self.push(out, rg, back)
    }
}

/// Validates a keep/drop probability.
pub fn check_keep_prob(op: &'static str, p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(param_err!(op, "keep probability {p} must lie in (0, 1]"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn elu_and_prelu_values() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_vec(&[3], vec![0.0, -1.0, -2.0]).unwrap());
        let e = g.elu(x);
        let got = g.value(e).data().to_vec();
        assert_eq!(got[0], 0.0);
        assert!((got[1] - ((-1.0f64).exp() - 1.0)).abs() < 1e-12); // ~ -0.6321
        let alpha = g.constant(Tensor::from_vec(&[1], vec![0.25]).unwrap());
        let x2 = g.constant(Tensor::from_vec(&[3, 1], vec![0.0, -2.0, 3.0]).unwrap());
        let p = g.prelu(x2, alpha).unwrap();
        assert_eq!(g.value(p).data(), &[0.0, -0.5, 3.0]);
    }

    #[test]
    fn add_bias_gradient_sums_leading_axes() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(&[2, 3, 2]));
        let b = g.param(Tensor::from_vec(&[2], vec![0.5, -0.5]).unwrap());
        let y = g.add_bias(x, b).unwrap();
        let s = g.sum_all(y);
        let mut grads = g.backward(s).unwrap();
        assert_eq!(grads.take(b).unwrap().data(), &[6.0, 6.0]);
    }

    #[test]
    fn shape_mismatch_names_axes() {
        let mut g = Graph::<f32>::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[3, 2]));
        let err = g.add(a, b).unwrap_err();
        assert!(matches!(err, crate::Error::Dim { .. }));
    }
}
