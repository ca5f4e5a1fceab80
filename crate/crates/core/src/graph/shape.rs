//! Pure data-movement ops; each gradient is the inverse movement.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, Result};
use crate::tensor::{strides, Scalar, Tensor};

use super::{Graph, NodeId};

fn transpose_data<T: Scalar>(t: &Tensor<T>, a: usize, b: usize) -> Tensor<T> {
    let shape = t.shape();
    let mut new_shape = shape.to_vec();
    new_shape.swap(a, b);
    let in_strides = strides(shape);
    let out_strides = strides(&new_shape);
    let mut out = vec![T::zero(); t.numel()];
    let src = t.data();
    // walk the output in order, computing the source index
    let ndim = shape.len();
    let mut idx = vec![0usize; ndim];
    for slot in out.iter_mut() {
        let mut src_off = 0;
        for (d, &i) in idx.iter().enumerate() {
            let sd = if d == a {
                b
            } else if d == b {
                a
            } else {
                d
            };
            src_off += i * in_strides[sd];
        }
        *slot = src[src_off];
        for d in (0..ndim).rev() {
            idx[d] += 1;
            if idx[d] < new_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    let _ = out_strides;
    Tensor::from_vec(&new_shape, out).unwrap()
}

fn slice_data<T: Scalar>(t: &Tensor<T>, starts: &[usize], lens: &[usize]) -> Tensor<T> {
    let shape = t.shape();
    let in_strides = strides(shape);
    let mut out = Vec::with_capacity(lens.iter().product());
    let ndim = shape.len();
    let mut idx = vec![0usize; ndim];
    let total: usize = lens.iter().product();
    let src = t.data();
    for _ in 0..total {
        let mut off = 0;
        for d in 0..ndim {
            off += (starts[d] + idx[d]) * in_strides[d];
        }
        out.push(src[off]);
        for d in (0..ndim).rev() {
            idx[d] += 1;
            if idx[d] < lens[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Tensor::from_vec(lens, out).unwrap()
}

fn scatter_into<T: Scalar>(
    grad: &Tensor<T>,
    full_shape: &[usize],
    starts: &[usize],
) -> Tensor<T> {
    let out_strides = strides(full_shape);
    let mut data = vec![T::zero(); full_shape.iter().product()];
    let lens = grad.shape();
    let ndim = full_shape.len();
    let mut idx = vec![0usize; ndim];
    for &g in grad.data() {
        let mut off = 0;
        for d in 0..ndim {
            off += (starts[d] + idx[d]) * out_strides[d];
        }
        data[off] = g;
        for d in (0..ndim).rev() {
            idx[d] += 1;
            if idx[d] < lens[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Tensor::from_vec(full_shape, data).unwrap()
}

impl<T: Scalar> Graph<T> {
    /// Re-views a node under a new shape of equal element count.
    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let out = self.val(a).reshaped(shape)?;
        let rg = self.needs_grad(&[a]);
        let orig = self.value(a).shape().to_vec();
        let back = rg.then(|| -> super::BackFn<T> {
            Box::new(move |g, sink| sink.add(a, g.reshaped(&orig).unwrap()))
        });
        Ok(self.push(out, rg, back))
    }

    /// Swaps two axes.
    pub fn transpose_axes(&mut self, x: NodeId, a: usize, b: usize) -> Result<NodeId> {
        let v = self.val(x);
        let ndim = v.ndim();
        if a >= ndim || b >= ndim {
            return Err(dim_err!(
                "transpose_axes",
                "axes ({a}, {b}) out of range for rank {ndim}"
            ));
        }
        let out = transpose_data(&v, a, b);
        let rg = self.needs_grad(&[x]);
        let back = rg.then(|| -> super::BackFn<T> {
            Box::new(move |g, sink| sink.add(x, transpose_data(g, a, b)))
        });
        Ok(self.push(out, rg, back))
    }

    /// Rectangular slice; gradient scatters back into a zero tensor.
    pub fn slice(&mut self, x: NodeId, starts: &[usize], lens: &[usize]) -> Result<NodeId> {
        let v = self.val(x);
        let shape = v.shape();
        if starts.len() != shape.len() || lens.len() != shape.len() {
            return Err(dim_err!(
                "slice",
                "rank mismatch: tensor {:?}, starts {:?}, lens {:?}",
                shape,
                starts,
                lens
            ));
        }
        for d in 0..shape.len() {
            if starts[d] + lens[d] > shape[d] || lens[d] == 0 {
                return Err(dim_err!(
                    "slice",
                    "axis {d}: [{}, {}) out of 0..{}",
                    starts[d],
                    starts[d] + lens[d],
                    shape[d]
                ));
            }
        }
        let out = slice_data(&v, starts, lens);
        let rg = self.needs_grad(&[x]);
        let full = shape.to_vec();
        let st = starts.to_vec();
        let back = rg.then(|| -> super::BackFn<T> {
            Box::new(move |g, sink| sink.add(x, scatter_into(g, &full, &st)))
        });
        Ok(self.push(out, rg, back))
    }

    /// Concatenates along the last axis; inputs agree on all other axes.
    pub fn concat_last(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        if xs.is_empty() {
            return Err(dim_err!("concat", "no inputs"));
        }
        let first = self.value(xs[0]).shape().to_vec();
        let ndim = first.len();
        let mut chans = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.value(x).shape();
            if s.len() != ndim || s[..ndim - 1] != first[..ndim - 1] {
                return Err(dim_err!(
                    "concat",
                    "leading axes differ: {:?} vs {:?}",
                    s,
                    first
                ));
            }
            chans.push(s[ndim - 1]);
        }
        let total: usize = chans.iter().sum();
        let rows: usize = first[..ndim - 1].iter().product();
        let mut out_shape = first.clone();
        out_shape[ndim - 1] = total;
        let mut data = Vec::with_capacity(rows * total);
        let vals: Vec<Tensor<T>> = xs.iter().map(|&x| self.val(x)).collect();
        for r in 0..rows {
            for (v, &c) in vals.iter().zip(chans.iter()) {
                data.extend_from_slice(&v.data()[r * c..(r + 1) * c]);
            }
        }
        let out = Tensor::from_vec(&out_shape, data)?;
        let rg = self.needs_grad(xs);
        let ids = xs.to_vec();
        let back = rg.then(|| -> super::BackFn<T> {
            Box::new(move |g, sink| {
                let gd = g.data();
                let mut offset = 0;
                for (&id, &c) in ids.iter().zip(chans.iter()) {
                    let mut part = Vec::with_capacity(rows * c);
                    for r in 0..rows {
                        let base = r * total + offset;
                        part.extend_from_slice(&gd[base..base + c]);
                    }
                    let mut shape = g.shape().to_vec();
                    *shape.last_mut().unwrap() = c;
                    sink.add(id, Tensor::from_vec(&shape, part).unwrap());
                    offset += c;
                }
            })
        });
        Ok(self.push(out, rg, back))
    }
}
