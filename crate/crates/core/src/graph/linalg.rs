//! 2-D matrix multiplication with cache-friendly inner loops.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, Result};
use crate::tensor::{Scalar, Tensor};

use super::{Graph, NodeId};

/// C[m,n] = A[m,k] * B[k,n]
pub(crate) fn mm_nn<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow.iter()) {
                *cv = *cv + av * bv;
            }
        }
    }
    c
}

/// C[m,k] = A[m,n] * B[k,n]^T  (rows of both operands are contiguous)
fn mm_nt<T: Scalar>(a: &[T], b: &[T], m: usize, n: usize, k: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            // four partial accumulators hide the FMA latency
            let mut acc = [T::zero(); 4];
            let mut chunks_a = arow.chunks_exact(4);
            let mut chunks_b = brow.chunks_exact(4);
            for (ca, cb) in (&mut chunks_a).zip(&mut chunks_b) {
                for j in 0..4 {
                    acc[j] = acc[j] + ca[j] * cb[j];
                }
            }
            let mut total = (acc[0] + acc[1]) + (acc[2] + acc[3]);
            for (&av, &bv) in chunks_a.remainder().iter().zip(chunks_b.remainder()) {
                total = total + av * bv;
            }
            c[i * k + p] = total;
        }
    }
    c
}

/// C[k,n] = A[m,k]^T * B[m,n]
fn mm_tn<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow.iter()) {
                *cv = *cv + av * bv;
            }
        }
    }
    c
}

impl<T: Scalar> Graph<T> {
    /// `[M, K] x [K, N] -> [M, N]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let va = self.val(a);
        let vb = self.val(b);
        let (sa, sb) = (va.shape(), vb.shape());
        if sa.len() != 2 || sb.len() != 2 {
            return Err(dim_err!("matmul", "expected rank-2 operands, got {:?} x {:?}", sa, sb));
        }
        if sa[1] != sb[0] {
            return Err(dim_err!(
                "matmul",
                "inner axes disagree: {:?} x {:?}",
                sa,
                sb
            ));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = Tensor::from_vec(&[m, n], mm_nn(va.data(), vb.data(), m, k, n))?;
        let rg = self.needs_grad(&[a, b]);
        let back = rg.then(|| -> super::BackFn<T> {
            Box::new(move |g, sink| {
                // dA = g * B^T, dB = A^T * g
                let da = mm_nt(g.data(), vb.data(), m, n, k);
                let db = mm_tn(va.data(), g.data(), m, k, n);
                sink.add(a, Tensor::from_vec(&[m, k], da).unwrap());
                sink.add(b, Tensor::from_vec(&[k, n], db).unwrap());
            })
        });
        Ok(self.push(out, rg, back))
    }
}
