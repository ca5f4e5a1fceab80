//! Central-difference gradient verification.

use alloc::vec::Vec;

use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

use super::{Graph, NodeId};

/// Differentiable leaves handed to a [`grad_check`] builder, in order.
pub type GradCheckTarget<T> = Vec<Tensor<T>>;

/// Verifies analytic gradients of `build` against central differences.
///
/// `build` receives a graph plus one node per input tensor and returns the
/// scalar loss node. Large tensors are subsampled deterministically
/// (`max_per_tensor` evenly spaced elements). Returns the maximum of
/// `|analytic - numeric| / max(|numeric|, 1e-8)` over all checked elements.
pub fn grad_check<T, F>(
    build: F,
    inputs: &[Tensor<T>],
    eps: f64,
    max_per_tensor: usize,
) -> Result<f64>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &[NodeId]) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = build(&mut g, &ids)?;
    let mut grads = g.backward(loss)?;
    let analytic: Vec<Option<Tensor<T>>> = ids.iter().map(|&id| grads.take(id)).collect();

    let eval = |tensors: &[Tensor<T>]| -> Result<f64> {
        let mut g = Graph::inference();
        let ids: Vec<NodeId> = tensors.iter().map(|t| g.param(t.clone())).collect();
        let loss = build(&mut g, &ids)?;
        Ok(g.value(loss).item().as_f64())
    };

    let mut worst = 0.0f64;
    for (k, base) in inputs.iter().enumerate() {
        let Some(analytic_k) = &analytic[k] else {
            continue;
        };
        let n = base.numel();
        let count = n.min(max_per_tensor.max(1));
        let stride = n.div_ceil(count);
        for j in (0..n).step_by(stride) {
            let mut tensors: Vec<Tensor<T>> = inputs.to_vec();
            let mut plus = base.data().to_vec();
            plus[j] = plus[j] + T::cast(eps);
            tensors[k] = Tensor::from_vec(base.shape(), plus)?;
            let fp = eval(&tensors)?;
            let mut minus = base.data().to_vec();
            minus[j] = minus[j] - T::cast(eps);
            tensors[k] = Tensor::from_vec(base.shape(), minus)?;
            let fm = eval(&tensors)?;
            let numeric = (fp - fm) / (2.0 * eps);
            let a = analytic_k.data()[j].as_f64();
            let rel = (a - numeric).abs() / numeric.abs().max(1e-8);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}
