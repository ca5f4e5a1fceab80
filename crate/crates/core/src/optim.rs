//! Adam optimizer and the validation-driven learning-rate schedule.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{dim_err, numeric_err, Result};
use crate::params::ParamSet;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter first/second moments plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub cfg: AdamConfig,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamSet<T>, cfg: AdamConfig) -> Self {
        AdamState {
            cfg,
            m: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
            step: 0,
        }
    }

    /// One Adam update with bias correction. `grads` aligns with the param
    /// set; `None` entries (parameters outside this loss) are skipped.
    pub fn step(
        &mut self,
        params: &mut ParamSet<T>,
        grads: &[Option<Tensor<T>>],
        lr: f64,
    ) -> Result<()> {
        if grads.len() != params.len() {
            return Err(dim_err!(
                "adam",
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            ));
        }
        for g in grads.iter().flatten() {
            if !g.is_finite() {
                return Err(numeric_err!("adam", "non-finite gradient"));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::cast(self.cfg.beta1);
        let b2 = T::cast(self.cfg.beta2);
        let eps = T::cast(self.cfg.eps);
        let lr_t = T::cast(lr);
        let bc1 = T::cast(1.0 - self.cfg.beta1.powi(t));
        let bc2 = T::cast(1.0 - self.cfg.beta2.powi(t));
        for (idx, grad) in grads.iter().enumerate() {
            let Some(grad) = grad else { continue };
            let p = params.get_mut(idx);
            if p.value.shape() != grad.shape() {
                return Err(dim_err!(
                    "adam",
                    "parameter '{}' has shape {:?}, gradient {:?}",
                    p.name,
                    p.value.shape(),
                    grad.shape()
                ));
            }
            let m = self.m[idx]
                .zip_map(grad, |m, g| b1 * m + (T::one() - b1) * g)
                .unwrap();
            let v = self.v[idx]
                .zip_map(grad, |v, g| b2 * v + (T::one() - b2) * g * g)
                .unwrap();
            let new_value = {
                let shape = p.value.shape().to_vec();
                let data: Vec<T> = p
                    .value
                    .data()
                    .iter()
                    .zip(m.data().iter().zip(v.data().iter()))
                    .map(|(&pv, (&mv, &vv))| {
                        let m_hat = mv / bc1;
                        let v_hat = vv / bc2;
                        pv - lr_t * m_hat / (v_hat.sqrt() + eps)
                    })
                    .collect();
                Tensor::from_vec(&shape, data).unwrap()
            };
            p.grad = Some(grad.clone());
            p.value = new_value;
            self.m[idx] = m;
            self.v[idx] = v;
        }
        Ok(())
    }
}

/// Decision from the validation-loss schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleDecision {
    Continue,
    HalveLr,
    Stop,
}

/// Pure function of the per-epoch validation history: halve the rate after
/// `halve_patience` epochs without improvement (and again every further
/// `halve_patience`), stop after `stop_patience`.
pub fn lr_schedule(history: &[f64], halve_patience: usize, stop_patience: usize) -> ScheduleDecision {
    if history.is_empty() {
        return ScheduleDecision::Continue;
    }
    let mut best = 0usize;
    for (i, &v) in history.iter().enumerate() {
        if v < history[best] {
            best = i;
        }
    }
    let since_best = history.len() - 1 - best;
    if since_best >= stop_patience {
        ScheduleDecision::Stop
    } else if since_best > 0 && since_best % halve_patience == 0 {
        ScheduleDecision::HalveLr
    } else {
        ScheduleDecision::Continue
    }
}
