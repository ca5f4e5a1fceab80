//! Differentiable inverse STFT: the time-domain objective trains masks
//! through overlap-add synthesis, so the synthesis adjoint feeds spectrogram
//! gradients back to the mask heads.

use alloc::boxed::Box;

use crate::dsp::{istft, istft_adjoint, Spectrogram, StftConfig};
use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

use super::{Graph, NodeId};

impl<T: Scalar> Graph<T> {
    /// Synthesizes a waveform from a `[T, F, 2]` complex-plane node.
    pub fn istft_wave(&mut self, spec: NodeId, cfg: StftConfig, out_len: usize) -> Result<NodeId> {
        let v = self.val(spec);
        let sp = Spectrogram::from_tensor(&v)?;
        let frames = sp.frames;
        let wave = istft(&sp, &cfg, out_len)?;
        let out = Tensor::from_vec(&[out_len], wave)?;
        let rg = self.needs_grad(&[spec]);
        let back = rg.then(|| -> super::BackFn<T> {
            Box::new(move |g, sink| {
                let adj = istft_adjoint(g.data(), &cfg, frames).expect("validated in forward");
                sink.add(spec, adj.to_tensor());
            })
        });
        Ok(self.push(out, rg, back))
    }
}
