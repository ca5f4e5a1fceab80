//! End-to-end separation: stage-1 masks, stage-2 clustering, organization
//! and synthesis. Also the oracle complex-ideal-ratio-mask path.

use dcasa_core::cluster::kmeans;
use dcasa_core::dense_unet::DenseUNet;
use dcasa_core::dsp::{istft, stft, Spectrogram, StftConfig};
use dcasa_core::graph::Graph;
use dcasa_core::objectives::{
    assignment_labels, cirm, complex_l1_table, tpit_reduce,
};
use dcasa_core::rng::derive;
use dcasa_core::seq::{build_input_stack, organize_outputs};
use dcasa_core::tcn::Tcn;

use crate::error::Result;
use crate::train::stage1_estimates;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assignment {
    /// Keep the raw output order.
    Default,
    /// Cluster TCN embeddings and organize by the labels.
    Kmeans,
    /// Organize by the reference-optimal per-frame pairing.
    Optimal,
}

impl Assignment {
    pub fn as_str(self) -> &'static str {
        match self {
            Assignment::Default => "default",
            Assignment::Kmeans => "kmeans",
            Assignment::Optimal => "optimal",
        }
    }
}

pub struct Separated {
    pub stream1: Vec<f32>,
    pub stream2: Vec<f32>,
    /// Per-frame organization labels actually applied.
    pub labels: Vec<u8>,
    /// Mixture spectrogram (for plots / frame energies).
    pub mixture_spec: Spectrogram<f32>,
    /// Organized estimate spectrograms.
    pub organized: (Spectrogram<f32>, Spectrogram<f32>),
}

/// Per-frame K-means labels from the stage-2 embeddings.
pub fn kmeans_labels(
    tcn: &Tcn<f32>,
    y: &Spectrogram<f32>,
    est: [&Spectrogram<f32>; 2],
    seed: u64,
) -> Result<Vec<u8>> {
    let stack = build_input_stack(y, est)?;
    let mut g = Graph::inference();
    let binding = tcn.params.bind(&mut g);
    let v = tcn.forward(&mut g, &binding, &stack, None)?;
    let vt = g.value(v);
    Ok(kmeans(vt.data(), vt.shape()[0], vt.shape()[1], 2, derive(seed, 0x6b6d))?.labels)
}

/// Optimal per-frame assignment of estimates against references.
pub fn optimal_labels(
    est: [&Spectrogram<f32>; 2],
    refs: [&Spectrogram<f32>; 2],
) -> Result<Vec<u8>> {
    let table = complex_l1_table(est, refs)?;
    let (_, chosen) = tpit_reduce(&table);
    Ok(assignment_labels(&chosen))
}

/// Model-driven separation of a mixture waveform.
pub fn separate_model(
    stage1: &DenseUNet<f32>,
    tcn: Option<&Tcn<f32>>,
    cfg: &StftConfig,
    mixture: &[f32],
    references: Option<[&[f32]; 2]>,
    assignment: Assignment,
    seed: u64,
) -> Result<Separated> {
    let y = stft(mixture, cfg)?;
    let (e0, e1) = stage1_estimates(stage1, &y)?;
    let labels = match assignment {
        Assignment::Default => vec![0u8; y.frames],
        Assignment::Kmeans => {
            let tcn = tcn.ok_or_else(|| {
                crate::error::Error::Usage(
                    "kmeans assignment requires a stage-2 checkpoint".into(),
                )
            })?;
            kmeans_labels(tcn, &y, [&e0, &e1], seed)?
        }
        Assignment::Optimal => {
            let refs = references.ok_or_else(|| {
                crate::error::Error::Usage(
                    "optimal assignment requires reference sources".into(),
                )
            })?;
            let r0 = stft(refs[0], cfg)?;
            let r1 = stft(refs[1], cfg)?;
            optimal_labels([&e0, &e1], [&r0, &r1])?
        }
    };
    let (o0, o1) = organize_outputs([&e0, &e1], &labels)?;
    let stream1 = istft(&o0, cfg, mixture.len())?;
    let stream2 = istft(&o1, cfg, mixture.len())?;
    Ok(Separated {
        stream1,
        stream2,
        labels,
        mixture_spec: y,
        organized: (o0, o1),
    })
}

/// Oracle separation with ideal complex ratio masks computed from the
/// references; an upper bound on the mask-based pipeline.
pub fn separate_oracle_cirm(
    cfg: &StftConfig,
    mixture: &[f32],
    refs: [&[f32]; 2],
) -> Result<Separated> {
    let y = stft(mixture, cfg)?;
    let r0 = stft(refs[0], cfg)?;
    let r1 = stft(refs[1], cfg)?;
    let m0 = cirm(&y, &r0)?;
    let m1 = cirm(&y, &r1)?;
    let e0 = m0.mul(&y)?;
    let e1 = m1.mul(&y)?;
    let labels = optimal_labels([&e0, &e1], [&r0, &r1])?;
    let (o0, o1) = organize_outputs([&e0, &e1], &labels)?;
    let stream1 = istft(&o0, cfg, mixture.len())?;
    let stream2 = istft(&o1, cfg, mixture.len())?;
    Ok(Separated {
        stream1,
        stream2,
        labels,
        mixture_spec: y,
        organized: (o0, o1),
    })
}
