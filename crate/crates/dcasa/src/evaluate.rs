//! Corpus evaluation: per-utterance and mean SI-SNR / SNR improvements plus
//! frame assignment error under the -20 dB energy gate.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde_json::json;

use dcasa_core::dense_unet::DenseUNet;
use dcasa_core::dsp::{istft, stft, StftConfig};
use dcasa_core::metrics::{fae, frame_energy_profile, pair_eval};
use dcasa_core::objectives::{assignment_labels, complex_l1_table, tpit_reduce};
use dcasa_core::rng::derive;
use dcasa_core::seq::organize_outputs;
use dcasa_core::tcn::Tcn;

use crate::error::{Error, Result};
use crate::manifest::{resolve, MixtureRecord, Split};
use crate::pipeline::{kmeans_labels, Assignment};
use crate::train::stage1_estimates;
use crate::wav;

pub const FAE_GATE_DB: f64 = -20.0;

#[derive(Debug, Clone)]
pub struct UttEval {
    pub id: u32,
    pub delta_si_snr: f64,
    pub delta_snr: f64,
    pub si_snr: f64,
    pub fae_percent: Option<f64>,
    pub swapped: bool,
}

#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub assignment: Assignment,
    pub n: usize,
    pub mean_delta_si_snr: f64,
    pub mean_delta_snr: f64,
    pub mean_si_snr: f64,
    /// Mean over utterances where the gate admitted at least one frame.
    pub mean_fae: Option<f64>,
}

/// Scores one separation result against its references.
fn score(
    est: [&[f32]; 2],
    refs: [&[f32]; 2],
    mixture: &[f32],
    pred_labels: &[u8],
    optimal: &[u8],
    energy_db: &[f64],
    id: u32,
) -> Result<UttEval> {
    let scores = pair_eval(est, refs, mixture).ok_or_else(|| {
        Error::Numeric(format!("utterance {id}: zero-energy reference, skipped"))
    })?;
    Ok(UttEval {
        id,
        delta_si_snr: scores.delta_si_snr,
        delta_snr: scores.delta_snr,
        si_snr: scores.si_snr,
        fae_percent: fae(pred_labels, optimal, energy_db, FAE_GATE_DB),
        swapped: scores.swapped,
    })
}

/// Evaluates a stage-1 model (optionally with a stage-2 TCN) over the test
/// split of a manifest.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_model(
    stage1: &DenseUNet<f32>,
    tcn: Option<&Tcn<f32>>,
    cfg: &StftConfig,
    manifest_path: &Path,
    records: &[MixtureRecord],
    split: Split,
    assignment: Assignment,
    seed: u64,
) -> Result<(Vec<UttEval>, EvalSummary)> {
    let rows: Vec<Result<UttEval>> = records
        .par_iter()
        .filter(|r| r.split == split)
        .map(|r| -> Result<UttEval> {
            let mixture = wav::read_wav(&resolve(manifest_path, &r.mixture))?;
            let s1 = wav::read_wav(&resolve(manifest_path, &r.source1))?;
            let s2 = wav::read_wav(&resolve(manifest_path, &r.source2))?;
            let y = stft(&mixture, cfg)?;
            let x0 = stft(&s1, cfg)?;
            let x1 = stft(&s2, cfg)?;
            let (e0, e1) = stage1_estimates(stage1, &y)?;
            let table = complex_l1_table([&e0, &e1], [&x0, &x1])?;
            let (_, chosen) = tpit_reduce(&table);
            let optimal = assignment_labels(&chosen);
            let pred: Vec<u8> = match assignment {
                Assignment::Default => vec![0; y.frames],
                Assignment::Optimal => optimal.clone(),
                Assignment::Kmeans => {
                    let tcn = tcn.ok_or_else(|| {
                        Error::Usage("kmeans assignment requires a stage-2 checkpoint".into())
                    })?;
                    kmeans_labels(tcn, &y, [&e0, &e1], derive(seed, r.id as u64))?
                }
            };
            let (o0, o1) = organize_outputs([&e0, &e1], &pred)?;
            let w0 = istft(&o0, cfg, mixture.len())?;
            let w1 = istft(&o1, cfg, mixture.len())?;
            let energy = frame_energy_profile(&y);
            score(
                [&w0, &w1],
                [&s1, &s2],
                &mixture,
                &pred,
                &optimal,
                &energy,
                r.id,
            )
        })
        .collect();
    let rows: Vec<UttEval> = rows.into_iter().collect::<Result<_>>()?;
    let summary = summarize(&rows, assignment);
    Ok((rows, summary))
}

pub fn summarize(rows: &[UttEval], assignment: Assignment) -> EvalSummary {
    let n = rows.len();
    let mean = |f: &dyn Fn(&UttEval) -> f64| -> f64 {
        rows.iter().map(|r| f(r)).sum::<f64>() / n.max(1) as f64
    };
    let fae_rows: Vec<f64> = rows.iter().filter_map(|r| r.fae_percent).collect();
    EvalSummary {
        assignment,
        n,
        mean_delta_si_snr: mean(&|r| r.delta_si_snr),
        mean_delta_snr: mean(&|r| r.delta_snr),
        mean_si_snr: mean(&|r| r.si_snr),
        mean_fae: if fae_rows.is_empty() {
            None
        } else {
            Some(fae_rows.iter().sum::<f64>() / fae_rows.len() as f64)
        },
    }
}

/// Writes the JSON-lines report (one row per utterance plus a summary line).
pub fn write_report(path: &Path, rows: &[UttEval], summary: &EvalSummary) -> Result<()> {
    let mut out = String::new();
    for r in rows {
        let line = json!({
            "utterance": r.id,
            "delta_si_snr_db": r.delta_si_snr,
            "delta_snr_db": r.delta_snr,
            "si_snr_db": r.si_snr,
            "fae_percent": r.fae_percent,
            "best_pairing_swapped": r.swapped,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    let line = json!({
        "summary": true,
        "assignment": summary.assignment.as_str(),
        "utterances": summary.n,
        "mean_delta_si_snr_db": summary.mean_delta_si_snr,
        "mean_delta_snr_db": summary.mean_delta_snr,
        "mean_si_snr_db": summary.mean_si_snr,
        "mean_fae_percent": summary.mean_fae,
    });
    out.push_str(&line.to_string());
    out.push('\n');
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Human-readable summary table.
pub fn render_summary(summary: &EvalSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "assignment      {:>12}", summary.assignment.as_str());
    let _ = writeln!(s, "utterances      {:>12}", summary.n);
    let _ = writeln!(s, "dSI-SNR (dB)    {:>12.3}", summary.mean_delta_si_snr);
    let _ = writeln!(s, "dSNR (dB)       {:>12.3}", summary.mean_delta_snr);
    let _ = writeln!(s, "SI-SNR (dB)     {:>12.3}", summary.mean_si_snr);
    match summary.mean_fae {
        Some(f) => {
            let _ = writeln!(s, "FAE (%)         {:>12.3}", f);
        }
        None => {
            let _ = writeln!(s, "FAE (%)         {:>12}", "n/a");
        }
    }
    s
}
