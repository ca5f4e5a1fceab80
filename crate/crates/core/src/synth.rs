//! Parametric two-talker corpus generation: harmonic "speakers" with
//! distinct pitch ranges, formant-shaped envelopes and syllabic amplitude
//! modulation, mixed at a prescribed SNR.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{numeric_err, param_err, Result};
use crate::rng::rng_for;
use crate::tensor::Scalar;

pub const SAMPLE_RATE: f64 = 8000.0;
pub const SOURCE_RMS: f64 = 0.05;

/// One synthetic talker. Pitch stays inside `[pitch_lo, pitch_hi]`; the
/// spectral envelope follows 2-3 formant bumps; energy gates at `am_rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpeaker {
    pub id: u32,
    pub pitch_lo: f64,
    pub pitch_hi: f64,
    pub vibrato_rate: f64,
    pub vibrato_depth: f64,
    pub formants: Vec<(f64, f64)>,
    pub am_rate: f64,
}

impl SyntheticSpeaker {
    /// Draws a speaker profile; ids are assigned by the caller.
    pub fn sample(id: u32, rng: &mut ChaCha8Rng) -> Self {
        let center = 95.0 * (rng.gen::<f64>() * 1.45).exp(); // ~95..~405 Hz
        let half_span = 1.10 + rng.gen::<f64>() * 0.08;
        let pitch_lo = (center / half_span).clamp(60.0, 450.0);
        let pitch_hi = (center * half_span).clamp(60.0, 450.0);
        let n_formants = 2 + (rng.gen::<f64>() * 2.0) as usize; // 2 or 3
        let mut formants = Vec::with_capacity(n_formants);
        let mut lo = 250.0;
        for k in 0..n_formants {
            let hi = 700.0 + 1100.0 * k as f64;
            let f = lo + rng.gen::<f64>() * (hi - lo).max(100.0);
            let bw = 90.0 + rng.gen::<f64>() * 160.0;
            formants.push((f.min(3700.0), bw));
            lo = f + 300.0;
        }
        SyntheticSpeaker {
            id,
            pitch_lo,
            pitch_hi,
            vibrato_rate: 4.0 + rng.gen::<f64>() * 3.0,
            vibrato_depth: 0.008 + rng.gen::<f64>() * 0.012,
            formants,
            am_rate: 2.0 + rng.gen::<f64>() * 6.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(60.0..=450.0).contains(&self.pitch_lo) || !(60.0..=450.0).contains(&self.pitch_hi) {
            return Err(param_err!(
                "speaker",
                "pitch range [{}, {}] outside [60, 450] Hz",
                self.pitch_lo,
                self.pitch_hi
            ));
        }
        if self.formants.iter().any(|&(f, _)| f >= SAMPLE_RATE / 2.0) {
            return Err(param_err!("speaker", "formant above Nyquist"));
        }
        Ok(())
    }
}

/// Waveform plus the pitch trajectory it was rendered from (per control
/// block of 32 samples).
pub struct SynthTrace<T> {
    pub wave: Vec<T>,
    pub f0: Vec<f64>,
    pub control_hop: usize,
}

/// Renders `dur` seconds of the speaker, RMS-normalized to 0.05,
/// deterministic in `seed`.
pub fn synth_source<T: Scalar>(spk: &SyntheticSpeaker, dur: f64, seed: u64) -> Result<Vec<T>> {
    Ok(synth_source_traced(spk, dur, seed)?.wave)
}

pub fn synth_source_traced<T: Scalar>(
    spk: &SyntheticSpeaker,
    dur: f64,
    seed: u64,
) -> Result<SynthTrace<T>> {
    spk.validate()?;
    if !(1.0..=10.0).contains(&dur) {
        return Err(param_err!("synth", "duration {dur} outside [1, 10] s"));
    }
    let n = (dur * SAMPLE_RATE) as usize;
    let mut rng = rng_for(seed, 0x5370_6b00 ^ spk.id as u64);

    // pitch control points every 250 ms, cosine-interpolated
    let ctrl_s = 0.25;
    let n_ctrl = (dur / ctrl_s) as usize + 2;
    let pts: Vec<f64> = (0..n_ctrl)
        .map(|_| spk.pitch_lo + rng.gen::<f64>() * (spk.pitch_hi - spk.pitch_lo))
        .collect();
    let am_phase = rng.gen::<f64>() * core::f64::consts::TAU;
    let vib_phase = rng.gen::<f64>() * core::f64::consts::TAU;

    let envelope = |f: f64| -> f64 {
        let mut e = 0.0;
        for &(fc, bw) in &spk.formants {
            let z = (f - fc) / bw;
            e += (-0.5 * z * z).exp();
        }
        // gentle low-pass roll-off plus a floor so harmonics never vanish
        e = (e + 0.03) / (1.0 + (f / 2500.0).powi(4));
        e
    };

    let control_hop = 32usize;
    let n_blocks = n.div_ceil(control_hop);
    let mut wave = vec![0.0f64; n];
    let mut f0_track = Vec::with_capacity(n_blocks);
    // phase accumulators per harmonic; vibrato may dip slightly below the
    // nominal pitch floor, hence the 0.98 margin
    let max_harm = (3900.0 / (spk.pitch_lo * 0.98)) as usize + 1;
    let mut phases = vec![0.0f64; max_harm + 1];
    for b in 0..n_blocks {
        let t_mid = (b * control_hop + control_hop / 2) as f64 / SAMPLE_RATE;
        // cosine interpolation between pitch control points
        let pos = t_mid / ctrl_s;
        let i0 = (pos as usize).min(n_ctrl - 2);
        let frac = pos - i0 as f64;
        let mix = 0.5 - 0.5 * (core::f64::consts::PI * frac).cos();
        let base = pts[i0] * (1.0 - mix) + pts[i0 + 1] * mix;
        let vib = 1.0
            + spk.vibrato_depth
                * (core::f64::consts::TAU * spk.vibrato_rate * t_mid + vib_phase).sin();
        let f0 = (base * vib).clamp(spk.pitch_lo * 0.98, spk.pitch_hi * 1.02);
        f0_track.push(f0);
        // syllabic gate: half-wave sine power, silent between syllables
        let gate_raw = (core::f64::consts::TAU * spk.am_rate * t_mid / 2.0 + am_phase).sin();
        let gate = if gate_raw > 0.0 { gate_raw.powf(1.5) } else { 0.0 };
        let n_harm = ((3900.0 / f0) as usize).min(max_harm);
        let mut amps = vec![0.0f64; n_harm + 1];
        for (k, amp) in amps.iter_mut().enumerate().skip(1) {
            *amp = envelope(k as f64 * f0) / (k as f64).powf(0.3);
        }
        let lo = b * control_hop;
        let hi = ((b + 1) * control_hop).min(n);
        for i in lo..hi {
            let mut s = 0.0;
            for k in 1..=n_harm {
                phases[k] += core::f64::consts::TAU * (k as f64 * f0) / SAMPLE_RATE;
                s += amps[k] * phases[k].sin();
            }
            wave[i] = gate * s;
        }
        // keep phases bounded
        for p in phases.iter_mut() {
            if *p > 1e6 {
                *p %= core::f64::consts::TAU;
            }
        }
    }

    let rms = (wave.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms < 1e-9 {
        return Err(numeric_err!("synth", "degenerate all-silent render"));
    }
    let scale = SOURCE_RMS / rms;
    Ok(SynthTrace {
        wave: wave.into_iter().map(|v| T::cast(v * scale)).collect(),
        f0: f0_track,
        control_hop,
    })
}

/// Mixture at a prescribed SNR. The second source is rescaled to the target
/// energy ratio, the sum is peak-limited to 0.9 (all three signals scaled
/// identically), and the stored interferer is recomputed as `y - x1` so that
/// additivity holds bit-exactly.
pub struct Mixture<T> {
    pub mixture: Vec<T>,
    pub source1: Vec<T>,
    pub source2: Vec<T>,
}

pub fn mix<T: Scalar>(x1: &[T], x2: &[T], snr_db: f64) -> Result<Mixture<T>> {
    if x1.len() != x2.len() {
        return Err(param_err!("mix", "length {} vs {}", x1.len(), x2.len()));
    }
    let e1: f64 = x1.iter().map(|v| v.as_f64() * v.as_f64()).sum();
    let e2: f64 = x2.iter().map(|v| v.as_f64() * v.as_f64()).sum();
    if e1 <= 0.0 || e2 <= 0.0 {
        return Err(numeric_err!("mix", "zero-energy source"));
    }
    // 10 log10(e1 / e2_scaled) == snr_db
    let alpha = (e1 / (e2 * 10.0f64.powf(snr_db / 10.0))).sqrt();
    let x2s: Vec<f64> = x2.iter().map(|v| v.as_f64() * alpha).collect();
    let y0: Vec<f64> = x1
        .iter()
        .zip(x2s.iter())
        .map(|(a, b)| a.as_f64() + b)
        .collect();
    let peak = y0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let s = if peak > 0.9 { 0.9 / peak } else { 1.0 };

    let source1: Vec<T> = x1.iter().map(|v| T::cast(v.as_f64() * s)).collect();
    let mixture: Vec<T> = y0.iter().map(|&v| T::cast(v * s)).collect();
    // y - x1 in the storage precision: makes y == x1 + x2 exact
    let source2: Vec<T> = mixture
        .iter()
        .zip(source1.iter())
        .map(|(&y, &a)| y - a)
        .collect();
    Ok(Mixture {
        mixture,
        source1,
        source2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{stft, StftConfig};

    fn speaker(seed: u64) -> SyntheticSpeaker {
        let mut rng = rng_for(seed, 0);
        SyntheticSpeaker::sample(seed as u32, &mut rng)
    }

    #[test]
    fn deterministic_given_seed() {
        let spk = speaker(4);
        let a = synth_source::<f32>(&spk, 2.0, 17).unwrap();
        let b = synth_source::<f32>(&spk, 2.0, 17).unwrap();
        assert_eq!(a.len(), 16000);
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = synth_source::<f32>(&spk, 2.0, 18).unwrap();
        assert!(a.iter().zip(c.iter()).any(|(x, y)| x.to_bits() != y.to_bits()));
    }

    #[test]
    fn rms_normalized() {
        let spk = speaker(5);
        let w = synth_source::<f64>(&spk, 2.0, 3).unwrap();
        let rms = (w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64).sqrt();
        assert!((rms - SOURCE_RMS).abs() < 1e-6, "{rms}");
    }

    #[test]
    fn has_silent_gaps() {
        let spk = speaker(6);
        let w = synth_source::<f64>(&spk, 3.0, 9).unwrap();
        // fraction of 32 ms frames below -30 dB of the peak frame
        let frame = 256;
        let hop = 64;
        let energies: Vec<f64> = (0..(w.len() - frame) / hop)
            .map(|t| w[t * hop..t * hop + frame].iter().map(|v| v * v).sum())
            .collect();
        let peak = energies.iter().cloned().fold(0.0, f64::max);
        let quiet = energies.iter().filter(|&&e| e < peak * 1e-3).count();
        assert!(
            quiet as f64 >= 0.10 * energies.len() as f64,
            "only {quiet}/{} quiet frames",
            energies.len()
        );
    }

    #[test]
    fn spectral_peaks_sit_on_harmonics() {
        // constant-pitch speaker puts interior STFT peaks at k * f0
        let spk = SyntheticSpeaker {
            id: 1,
            pitch_lo: 200.0,
            pitch_hi: 200.0,
            vibrato_rate: 5.0,
            vibrato_depth: 0.0,
            formants: vec![(500.0, 150.0), (1500.0, 200.0)],
            am_rate: 3.0,
        };
        let trace = synth_source_traced::<f64>(&spk, 2.0, 7).unwrap();
        let cfg = StftConfig::default();
        let spec = stft(&trace.wave, &cfg).unwrap();
        let bin_hz = SAMPLE_RATE / cfg.frame_len as f64;
        let mut checked = 0;
        for t in 8..spec.frames - 8 {
            let mag: Vec<f64> = (0..spec.bins)
                .map(|f| {
                    let (r, i) = spec.at(t, f);
                    (r * r + i * i).sqrt()
                })
                .collect();
            let max = mag.iter().cloned().fold(0.0, f64::max);
            if max < 0.5 {
                continue; // gated-out frame
            }
            // local maxima above half the frame peak
            for f in 2..spec.bins - 2 {
                if mag[f] > mag[f - 1] && mag[f] > mag[f + 1] && mag[f] > 0.5 * max {
                    let freq = f as f64 * bin_hz;
                    let harmonic = (freq / 200.0).round().max(1.0) * 200.0;
                    assert!(
                        (freq - harmonic).abs() <= 1.0 * bin_hz,
                        "frame {t}: peak at {freq} Hz, nearest harmonic {harmonic}"
                    );
                    checked += 1;
                }
            }
        }
        assert!(checked > 20, "too few peaks checked: {checked}");
    }

    #[test]
    fn mix_energy_ratios() {
        let s1 = synth_source::<f64>(&speaker(7), 2.0, 1).unwrap();
        let s2 = synth_source::<f64>(&speaker(8), 2.0, 2).unwrap();
        for snr in [0.0, 5.0] {
            let m = mix(&s1, &s2, snr).unwrap();
            let e1: f64 = m.source1.iter().map(|v| v * v).sum();
            let e2: f64 = m.source2.iter().map(|v| v * v).sum();
            let want = 10.0f64.powf(snr / 10.0);
            assert!(
                ((e1 / e2) - want).abs() < 1e-6 * want,
                "snr {snr}: ratio {}",
                e1 / e2
            );
        }
    }

    #[test]
    fn mix_additivity_is_exact() {
        let s1 = synth_source::<f32>(&speaker(9), 1.5, 1).unwrap();
        let s2 = synth_source::<f32>(&speaker(10), 1.5, 2).unwrap();
        let m = mix(&s1, &s2, 2.5).unwrap();
        for i in 0..s1.len() {
            let resid = m.mixture[i] - m.source1[i] - m.source2[i];
            assert_eq!(resid, 0.0, "sample {i}");
        }
    }

    #[test]
    fn mix_rejects_zero_energy() {
        let z = vec![0.0f32; 100];
        let s = vec![0.1f32; 100];
        assert!(matches!(
            mix(&z, &s, 0.0),
            Err(crate::Error::Numeric { .. })
        ));
    }
}
