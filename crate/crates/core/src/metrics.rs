//! Separation metrics: SI-SNR, plain SNR, best-pairing utterance scoring and
//! frame assignment error with the -20 dB energy gate.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::dsp::Spectrogram;
use crate::tensor::Scalar;

/// Reporting clamp for ratio metrics.
pub const DB_CLAMP: f64 = 100.0;

fn zero_mean(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len().max(1) as f64;
    x.iter().map(|v| v - mean).collect()
}

fn clamp_db(v: f64) -> f64 {
    v.clamp(-DB_CLAMP, DB_CLAMP)
}

/// Scale-invariant SNR in dB, clamped to +-100. Both signals are zero-mean
/// adjusted first. Returns `None` for a zero-energy reference.
pub fn si_snr<T: Scalar>(est: &[T], reference: &[T]) -> Option<f64> {
    debug_assert_eq!(est.len(), reference.len());
    let e = zero_mean(&est.iter().map(|v| v.as_f64()).collect::<Vec<_>>());
    let r = zero_mean(&reference.iter().map(|v| v.as_f64()).collect::<Vec<_>>());
    let rr: f64 = r.iter().map(|v| v * v).sum();
    if rr <= 0.0 {
        return None;
    }
    let er: f64 = e.iter().zip(r.iter()).map(|(a, b)| a * b).sum();
    let alpha = er / rr;
    let target_energy = alpha * alpha * rr;
    let noise_energy: f64 = e
        .iter()
        .zip(r.iter())
        .map(|(a, b)| (a - alpha * b).powi(2))
        .sum();
    if target_energy <= 0.0 {
        return Some(-DB_CLAMP);
    }
    if noise_energy <= 0.0 {
        return Some(DB_CLAMP);
    }
    Some(clamp_db(10.0 * (target_energy / noise_energy).log10()))
}

/// Plain SNR in dB (no projection), clamped to +-100.
pub fn snr<T: Scalar>(est: &[T], reference: &[T]) -> Option<f64> {
    debug_assert_eq!(est.len(), reference.len());
    let sig: f64 = reference.iter().map(|v| v.as_f64() * v.as_f64()).sum();
    if sig <= 0.0 {
        return None;
    }
    let err: f64 = est
        .iter()
        .zip(reference.iter())
        .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
        .sum();
    if err <= 0.0 {
        return Some(DB_CLAMP);
    }
    Some(clamp_db(10.0 * (sig / err).log10()))
}

/// Per-utterance scores of one stream pair against one reference pair.
#[derive(Debug, Clone, Copy)]
pub struct PairScores {
    /// Mean over sources of SI-SNR improvement vs the mixture baseline.
    pub delta_si_snr: f64,
    /// Mean over sources of plain-SNR improvement vs the mixture baseline.
    pub delta_snr: f64,
    pub si_snr: f64,
    /// True when the swapped pairing scored better.
    pub swapped: bool,
}

/// Scores both stream-to-reference pairings and keeps the better total;
/// improvements subtract the mixture-vs-reference baseline.
pub fn pair_eval<T: Scalar>(
    est: [&[T]; 2],
    refs: [&[T]; 2],
    mixture: &[T],
) -> Option<PairScores> {
    let mut pairing_scores = [0.0f64; 2];
    let mut pairing_si = [[0.0f64; 2]; 2];
    for (p, perm) in [[0usize, 1], [1usize, 0]].iter().enumerate() {
        for c in 0..2 {
            pairing_si[p][c] = si_snr(est[c], refs[perm[c]])?;
        }
        pairing_scores[p] = pairing_si[p][0] + pairing_si[p][1];
    }
    let p = if pairing_scores[1] > pairing_scores[0] { 1 } else { 0 };
    let perm = if p == 0 { [0usize, 1] } else { [1usize, 0] };
    let mut d_si = 0.0;
    let mut d_snr = 0.0;
    for c in 0..2 {
        let base_si = si_snr(mixture, refs[perm[c]])?;
        let base_snr = snr(mixture, refs[perm[c]])?;
        d_si += pairing_si[p][c] - base_si;
        d_snr += snr(est[c], refs[perm[c]])? - base_snr;
    }
    Some(PairScores {
        delta_si_snr: d_si / 2.0,
        delta_snr: d_snr / 2.0,
        si_snr: pairing_scores[p] / 2.0,
        swapped: p == 1,
    })
}

/// Per-frame energy in dB relative to the loudest frame.
pub fn frame_energy_profile<T: Scalar>(y: &Spectrogram<T>) -> Vec<f64> {
    let mut db: Vec<f64> = (0..y.frames)
        .map(|t| {
            let mut e = 0.0f64;
            for f in 0..y.bins {
                let (r, i) = y.at(t, f);
                e += r.as_f64().powi(2) + i.as_f64().powi(2);
            }
            if e > 0.0 {
                10.0 * e.log10()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let max = db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max.is_finite() {
        for v in db.iter_mut() {
            *v -= max;
        }
    }
    db
}

/// Frame assignment error: percent mismatch on frames whose energy clears
/// `gate_db` (relative to the maximum), after matching the better global
/// label polarity. `None` when no frame passes the gate.
pub fn fae(pred: &[u8], optimal: &[u8], frame_energy_db: &[f64], gate_db: f64) -> Option<f64> {
    debug_assert_eq!(pred.len(), optimal.len());
    debug_assert_eq!(pred.len(), frame_energy_db.len());
    let gated: Vec<usize> = (0..pred.len())
        .filter(|&t| frame_energy_db[t] >= gate_db)
        .collect();
    if gated.is_empty() {
        return None;
    }
    let mismatch: usize = gated.iter().filter(|&&t| pred[t] != optimal[t]).count();
    let mismatch = mismatch.min(gated.len() - mismatch);
    Some(100.0 * mismatch as f64 / gated.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::Rng;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = crate::rng::rng_for(seed, 50);
        (0..len).map(|_| rng.gen::<f64>() - 0.5).collect()
    }

    #[test]
    fn si_snr_clamps_and_scale_invariance() {
        let r = noise(1000, 1);
        let double: Vec<f64> = r.iter().map(|v| 2.0 * v).collect();
        assert_eq!(si_snr(&r, &r), Some(100.0));
        assert_eq!(si_snr(&double, &r), Some(100.0));
        // scale invariance away from the clamp too
        let noisy: Vec<f64> = r
            .iter()
            .zip(noise(1000, 2))
            .map(|(a, b)| a + 0.3 * b)
            .collect();
        let scaled: Vec<f64> = noisy.iter().map(|v| 3.7 * v).collect();
        let a = si_snr(&noisy, &r).unwrap();
        let b = si_snr(&scaled, &r).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_estimate_hits_negative_clamp() {
        let mut r = vec![0.0; 64];
        let mut e = vec![0.0; 64];
        // orthogonal zero-mean signals
        for i in 0..64 {
            r[i] = if i % 2 == 0 { 1.0 } else { -1.0 };
            e[i] = if (i / 2) % 2 == 0 { 1.0 } else { -1.0 };
        }
        assert_eq!(si_snr(&e, &r), Some(-100.0));
    }

    #[test]
    fn zero_reference_skipped() {
        let z = vec![0.0f64; 16];
        let e = noise(16, 3);
        assert_eq!(si_snr(&e, &z), None);
    }

    #[test]
    fn pair_eval_handles_swap_and_baseline() {
        let r0 = noise(800, 4);
        let r1 = noise(800, 5);
        let mix: Vec<f64> = r0.iter().zip(r1.iter()).map(|(a, b)| a + b).collect();
        // swapped perfect estimates score like unswapped
        let fwd = pair_eval([&r0, &r1], [&r0, &r1], &mix).unwrap();
        let swp = pair_eval([&r1, &r0], [&r0, &r1], &mix).unwrap();
        assert!((fwd.delta_si_snr - swp.delta_si_snr).abs() < 1e-9);
        assert!(swp.swapped);
        // mixture as both estimates: improvement 0 by construction
        let base = pair_eval([&mix, &mix], [&r0, &r1], &mix).unwrap();
        assert!(base.delta_si_snr.abs() < 1e-9);
        assert!(base.delta_snr.abs() < 1e-9);
    }

    #[test]
    fn pair_eval_matches_exhaustive_pairing() {
        let r0 = noise(500, 6);
        let r1 = noise(500, 7);
        let mix: Vec<f64> = r0.iter().zip(r1.iter()).map(|(a, b)| a + b).collect();
        let e0 = noise(500, 8);
        let e1 = noise(500, 9);
        let got = pair_eval([&e0, &e1], [&r0, &r1], &mix).unwrap();
        let direct = |perm: [usize; 2]| -> f64 {
            let refs = [&r0, &r1];
            si_snr(&e0, refs[perm[0]]).unwrap() + si_snr(&e1, refs[perm[1]]).unwrap()
        };
        let best = direct([0, 1]).max(direct([1, 0]));
        assert!((got.si_snr * 2.0 - best).abs() < 1e-9);
    }

    #[test]
    fn fae_polarity_and_arithmetic() {
        let energy = vec![0.0f64; 8];
        let optimal = vec![0, 1, 0, 1, 0, 1, 0, 1];
        assert_eq!(fae(&optimal, &optimal, &energy, -20.0), Some(0.0));
        let complement: Vec<u8> = optimal.iter().map(|&v| 1 - v).collect();
        assert_eq!(fae(&complement, &optimal, &energy, -20.0), Some(0.0));
        let half = vec![0, 1, 0, 1, 1, 0, 1, 0];
        assert_eq!(fae(&half, &optimal, &energy, -20.0), Some(50.0));
    }

    #[test]
    fn fae_gate_excludes_quiet_frames() {
        let energy = vec![0.0, -30.0, -10.0, -25.0];
        let optimal = vec![0, 0, 0, 0];
        let pred = vec![0, 1, 1, 1]; // mismatches at t=1..3, but only t=2 gated
        assert_eq!(fae(&pred, &optimal, &energy, -20.0), Some(50.0));
        // silent utterance: nothing gated
        let silent = vec![f64::NEG_INFINITY; 4];
        assert_eq!(fae(&pred, &optimal, &silent, -20.0), None);
    }

    #[test]
    fn frame_energy_profile_cases() {
        let mut s = Spectrogram::<f64>::zeros(3, 4);
        for f in 0..4 {
            s.re[f] = 1.0; // frame 0: energy 4
            s.re[4 + f] = 0.1; // frame 1: energy 0.04 -> -20 dB
        }
        s.re[8] = 0.5;
        let prof = frame_energy_profile(&s);
        assert!((prof[0] - 0.0).abs() < 1e-12);
        assert!((prof[1] + 20.0).abs() < 1e-9);
        // invariant to global scaling
        let mut scaled = s.clone();
        for v in scaled.re.iter_mut() {
            *v *= 7.0;
        }
        let prof2 = frame_energy_profile(&scaled);
        for (a, b) in prof.iter().zip(prof2.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
