//! RIFF/WAVE PCM 16-bit mono 8 kHz reading and writing.
//!
//! Reads scale int16 by 1/32768; writes clamp to `[-1, 1 - 1/32768]` and
//! round. Anything other than 16-bit mono PCM at 8 kHz is a format error.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 8000;

/// Clamps and rounds float samples to int16 per the storage contract.
pub fn quantize(x: &[f32]) -> Vec<i16> {
    x.iter()
        .map(|&v| {
            let clamped = v.clamp(-1.0, 1.0 - 1.0 / 32768.0);
            (clamped * 32768.0).round() as i32 as i16
        })
        .collect()
}

pub fn dequantize(q: &[i16]) -> Vec<f32> {
    q.iter().map(|&v| v as f32 / 32768.0).collect()
}

pub fn write_wav_i16(path: &Path, samples: &[i16]) -> Result<()> {
    let data_len = samples.len() * 2;
    let mut bytes = Vec::with_capacity(44 + data_len);
    bytes.extend_from_slice(b"RIFF");
    bytes.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    bytes.extend_from_slice(b"WAVE");
    bytes.extend_from_slice(b"fmt ");
    bytes.extend_from_slice(&16u32.to_le_bytes());
    bytes.extend_from_slice(&1u16.to_le_bytes()); // PCM
    bytes.extend_from_slice(&1u16.to_le_bytes()); // mono
    bytes.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
    bytes.extend_from_slice(&(SAMPLE_RATE * 2).to_le_bytes()); // byte rate
    bytes.extend_from_slice(&2u16.to_le_bytes()); // block align
    bytes.extend_from_slice(&16u16.to_le_bytes()); // bits
    bytes.extend_from_slice(b"data");
    bytes.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        bytes.extend_from_slice(&s.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_wav(path: &Path, samples: &[f32]) -> Result<()> {
    write_wav_i16(path, &quantize(samples))
}

pub fn read_wav_i16(path: &Path) -> Result<Vec<i16>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |detail: &str| Error::format(path, detail);
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(fail("not a RIFF/WAVE file"));
    }
    let mut pos = 12usize;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_end = (pos + 8 + size).min(bytes.len());
        let body = &bytes[pos + 8..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(fail("fmt chunk truncated"));
                }
                let codec = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                fmt = Some((codec, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos += 8 + size + (size & 1);
    }
    let (codec, channels, rate, bits) = fmt.ok_or_else(|| fail("missing fmt chunk"))?;
    if codec != 1 {
        return Err(fail(&format!("codec {codec} is not PCM")));
    }
    if channels != 1 {
        return Err(fail(&format!("{channels} channels, expected mono")));
    }
    if rate != SAMPLE_RATE {
        return Err(fail(&format!("sample rate {rate}, expected {SAMPLE_RATE}")));
    }
    if bits != 16 {
        return Err(fail(&format!("{bits}-bit samples, expected 16")));
    }
    let data = data.ok_or_else(|| fail("missing data chunk"))?;
    Ok(data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]))
        .collect())
}

pub fn read_wav(path: &Path) -> Result<Vec<f32>> {
    Ok(dequantize(&read_wav_i16(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use dcasa_core::rng::rng_for;
    use rand::Rng;

    #[test]
    fn round_trip_error_bounded_by_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let mut rng = rng_for(1, 0);
        let x: Vec<f32> = (0..4000).map(|_| (rng.gen::<f32>() - 0.5) * 1.6).collect();
        write_wav(&path, &x).unwrap();
        let y = read_wav(&path).unwrap();
        assert_eq!(y.len(), x.len());
        for (a, b) in x.iter().zip(y.iter()) {
            let clamped = a.clamp(-1.0, 1.0 - 1.0 / 32768.0);
            assert!((clamped - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn full_scale_sine_peaks_at_32767_without_wraparound() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sine.wav");
        let x: Vec<f32> = (0..8000)
            .map(|i| (2.0 * std::f32::consts::PI * 440.0 * i as f32 / 8000.0).sin())
            .collect();
        write_wav(&path, &x).unwrap();
        // inspect the produced samples directly
        let q = read_wav_i16(&path).unwrap();
        let peak = q.iter().map(|&v| v as i32).max().unwrap();
        let trough = q.iter().map(|&v| v as i32).min().unwrap();
        assert_eq!(peak, 32767);
        assert!(trough >= -32768);
        // no wraparound: neighboring samples never jump across the range
        for w in q.windows(2) {
            assert!((w[1] as i32 - w[0] as i32).abs() < 40000);
        }
    }

    #[test]
    fn stereo_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 4).to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes()); // stereo
        bytes.extend_from_slice(&8000u32.to_le_bytes());
        bytes.extend_from_slice(&32000u32.to_le_bytes());
        bytes.extend_from_slice(&4u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&[0, 0, 0, 0]);
        std::fs::write(&path, bytes).unwrap();
        let err = read_wav(&path).unwrap_err();
        assert!(format!("{err}").contains("channels"), "{err}");
    }
}
