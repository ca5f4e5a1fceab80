//! Log-magnitude spectrogram plots: mixture on top, the two separated
//! streams below, rendered to a grayscale PNG.

use std::path::Path;

use image::{GrayImage, Luma};

use dcasa_core::dsp::Spectrogram;

use crate::error::{Error, Result};

const DB_FLOOR: f64 = -60.0;

fn panel(img: &mut GrayImage, spec: &Spectrogram<f32>, y_off: u32, peak: f64) {
    let bins = spec.bins as u32;
    for t in 0..spec.frames {
        for f in 0..spec.bins {
            let (re, im) = spec.at(t, f);
            let mag = ((re as f64).powi(2) + (im as f64).powi(2)).sqrt();
            let db = if mag > 0.0 {
                (20.0 * mag.log10() - peak).max(DB_FLOOR)
            } else {
                DB_FLOOR
            };
            let level = ((db - DB_FLOOR) / -DB_FLOOR * 255.0).round() as u8;
            // low frequencies at the bottom of each panel
            img.put_pixel(t as u32, y_off + (bins - 1 - f as u32), Luma([level]));
        }
    }
}

/// Renders mixture and both streams stacked vertically with 2-pixel rules.
pub fn spectrogram_png(
    path: &Path,
    mixture: &Spectrogram<f32>,
    stream1: &Spectrogram<f32>,
    stream2: &Spectrogram<f32>,
) -> Result<()> {
    let (t, f) = (mixture.frames as u32, mixture.bins as u32);
    let gap = 2u32;
    let mut img = GrayImage::from_pixel(t, f * 3 + gap * 2, Luma([255]));
    let peak = mixture
        .magnitude()
        .iter()
        .fold(0.0f64, |m, &v| m.max(v as f64));
    let peak_db = if peak > 0.0 { 20.0 * peak.log10() } else { 0.0 };
    panel(&mut img, mixture, 0, peak_db);
    panel(&mut img, stream1, f + gap, peak_db);
    panel(&mut img, stream2, 2 * (f + gap), peak_db);
    img.save(path)
        .map_err(|e| Error::format(path, format!("png encode: {e}")))
}
