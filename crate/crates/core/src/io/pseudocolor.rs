use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use super::HsiCube;
use crate::{Error, Result};

const LOW_PERCENTILE: f64 = 0.02;
const HIGH_PERCENTILE: f64 = 0.98;

/// Linear-interpolated percentile of already sorted values, `q` in `[0, 1]`.
fn percentile(sorted: &[f32], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] as f64 * (1.0 - frac) + sorted[hi] as f64 * frac
}

/// Maps one band to 8-bit levels with a 2%–98% percentile stretch.
/// A band whose stretch range collapses maps to mid-scale 128.
pub fn stretch_band(values: &[f32]) -> Vec<u8> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f32::total_cmp);
    let lo = percentile(&sorted, LOW_PERCENTILE);
    let hi = percentile(&sorted, HIGH_PERCENTILE);
    if !(hi > lo) {
        return vec![128; values.len()];
    }
    values
        .iter()
        .map(|&v| {
            let t = ((v as f64 - lo) / (hi - lo)).clamp(0.0, 1.0);
            (t * 255.0).round() as u8
        })
        .collect()
}

/// Interleaved RGB bytes (`height × width × 3`) from three stretched bands.
pub fn pseudocolor_rgb(cube: &HsiCube, r: usize, g: usize, b: usize) -> Result<Vec<u8>> {
    for band in [r, g, b] {
        if band >= cube.bands {
            return Err(Error::Invalid(format!(
                "band index {band} out of range for {} bands",
                cube.bands
            )));
        }
    }
    let channels = [
        stretch_band(cube.band(r)),
        stretch_band(cube.band(g)),
        stretch_band(cube.band(b)),
    ];
    let mut rgb = Vec::with_capacity(cube.pixels() * 3);
    for p in 0..cube.pixels() {
        rgb.extend(channels.iter().map(|c| c[p]));
    }
    Ok(rgb)
}

/// Writes an 8-bit RGB PNG of bands `(r, g, b)` (zero-based).
pub fn export_pseudocolor(
    cube: &HsiCube,
    r: usize,
    g: usize,
    b: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let rgb = pseudocolor_rgb(cube, r, g, b)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder =
        png::Encoder::new(BufWriter::new(file), cube.width as u32, cube.height as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::Png(e.to_string()))?;
    writer
        .write_image_data(&rgb)
        .map_err(|e| Error::Png(e.to_string()))?;
    writer.finish().map_err(|e| Error::Png(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_band_is_mid_gray() {
        assert_eq!(stretch_band(&[0.3; 10]), vec![128; 10]);
    }

    #[test]
    fn uniform_ramp_is_near_identity() {
        let values: Vec<f32> = (0..=255).map(|k| k as f32 / 255.0).collect();
        let out = stretch_band(&values);
        // independent oracle: nearest-rank style bounds from the ramp itself
        let lo = 0.02 * 255.0 / 255.0;
        let hi = 0.98 * 255.0 / 255.0;
        for (k, &level) in out.iter().enumerate() {
            let v = k as f64 / 255.0;
            let expect = ((v - lo) / (hi - lo)).clamp(0.0, 1.0) * 255.0;
            assert!(
                (level as f64 - expect).abs() <= 1.0,
                "k={k} {level} vs {expect}"
            );
        }
        assert_eq!(out[0], 0);
        assert_eq!(out[255], 255);
        assert!(out.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn indian_pines_band_triple() {
        let c = HsiCube::new(220, 2, 3, (0..220 * 6).map(|i| i as f32).collect()).unwrap();
        let rgb = pseudocolor_rgb(&c, 46, 17, 11).unwrap();
        assert_eq!(rgb.len(), 18);
        assert!(pseudocolor_rgb(&c, 220, 0, 0).is_err());
    }

    #[test]
    fn writes_png() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        let c = HsiCube::new(3, 4, 5, (0..60).map(|i| i as f32).collect()).unwrap();
        export_pseudocolor(&c, 2, 1, 0, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[1..4], b"PNG");
    }
}
