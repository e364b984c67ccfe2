//! Hyperspectral cube storage in the HSC1 header/payload format, patch
//! cropping and pseudo-color export.
//!
//! An HSC1 cube is two files: a UTF-8 JSON header at the given path and a raw
//! payload next to it (`<header>.raw`) holding `bands·height·width`
//! little-endian `f32` values, band-major (band slowest, then row, then
//! column).

mod patches;
mod pseudocolor;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use patches::{extract_patches, PatchSet};
pub use pseudocolor::{export_pseudocolor, pseudocolor_rgb, stretch_band};

pub const MAGIC: &str = "HSC1";

/// A `bands × height × width` cube stored band-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    pub bands: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
    pub band_names: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    magic: String,
    bands: usize,
    height: usize,
    width: usize,
    dtype: String,
    layout: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    band_names: Option<Vec<String>>,
}

impl HsiCube {
    pub fn new(bands: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        let cube = Self {
            bands,
            height,
            width,
            data,
            band_names: None,
        };
        cube.validate()?;
        Ok(cube)
    }

    pub fn with_band_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.bands {
            return Err(Error::Shape(format!(
                "{} band names for {} bands",
                names.len(),
                self.bands
            )));
        }
        self.band_names = Some(names);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::Shape(format!(
                "cube dimensions must be positive, got {}x{}x{}",
                self.bands, self.height, self.width
            )));
        }
        let n = self.bands * self.height * self.width;
        if self.data.len() != n {
            return Err(Error::Shape(format!(
                "cube {}x{}x{} needs {n} values, got {}",
                self.bands,
                self.height,
                self.width,
                self.data.len()
            )));
        }
        if let Some(names) = &self.band_names {
            if names.len() != self.bands {
                return Err(Error::Shape("band name count differs from bands".into()));
            }
        }
        if let Some(index) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn get(&self, band: usize, row: usize, col: usize) -> f32 {
        self.data[(band * self.height + row) * self.width + col]
    }

    /// Spectrum of pixel `p` (row-major pixel index) widened to `f64`.
    pub fn spectrum(&self, p: usize) -> Vec<f64> {
        let n = self.pixels();
        (0..self.bands)
            .map(|b| self.data[b * n + p] as f64)
            .collect()
    }

    /// Band slice (`height × width`, row-major).
    pub fn band(&self, b: usize) -> &[f32] {
        let n = self.pixels();
        &self.data[b * n..(b + 1) * n]
    }

    /// Contiguous `size × size` crop with its top-left corner at `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, size: usize) -> Result<HsiCube> {
        if row + size > self.height || col + size > self.width || size == 0 {
            return Err(Error::Shape(format!(
                "crop {size}x{size} at ({row},{col}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(self.bands * size * size);
        for b in 0..self.bands {
            for r in row..row + size {
                let start = (b * self.height + r) * self.width + col;
                data.extend_from_slice(&self.data[start..start + size]);
            }
        }
        Ok(HsiCube {
            bands: self.bands,
            height: size,
            width: size,
            data,
            band_names: self.band_names.clone(),
        })
    }
}

/// Path of the raw payload belonging to a header path.
pub fn payload_path(header: &Path) -> PathBuf {
    let mut s = header.as_os_str().to_owned();
    s.push(".raw");
    PathBuf::from(s)
}

pub fn save_cube(cube: &HsiCube, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    cube.validate()?;
    let header = Header {
        magic: MAGIC.to_string(),
        bands: cube.bands,
        height: cube.height,
        width: cube.width,
        dtype: "f32le".into(),
        layout: "band-major".into(),
        band_names: cube.band_names.clone(),
    };
    let mut text = serde_json::to_string(&header).expect("header serializes");
    text.push('\n');
    let mut payload = Vec::with_capacity(cube.data.len() * 4);
    for v in &cube.data {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    let raw = payload_path(path);
    fs::write(&raw, payload).map_err(|e| Error::io(raw, e))
}

pub fn load_cube(path: impl AsRef<Path>) -> Result<HsiCube> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Header {
        path: path.into(),
        message: e.to_string(),
    })?;
    let magic = value.get("magic").and_then(|m| m.as_str()).unwrap_or("");
    if magic != MAGIC {
        return Err(Error::Magic {
            path: path.into(),
            found: magic.to_string(),
        });
    }
    let header: Header = serde_json::from_value(value).map_err(|e| Error::Header {
        path: path.into(),
        message: e.to_string(),
    })?;
    if header.dtype != "f32le" || header.layout != "band-major" {
        return Err(Error::Header {
            path: path.into(),
            message: format!(
                "unsupported dtype/layout {}/{}",
                header.dtype, header.layout
            ),
        });
    }
    let raw_path = payload_path(path);
    let raw = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    let expected = header
        .bands
        .checked_mul(header.height)
        .and_then(|n| n.checked_mul(header.width))
        .ok_or_else(|| Error::Header {
            path: path.into(),
            message: "dimensions overflow".into(),
        })?;
    if raw.len() != expected * 4 {
        return Err(Error::SizeMismatch {
            path: raw_path,
            expected,
            found: raw.len(),
        });
    }
    let data = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let cube = HsiCube {
        bands: header.bands,
        height: header.height,
        width: header.width,
        data,
        band_names: header.band_names,
    };
    cube.validate()?;
    Ok(cube)
}

/// Divides the cube by its global maximum and returns that maximum.
pub fn normalize(cube: &HsiCube) -> Result<(HsiCube, f32)> {
    let max = cube.data.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if !(max > 0.0) {
        return Err(Error::Invalid(
            "cube has no strictly positive value to normalize by".into(),
        ));
    }
    let mut out = cube.clone();
    if max != 1.0 {
        for v in &mut out.data {
            *v /= max;
        }
    }
    Ok((out, max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(bands: usize, h: usize, w: usize) -> HsiCube {
        let data = (0..bands * h * w)
            .map(|i| (i as f32 * 0.37).sin().abs())
            .collect();
        HsiCube::new(bands, h, w, data).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.hsc");
        let c = cube(3, 4, 5)
            .with_band_names(vec!["a".into(), "b".into(), "c".into()])
            .unwrap();
        save_cube(&c, &p).unwrap();
        let back = load_cube(&p).unwrap();
        assert_eq!(back, c);
        assert!(back
            .data
            .iter()
            .zip(&c.data)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn degenerate_cube() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("one.hsc");
        save_cube(&HsiCube::new(1, 1, 1, vec![0.5]).unwrap(), &p).unwrap();
        let c = load_cube(&p).unwrap();
        assert_eq!((c.bands, c.height, c.width), (1, 1, 1));
        assert_eq!(c.data, vec![0.5]);
    }

    #[test]
    fn payload_is_little_endian_band_major() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.hsc");
        let c = cube(3, 2, 2);
        save_cube(&c, &p).unwrap();
        let raw = fs::read(payload_path(&p)).unwrap();
        assert_eq!(raw.len(), 12 * 4);
        assert_eq!(&raw[4..8], &c.data[1].to_le_bytes());
        let header: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(header["magic"], "HSC1");
        assert_eq!(header["dtype"], "f32le");
        assert_eq!(header["layout"], "band-major");
        assert_eq!(header["bands"], 3);
    }

    #[test]
    fn deterministic_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.hsc"), dir.path().join("b.hsc"));
        save_cube(&cube(2, 3, 3), &a).unwrap();
        save_cube(&cube(2, 3, 3), &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert_eq!(
            fs::read(payload_path(&a)).unwrap(),
            fs::read(payload_path(&b)).unwrap()
        );
    }

    #[test]
    fn size_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.hsc");
        fs::write(
            &p,
            r#"{"magic":"HSC1","bands":2,"height":2,"width":2,"dtype":"f32le","layout":"band-major"}"#,
        )
        .unwrap();
        fs::write(payload_path(&p), vec![0u8; 7 * 4]).unwrap();
        assert!(matches!(
            load_cube(&p),
            Err(Error::SizeMismatch {
                expected: 8,
                found: 28,
                ..
            })
        ));
    }

    #[test]
    fn magic_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.hsc");
        fs::write(
            &p,
            r#"{"magic":"ENVI","bands":1,"height":1,"width":1,"dtype":"f32le","layout":"band-major"}"#,
        )
        .unwrap();
        assert!(matches!(load_cube(&p), Err(Error::Magic { .. })));
        assert!(matches!(
            load_cube(dir.path().join("nope.hsc")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn non_finite_rejected_on_load_and_save() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nan.hsc");
        let bad = HsiCube {
            bands: 1,
            height: 1,
            width: 2,
            data: vec![1.0, f32::NAN],
            band_names: None,
        };
        assert!(matches!(
            save_cube(&bad, &p),
            Err(Error::NonFinite { index: 1 })
        ));
        assert!(!p.exists());
        fs::write(
            &p,
            r#"{"magic":"HSC1","bands":1,"height":1,"width":2,"dtype":"f32le","layout":"band-major"}"#,
        )
        .unwrap();
        let mut raw = 1.0f32.to_le_bytes().to_vec();
        raw.extend_from_slice(&f32::INFINITY.to_le_bytes());
        fs::write(payload_path(&p), raw).unwrap();
        assert!(matches!(load_cube(&p), Err(Error::NonFinite { index: 1 })));
    }

    #[test]
    fn normalize_by_global_max() {
        let c = HsiCube::new(2, 1, 2, vec![1000.0, 4000.0, 2000.0, 0.0]).unwrap();
        let (n, scale) = normalize(&c).unwrap();
        assert_eq!(scale, 4000.0);
        assert_eq!(n.data.iter().copied().fold(0.0, f32::max), 1.0);
        let (n2, s2) = normalize(&n).unwrap();
        assert_eq!(s2, 1.0);
        assert_eq!(n2, n);
        let zero = HsiCube::new(1, 1, 2, vec![0.0, 0.0]).unwrap();
        assert!(normalize(&zero).is_err());
    }

    #[test]
    fn normalize_keeps_spectral_direction() {
        let c = cube(5, 3, 3);
        let (n, _) = normalize(&c).unwrap();
        for p in 0..c.pixels() {
            let (a, b) = (c.spectrum(p), n.spectrum(p));
            let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((dot / (na * nb) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn crop_matches_source() {
        let c = cube(2, 5, 6);
        let p = c.crop(1, 2, 3).unwrap();
        for b in 0..2 {
            for r in 0..3 {
                for k in 0..3 {
                    assert_eq!(p.get(b, r, k), c.get(b, r + 1, k + 2));
                }
            }
        }
        assert!(c.crop(3, 0, 3).is_err());
    }
}
