//! Synthetic scenes with known endmembers and abundances.
//!
//! Endmember spectra are sums of Gaussian bumps over the band axis on a small
//! positive baseline. Abundances start as independent unit-exponential noise
//! per endmember (a Dirichlet(1) draw after normalisation), are blurred
//! spatially, sharpened by a power and renormalised onto the simplex. One
//! pure pixel per endmember can be planted at a random location.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::field::{AbundanceField, Field};
use crate::unmixing::{decode, EndmemberMatrix, UnmixingAutoencoder};
use crate::{Error, HsiCube, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub bands: usize,
    pub endmembers: usize,
    pub height: usize,
    pub width: usize,
    /// Standard deviation of the spatial Gaussian blur, in pixels.
    pub smoothness: f64,
    /// Power applied to blurred abundances before renormalising.
    pub sharpness: f64,
    /// Standard deviation of additive Gaussian noise on the cube.
    pub noise: f64,
    pub pure_pixels: bool,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            bands: 64,
            endmembers: 4,
            height: 96,
            width: 96,
            smoothness: 3.0,
            sharpness: 4.0,
            noise: 0.0,
            pure_pixels: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub cube: HsiCube,
    pub endmembers: EndmemberMatrix,
    pub abundances: AbundanceField,
    /// `(row, col)` of the pure pixel of each endmember, if planted.
    pub pure_pixels: Vec<(usize, usize)>,
}

fn spectrum(rng: &mut ChaCha8Rng, bands: usize) -> Vec<f64> {
    let c = bands as f64;
    let bumps: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.0..c),
                rng.random_range(c / 20.0..c / 5.0).max(0.5),
                rng.random_range(0.2..1.0),
            )
        })
        .collect();
    (0..bands)
        .map(|b| {
            let x = b as f64;
            0.05 + bumps
                .iter()
                .map(|&(m, s, a)| a * (-0.5 * ((x - m) / s).powi(2)).exp())
                .sum::<f64>()
        })
        .collect()
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable blur of one `h × w` plane with clamped borders.
fn blur(plane: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as i64;
    let clamp = |i: i64, n: usize| i.clamp(0, n as i64 - 1) as usize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, &v)| v * plane[y * w + clamp(x as i64 + k as i64 - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, &v)| v * tmp[clamp(y as i64 + k as i64 - r, h) * w + x])
                .sum();
        }
    }
    out
}

pub fn make_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticScene> {
    let (c, d, h, w) = (cfg.bands, cfg.endmembers, cfg.height, cfg.width);
    if d < 2 || c < d {
        return Err(Error::Invalid(format!(
            "need 2 <= endmembers <= bands, got {d} endmembers and {c} bands"
        )));
    }
    if h == 0 || w == 0 {
        return Err(Error::Invalid("scene must have at least one pixel".into()));
    }
    if cfg.pure_pixels && h * w < d {
        return Err(Error::Invalid(
            "scene too small to hold one pure pixel per endmember".into(),
        ));
    }
    if !(cfg.smoothness >= 0.0 && cfg.sharpness > 0.0 && cfg.noise >= 0.0) {
        return Err(Error::Invalid(
            "smoothness and noise must be non-negative and sharpness positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let columns: Vec<Vec<f64>> = (0..d).map(|_| spectrum(&mut rng, c)).collect();
    let endmembers = EndmemberMatrix::from_columns(&columns)?;

    let n = h * w;
    let kernel = gaussian_kernel(cfg.smoothness);
    let planes: Vec<Vec<f64>> = (0..d)
        .map(|_| {
            let noise: Vec<f64> = (0..n).map(|_| rng.sample(Exp1)).collect();
            blur(&noise, h, w, &kernel)
        })
        .collect();
    let mut data = vec![0.0; d * n];
    for p in 0..n {
        let mut v: Vec<f64> = planes.iter().map(|pl| pl[p].powf(cfg.sharpness)).collect();
        let s: f64 = v.iter().sum();
        if s > 0.0 {
            v.iter_mut().for_each(|x| *x /= s);
        } else {
            v.iter_mut().for_each(|x| *x = 1.0 / d as f64);
        }
        for (k, x) in v.into_iter().enumerate() {
            data[k * n + p] = x;
        }
    }

    let mut pure_pixels = Vec::new();
    if cfg.pure_pixels {
        let mut used = Vec::with_capacity(d);
        for k in 0..d {
            let p = loop {
                let p = rng.random_range(0..n);
                if !used.contains(&p) {
                    break p;
                }
            };
            used.push(p);
            for j in 0..d {
                data[j * n + p] = if j == k { 1.0 } else { 0.0 };
            }
            pure_pixels.push((p / w, p % w));
        }
    }
    let abundances = AbundanceField::new(Field::new(d, h, w, data)?)?;
    let uae = UnmixingAutoencoder::new(endmembers.clone())?;
    let mut cube = decode(&uae, &abundances)?;
    if cfg.noise > 0.0 {
        for v in &mut cube.data {
            let e: f64 = rng.sample(StandardNormal);
            *v += (cfg.noise * e) as f32;
        }
    }
    Ok(SyntheticScene {
        cube,
        endmembers,
        abundances,
        pure_pixels,
    })
}
