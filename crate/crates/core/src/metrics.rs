//! Realism and copy-detection metrics for generated cubes.
//!
//! Both metrics are built on the cosine similarity
//! `dot(a, b) / (‖a‖·‖b‖)` between two spectra, accumulated in band order.
//! A pair involving a zero-norm spectrum scores 0.
//!
//! * Point fidelity `F_p`: mean over generated pixels of the best cosine
//!   against any real pixel.
//! * Block diversity `D_b`: generated images are tiled into square blocks; each
//!   block is compared with every aligned block of the real scene (stride 1)
//!   by the mean per-pixel cosine, and the best match is kept. `D_b` is the
//!   mean of those maxima. Values near 1 mean generated blocks are near
//!   copies of the scene.

use serde::{Deserialize, Serialize};

use crate::parallel::map_indexed;
use crate::{Error, HsiCube, Result};

/// Pixel-major copy of a cube with per-pixel norms.
struct Spectra {
    bands: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
    norms: Vec<f64>,
}

impl Spectra {
    fn new(cube: &HsiCube) -> Self {
        let (c, n) = (cube.bands, cube.pixels());
        let mut data = vec![0.0; c * n];
        for b in 0..c {
            for (p, &v) in cube.band(b).iter().enumerate() {
                data[p * c + b] = v as f64;
            }
        }
        let norms = data
            .chunks_exact(c)
            .map(|s| s.iter().fold(0.0, |acc, v| acc + v * v).sqrt())
            .collect();
        Self {
            bands: c,
            height: cube.height,
            width: cube.width,
            data,
            norms,
        }
    }

    fn zero_norm(&self) -> usize {
        self.norms.iter().filter(|&&n| n == 0.0).count()
    }

    #[inline]
    fn cosine(&self, p: usize, other: &Spectra, q: usize) -> f64 {
        let (na, nb) = (self.norms[p], other.norms[q]);
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        let c = self.bands;
        let a = &self.data[p * c..(p + 1) * c];
        let b = &other.data[q * c..(q + 1) * c];
        let dot = a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y);
        dot / (na * nb)
    }
}

fn check_inputs(generated: &[HsiCube], real: &HsiCube) -> Result<()> {
    if generated.is_empty() {
        return Err(Error::Invalid("no generated images to evaluate".into()));
    }
    for (i, g) in generated.iter().enumerate() {
        if g.bands != real.bands {
            return Err(Error::Shape(format!(
                "generated image {i} has {} bands, real image {}",
                g.bands, real.bands
            )));
        }
    }
    Ok(())
}

fn fidelity(generated: &[Spectra], real: &Spectra) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for g in generated {
        let n = g.height * g.width;
        let best = map_indexed(n, |p| {
            (0..real.height * real.width)
                .fold(f64::NEG_INFINITY, |m, q| m.max(g.cosine(p, real, q)))
        });
        for v in best {
            sum += v;
        }
        count += n;
    }
    sum / count as f64
}

/// Mean over all generated pixels of the best cosine similarity against the
/// real image.
pub fn point_fidelity(generated: &[HsiCube], real: &HsiCube) -> Result<f64> {
    check_inputs(generated, real)?;
    let gen: Vec<Spectra> = generated.iter().map(Spectra::new).collect();
    Ok(fidelity(&gen, &Spectra::new(real)))
}

fn block_origins(extent: usize, size: usize, stride: usize) -> impl Iterator<Item = usize> {
    (0..=extent - size).step_by(stride)
}

fn block_score(
    g: &Spectra,
    r: usize,
    c: usize,
    real: &Spectra,
    rr: usize,
    rc: usize,
    size: usize,
) -> f64 {
    let mut sum = 0.0;
    for i in 0..size {
        for j in 0..size {
            let p = (r + i) * g.width + c + j;
            let q = (rr + i) * real.width + rc + j;
            sum += g.cosine(p, real, q);
        }
    }
    sum / (size * size) as f64
}

fn check_blocks(
    generated: &[HsiCube],
    real: &HsiCube,
    block_size: usize,
    stride: usize,
) -> Result<()> {
    if block_size == 0 || stride == 0 {
        return Err(Error::Invalid(
            "block size and stride must be positive".into(),
        ));
    }
    if block_size > real.height || block_size > real.width {
        return Err(Error::Invalid(format!(
            "block size {block_size} exceeds the real image ({}×{})",
            real.height, real.width
        )));
    }
    for (i, g) in generated.iter().enumerate() {
        if block_size > g.height || block_size > g.width {
            return Err(Error::Invalid(format!(
                "block size {block_size} exceeds generated image {i} ({}×{})",
                g.height, g.width
            )));
        }
    }
    Ok(())
}

/// Returns `(D_b, N_b)`.
fn diversity(generated: &[Spectra], real: &Spectra, size: usize, stride: usize) -> (f64, usize) {
    let mut blocks = Vec::new();
    for (k, g) in generated.iter().enumerate() {
        for r in block_origins(g.height, size, stride) {
            for c in block_origins(g.width, size, stride) {
                blocks.push((k, r, c));
            }
        }
    }
    let best = map_indexed(blocks.len(), |i| {
        let (k, r, c) = blocks[i];
        let mut m = f64::NEG_INFINITY;
        for rr in 0..=real.height - size {
            for rc in 0..=real.width - size {
                m = m.max(block_score(&generated[k], r, c, real, rr, rc, size));
            }
        }
        m
    });
    let mut sum = 0.0;
    for v in &best {
        sum += v;
    }
    (sum / best.len() as f64, best.len())
}

/// Mean over generated blocks of the best aligned-block match in the real
/// image. Generated images are tiled with `stride`; the real image is
/// searched exhaustively.
pub fn block_diversity(
    generated: &[HsiCube],
    real: &HsiCube,
    block_size: usize,
    stride: usize,
) -> Result<f64> {
    check_inputs(generated, real)?;
    check_blocks(generated, real, block_size, stride)?;
    let gen: Vec<Spectra> = generated.iter().map(Spectra::new).collect();
    Ok(diversity(&gen, &Spectra::new(real), block_size, stride).0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "F_p")]
    pub f_p: f64,
    #[serde(rename = "D_b")]
    pub d_b: f64,
    /// `D_b / F_p`; absent when `F_p` is zero.
    pub ratio: Option<f64>,
    pub block_size: usize,
    pub stride: usize,
    #[serde(rename = "N_b")]
    pub n_b: usize,
    pub generated_count: usize,
    pub pixel_count: usize,
    /// Zero-norm pixels seen in the generated images and the real image.
    pub zero_norm_pixels: usize,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

pub fn metric_report(
    generated: &[HsiCube],
    real: &HsiCube,
    block_size: usize,
    stride: usize,
) -> Result<MetricsReport> {
    check_inputs(generated, real)?;
    check_blocks(generated, real, block_size, stride)?;
    let gen: Vec<Spectra> = generated.iter().map(Spectra::new).collect();
    let real = Spectra::new(real);
    let f_p = fidelity(&gen, &real);
    let (d_b, n_b) = diversity(&gen, &real, block_size, stride);
    Ok(MetricsReport {
        f_p,
        d_b,
        ratio: (f_p > 0.0).then(|| d_b / f_p),
        block_size,
        stride,
        n_b,
        generated_count: generated.len(),
        pixel_count: gen.iter().map(|g| g.height * g.width).sum(),
        zero_norm_pixels: gen.iter().map(Spectra::zero_norm).sum::<usize>() + real.zero_norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cube(bands: usize, h: usize, w: usize, data: Vec<f32>) -> HsiCube {
        HsiCube::new(bands, h, w, data).unwrap()
    }

    fn random_cube(seed: u64, bands: usize, h: usize, w: usize) -> HsiCube {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        cube(
            bands,
            h,
            w,
            (0..bands * h * w)
                .map(|_| rng.random_range(0.0..1.0))
                .collect(),
        )
    }

    fn scaled(c: &HsiCube, k: f32) -> HsiCube {
        cube(
            c.bands,
            c.height,
            c.width,
            c.data.iter().map(|v| v * k).collect(),
        )
    }

    #[test]
    fn self_comparison() {
        let real = random_cube(1, 5, 6, 6);
        assert!((point_fidelity(std::slice::from_ref(&real), &real).unwrap() - 1.0).abs() < 1e-12);
        assert!((point_fidelity(&[scaled(&real, 2.0)], &real).unwrap() - 1.0).abs() < 1e-12);
        let r = metric_report(std::slice::from_ref(&real), &real, 6, 6).unwrap();
        assert!((r.f_p - 1.0).abs() < 1e-12 && (r.d_b - 1.0).abs() < 1e-12);
        assert!((r.ratio.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(
            (r.n_b, r.generated_count, r.pixel_count, r.zero_norm_pixels),
            (1, 1, 36, 0)
        );
    }

    #[test]
    fn orthogonal_spectra_score_zero() {
        let gen = cube(2, 1, 1, vec![1.0, 0.0]);
        let real = cube(2, 1, 1, vec![0.0, 1.0]);
        assert_eq!(point_fidelity(std::slice::from_ref(&gen), &real).unwrap(), 0.0);
        assert_eq!(block_diversity(std::slice::from_ref(&gen), &real, 1, 1).unwrap(), 0.0);
        let r = metric_report(&[gen], &real, 1, 1).unwrap();
        assert_eq!(r.ratio, None);
    }

    #[test]
    fn copied_block_scores_one() {
        let real = random_cube(2, 3, 8, 8);
        let copy = real.crop(3, 2, 4).unwrap();
        assert!((block_diversity(&[copy], &real, 4, 4).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_norm_pixels_are_counted() {
        // band-major: pixel 0 is (0, 0), pixel 1 is (1, 1)
        let gen = cube(2, 1, 2, vec![0.0, 1.0, 0.0, 1.0]);
        let real = cube(2, 1, 1, vec![1.0, 1.0]);
        let r = metric_report(&[gen], &real, 1, 1).unwrap();
        assert_eq!(r.zero_norm_pixels, 1);
        assert!((r.f_p - 0.5).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let real = random_cube(3, 4, 4, 4);
        assert!(point_fidelity(&[], &real).is_err());
        assert!(metric_report(&[], &real, 2, 2).is_err());
        assert!(point_fidelity(&[random_cube(4, 3, 4, 4)], &real).is_err());
        let gen = random_cube(5, 4, 2, 2);
        assert!(block_diversity(std::slice::from_ref(&gen), &real, 3, 1).is_err());
        assert!(block_diversity(std::slice::from_ref(&gen), &real, 0, 1).is_err());
        assert!(block_diversity(std::slice::from_ref(&gen), &real, 1, 0).is_err());
        assert!(block_diversity(std::slice::from_ref(&real), &gen, 3, 1).is_err());
    }

    #[test]
    fn json_keys() {
        let real = random_cube(6, 3, 4, 4);
        let json = metric_report(std::slice::from_ref(&real), &real, 2, 2)
            .unwrap()
            .to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in [
            "F_p",
            "D_b",
            "ratio",
            "block_size",
            "N_b",
            "zero_norm_pixels",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["N_b"], 4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn scale_invariance(seed in 0u64..1000, k in 0.01f32..100.0) {
            let real = random_cube(seed, 3, 5, 5);
            let gen = random_cube(seed + 1, 3, 4, 4);
            let a = metric_report(std::slice::from_ref(&gen), &real, 2, 2).unwrap();
            let b = metric_report(&[scaled(&gen, k)], &real, 2, 2).unwrap();
            prop_assert!((a.f_p - b.f_p).abs() < 1e-6);
            prop_assert!((a.d_b - b.d_b).abs() < 1e-6);
        }

        #[test]
        fn bounded_for_nonnegative_spectra(seed in 0u64..1000) {
            let real = random_cube(seed, 4, 5, 5);
            let gen = random_cube(seed + 7, 4, 3, 3);
            let r = metric_report(&[gen], &real, 3, 1).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&r.f_p));
            prop_assert!((0.0..=1.0 + 1e-12).contains(&r.d_b));
            prop_assert!(r.d_b <= r.f_p + 1e-12);
        }

        #[test]
        fn more_real_pixels_never_lower_fidelity(seed in 0u64..1000) {
            let real = random_cube(seed, 3, 6, 6);
            let gen = random_cube(seed + 3, 3, 3, 3);
            let part = real.crop(1, 1, 4).unwrap();
            let small = point_fidelity(std::slice::from_ref(&gen), &part).unwrap();
            let full = point_fidelity(&[gen], &real).unwrap();
            prop_assert!(full >= small);
        }
    }
}
