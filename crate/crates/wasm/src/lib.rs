//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Three operations are exposed: noise schedule curves, synthetic scene
//! generation with unmixing, and forward diffusion of the scene's abundance
//! field through the latent projection.

use hud_core::diffusion::{q_sample, NoiseSchedule, ScheduleParams};
use hud_core::io::pseudocolor_rgb;
use hud_core::latent::{from_latent, to_latent};
use hud_core::synthetic::{make_synthetic, SyntheticConfig, SyntheticScene};
use hud_core::unmixing::{
    decode, encode, reconstruction_report, spectral_angle, vca, EncodeMode, EndmemberMatrix,
    UnmixingAutoencoder,
};
use hud_core::{AbundanceField, Field, HsiCube, LatentField, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use wasm_bindgen::prelude::*;

fn js(e: hud_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn rgba(rgb: &[u8]) -> Vec<u8> {
    rgb.chunks_exact(3)
        .flat_map(|p| [p[0], p[1], p[2], 255])
        .collect()
}

/// A linear β schedule with its derived curves.
#[wasm_bindgen]
pub struct Schedule {
    inner: NoiseSchedule,
}

impl Schedule {
    pub fn build(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        ScheduleParams {
            steps,
            beta_start,
            beta_end,
        }
        .build()
        .map(|inner| Self { inner })
    }

    fn curve(&self, f: impl Fn(&NoiseSchedule, usize) -> f64) -> Vec<f64> {
        (1..=self.inner.steps).map(|t| f(&self.inner, t)).collect()
    }
}

#[wasm_bindgen]
impl Schedule {
    #[wasm_bindgen(constructor)]
    pub fn new(
        steps: usize,
        beta_start: f64,
        beta_end: f64,
    ) -> std::result::Result<Schedule, JsError> {
        Self::build(steps, beta_start, beta_end).map_err(js)
    }

    /// Default endpoints scaled by `1000 / steps`.
    pub fn scaled(steps: usize) -> std::result::Result<Schedule, JsError> {
        let p = ScheduleParams::scaled(steps);
        Self::new(p.steps, p.beta_start, p.beta_end)
    }

    pub fn steps(&self) -> usize {
        self.inner.steps
    }

    pub fn beta(&self) -> Vec<f64> {
        self.curve(|s, t| s.beta(t))
    }

    #[wasm_bindgen(js_name = alphaBar)]
    pub fn alpha_bar(&self) -> Vec<f64> {
        self.curve(|s, t| s.alpha_bar(t))
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.curve(|s, t| s.sigma(t))
    }
}

/// A synthetic scene, optionally unmixed.
#[wasm_bindgen]
pub struct Scene {
    scene: SyntheticScene,
    estimate: Option<(UnmixingAutoencoder, AbundanceField)>,
}

/// Bands shown as red, green and blue.
fn display_bands(c: usize) -> (usize, usize, usize) {
    (3 * c / 4, c / 2, c / 4)
}

impl Scene {
    pub fn generate(seed: u64, endmembers: usize, size: usize, noise: f64) -> Result<Self> {
        let scene = make_synthetic(&SyntheticConfig {
            bands: 64,
            endmembers,
            height: size,
            width: size,
            noise,
            seed,
            ..SyntheticConfig::default()
        })?;
        Ok(Self {
            scene,
            estimate: None,
        })
    }

    /// Runs VCA and the chosen abundance solver. Returns
    /// `[rmse, mean spectral angle, worst endmember angle]`.
    pub fn run_unmix(&mut self, fcls: bool, seed: u64) -> Result<Vec<f64>> {
        let d = self.scene.endmembers.d();
        let uae = UnmixingAutoencoder::new(vca(&self.scene.cube, d, seed)?)?;
        let mode = if fcls {
            EncodeMode::Fcls
        } else {
            EncodeMode::Linear
        };
        let x = encode(&uae, &self.scene.cube, mode)?;
        let report = reconstruction_report(&self.scene.cube, &decode(&uae, &x)?)?;
        let worst = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        spectral_angle(
                            &uae.endmembers().column(j),
                            &self.scene.endmembers.column(i),
                        )
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max);
        self.estimate = Some((uae, x));
        Ok(vec![report.rmse, report.mean_spectral_angle, worst])
    }

    fn current(&self) -> Result<(UnmixingAutoencoder, &AbundanceField)> {
        match &self.estimate {
            Some((uae, x)) => Ok((uae.clone(), x)),
            None => Ok((
                UnmixingAutoencoder::new(self.scene.endmembers.clone())?,
                &self.scene.abundances,
            )),
        }
    }

    fn image(cube: &HsiCube) -> Result<Vec<u8>> {
        let (r, g, b) = display_bands(cube.bands);
        Ok(rgba(&pseudocolor_rgb(cube, r, g, b)?))
    }

    /// Noises the abundance field at step `t` in latent space, maps it back to
    /// the simplex and decodes it. Returns the pseudo-color RGBA image.
    pub fn forward(&self, schedule: &Schedule, t: usize, noise_seed: u64) -> Result<Vec<u8>> {
        let (uae, x) = self.current()?;
        let z0 = to_latent(x);
        let eps = gaussian_like(&z0.0, noise_seed);
        let zt = q_sample(&z0, t, &eps, &schedule.inner)?;
        Self::image(&decode(&uae, &from_latent(&zt))?)
    }
}

fn gaussian_like(f: &Field, seed: u64) -> LatentField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..f.data.len())
        .map(|_| rng.sample(StandardNormal))
        .collect();
    LatentField(Field { data, ..f.clone() })
}

fn spectra(a: &EndmemberMatrix) -> Vec<f64> {
    (0..a.d()).flat_map(|i| a.column(i)).collect()
}

#[wasm_bindgen]
impl Scene {
    #[wasm_bindgen(constructor)]
    pub fn new(
        seed: u64,
        endmembers: usize,
        size: usize,
        noise: f64,
    ) -> std::result::Result<Scene, JsError> {
        Self::generate(seed, endmembers, size, noise).map_err(js)
    }

    pub fn size(&self) -> usize {
        self.scene.cube.width
    }

    pub fn bands(&self) -> usize {
        self.scene.cube.bands
    }

    pub fn endmembers(&self) -> usize {
        self.scene.endmembers.d()
    }

    /// Pseudo-color RGBA image of the scene.
    pub fn rgba(&self) -> std::result::Result<Vec<u8>, JsError> {
        Self::image(&self.scene.cube).map_err(js)
    }

    /// True endmember spectra, one after another.
    #[wasm_bindgen(js_name = trueSpectra)]
    pub fn true_spectra(&self) -> Vec<f64> {
        spectra(&self.scene.endmembers)
    }

    /// Estimated endmember spectra (empty before unmixing).
    #[wasm_bindgen(js_name = estimatedSpectra)]
    pub fn estimated_spectra(&self) -> Vec<f64> {
        self.estimate
            .as_ref()
            .map(|(uae, _)| spectra(uae.endmembers()))
            .unwrap_or_default()
    }

    pub fn unmix(&mut self, fcls: bool, seed: u64) -> std::result::Result<Vec<f64>, JsError> {
        self.run_unmix(fcls, seed).map_err(js)
    }

    /// Grayscale RGBA map of abundance `k` (estimated if available).
    #[wasm_bindgen(js_name = abundanceRgba)]
    pub fn abundance_rgba(&self, k: usize) -> Vec<u8> {
        let x = self
            .estimate
            .as_ref()
            .map_or(&self.scene.abundances, |(_, x)| x);
        let f = x.field();
        if k >= f.channels {
            return Vec::new();
        }
        let n = f.pixels();
        f.data[k * n..(k + 1) * n]
            .iter()
            .flat_map(|&v| {
                let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                [g, g, g, 255]
            })
            .collect()
    }

    #[wasm_bindgen(js_name = forwardRgba)]
    pub fn forward_rgba(
        &self,
        schedule: &Schedule,
        t: usize,
        noise_seed: u64,
    ) -> std::result::Result<Vec<u8>, JsError> {
        self.forward(schedule, t, noise_seed).map_err(js)
    }
}
