//! Training loop: encode a minibatch with the frozen autoencoder, map it to
//! the latent space, noise it at uniformly drawn steps and take an Adam step
//! on the ε-prediction error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::schedule::ScheduleParams;
use super::{latent_to_tensor, DenoiserModel, Tensor};
use crate::io::PatchSet;
use crate::latent::to_latent;
use crate::unmixing::{encode, EncodeMode, UnmixingAutoencoder};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub schedule: ScheduleParams,
    pub patch_size: usize,
    /// Steps between checkpoints; 0 disables intermediate checkpoints.
    pub checkpoint_interval: usize,
    pub encode_mode: EncodeMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 10_000,
            batch_size: 8,
            learning_rate: 1e-4,
            seed: 0,
            schedule: ScheduleParams::default(),
            patch_size: 32,
            checkpoint_interval: 0,
            encode_mode: EncodeMode::Linear,
        }
    }
}

/// Receives the loss of every step and the model at checkpoint steps.
pub trait TrainMonitor {
    fn on_step(&mut self, _step: usize, _loss: f64) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _step: usize, _model: &DenoiserModel) -> Result<()> {
        Ok(())
    }
}

impl TrainMonitor for () {}

/// Collects the loss curve in memory.
#[derive(Debug, Default)]
pub struct LossRecorder(pub Vec<f64>);

impl TrainMonitor for LossRecorder {
    fn on_step(&mut self, _step: usize, loss: f64) -> Result<()> {
        self.0.push(loss);
        Ok(())
    }
}

/// Adam with fixed learning rate and no weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f32], grads: &[f32]) {
        self.t += 1;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let step = (self.lr * c2.sqrt() / c1) as f32;
        let eps = (self.eps * c2.sqrt()) as f32;
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= step * *m / (v.sqrt() + eps);
        }
    }
}

fn validate(
    cfg: &TrainConfig,
    model: &DenoiserModel,
    data: &PatchSet,
    uae: &UnmixingAutoencoder,
) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Invalid("training set is empty".into()));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::Invalid(
            "batch size and learning rate must be positive".into(),
        ));
    }
    if !uae.frozen {
        return Err(Error::Invalid(
            "the unmixing autoencoder must be frozen during training".into(),
        ));
    }
    if data.bands() != uae.bands() {
        return Err(Error::Shape(format!(
            "patches have {} bands, autoencoder expects {}",
            data.bands(),
            uae.bands()
        )));
    }
    if model.config().d != uae.d() {
        return Err(Error::Shape(format!(
            "model has {} channels, autoencoder {} endmembers",
            model.config().d,
            uae.d()
        )));
    }
    let m = model.config().size_multiple();
    if !data.patch_size.is_multiple_of(m) {
        return Err(Error::Invalid(format!(
            "patch size {} is not a multiple of {m}",
            data.patch_size
        )));
    }
    Ok(())
}

/// Runs `cfg.steps` optimisation steps. Deterministic for a given seed.
pub fn train(
    mut model: DenoiserModel,
    data: &PatchSet,
    uae: &UnmixingAutoencoder,
    cfg: &TrainConfig,
    monitor: &mut dyn TrainMonitor,
) -> Result<DenoiserModel> {
    if cfg.steps == 0 {
        return Ok(model);
    }
    validate(cfg, &model, data, uae)?;
    let schedule = cfg.schedule.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model.param_count(), cfg.learning_rate);
    let mut latents: Vec<Option<Tensor<f32>>> = vec![None; data.len()];
    let mut grads = vec![0.0f32; model.param_count()];

    for step in 1..=cfg.steps {
        let mut inputs = Vec::with_capacity(cfg.batch_size);
        let mut noise = Vec::with_capacity(cfg.batch_size);
        let mut steps = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let idx = rng.random_range(0..data.len());
            if latents[idx].is_none() {
                let x = encode(uae, &data.patches[idx], cfg.encode_mode)?;
                latents[idx] = Some(latent_to_tensor(&to_latent(&x)));
            }
            let z0 = latents[idx].as_ref().expect("cached latent");
            let t = rng.random_range(1..=schedule.steps);
            let (a, b) = (
                schedule.alpha_bar(t).sqrt() as f32,
                (1.0 - schedule.alpha_bar(t)).sqrt() as f32,
            );
            let eps: Vec<f32> = (0..z0.data.len())
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let zt = z0
                .data
                .iter()
                .zip(&eps)
                .map(|(&z, &e)| a * z + b * e)
                .collect();
            inputs.push(Tensor {
                data: zt,
                ..z0.clone()
            });
            noise.push(Tensor {
                data: eps,
                ..z0.clone()
            });
            steps.push(t);
        }
        grads.fill(0.0);
        let loss = model.loss_and_grad(&inputs, &steps, &noise, &mut grads)?;
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { step, loss });
        }
        adam.step(&mut model.params, &grads);
        monitor.on_step(step, loss)?;
        if cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0 {
            monitor.on_checkpoint(step, &model)?;
        }
    }
    Ok(model)
}
