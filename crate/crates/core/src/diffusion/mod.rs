//! Denoising diffusion over latent abundance fields: noise schedule, the
//! ε-predicting U-Net, the training loop and the ancestral sampler.

mod checkpoint;
pub mod nn;
pub mod real;
mod sample;
mod schedule;
mod train;
pub mod unet;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, CheckpointWriter, DatasetRef,
};
pub use nn::Tensor;
pub use real::Real;
pub use sample::{sample, sample_one, GeneratedSample};
pub use schedule::{build_schedule, q_sample, sample_step, NoiseSchedule, ScheduleParams};
pub use train::{train, Adam, LossRecorder, TrainConfig, TrainMonitor};
pub use unet::{DenoiserModel, ModelConfig};

use crate::field::{Field, LatentField};
use crate::Result;

pub fn latent_to_tensor<T: Real>(z: &LatentField) -> Tensor<T> {
    Tensor {
        c: z.0.channels,
        h: z.0.height,
        w: z.0.width,
        data: z.0.data.iter().map(|&v| T::of(v)).collect(),
    }
}

pub fn tensor_to_latent<T: Real>(x: &Tensor<T>) -> LatentField {
    LatentField(Field {
        channels: x.c,
        height: x.h,
        width: x.w,
        data: x.data.iter().map(|v| v.f64()).collect(),
    })
}

/// Predicted noise `ε_θ(Z_t, t)` for a latent field, with `t` checked
/// against the schedule.
pub fn denoiser_forward(
    model: &DenoiserModel,
    zt: &LatentField,
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<LatentField> {
    schedule.check_step(t)?;
    Ok(tensor_to_latent(&model.forward(&latent_to_tensor(zt), t)?))
}
