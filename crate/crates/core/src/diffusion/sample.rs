use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::schedule::{sample_step, NoiseSchedule};
use super::{denoiser_forward, DenoiserModel};
use crate::field::{AbundanceField, Field, LatentField};
use crate::latent::from_latent;
use crate::parallel::map_indexed;
use crate::unmixing::{decode, UnmixingAutoencoder};
use crate::{Error, HsiCube, Result};

/// One generated cube with the abundance field it was decoded from.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSample {
    pub cube: HsiCube,
    pub abundance: AbundanceField,
}

fn gaussian_field(rng: &mut ChaCha8Rng, d: usize, size: usize) -> LatentField {
    let data = (0..d * size * size)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    LatentField(Field {
        channels: d,
        height: size,
        width: size,
        data,
    })
}

/// Ancestral sampling of one `size × size` image. Sample `index` draws from
/// stream `index` of the seeded generator, so images are independent of how
/// many are requested or in which order they are produced.
pub fn sample_one(
    model: &DenoiserModel,
    schedule: &NoiseSchedule,
    uae: &UnmixingAutoencoder,
    size: usize,
    seed: u64,
    index: u64,
) -> Result<GeneratedSample> {
    let d = model.config().d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut z = gaussian_field(&mut rng, d, size);
    let zero = LatentField(Field::zeros(d, size, size));
    for t in (1..=schedule.steps).rev() {
        let eps_hat = denoiser_forward(model, &z, t, schedule)?;
        z = if t > 1 {
            let noise = gaussian_field(&mut rng, d, size);
            sample_step(&z, t, &eps_hat, &noise, schedule)?
        } else {
            sample_step(&z, t, &eps_hat, &zero, schedule)?
        };
    }
    let abundance = from_latent(&z);
    let cube = decode(uae, &abundance)?;
    Ok(GeneratedSample { cube, abundance })
}

/// Generates `count` images; image `i` is `sample_one(.., seed, i)`.
pub fn sample(
    model: &DenoiserModel,
    schedule: &NoiseSchedule,
    uae: &UnmixingAutoencoder,
    count: usize,
    size: usize,
    seed: u64,
) -> Result<Vec<GeneratedSample>> {
    if count == 0 {
        return Err(Error::Invalid("sample count must be at least 1".into()));
    }
    if model.config().d != uae.d() {
        return Err(Error::Shape(format!(
            "model has {} channels, autoencoder {} endmembers",
            model.config().d,
            uae.d()
        )));
    }
    let m = model.config().size_multiple();
    if size == 0 || !size.is_multiple_of(m) {
        return Err(Error::Invalid(format!(
            "sample size {size} must be a positive multiple of {m}"
        )));
    }
    map_indexed(count, |i| {
        sample_one(model, schedule, uae, size, seed, i as u64)
    })
    .into_iter()
    .collect()
}
