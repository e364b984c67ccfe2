use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::HsiCube;
use crate::{Error, Result};

/// Random square crops of a cube together with their source offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    pub patch_size: usize,
    pub patches: Vec<HsiCube>,
    /// `(row, col)` of each patch's top-left corner in the source cube.
    pub source_offsets: Vec<(usize, usize)>,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn bands(&self) -> usize {
        self.patches.first().map_or(0, |p| p.bands)
    }
}

/// Draws `count` crops with offsets uniform over all valid positions, with
/// replacement, so crops may overlap or repeat.
pub fn extract_patches(cube: &HsiCube, size: usize, count: usize, seed: u64) -> Result<PatchSet> {
    if size == 0 || size > cube.height || size > cube.width {
        return Err(Error::Invalid(format!(
            "patch size {size} does not fit a {}x{} cube",
            cube.height, cube.width
        )));
    }
    if count == 0 {
        return Err(Error::Invalid("patch count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut patches = Vec::with_capacity(count);
    let mut source_offsets = Vec::with_capacity(count);
    for _ in 0..count {
        let row = rng.random_range(0..=cube.height - size);
        let col = rng.random_range(0..=cube.width - size);
        patches.push(cube.crop(row, col, size)?);
        source_offsets.push((row, col));
    }
    Ok(PatchSet {
        patch_size: size,
        patches,
        source_offsets,
    })
}
