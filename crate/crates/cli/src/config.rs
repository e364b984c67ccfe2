//! Run configuration.
//!
//! A config file is flat TOML: one `key = value` line per setting. Every key
//! is also a command-line flag of the same name (`patch-size = 32` in a file
//! is `--patch-size 32` on the command line); flags win over the file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use hud_core::unmixing::EncodeMode;
use serde::{Deserialize, Serialize};

macro_rules! run_config {
    (
        values { $( $(#[doc = $vdoc:literal])* $vfield:ident : $vty:ty = $vdefault:expr, )* }
        optional { $( $(#[doc = $odoc:literal])* $ofield:ident : $oty:ty, )* }
    ) => {
        /// Effective settings for one command.
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
        pub struct RunConfig {
            $( $(#[doc = $vdoc])* pub $vfield: $vty, )*
            $(
                $(#[doc = $odoc])*
                #[serde(skip_serializing_if = "Option::is_none")]
                pub $ofield: Option<$oty>,
            )*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self {
                    $( $vfield: $vdefault, )*
                    $( $ofield: None, )*
                }
            }
        }

        /// Command-line mirror of [`RunConfig`].
        #[derive(Debug, Clone, Default, Args)]
        pub struct Overrides {
            $( $(#[doc = $vdoc])* #[arg(long)] pub $vfield: Option<$vty>, )*
            $( $(#[doc = $odoc])* #[arg(long)] pub $ofield: Option<$oty>, )*
        }

        impl Overrides {
            pub fn apply(&self, cfg: &mut RunConfig) {
                $( if let Some(v) = &self.$vfield { cfg.$vfield = v.clone(); } )*
                $( if let Some(v) = &self.$ofield { cfg.$ofield = Some(v.clone()); } )*
            }
        }
    };
}

run_config! {
    values {
        /// Output root; results go to endmembers/, checkpoints/, samples/ and reports/.
        out: PathBuf = PathBuf::from("out"),
        /// Seed for every random choice of the command.
        seed: u64 = 0,
        /// Number of endmembers.
        d: usize = 4,
        /// Abundance solver: linear or fcls.
        mode: EncodeMode = EncodeMode::Linear,
        /// Scale the scene by its global maximum before use.
        normalize: bool = true,
        /// Training patch size in pixels.
        patch_size: usize = 32,
        /// Number of random training patches cropped from the scene.
        patches: usize = 512,
        /// Diffusion steps T.
        timesteps: usize = 1000,
        /// Optimisation steps.
        steps: usize = 10_000,
        batch_size: usize = 8,
        learning_rate: f64 = 1e-4,
        /// Steps between intermediate checkpoints (0 = final only).
        checkpoint_interval: usize = 0,
        base_width: usize = 32,
        /// U-Net resolution levels.
        depth: usize = 2,
        /// Residual blocks per level.
        res_blocks: usize = 2,
        time_embed_dim: usize = 128,
        /// Group-norm groups.
        groups: usize = 8,
        /// Number of images to sample.
        count: usize = 8,
        /// Synthetic scene: bands.
        bands: usize = 64,
        /// Synthetic scene: rows.
        height: usize = 96,
        /// Synthetic scene: columns.
        width: usize = 96,
        /// Synthetic scene: spatial blur of the abundance fields, in pixels.
        smoothness: f64 = 3.0,
        /// Synthetic scene: power applied to abundances before renormalising.
        sharpness: f64 = 4.0,
        /// Synthetic scene: additive Gaussian noise level.
        noise: f64 = 0.0,
        /// Synthetic scene: plant one pure pixel per endmember.
        pure_pixels: bool = true,
    }
    optional {
        /// Input cube (HSC header path).
        input: PathBuf,
        /// Output file for make-synthetic and export-rgb.
        output: PathBuf,
        /// Endmember file [default: <out>/endmembers/endmembers.hsc].
        endmembers: PathBuf,
        /// Checkpoint directory [default: <out>/checkpoints/final].
        checkpoint: PathBuf,
        /// Directory of generated cubes [default: <out>/samples].
        samples: PathBuf,
        /// First β of the linear noise schedule [default: 1e-4 scaled by 1000/T].
        beta_start: f64,
        /// Last β of the linear noise schedule [default: 0.02 scaled by 1000/T].
        beta_end: f64,
        /// Generated image size [default: training patch size].
        size: usize,
        /// Metric block size [default: generated image size].
        block_size: usize,
        /// Stride between generated blocks [default: block size].
        stride: usize,
        /// Pseudo-color red band (0-based) [default: 3/4 of the band count].
        red: usize,
        /// Pseudo-color green band (0-based) [default: 1/2 of the band count].
        green: usize,
        /// Pseudo-color blue band (0-based) [default: 1/4 of the band count].
        blue: usize,
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid config file {}", path.display()))
    }

    pub fn dump(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Defaults, then the file (if any), then the flags.
    pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match file {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        overrides.apply(&mut cfg);
        Ok(cfg)
    }

    pub fn endmembers_dir(&self) -> PathBuf {
        self.out.join("endmembers")
    }

    pub fn checkpoints_dir(&self) -> PathBuf {
        self.out.join("checkpoints")
    }

    pub fn samples_dir(&self) -> PathBuf {
        self.samples
            .clone()
            .unwrap_or_else(|| self.out.join("samples"))
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.out.join("reports")
    }

    pub fn endmembers_path(&self) -> PathBuf {
        self.endmembers
            .clone()
            .unwrap_or_else(|| self.endmembers_dir().join("endmembers.hsc"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.checkpoints_dir().join("final"))
    }
}
