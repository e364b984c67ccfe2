//! Checkpoint directories.
//!
//! A checkpoint is a directory holding
//!
//! * `meta.json`: schedule parameters, model hyperparameters, the endmember
//!   reference, training step, seed, dataset reference and the canonical
//!   parameter order as `[name, length]` pairs;
//! * `params.bin`: every model parameter as a little-endian `f32`, in that
//!   canonical order;
//! * `endmembers.hsc` (+ `.raw` payload, + `.json` sidecar): the frozen
//!   decoder.
//!
//! Nothing time-dependent is recorded, so equal runs give byte-identical
//! directories.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::schedule::ScheduleParams;
use super::train::{TrainConfig, TrainMonitor};
use super::{DenoiserModel, ModelConfig};
use crate::unmixing::{load_endmembers, save_endmembers, UnmixingAutoencoder};
use crate::{Error, HsiCube, Result};

pub const CHECKPOINT_FORMAT: &str = "hud-checkpoint/1";
const META: &str = "meta.json";
const PARAMS: &str = "params.bin";
const ENDMEMBERS: &str = "endmembers.hsc";

/// Identifies the scene a model was trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub path: String,
    /// SHA-256 of the cube dimensions and payload, hex encoded.
    pub fingerprint: String,
}

impl DatasetRef {
    pub fn new(path: impl Into<String>, cube: &HsiCube) -> Self {
        let mut h = Sha256::new();
        for dim in [cube.bands, cube.height, cube.width] {
            h.update((dim as u64).to_le_bytes());
        }
        for v in &cube.data {
            h.update(v.to_le_bytes());
        }
        Self {
            path: path.into(),
            fingerprint: format!("{:x}", h.finalize()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndmemberRef {
    pub file: String,
    pub bands: usize,
    pub d: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub schedule: ScheduleParams,
    pub model: ModelConfig,
    pub endmembers: EndmemberRef,
    pub step: usize,
    pub seed: u64,
    pub dataset: Option<DatasetRef>,
    pub train: Option<TrainConfig>,
    pub param_count: usize,
    pub param_order: Vec<(String, usize)>,
}

impl CheckpointMeta {
    pub fn new(
        model: &DenoiserModel,
        uae: &UnmixingAutoencoder,
        schedule: ScheduleParams,
        endmember_seed: u64,
        train: Option<TrainConfig>,
        dataset: Option<DatasetRef>,
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            schedule,
            model: *model.config(),
            endmembers: EndmemberRef {
                file: ENDMEMBERS.into(),
                bands: uae.bands(),
                d: uae.d(),
                seed: endmember_seed,
            },
            step: 0,
            seed: train.as_ref().map_or(0, |t| t.seed),
            dataset,
            train,
            param_count: model.param_count(),
            param_order: model.param_names(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model: DenoiserModel,
    pub uae: UnmixingAutoencoder,
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn save_checkpoint(
    dir: impl AsRef<Path>,
    meta: &CheckpointMeta,
    model: &DenoiserModel,
    uae: &UnmixingAutoencoder,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let text = serde_json::to_string_pretty(meta).expect("meta serializes") + "\n";
    write(&dir.join(META), text.as_bytes())?;
    let mut raw = Vec::with_capacity(model.params.len() * 4);
    for v in &model.params {
        raw.extend_from_slice(&v.to_le_bytes());
    }
    write(&dir.join(PARAMS), &raw)?;
    save_endmembers(uae.endmembers(), meta.endmembers.seed, dir.join(ENDMEMBERS))
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Checkpoint> {
    let dir = dir.as_ref();
    let meta_path = dir.join(META);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| Error::Header {
        path: meta_path.clone(),
        message: e.to_string(),
    })?;
    if meta.format != CHECKPOINT_FORMAT {
        return Err(Error::Header {
            path: meta_path,
            message: format!("unknown checkpoint format {:?}", meta.format),
        });
    }
    let params_path = dir.join(PARAMS);
    let raw = fs::read(&params_path).map_err(|e| Error::io(&params_path, e))?;
    if raw.len() != meta.param_count * 4 {
        return Err(Error::SizeMismatch {
            path: params_path,
            expected: meta.param_count,
            found: raw.len(),
        });
    }
    let params = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let model = DenoiserModel::from_params(meta.model, params)?;
    if model.param_names() != meta.param_order {
        return Err(Error::Header {
            path: dir.join(META),
            message: "parameter order does not match the model configuration".into(),
        });
    }
    let (a, _) = load_endmembers(dir.join(&meta.endmembers.file))?;
    let uae = UnmixingAutoencoder::new(a)?;
    if uae.d() != meta.model.d {
        return Err(Error::Shape(
            "endmember count differs from model channels".into(),
        ));
    }
    Ok(Checkpoint { meta, model, uae })
}

/// Training monitor that appends `step,loss` rows to a CSV log and writes
/// `step-NNNNNN/` checkpoints under a root directory.
pub struct CheckpointWriter {
    root: PathBuf,
    meta: CheckpointMeta,
    uae: UnmixingAutoencoder,
    log: BufWriter<File>,
}

impl CheckpointWriter {
    pub fn new(
        root: impl Into<PathBuf>,
        meta: CheckpointMeta,
        uae: UnmixingAutoencoder,
    ) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let log_path = root.join("train_log.csv");
        let file = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
        let mut log = BufWriter::new(file);
        writeln!(log, "step,loss").map_err(|e| Error::io(&log_path, e))?;
        Ok(Self {
            root,
            meta,
            uae,
            log,
        })
    }

    pub fn step_dir(&self, step: usize) -> PathBuf {
        self.root.join(format!("step-{step:06}"))
    }

    /// Writes the final checkpoint to `<root>/final` and flushes the log.
    pub fn finish(mut self, step: usize, model: &DenoiserModel) -> Result<PathBuf> {
        self.flush()?;
        let dir = self.root.join("final");
        let mut meta = self.meta.clone();
        meta.step = step;
        save_checkpoint(&dir, &meta, model, &self.uae)?;
        Ok(dir)
    }

    fn flush(&mut self) -> Result<()> {
        let path = self.root.join("train_log.csv");
        self.log.flush().map_err(|e| Error::io(path, e))
    }
}

impl TrainMonitor for CheckpointWriter {
    fn on_step(&mut self, step: usize, loss: f64) -> Result<()> {
        writeln!(self.log, "{step},{loss}")
            .map_err(|e| Error::io(self.root.join("train_log.csv"), e))
    }

    fn on_checkpoint(&mut self, step: usize, model: &DenoiserModel) -> Result<()> {
        self.flush()?;
        let mut meta = self.meta.clone();
        meta.step = step;
        save_checkpoint(self.step_dir(step), &meta, model, &self.uae)
    }
}
