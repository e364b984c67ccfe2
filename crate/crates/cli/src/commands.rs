use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use hud_core::diffusion::{
    load_checkpoint, sample, train, CheckpointMeta, CheckpointWriter, DatasetRef, DenoiserModel,
    ModelConfig, ScheduleParams, TrainConfig, TrainMonitor,
};
use hud_core::io::{export_pseudocolor, extract_patches, load_cube, normalize, save_cube};
use hud_core::metrics::metric_report;
use hud_core::synthetic::{make_synthetic, SyntheticConfig};
use hud_core::unmixing::{
    decode, encode, load_endmembers, reconstruction_report, save_endmembers, solve_abundance_fcls,
    vca, EncodeMode, UnmixingAutoencoder,
};
use hud_core::HsiCube;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::RunConfig;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create directory {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn input_path(cfg: &RunConfig) -> Result<&Path> {
    let path = cfg.input.as_deref().context("--input is required")?;
    ensure!(
        path.exists(),
        "input file {} does not exist",
        path.display()
    );
    Ok(path)
}

/// Loads the input scene, scaled by its global maximum when configured.
fn load_scene(cfg: &RunConfig) -> Result<(HsiCube, HsiCube)> {
    let raw = load_cube(input_path(cfg)?)?;
    let cube = if cfg.normalize {
        normalize(&raw)?.0
    } else {
        raw.clone()
    };
    Ok((raw, cube))
}

fn positive(values: &[(&str, usize)]) -> Result<()> {
    for (name, v) in values {
        ensure!(*v > 0, "{name} must be positive");
    }
    Ok(())
}

pub fn make_synthetic_scene(cfg: &RunConfig) -> Result<()> {
    let scene = make_synthetic(&SyntheticConfig {
        bands: cfg.bands,
        endmembers: cfg.d,
        height: cfg.height,
        width: cfg.width,
        smoothness: cfg.smoothness,
        sharpness: cfg.sharpness,
        noise: cfg.noise,
        pure_pixels: cfg.pure_pixels,
        seed: cfg.seed,
    })?;
    let output = cfg
        .output
        .clone()
        .unwrap_or_else(|| cfg.out.join("scene.hsc"));
    if let Some(parent) = output.parent() {
        create_dir(parent)?;
    }
    save_cube(&scene.cube, &output)?;
    let truth = cfg.out.join("truth");
    create_dir(&truth)?;
    save_cube(&scene.endmembers.to_cube(), truth.join("endmembers.hsc"))?;
    save_cube(
        &scene.abundances.field().to_cube(),
        truth.join("abundances.hsc"),
    )?;
    eprintln!(
        "wrote {}x{}x{} scene to {}",
        scene.cube.bands,
        scene.cube.height,
        scene.cube.width,
        output.display()
    );
    Ok(())
}

pub fn unmix(cfg: &RunConfig) -> Result<()> {
    let (_, cube) = load_scene(cfg)?;
    let a = vca(&cube, cfg.d, cfg.seed)?;
    let uae = UnmixingAutoencoder::new(a)?;
    let (x, fcls) = match cfg.mode {
        EncodeMode::Fcls => {
            let (x, diag) = solve_abundance_fcls(uae.endmembers(), &cube, uae.fcls)?;
            (x, Some(diag))
        }
        EncodeMode::Linear => (encode(&uae, &cube, EncodeMode::Linear)?, None),
    };
    let report = reconstruction_report(&cube, &decode(&uae, &x)?)?;

    let dir = cfg.endmembers_dir();
    create_dir(&dir)?;
    let endmembers = dir.join("endmembers.hsc");
    save_endmembers(uae.endmembers(), cfg.seed, &endmembers)?;
    save_cube(&x.field().to_cube(), dir.join("abundances.hsc"))?;
    let reports = cfg.reports_dir();
    create_dir(&reports)?;
    let summary = json!({
        "d": uae.d(),
        "mode": cfg.mode.to_string(),
        "seed": cfg.seed,
        "rmse": report.rmse,
        "mean_spectral_angle": report.mean_spectral_angle,
        "fcls": fcls,
    });
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    write_text(&reports.join("unmix.json"), &text)?;
    eprintln!(
        "{} endmembers written to {}; rmse {:.3e}, mean spectral angle {:.3e} rad",
        uae.d(),
        endmembers.display(),
        report.rmse,
        report.mean_spectral_angle
    );
    Ok(())
}

/// Marks a checkpoint directory as belonging to one scene.
#[derive(Debug, Serialize, Deserialize)]
struct DatasetLock {
    dataset: DatasetRef,
}

fn claim_checkpoint_dir(dir: &Path, dataset: &DatasetRef) -> Result<()> {
    let lock_path = dir.join("dataset.json");
    if lock_path.exists() {
        let text = fs::read_to_string(&lock_path)
            .with_context(|| format!("cannot read {}", lock_path.display()))?;
        let lock: DatasetLock = serde_json::from_str(&text)
            .with_context(|| format!("invalid {}", lock_path.display()))?;
        if lock.dataset.fingerprint != dataset.fingerprint {
            bail!(
                "{} holds a model for a different scene ({}); use a separate --out per dataset",
                dir.display(),
                lock.dataset.path
            );
        }
        return Ok(());
    }
    let lock = DatasetLock {
        dataset: dataset.clone(),
    };
    write_text(&lock_path, &(serde_json::to_string_pretty(&lock)? + "\n"))
}

/// Forwards to the checkpoint writer and prints occasional progress.
struct Progress<'a> {
    inner: &'a mut CheckpointWriter,
    total: usize,
    every: usize,
    running: f64,
    seen: usize,
}

impl TrainMonitor for Progress<'_> {
    fn on_step(&mut self, step: usize, loss: f64) -> hud_core::Result<()> {
        self.inner.on_step(step, loss)?;
        self.running += loss;
        self.seen += 1;
        if step.is_multiple_of(self.every) || step == self.total {
            eprintln!(
                "step {step}/{} loss {:.5}",
                self.total,
                self.running / self.seen as f64
            );
            self.running = 0.0;
            self.seen = 0;
        }
        Ok(())
    }

    fn on_checkpoint(&mut self, step: usize, model: &DenoiserModel) -> hud_core::Result<()> {
        self.inner.on_checkpoint(step, model)
    }
}

pub fn schedule_params(cfg: &RunConfig) -> ScheduleParams {
    let mut p = ScheduleParams::scaled(cfg.timesteps);
    if let Some(b) = cfg.beta_start {
        p.beta_start = b;
    }
    if let Some(b) = cfg.beta_end {
        p.beta_end = b;
    }
    p
}

pub fn train_model(cfg: &RunConfig) -> Result<()> {
    positive(&[
        ("patch-size", cfg.patch_size),
        ("patches", cfg.patches),
        ("timesteps", cfg.timesteps),
        ("batch-size", cfg.batch_size),
    ])?;
    ensure!(cfg.learning_rate > 0.0, "learning-rate must be positive");
    let (raw, cube) = load_scene(cfg)?;
    let endmembers = cfg.endmembers_path();
    ensure!(
        endmembers.exists(),
        "endmember file {} does not exist; run `hud unmix` first",
        endmembers.display()
    );
    let (a, sidecar) = load_endmembers(&endmembers)?;
    let uae = UnmixingAutoencoder::new(a)?;
    let model = DenoiserModel::new(ModelConfig {
        d: uae.d(),
        base_width: cfg.base_width,
        depth: cfg.depth,
        res_blocks: cfg.res_blocks,
        time_embed_dim: cfg.time_embed_dim,
        groups: cfg.groups,
        seed: cfg.seed,
    })?;
    let multiple = model.config().size_multiple();
    ensure!(
        cfg.patch_size.is_multiple_of(multiple),
        "patch-size {} must be a multiple of {multiple} for depth {}",
        cfg.patch_size,
        cfg.depth
    );
    let schedule = schedule_params(cfg);
    schedule.build()?;
    let train_cfg = TrainConfig {
        steps: cfg.steps,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        seed: cfg.seed,
        schedule,
        patch_size: cfg.patch_size,
        checkpoint_interval: cfg.checkpoint_interval,
        encode_mode: cfg.mode,
    };
    let patches = extract_patches(&cube, cfg.patch_size, cfg.patches, cfg.seed)?;

    let name = input_path(cfg)?
        .file_name()
        .map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    let dataset = DatasetRef::new(name, &raw);
    let dir = cfg.checkpoints_dir();
    create_dir(&dir)?;
    claim_checkpoint_dir(&dir, &dataset)?;

    let endmember_seed = sidecar.map_or(cfg.seed, |s| s.seed);
    let meta = CheckpointMeta::new(
        &model,
        &uae,
        schedule,
        endmember_seed,
        Some(train_cfg.clone()),
        Some(dataset),
    );
    eprintln!(
        "training {} parameters for {} steps on {} patches of {}x{}",
        model.param_count(),
        cfg.steps,
        patches.len(),
        cfg.patch_size,
        cfg.patch_size
    );
    let mut writer = CheckpointWriter::new(&dir, meta, uae.clone())?;
    let mut progress = Progress {
        inner: &mut writer,
        total: cfg.steps,
        every: (cfg.steps / 20).max(1),
        running: 0.0,
        seen: 0,
    };
    let trained = train(model, &patches, &uae, &train_cfg, &mut progress)?;
    let final_dir = writer.finish(cfg.steps, &trained)?;
    eprintln!("checkpoint written to {}", final_dir.display());
    Ok(())
}

fn is_sample_file(name: &str, prefix: &str) -> bool {
    name.starts_with(prefix) && name.ends_with(".hsc")
}

fn remove_previous_samples(dir: &Path) -> Result<()> {
    for entry in fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display()))? {
        let path = entry?.path();
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let stem = name.strip_suffix(".raw").unwrap_or(&name);
        if is_sample_file(stem, "sample-") || is_sample_file(stem, "abundance-") {
            fs::remove_file(&path).with_context(|| format!("cannot remove {}", path.display()))?;
        }
    }
    Ok(())
}

pub fn sample_images(cfg: &RunConfig) -> Result<()> {
    positive(&[("count", cfg.count)])?;
    let ckpt_dir = cfg.checkpoint_path();
    ensure!(
        ckpt_dir.join("meta.json").exists(),
        "no checkpoint at {}; run `hud train` first or pass --checkpoint",
        ckpt_dir.display()
    );
    let ckpt = load_checkpoint(&ckpt_dir)?;
    let schedule = ckpt.meta.schedule.build()?;
    let size = cfg
        .size
        .or(ckpt.meta.train.as_ref().map(|t| t.patch_size))
        .unwrap_or(cfg.patch_size);
    let samples = sample(&ckpt.model, &schedule, &ckpt.uae, cfg.count, size, cfg.seed)?;
    let dir = cfg.samples_dir();
    create_dir(&dir)?;
    remove_previous_samples(&dir)?;
    for (i, s) in samples.iter().enumerate() {
        save_cube(&s.cube, dir.join(format!("sample-{i:03}.hsc")))?;
        save_cube(
            &s.abundance.field().to_cube(),
            dir.join(format!("abundance-{i:03}.hsc")),
        )?;
    }
    eprintln!(
        "{} samples of {size}x{size} written to {}",
        samples.len(),
        dir.display()
    );
    Ok(())
}

pub fn list_samples(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot list {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| is_sample_file(n, "sample-"))
        })
        .collect();
    paths.sort();
    Ok(paths)
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let (_, real) = load_scene(cfg)?;
    let dir = cfg.samples_dir();
    let paths = list_samples(&dir)?;
    ensure!(
        !paths.is_empty(),
        "no sample-*.hsc files in {}",
        dir.display()
    );
    let generated = paths
        .iter()
        .map(load_cube)
        .collect::<hud_core::Result<Vec<_>>>()?;
    let first = &generated[0];
    let block = cfg.block_size.unwrap_or(first.height.min(first.width));
    let stride = cfg.stride.unwrap_or(block);
    let report = metric_report(&generated, &real, block, stride)?;
    let reports = cfg.reports_dir();
    create_dir(&reports)?;
    let json = report.to_json();
    write_text(&reports.join("metrics.json"), &json)?;
    print!("{json}");
    Ok(())
}

pub fn export_rgb(cfg: &RunConfig) -> Result<()> {
    let cube = load_cube(input_path(cfg)?)?;
    let c = cube.bands;
    let r = cfg.red.unwrap_or(3 * c / 4);
    let g = cfg.green.unwrap_or(c / 2);
    let b = cfg.blue.unwrap_or(c / 4);
    let output = cfg
        .output
        .clone()
        .unwrap_or_else(|| cfg.out.join("rgb.png"));
    if let Some(parent) = output.parent() {
        create_dir(parent)?;
    }
    export_pseudocolor(&cube, r, g, b, &output)?;
    eprintln!("bands ({r}, {g}, {b}) written to {}", output.display());
    Ok(())
}
