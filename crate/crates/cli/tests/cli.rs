use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hud(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hud"))
        .args(args)
        .current_dir(dir)
        .env("HUD_THREADS", "0")
        .output()
        .expect("hud runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = hud(dir, args);
    assert!(
        out.status.success(),
        "hud {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const SMALL_SCENE: &[&str] = &["--height", "24", "--width", "24", "--bands", "32"];
const TINY_MODEL: &[&str] = &[
    "--patch-size",
    "8",
    "--patches",
    "16",
    "--steps",
    "4",
    "--batch-size",
    "2",
    "--timesteps",
    "10",
    "--base-width",
    "8",
    "--depth",
    "2",
    "--res-blocks",
    "1",
    "--time-embed-dim",
    "8",
    "--groups",
    "4",
];

fn with(base: &[&str], extra: &[&str]) -> Vec<String> {
    base.iter().chain(extra).map(|s| s.to_string()).collect()
}

fn run(dir: &Path, args: Vec<String>) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(dir, &refs)
}

#[test]
fn unmix_writes_endmembers_and_abundances() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    run(
        dir,
        with(
            &[
                "make-synthetic",
                "--d",
                "9",
                "--output",
                "scene.hsc",
                "--out",
                "syn",
            ],
            SMALL_SCENE,
        ),
    );
    ok(
        dir,
        &[
            "unmix",
            "--input",
            "scene.hsc",
            "--d",
            "9",
            "--mode",
            "fcls",
            "--out",
            "uae/",
        ],
    );
    for f in [
        "endmembers/endmembers.hsc",
        "endmembers/endmembers.hsc.raw",
        "endmembers/endmembers.json",
        "endmembers/abundances.hsc",
        "reports/unmix.json",
    ] {
        assert!(dir.join("uae").join(f).exists(), "missing {f}");
    }
    let side: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.join("uae/endmembers/endmembers.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(side["d"], 9);
    assert_eq!(side["mode"], "vca");
    let a = hud_core::io::load_cube(dir.join("uae/endmembers/abundances.hsc")).unwrap();
    assert_eq!((a.bands, a.height, a.width), (9, 24, 24));
}

#[test]
fn pipeline_and_sampling_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    run(dir, with(&["make-synthetic", "--out", "o"], SMALL_SCENE));
    ok(dir, &["unmix", "--input", "o/scene.hsc", "--out", "o"]);
    run(
        dir,
        with(
            &[
                "train",
                "--input",
                "o/scene.hsc",
                "--out",
                "o",
                "--checkpoint-interval",
                "2",
            ],
            TINY_MODEL,
        ),
    );
    assert!(dir.join("o/checkpoints/step-000002/params.bin").exists());
    let log = fs::read_to_string(dir.join("o/checkpoints/train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 5);

    ok(
        dir,
        &[
            "sample",
            "--out",
            "o",
            "--checkpoint",
            "o/checkpoints/final",
            "--count",
            "4",
            "--seed",
            "7",
        ],
    );
    let first = fs::read(dir.join("o/samples/sample-003.hsc.raw")).unwrap();
    ok(
        dir,
        &[
            "sample",
            "--out",
            "o",
            "--checkpoint",
            "o/checkpoints/final",
            "--count",
            "4",
            "--seed",
            "7",
        ],
    );
    assert_eq!(
        fs::read(dir.join("o/samples/sample-003.hsc.raw")).unwrap(),
        first
    );
    let cube = hud_core::io::load_cube(dir.join("o/samples/sample-000.hsc")).unwrap();
    assert_eq!((cube.bands, cube.height, cube.width), (32, 8, 8));

    let out = ok(dir, &["eval", "--input", "o/scene.hsc", "--out", "o"]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["N_b"], 4);
    assert!(report["F_p"].as_f64().unwrap() > 0.5);
    assert!(dir.join("o/reports/metrics.json").exists());

    ok(
        dir,
        &["sample", "--out", "o", "--count", "2", "--seed", "7"],
    );
    assert!(!dir.join("o/samples/sample-003.hsc").exists());
}

#[test]
fn one_checkpoint_directory_per_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    run(
        dir,
        with(
            &["make-synthetic", "--out", "o", "--output", "a.hsc"],
            SMALL_SCENE,
        ),
    );
    run(
        dir,
        with(
            &[
                "make-synthetic",
                "--out",
                "o",
                "--output",
                "b.hsc",
                "--seed",
                "1",
            ],
            SMALL_SCENE,
        ),
    );
    ok(dir, &["unmix", "--input", "a.hsc", "--out", "o"]);
    run(
        dir,
        with(&["train", "--input", "a.hsc", "--out", "o"], TINY_MODEL),
    );
    run(
        dir,
        with(&["train", "--input", "a.hsc", "--out", "o"], TINY_MODEL),
    );
    let out = hud(
        dir,
        &with(&["train", "--input", "b.hsc", "--out", "o"], TINY_MODEL)
            .iter()
            .map(String::as_str)
            .collect::<Vec<_>>(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("different scene"));
}

#[test]
fn missing_config_file_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let out = hud(tmp.path(), &["train", "--config", "missing.toml"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.toml"));
}

#[test]
fn dumped_config_reloads_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let first = ok(
        dir,
        &[
            "train",
            "--steps",
            "123",
            "--mode",
            "fcls",
            "--beta-end",
            "0.05",
            "--input",
            "x.hsc",
            "--dump-config",
        ],
    );
    fs::write(dir.join("run.toml"), &first.stdout).unwrap();
    let second = ok(dir, &["train", "--config", "run.toml", "--dump-config"]);
    assert_eq!(first.stdout, second.stdout);
    let text = String::from_utf8(first.stdout).unwrap();
    assert!(text.contains("steps = 123"));
    let overridden = ok(
        dir,
        &[
            "train",
            "--config",
            "run.toml",
            "--steps",
            "7",
            "--dump-config",
        ],
    );
    assert!(String::from_utf8(overridden.stdout)
        .unwrap()
        .contains("steps = 7"));
}

#[test]
fn bad_invocations_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert!(!hud(dir, &["frobnicate"]).status.success());
    assert!(!hud(dir, &["unmix"]).status.success());
    assert!(!hud(dir, &["unmix", "--input", "nope.hsc"]).status.success());
    assert!(!hud(dir, &["sample", "--out", "empty"]).status.success());
    fs::write(dir.join("bad.toml"), "no-such-key = 1\n").unwrap();
    assert!(!hud(dir, &["train", "--config", "bad.toml"])
        .status
        .success());
}

#[test]
fn export_rgb_writes_png() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    run(dir, with(&["make-synthetic", "--out", "o"], SMALL_SCENE));
    ok(
        dir,
        &[
            "export-rgb",
            "--input",
            "o/scene.hsc",
            "--red",
            "20",
            "--green",
            "10",
            "--blue",
            "2",
            "--output",
            "rgb.png",
        ],
    );
    let png = fs::read(dir.join("rgb.png")).unwrap();
    assert_eq!(&png[..8], b"\x89PNG\r\n\x1a\n");
    assert!(!hud(
        dir,
        &["export-rgb", "--input", "o/scene.hsc", "--red", "32"]
    )
    .status
    .success());
}
