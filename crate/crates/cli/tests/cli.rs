use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dae_cli::{evaluate_codes, load_data, load_model, median_codes, traversal_frames};
use dae_core::datasets::{save_dataset, FactorDataset, FactorSpec};
use dae_core::metrics::{FactorMatrix, LatentMatrix, MetricConfig, MetricReport};
use dae_core::model::Autoencoder;
use dae_core::tensor::Tensor;

fn dae<P: AsRef<std::ffi::OsStr>>(args: &[P]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dae"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_owned()
}

fn gen(dir: &Path, name: &str, variant: &str, grid: usize, side: usize) -> PathBuf {
    let out = dir.join(name);
    let o = dae(&[
        "gen-data",
        "--variant",
        variant,
        "--grid",
        &grid.to_string(),
        "--side",
        &side.to_string(),
        "--out",
        &s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

/// Small DAE with Λ = [1, 1] on a 6×6 XY grid.
fn small_dae(dir: &Path, data: &Path, sub: &str, seed: u64) -> PathBuf {
    let out = dir.join(sub);
    let o = dae(&[
        "train",
        "--data",
        &s(data),
        "--model",
        "dae",
        "--lambda",
        "1,1",
        "--epochs",
        "3",
        "--batch-size",
        "16",
        "--hidden",
        "32,16",
        "--seed",
        &seed.to_string(),
        "--quiet",
        "--out",
        &s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

#[test]
fn gen_data_xy_desk_size_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(dir.path(), "a.fds", "XY", 16, 32);
    let b = gen(dir.path(), "b.fds", "XY", 16, 32);
    let (ds, _) = load_data(&a).unwrap();
    assert_eq!(ds.len(), 256);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let manifest = fs::read_to_string(dir.path().join("a.fds.manifest.txt")).unwrap();
    assert!(manifest.contains("n_samples: 256"));
    assert!(manifest.contains("dataset_sha256: "));
}

#[test]
fn unknown_variant_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = dae(&["gen-data", "--variant", "XYZQ", "--out", &s(&dir.path().join("x"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn help_succeeds() {
    assert_eq!(code(&dae(&["--help"])), 0);
    assert_eq!(code(&dae(&["train", "--help"])), 0);
}

#[test]
fn missing_dataset_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = dae(&[
        "train",
        "--data",
        &s(&dir.path().join("nope.fds")),
        "--out",
        &s(dir.path()),
    ]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(stderr(&o).contains("nope.fds"));
}

#[test]
fn identical_images_are_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.fds");
    let ds = FactorDataset::new(
        4,
        vec![0.5; 8 * 16],
        (0..8).collect(),
        vec![FactorSpec::new("x", 8).unwrap()],
    )
    .unwrap();
    save_dataset(&ds, &path).unwrap();
    let o = dae(&["pca", "--data", &s(&path), "--latent-dim", "1"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn pca_rejects_too_many_components() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "xy.fds", "XY", 3, 12);
    let o = dae(&["pca", "--data", &s(&data), "--latent-dim", "10"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn pca_lambda_file_feeds_train() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "xy.fds", "XY", 6, 16);
    let lam = dir.path().join("lambda.txt");
    let o = dae(&["pca", "--data", &s(&data), "--latent-dim", "2", "--lambda-out", &s(&lam)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("S_bar: [1.0000, "), "{text}");
    let out = dir.path().join("run");
    let o = dae(&[
        "train",
        "--data",
        &s(&data),
        "--lambda-file",
        &s(&lam),
        "--epochs",
        "1",
        "--hidden",
        "8",
        "--quiet",
        "--out",
        &s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest = fs::read_to_string(out.join("train_manifest.txt")).unwrap();
    assert!(manifest.contains("lambda_source: file"));
}

#[test]
fn train_outputs_and_rerun_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "xy.fds", "XY", 6, 16);
    let a = small_dae(dir.path(), &data, "a", 7);
    let b = small_dae(dir.path(), &data, "b", 7);
    let log = fs::read_to_string(a.join("loss.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("epoch,mean_loss"));
    assert_eq!(log.lines().count(), 4);
    assert_eq!(log, fs::read_to_string(b.join("loss.csv")).unwrap());
    assert_eq!(fs::read(a.join("model.dae")).unwrap(), fs::read(b.join("model.dae")).unwrap());

    let manifest = fs::read_to_string(a.join("train_manifest.txt")).unwrap();
    for key in [
        "command: train",
        "model: dae",
        "lambda: 1,1",
        "epochs: 3",
        "batch_size: 16",
        "seed: 7",
        "hidden: 32,16",
        "final_loss: ",
        "dataset_sha256: ",
        "wall_clock_s: ",
    ] {
        assert!(manifest.contains(key), "missing {key:?} in\n{manifest}");
    }
}

#[test]
fn baselines_train() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "xy.fds", "XY", 4, 12);
    for model in ["ae", "vae", "beta_vae"] {
        let out = dir.path().join(model);
        let o = dae(&[
            "train", "--data", &s(&data), "--model", model, "--epochs", "1", "--hidden", "8",
            "--quiet", "--out", &s(&out),
        ]);
        assert_eq!(code(&o), 0, "{model}: {}", stderr(&o));
        let (m, _) = load_model(&out.join("model.dae")).unwrap();
        assert_eq!(m.latent_dim(), 2);
    }
    let manifest = fs::read_to_string(dir.path().join("beta_vae/train_manifest.txt")).unwrap();
    assert!(manifest.contains("beta: 4"));
}

#[test]
fn eval_report_schema_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "xy.fds", "XY", 6, 16);
    let run = small_dae(dir.path(), &data, "run", 0);
    let ckpt = run.join("model.dae");
    let eval = |out: &str| {
        let out = dir.path().join(out);
        let o = dae(&[
            "eval",
            "--checkpoint",
            &s(&ckpt),
            "--data",
            &s(&data),
            "--n-train",
            "50",
            "--n-test",
            "20",
            "--group-size",
            "8",
            "--out",
            &s(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        out
    };
    let a = eval("ea");
    let b = eval("eb");
    let text = fs::read_to_string(a.join("report.txt")).unwrap();
    assert_eq!(text, fs::read_to_string(b.join("report.txt")).unwrap());
    let scores: Vec<&str> = text
        .lines()
        .filter(|l| MetricReport::SCORE_NAMES.iter().any(|n| l.starts_with(&format!("{n}:"))))
        .collect();
    assert_eq!(scores.len(), 5);
    assert!(text.contains("probe_factor_0_dominant_dim: "));
    assert!(text.contains("probe_factor_1_alignment_ratio: "));

    let csv = fs::read_to_string(a.join("report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("z_diff,z_var,dci_rf,jemmig,dcimig"));
    assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
    assert!(a.join("eval_manifest.txt").exists());
}

#[test]
fn eval_rejects_incompatible_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "xy.fds", "XY", 6, 16);
    let other = gen(dir.path(), "big.fds", "XY", 6, 20);
    let run = small_dae(dir.path(), &data, "run", 0);
    let o = dae(&[
        "eval",
        "--checkpoint",
        &s(&run.join("model.dae")),
        "--data",
        &s(&other),
        "--out",
        &s(&dir.path().join("e")),
    ]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("256") && err.contains("400"), "{err}");
}

#[test]
fn identity_codes_score_high() {
    let mut labels = Vec::new();
    let mut codes = Vec::new();
    for x in 0..16u16 {
        for y in 0..16u16 {
            labels.extend([x, y]);
            codes.extend([f64::from(x) / 15.0, f64::from(y) / 15.0]);
        }
    }
    let v = FactorMatrix::new(labels, vec![16, 16]).unwrap();
    let z = LatentMatrix::new(256, 2, codes).unwrap();
    let report = evaluate_codes(&z, &v, &MetricConfig::default(), 1).unwrap();
    for (name, score) in MetricReport::SCORE_NAMES.iter().zip(report.scores()) {
        assert!(score >= 0.9, "{name} = {score}");
    }
    assert_eq!(report.probes.len(), 2);
    assert_eq!(report.probes[1].dominant_dim, 1);
}

fn read_pgm(path: &Path) -> (usize, usize, Vec<u8>) {
    let bytes = fs::read(path).unwrap();
    let header: Vec<&[u8]> = bytes.splitn(4, |&b| b == b'\n').collect();
    assert_eq!(header[0], b"P5");
    let dims = std::str::from_utf8(header[1]).unwrap();
    let (w, h) = dims.split_once(' ').unwrap();
    assert_eq!(header[2], b"255");
    (w.parse().unwrap(), h.parse().unwrap(), header[3].to_vec())
}

#[test]
fn traverse_strip_layout_and_median_frame() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "xy.fds", "XY", 6, 16);
    let run = small_dae(dir.path(), &data, "run", 0);
    let ckpt = run.join("model.dae");
    let strip = dir.path().join("t.pgm");
    let o = dae(&[
        "traverse", "--checkpoint", &s(&ckpt), "--data", &s(&data), "--dim", "1", "--steps", "5",
        "--out", &s(&strip),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (w, h, px) = read_pgm(&strip);
    assert_eq!((w, h), (5 * 16, 16));
    assert_eq!(px.len(), w * h);

    let single = dir.path().join("one.pgm");
    let o = dae(&[
        "traverse", "--checkpoint", &s(&ckpt), "--data", &s(&data), "--dim", "0", "--steps", "1",
        "--out", &s(&single),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (w, h, px) = read_pgm(&single);
    assert_eq!((w, h), (16, 16));

    let (model, _) = load_model(&ckpt).unwrap();
    let (ds, _) = load_data(&data).unwrap();
    let z = LatentMatrix::from_tensor(&model.latents(&ds.slice(0, ds.len())).unwrap()).unwrap();
    let median = median_codes(&z);
    let rec = model
        .decode_latents(&Tensor::matrix(1, 2, median).unwrap())
        .unwrap();
    let expect: Vec<u8> = rec
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    assert_eq!(px, expect);

    let o = dae(&[
        "traverse", "--checkpoint", &s(&ckpt), "--data", &s(&data), "--dim", "2", "--out",
        &s(&dir.path().join("bad.pgm")),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn traversal_is_periodic_in_the_scale_entry() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "xy.fds", "XY", 6, 16);
    let run = small_dae(dir.path(), &data, "run", 3);
    let (model, _) = load_model(&run.join("model.dae")).unwrap();
    let w = model.as_dae().unwrap().config.lambda.weights()[0];
    assert_eq!(w, 1.0);
    for base in [[0.2, 0.7], [0.95, 0.1]] {
        let shifted = [base[0] + w, base[1]];
        let a = traversal_frames(&model, &base, 0, 6, (0.0, 1.0)).unwrap();
        let b = traversal_frames(&model, &shifted, 0, 6, (0.0, 1.0)).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }
}

#[test]
fn scatter_rows_and_header() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "xy.fds", "XY", 6, 16);
    let run = small_dae(dir.path(), &data, "run", 0);
    let out = dir.path().join("sc.csv");
    let o = dae(&[
        "scatter", "--checkpoint", &s(&run.join("model.dae")), "--data", &s(&data), "--dims",
        "1,0", "--out", &s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("occupancy: "));
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "z_1,z_0,x,y");
    assert_eq!(lines.len(), 1 + 36);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 4));

    let o = dae(&[
        "scatter", "--checkpoint", &s(&run.join("model.dae")), "--data", &s(&data), "--dims",
        "0,5", "--out", &s(&out),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "xy.fds", "XY", 4, 12);
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "# small run\nmodel = ae\nepochs = 4\nseed = 9\nhidden = 8\nquiet = true\n",
    )
    .unwrap();
    let out = dir.path().join("run");
    let o = dae(&[
        "train",
        "--config",
        &s(&cfg),
        "--data",
        &s(&data),
        "--epochs",
        "2",
        "--out",
        &s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).is_empty(), "quiet came from the file");
    let manifest = fs::read_to_string(out.join("train_manifest.txt")).unwrap();
    assert!(manifest.contains("epochs: 2"));
    assert!(manifest.contains("seed: 9"));
    assert!(manifest.contains("model: ae"));
    assert_eq!(fs::read_to_string(out.join("loss.csv")).unwrap().lines().count(), 3);
}

#[test]
fn missing_config_file_is_io_error() {
    let o = dae(&["pca", "--config", "/nonexistent/run.cfg"]);
    assert_eq!(code(&o), 1);
}
