use std::fmt::Write as _;
use std::path::Path;

use dae_core::datasets::{generate_toy_dataset, read_dataset, write_dataset, FactorDataset, ToyConfig};
use dae_core::linalg::{compute_lambda, top_singular_values, LambdaVector, SingularSpectrum};
use dae_core::metrics::{
    equivariance_probe, evaluate, grid_occupancy, FactorMatrix, LatentMatrix, MetricConfig,
    MetricReport,
};
use dae_core::model::{
    read_checkpoint, train, write_checkpoint, AeConfig, Autoencoder, DaeConfig, DaeModel, Model,
    PlainAe, TrainConfig, VaeConfig, VaeModel,
};
use dae_core::tensor::{LossKind, Tensor};
use dae_core::{Error as CoreError, Rng, Stream};

use crate::args::{
    Command, EvalArgs, GenDataArgs, LossChoice, ModelChoice, PcaArgs, ScatterArgs, TrainArgs,
    TraverseArgs,
};
use crate::artifacts::{
    encode_pgm, read_file, sha256_hex, sidecar_manifest, write_atomic, Manifest,
};
use crate::error::{CliError, CliResult};

/// Runs one subcommand and returns its stdout summary.
pub fn run(command: Command) -> CliResult<String> {
    match command {
        Command::GenData(a) => gen_data(&a),
        Command::Pca(a) => pca(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Eval(a) => eval(&a),
        Command::Traverse(a) => traverse(&a),
        Command::Scatter(a) => scatter(&a),
    }
}

fn fmt_list(values: &[f64], decimals: usize) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.decimals$}")).collect();
    format!("[{}]", parts.join(", "))
}

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Loads a dataset and returns it with the SHA-256 of its file.
pub fn load_data(path: &Path) -> CliResult<(FactorDataset, String)> {
    let bytes = read_file(path)?;
    let ds = read_dataset(&bytes).map_err(|e| CliError::io(path.display(), e))?;
    Ok((ds, sha256_hex(&bytes)))
}

pub fn load_model(path: &Path) -> CliResult<(Model, String)> {
    let bytes = read_file(path)?;
    let model = read_checkpoint(&bytes).map_err(|e| CliError::io(path.display(), e))?;
    Ok((model, sha256_hex(&bytes)))
}

fn check_compatible(model: &Model, ds: &FactorDataset) -> CliResult<()> {
    if model.input_dim() != ds.image_dim() {
        return Err(CliError::Usage(format!(
            "incompatible inputs: checkpoint expects input width {} (latent width {}), \
             dataset has input width {} ({} factors)",
            model.input_dim(),
            model.latent_dim(),
            ds.image_dim(),
            ds.n_factors()
        )));
    }
    Ok(())
}

fn active_count(ds: &FactorDataset) -> usize {
    ds.cardinalities().iter().filter(|&&c| c >= 2).count()
}

fn gen_data(a: &GenDataArgs) -> CliResult<String> {
    let mut manifest = Manifest::new("gen-data");
    let mut cfg = ToyConfig::with_grid(a.variant, a.grid, a.side);
    if let Some(r) = a.radius {
        cfg.object_radius = r;
    }
    let ds = generate_toy_dataset(&cfg)?;
    let bytes = write_dataset(&ds);
    write_atomic(&a.out, &bytes)?;

    let factors: Vec<String> = ds
        .specs
        .iter()
        .map(|s| format!("{}({})", s.name, s.cardinality))
        .collect();
    manifest.set("variant", a.variant);
    manifest.set("grid", a.grid);
    manifest.set("side", a.side);
    manifest.set("radius", cfg.object_radius);
    manifest.set("n_samples", ds.len());
    manifest.set("factors", factors.join(" "));
    manifest.set("dataset_sha256", sha256_hex(&bytes));
    manifest.set("dataset", a.out.display());
    manifest.finish(&sidecar_manifest(&a.out))?;
    Ok(format!(
        "wrote {}\nN: {}\nfactors: {}\n",
        a.out.display(),
        ds.len(),
        factors.join(" ")
    ))
}

fn spectrum(ds: &FactorDataset, k: usize, seed: u64) -> CliResult<SingularSpectrum> {
    let mut rng = Rng::stream(seed, Stream::Pca);
    Ok(top_singular_values(&ds.images, ds.len(), ds.image_dim(), k, &mut rng)?)
}

fn lambda_text(lambda: &LambdaVector) -> String {
    format!("alpha: {}\nlambda: {}\n", lambda.alpha(), join(lambda.weights()))
}

fn pca(a: &PcaArgs) -> CliResult<String> {
    let (ds, _) = load_data(&a.data)?;
    let s = spectrum(&ds, a.latent_dim, a.seed)?;
    let normalized = s.normalized()?;
    let lambda = compute_lambda(&s, a.alpha)?;
    if let Some(path) = &a.lambda_out {
        write_atomic(path, lambda_text(&lambda).as_bytes())?;
    }
    Ok(format!(
        "S: {}\nS_bar: {}\nlambda: {}\n",
        fmt_list(&s.values, 4),
        fmt_list(&normalized, 4),
        fmt_list(lambda.weights(), 4)
    ))
}

/// Reads a file written by `pca --lambda-out`.
pub fn parse_lambda_file(text: &str) -> CliResult<LambdaVector> {
    let mut alpha = None;
    let mut weights = None;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| CliError::Io(format!("lambda file: malformed line {line:?}")))?;
        let bad = |_| CliError::Io(format!("lambda file: bad number in {line:?}"));
        match key.trim() {
            "alpha" => alpha = Some(value.trim().parse::<f64>().map_err(bad)?),
            "lambda" => {
                weights = Some(
                    value
                        .split(',')
                        .map(|v| v.trim().parse::<f64>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(bad)?,
                )
            }
            _ => {}
        }
    }
    match (weights, alpha) {
        (Some(w), Some(al)) => Ok(LambdaVector::new(w, al)?),
        _ => Err(CliError::Io("lambda file needs `alpha:` and `lambda:` lines".into())),
    }
}

/// Explicit Λ; α is the shared non-unit entry, or `fallback_alpha` if all are 1.
fn explicit_lambda(weights: &[f64], fallback_alpha: f64) -> CliResult<LambdaVector> {
    let alpha = weights.iter().copied().find(|&w| w != 1.0).unwrap_or(fallback_alpha);
    Ok(LambdaVector::new(weights.to_vec(), alpha)?)
}

fn resolve_lambda(a: &TrainArgs, ds: &FactorDataset) -> CliResult<(LambdaVector, &'static str)> {
    if let Some(list) = &a.lambda {
        return Ok((explicit_lambda(&list.0, a.alpha)?, "flag"));
    }
    if let Some(path) = &a.lambda_file {
        let text = String::from_utf8(read_file(path)?)
            .map_err(|e| CliError::io(path.display(), e))?;
        return Ok((parse_lambda_file(&text)?, "file"));
    }
    let k = a.latent_dim.unwrap_or_else(|| active_count(ds));
    let s = spectrum(ds, k, a.seed)?;
    Ok((compute_lambda(&s, a.alpha)?, "pca"))
}

fn train_cmd(a: &TrainArgs) -> CliResult<String> {
    let mut manifest = Manifest::new("train");
    let (ds, sha) = load_data(&a.data)?;
    let loss_kind = match a.loss {
        LossChoice::Mse => LossKind::Mse,
        LossChoice::Bce => LossKind::Bce,
    };
    let hidden = a.hidden.0.clone();
    let mut init = Rng::stream(a.seed, Stream::Init);

    manifest.set("data", a.data.display());
    manifest.set("dataset_sha256", &sha);
    manifest.set("model", a.model.name());
    let mut model = match a.model {
        ModelChoice::Dae => {
            let (lambda, source) = resolve_lambda(a, &ds)?;
            if let Some(n) = a.latent_dim.filter(|&n| n != lambda.len()) {
                return Err(CliError::Usage(format!(
                    "--latent-dim {n} disagrees with a scale vector of length {}",
                    lambda.len()
                )));
            }
            manifest.set("latent_dim", lambda.len());
            manifest.set("alpha", lambda.alpha());
            manifest.set("lambda", join(lambda.weights()));
            manifest.set("lambda_source", source);
            let mut cfg = DaeConfig::new(ds.image_dim(), lambda);
            cfg.hidden_sizes = hidden;
            cfg.loss_kind = loss_kind;
            Model::Dae(DaeModel::new(cfg, &mut init)?)
        }
        ModelChoice::Ae => {
            let n = a.latent_dim.unwrap_or_else(|| active_count(&ds));
            manifest.set("latent_dim", n);
            let mut cfg = AeConfig::new(ds.image_dim(), n);
            cfg.hidden_sizes = hidden;
            cfg.loss_kind = loss_kind;
            Model::Ae(PlainAe::new(cfg, &mut init)?)
        }
        ModelChoice::Vae | ModelChoice::BetaVae => {
            let n = a.latent_dim.unwrap_or_else(|| active_count(&ds));
            let beta = a.beta.unwrap_or(if a.model == ModelChoice::Vae { 1.0 } else { 4.0 });
            manifest.set("latent_dim", n);
            manifest.set("beta", beta);
            let mut cfg = VaeConfig::new(ds.image_dim(), n, beta);
            cfg.hidden_sizes = hidden;
            cfg.loss_kind = loss_kind;
            Model::Vae(VaeModel::new(cfg, &mut init)?)
        }
    };
    for (key, value) in [
        ("hidden", a.hidden.to_string()),
        ("loss", format!("{:?}", a.loss).to_lowercase()),
        ("epochs", a.epochs.to_string()),
        ("batch_size", a.batch_size.to_string()),
        ("lr", a.lr.to_string()),
        ("seed", a.seed.to_string()),
    ] {
        manifest.set(key, value);
    }

    let config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
    };
    let mut rng = Rng::stream(a.seed, Stream::Shuffle);
    let quiet = a.quiet;
    let epochs = a.epochs;
    let log = train(&mut model, &ds, &config, &mut rng, |e, loss| {
        if !quiet {
            eprintln!("epoch {}/{epochs}: loss {loss:.6}", e + 1);
        }
    })?;

    let mut csv = String::from("epoch,mean_loss\n");
    for (e, l) in log.epoch_losses.iter().enumerate() {
        let _ = writeln!(csv, "{},{l}", e + 1);
    }
    let ckpt = a.out.join("model.dae");
    let loss_path = a.out.join("loss.csv");
    let ckpt_bytes = write_checkpoint(&model);
    write_atomic(&ckpt, &ckpt_bytes)?;
    write_atomic(&loss_path, csv.as_bytes())?;

    let final_loss = log.epoch_losses.last().copied();
    manifest.set("final_loss", final_loss.map_or("none".into(), |l| l.to_string()));
    manifest.set("checkpoint", ckpt.display());
    manifest.set("checkpoint_sha256", sha256_hex(&ckpt_bytes));
    manifest.set("loss_log", loss_path.display());
    manifest.finish(&a.out.join("train_manifest.txt"))?;
    Ok(format!(
        "trained {} for {} epochs, final loss {}\ncheckpoint: {}\n",
        a.model.name(),
        a.epochs,
        final_loss.map_or("none".into(), |l| format!("{l:.6}")),
        ckpt.display()
    ))
}

fn latent_matrix(model: &Model, ds: &FactorDataset) -> CliResult<LatentMatrix> {
    let z = model.latents(&ds.slice(0, ds.len()))?;
    Ok(LatentMatrix::from_tensor(&z)?)
}

/// The five scores plus one equivariance probe per varying factor. Factors
/// too short for `probe_step` are skipped.
pub fn evaluate_codes(
    z: &LatentMatrix,
    v: &FactorMatrix,
    config: &MetricConfig,
    probe_step: usize,
) -> CliResult<MetricReport> {
    let mut report = evaluate(z, v, config)?;
    for k in v.active_factors() {
        match equivariance_probe(z, v, k, probe_step) {
            Ok(p) => report.probes.push(p),
            Err(CoreError::Argument(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(report)
}

fn eval(a: &EvalArgs) -> CliResult<String> {
    let mut manifest = Manifest::new("eval");
    let (model, model_sha) = load_model(&a.checkpoint)?;
    let (ds, sha) = load_data(&a.data)?;
    check_compatible(&model, &ds)?;
    let z = latent_matrix(&model, &ds)?;
    let v = FactorMatrix::from_dataset(&ds);
    let config = MetricConfig {
        n_train: a.n_train,
        n_test: a.n_test,
        group_size: a.group_size,
        bins: a.bins,
        seed: a.seed,
        ..MetricConfig::default()
    };
    let report = evaluate_codes(&z, &v, &config, a.probe_step)?;

    let text = report.to_text();
    let csv = format!("{}\n{}\n", report.csv_header(), report.csv_row());
    let text_path = a.out.join("report.txt");
    let csv_path = a.out.join("report.csv");
    write_atomic(&text_path, text.as_bytes())?;
    write_atomic(&csv_path, csv.as_bytes())?;

    manifest.set("checkpoint", a.checkpoint.display());
    manifest.set("checkpoint_sha256", model_sha);
    manifest.set("data", a.data.display());
    manifest.set("dataset_sha256", sha);
    manifest.set("model", model.kind());
    for (key, value) in [
        ("seed", a.seed.to_string()),
        ("bins", a.bins.to_string()),
        ("n_train", a.n_train.to_string()),
        ("n_test", a.n_test.to_string()),
        ("group_size", a.group_size.to_string()),
        ("probe_step", a.probe_step.to_string()),
    ] {
        manifest.set(key, value);
    }
    for (name, score) in MetricReport::SCORE_NAMES.iter().zip(report.scores()) {
        manifest.set(name, format!("{score:.6}"));
    }
    manifest.set("report", text_path.display());
    manifest.set("report_csv", csv_path.display());
    manifest.finish(&a.out.join("eval_manifest.txt"))?;
    Ok(text)
}

/// Per-dimension medians of the codes (mean of the middle pair for even N).
pub fn median_codes(z: &LatentMatrix) -> Vec<f64> {
    (0..z.n_dims())
        .map(|j| {
            let mut col = z.column(j);
            col.sort_by(f64::total_cmp);
            let n = col.len();
            if n % 2 == 1 {
                col[n / 2]
            } else {
                0.5 * (col[n / 2 - 1] + col[n / 2])
            }
        })
        .collect()
}

/// Codes for an `steps`-frame sweep of dimension `dim`, starting at `base`.
///
/// For the DAE the sweep advances by `w_j·t/steps`, covering one span of the
/// scale entry `w_j`. Other models sweep linearly between `lo` and `hi`.
/// A single step yields `base` itself.
pub fn traversal_codes(
    model: &Model,
    base: &[f64],
    dim: usize,
    steps: usize,
    (lo, hi): (f64, f64),
) -> CliResult<Tensor> {
    let n = model.latent_dim();
    if dim >= n {
        return Err(CliError::Usage(format!(
            "dimension {dim} out of range for latent width {n}"
        )));
    }
    if steps == 0 {
        return Err(CliError::Usage("--steps must be at least 1".into()));
    }
    if base.len() != n {
        return Err(CliError::Usage(format!(
            "base code has width {}, model expects {n}",
            base.len()
        )));
    }
    let mut data = Vec::with_capacity(steps * n);
    for t in 0..steps {
        let mut code = base.to_vec();
        if steps > 1 {
            code[dim] = match model.as_dae() {
                Some(dae) => {
                    let w = dae.config.lambda.weights()[dim];
                    base[dim] + w * t as f64 / steps as f64
                }
                None => lo + (hi - lo) * t as f64 / (steps - 1) as f64,
            };
        }
        data.extend(code);
    }
    Ok(Tensor::matrix(steps, n, data)?)
}

/// Decoded frames (`steps × input_dim`) of a traversal from `base`.
pub fn traversal_frames(
    model: &Model,
    base: &[f64],
    dim: usize,
    steps: usize,
    range: (f64, f64),
) -> CliResult<Tensor> {
    let codes = traversal_codes(model, base, dim, steps, range)?;
    Ok(model.decode_latents(&codes)?)
}

/// Tiles square frames left to right into one row of pixels.
pub fn tile_frames(frames: &Tensor, side: usize) -> (usize, usize, Vec<f64>) {
    let steps = frames.shape()[0];
    let data = frames.data();
    let width = steps * side;
    let mut pixels = vec![0.0; width * side];
    for f in 0..steps {
        for r in 0..side {
            for c in 0..side {
                pixels[r * width + f * side + c] = data[f * side * side + r * side + c];
            }
        }
    }
    (width, side, pixels)
}

fn traverse(a: &TraverseArgs) -> CliResult<String> {
    let mut manifest = Manifest::new("traverse");
    let (model, model_sha) = load_model(&a.checkpoint)?;
    let (ds, sha) = load_data(&a.data)?;
    check_compatible(&model, &ds)?;
    if a.dim >= model.latent_dim() {
        return Err(CliError::Usage(format!(
            "dimension {} out of range for latent width {}",
            a.dim,
            model.latent_dim()
        )));
    }
    let z = latent_matrix(&model, &ds)?;
    let base = median_codes(&z);
    let col = z.column(a.dim);
    let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let frames = traversal_frames(&model, &base, a.dim, a.steps, (lo, hi))?;
    let (width, height, pixels) = tile_frames(&frames, ds.image_side);
    write_atomic(&a.out, &encode_pgm(width, height, &pixels))?;

    manifest.set("checkpoint", a.checkpoint.display());
    manifest.set("checkpoint_sha256", model_sha);
    manifest.set("data", a.data.display());
    manifest.set("dataset_sha256", sha);
    manifest.set("dim", a.dim);
    manifest.set("steps", a.steps);
    manifest.set("base_code", join(&base));
    manifest.set("image", a.out.display());
    manifest.finish(&sidecar_manifest(&a.out))?;
    Ok(format!(
        "wrote {} ({width}×{height}, {} frames of dimension {})\n",
        a.out.display(),
        a.steps,
        a.dim
    ))
}

fn scatter(a: &ScatterArgs) -> CliResult<String> {
    let mut manifest = Manifest::new("scatter");
    let (model, model_sha) = load_model(&a.checkpoint)?;
    let (ds, sha) = load_data(&a.data)?;
    check_compatible(&model, &ds)?;
    let n = model.latent_dim();
    let [da, db] = a.dims.0[..] else {
        return Err(CliError::Usage(format!(
            "--dims takes exactly two dimensions, got {}",
            a.dims.0.len()
        )));
    };
    if da >= n || db >= n {
        return Err(CliError::Usage(format!(
            "dimensions {da},{db} out of range for latent width {n}"
        )));
    }
    let z = latent_matrix(&model, &ds)?;
    let (za, zb) = (z.column(da), z.column(db));

    let mut csv = format!("z_{da},z_{db}");
    for name in ds.factor_names() {
        csv.push(',');
        csv.push_str(&name);
    }
    csv.push('\n');
    for i in 0..ds.len() {
        let _ = write!(csv, "{},{}", za[i], zb[i]);
        for v in ds.factor_row(i) {
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
    }
    write_atomic(&a.out, csv.as_bytes())?;

    let grid = a.grid.unwrap_or_else(|| {
        ds.cardinalities()
            .into_iter()
            .find(|&c| c >= 2)
            .unwrap_or(1)
    });
    let cells = grid_occupancy(&za, &zb, grid);
    manifest.set("checkpoint", a.checkpoint.display());
    manifest.set("checkpoint_sha256", model_sha);
    manifest.set("data", a.data.display());
    manifest.set("dataset_sha256", sha);
    manifest.set("dims", format!("{da},{db}"));
    manifest.set("grid", grid);
    manifest.set("occupied_cells", cells);
    manifest.set("csv", a.out.display());
    manifest.finish(&sidecar_manifest(&a.out))?;
    Ok(format!(
        "wrote {} ({} rows)\noccupancy: {cells} of {} cells (grid {grid})\n",
        a.out.display(),
        ds.len(),
        grid * grid
    ))
}
