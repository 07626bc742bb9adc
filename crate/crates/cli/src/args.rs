use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dae_core::datasets::Variant;

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "dae",
    version,
    about = "Disentangling autoencoder toolkit",
    after_help = "Every command also accepts --config FILE with key=value lines; \
                  flags given on the command line override values from the file."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a toy factor dataset.
    GenData(GenDataArgs),
    /// Estimate the per-feature scale vector from the dataset spectrum.
    Pca(PcaArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint with the disentanglement metrics.
    Eval(EvalArgs),
    /// Render a latent traversal strip as a PGM image.
    Traverse(TraverseArgs),
    /// Export two latent dimensions with factor labels as CSV.
    Scatter(ScatterArgs),
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: dae_core::Error| e.to_string())
}

/// Comma-separated values given as one flag.
#[derive(Clone, Debug, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: std::fmt::Display> std::fmt::Display for List<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<List<T>, String> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse().map_err(|_| format!("invalid list entry {p:?}")))
        .collect::<Result<Vec<T>, String>>()
        .map(List)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelChoice {
    Dae,
    Ae,
    Vae,
    #[value(name = "beta_vae", alias = "beta-vae")]
    BetaVae,
}

impl ModelChoice {
    pub fn name(self) -> &'static str {
        match self {
            ModelChoice::Dae => "dae",
            ModelChoice::Ae => "ae",
            ModelChoice::Vae => "vae",
            ModelChoice::BetaVae => "beta_vae",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LossChoice {
    Mse,
    Bce,
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct GenDataArgs {
    /// XY, XYC, XYS or XYCS.
    #[arg(long, value_parser = parse_variant)]
    pub variant: Variant,
    /// Positions per axis.
    #[arg(long, default_value_t = 16)]
    pub grid: usize,
    /// Image side in pixels.
    #[arg(long, default_value_t = 32)]
    pub side: usize,
    /// Object radius in pixels [default: side / 8].
    #[arg(long)]
    pub radius: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct PcaArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Number of components (latent width).
    #[arg(long)]
    pub latent_dim: usize,
    #[arg(long, default_value_t = 0.005)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the scale vector to this file.
    #[arg(long)]
    pub lambda_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelChoice::Dae)]
    pub model: ModelChoice,
    /// Latent width [default: number of varying factors, or the Λ length].
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long, default_value_t = 0.005)]
    pub alpha: f64,
    /// Explicit scale vector, e.g. `1,1,0.0005`. Computed from the data
    /// spectrum when neither this nor --lambda-file is given.
    #[arg(long, value_parser = parse_list::<f64>)]
    pub lambda: Option<List<f64>>,
    /// Scale vector written by `pca --lambda-out`.
    #[arg(long, conflicts_with = "lambda")]
    pub lambda_file: Option<PathBuf>,
    /// KL weight [default: 1 for vae, 4 for beta_vae].
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = LossChoice::Mse)]
    pub loss: LossChoice,
    /// Hidden layer widths, encoder order.
    #[arg(long, value_parser = parse_list::<usize>, default_value = "256,64")]
    pub hidden: List<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long, default_value_t = 500)]
    pub n_train: usize,
    #[arg(long, default_value_t = 100)]
    pub n_test: usize,
    #[arg(long, default_value_t = 64)]
    pub group_size: usize,
    /// Factor step used by the equivariance probe.
    #[arg(long, default_value_t = 1)]
    pub probe_step: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct TraverseArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset used for the held-fixed median codes.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct ScatterArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Two latent dimensions, e.g. `0,1`.
    #[arg(long, value_parser = parse_list::<usize>, default_value = "0,1")]
    pub dims: List<usize>,
    /// Grid size for the occupancy summary [default: cardinality of the first factor].
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Splices `--config FILE` entries into `argv` right after the subcommand so
/// that flags given explicitly (which come later) take precedence.
pub fn expand_config(argv: Vec<String>) -> CliResult<Vec<String>> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            let path = it
                .next()
                .ok_or_else(|| CliError::Usage("--config needs a file path".into()))?;
            config = Some(path);
        } else if let Some(path) = a.strip_prefix("--config=") {
            config = Some(path.to_owned());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let injected = config_args(&text)?;
    let at = rest.len().min(2);
    rest.splice(at..at, injected);
    Ok(rest)
}

/// Converts `key=value` lines to flags. `#` starts a comment; `true`/`false`
/// toggle switches.
pub fn config_args(text: &str) -> CliResult<Vec<String>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", n + 1)))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        match value {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            _ => {
                out.push(format!("--{key}"));
                out.push(value.to_owned());
            }
        }
    }
    Ok(out)
}
