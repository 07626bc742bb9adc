//! Autoencoders: the disentangling autoencoder plus plain-AE and (β-)VAE
//! baselines sharing one MLP backbone.

mod ae;
mod checkpoint;
mod dae;
mod train;
mod vae;

pub use ae::{AeConfig, PlainAe};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use dae::{
    batch_minmax, euler_map, interpolate, interpolation_widths, lambda_scale, DaeConfig,
    DaeForward, DaeModel, MovingMinMaxState,
};
pub use train::{train, train_dae, TrainConfig, TrainingLog};
pub use vae::{kl_diag_gaussian, VaeConfig, VaeForward, VaeModel};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{LossKind, Tape, Tensor, Var};

/// Rows per chunk when running eval-mode passes over a whole dataset.
pub const EVAL_CHUNK: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Dae,
    Ae,
    Vae,
}

impl ModelKind {
    pub(crate) fn code(self) -> u8 {
        match self {
            ModelKind::Dae => 0,
            ModelKind::Ae => 1,
            ModelKind::Vae => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(ModelKind::Dae),
            1 => Some(ModelKind::Ae),
            2 => Some(ModelKind::Vae),
            _ => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Dae => "dae",
            ModelKind::Ae => "ae",
            ModelKind::Vae => "vae",
        })
    }
}

pub fn parse_loss_kind(s: &str) -> Result<LossKind> {
    match s.to_ascii_lowercase().as_str() {
        "mse" | "l2" => Ok(LossKind::Mse),
        "bce" | "cross-entropy" => Ok(LossKind::Bce),
        _ => Err(Error::Argument(format!("unknown loss {s:?} (mse or bce)"))),
    }
}

pub fn loss_kind_name(kind: LossKind) -> &'static str {
    match kind {
        LossKind::Mse => "mse",
        LossKind::Bce => "bce",
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dae" => Ok(ModelKind::Dae),
            "ae" => Ok(ModelKind::Ae),
            "vae" | "beta_vae" => Ok(ModelKind::Vae),
            _ => Err(Error::Argument(format!("unknown model kind {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Identity,
    LeakyRelu(f64),
    Sigmoid,
}

impl Activation {
    fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::LeakyRelu(s) => tape.leaky_relu(x, s),
            Activation::Sigmoid => tape.sigmoid(x),
        }
    }
}

/// Fully connected layer; `weight` is `fan_in × fan_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    /// Uniform init on `±1/√fan_in` for weights and bias.
    pub fn new(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = (0..fan_in * fan_out)
            .map(|_| rng.uniform_range(-bound, bound))
            .collect();
        let b = (0..fan_out).map(|_| rng.uniform_range(-bound, bound)).collect();
        Self {
            weight: Tensor::param(vec![fan_in, fan_out], w).expect("consistent"),
            bias: Tensor::param(vec![fan_out], b).expect("consistent"),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub hidden: Activation,
    pub output: Activation,
}

/// Tape handles for one pass through an [`Mlp`].
#[derive(Clone, Debug)]
pub struct BoundMlp {
    layers: Vec<(Var, Var)>,
    hidden: Activation,
    output: Activation,
}

impl Mlp {
    /// `sizes` lists every width from input to output.
    pub fn new(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut Rng) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| Linear::new(w[0], w[1], rng))
            .collect();
        Self {
            layers,
            hidden,
            output,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, Linear::fan_in)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, Linear::fan_out)
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundMlp {
        BoundMlp {
            layers: self
                .layers
                .iter()
                .map(|l| (tape.param(&l.weight), tape.param(&l.bias)))
                .collect(),
            hidden: self.hidden,
            output: self.output,
        }
    }
}

impl BoundMlp {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let width = tape.shape(x).get(1).copied().unwrap_or(0);
        let expected = self.layers.first().map(|&(w, _)| tape.shape(w)[0]);
        if let Some(e) = expected {
            if width != e {
                return Err(Error::dim("mlp input", tape.shape(x), &[e]));
            }
        }
        let last = self.layers.len().saturating_sub(1);
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            h = tape.matmul(h, w)?;
            h = tape.add_bias(h, b)?;
            let act = if i == last { self.output } else { self.hidden };
            h = act.apply(tape, h);
        }
        Ok(h)
    }
}

/// Common surface of every trainable autoencoder.
pub trait Autoencoder {
    fn kind(&self) -> ModelKind;
    fn input_dim(&self) -> usize;
    fn latent_dim(&self) -> usize;

    /// Parameters in declaration order.
    fn params(&self) -> Vec<&Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    /// Registers parameters on `tape`, runs a train-mode forward pass on `x`
    /// and returns the scalar training loss.
    fn training_loss(&mut self, tape: &mut Tape, x: &Tensor, rng: &mut Rng) -> Result<Var>;

    /// Eval-mode codes used for metrics, one row per input row.
    fn latents(&self, x: &Tensor) -> Result<Tensor>;

    /// Eval-mode reconstruction.
    fn reconstruct(&self, x: &Tensor) -> Result<Tensor>;
}

/// Runs `f` over `x` in row chunks and stacks the results.
pub(crate) fn chunked(
    x: &Tensor,
    f: impl Fn(&Tensor) -> Result<Tensor>,
) -> Result<Tensor> {
    let (m, d) = x.dims2()?;
    if m <= EVAL_CHUNK {
        return f(x);
    }
    let mut out = Vec::new();
    let mut cols = 0;
    for start in (0..m).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(m);
        let part = Tensor::matrix(end - start, d, x.data()[start * d..end * d].to_vec())?;
        let y = f(&part)?;
        cols = y.dims2()?.1;
        out.extend_from_slice(y.data());
    }
    Tensor::matrix(m, cols, out)
}

/// Any of the supported model kinds.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Dae(DaeModel),
    Ae(PlainAe),
    Vae(VaeModel),
}

impl Model {
    fn inner(&self) -> &dyn Autoencoder {
        match self {
            Model::Dae(m) => m,
            Model::Ae(m) => m,
            Model::Vae(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Autoencoder {
        match self {
            Model::Dae(m) => m,
            Model::Ae(m) => m,
            Model::Vae(m) => m,
        }
    }

    pub fn as_dae(&self) -> Option<&DaeModel> {
        match self {
            Model::Dae(m) => Some(m),
            _ => None,
        }
    }

    /// Eval-mode decode of metric-space codes, for latent traversals.
    pub fn decode_latents(&self, codes: &Tensor) -> Result<Tensor> {
        match self {
            Model::Dae(m) => m.decode_codes(codes),
            Model::Ae(m) => m.decode_codes(codes),
            Model::Vae(m) => m.decode_codes(codes),
        }
    }
}

impl Autoencoder for Model {
    fn kind(&self) -> ModelKind {
        self.inner().kind()
    }
    fn input_dim(&self) -> usize {
        self.inner().input_dim()
    }
    fn latent_dim(&self) -> usize {
        self.inner().latent_dim()
    }
    fn params(&self) -> Vec<&Tensor> {
        self.inner().params()
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.inner_mut().params_mut()
    }
    fn training_loss(&mut self, tape: &mut Tape, x: &Tensor, rng: &mut Rng) -> Result<Var> {
        self.inner_mut().training_loss(tape, x, rng)
    }
    fn latents(&self, x: &Tensor) -> Result<Tensor> {
        self.inner().latents(x)
    }
    fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        self.inner().reconstruct(x)
    }
}
