use super::ae::AeConfig;
use super::{chunked, Activation, Autoencoder, Linear, Mlp, Mode, ModelKind};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{LossKind, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct VaeConfig {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub latent_dim: usize,
    pub loss_kind: LossKind,
    pub leaky_slope: f64,
    /// KL weight; 1 is the vanilla VAE.
    pub beta: f64,
}

impl VaeConfig {
    pub fn new(input_dim: usize, latent_dim: usize, beta: f64) -> Self {
        Self {
            input_dim,
            hidden_sizes: vec![256, 64],
            latent_dim,
            loss_kind: LossKind::Mse,
            leaky_slope: 0.01,
            beta,
        }
    }

    fn backbone(&self) -> AeConfig {
        AeConfig {
            input_dim: self.input_dim,
            hidden_sizes: self.hidden_sizes.clone(),
            latent_dim: self.latent_dim,
            loss_kind: self.loss_kind,
            leaky_slope: self.leaky_slope,
        }
    }
}

/// Gaussian-posterior autoencoder. The trunk ends in a leaky-ReLU layer that
/// feeds separate μ and log σ² heads.
#[derive(Clone, Debug, PartialEq)]
pub struct VaeModel {
    pub config: VaeConfig,
    pub trunk: Mlp,
    pub mu_head: Linear,
    pub logvar_head: Linear,
    pub decoder: Mlp,
}

#[derive(Clone, Debug)]
pub struct VaeForward {
    pub reconstruction: Tensor,
    pub mu: Tensor,
    pub logvar: Tensor,
}

struct VaeVars {
    reconstruction: Var,
    mu: Var,
    logvar: Var,
}

/// Loss terms as tape nodes; `total = reconstruction + β·kl`.
#[derive(Clone, Copy, Debug)]
pub struct VaeLoss {
    pub total: Var,
    pub reconstruction: Var,
    pub kl: Var,
}

/// `½ Σ_j (μ² + σ² − 1 − log σ²)` per row, averaged over rows.
pub fn kl_diag_gaussian(mu: &Tensor, logvar: &Tensor) -> Result<f64> {
    if mu.shape() != logvar.shape() {
        return Err(Error::dim("kl", mu.shape(), logvar.shape()));
    }
    let (m, _) = mu.dims2()?;
    if m == 0 {
        return Err(Error::EmptyInput("kl"));
    }
    let total: f64 = mu
        .data()
        .iter()
        .zip(logvar.data())
        .map(|(u, lv)| 0.5 * (u * u + lv.exp() - 1.0 - lv))
        .sum();
    Ok(total / m as f64)
}

impl VaeModel {
    pub fn new(config: VaeConfig, rng: &mut Rng) -> Result<Self> {
        let bb = config.backbone();
        bb.validate()?;
        if !(config.beta >= 0.0 && config.beta.is_finite()) {
            return Err(Error::Argument(format!("beta must be non-negative, got {}", config.beta)));
        }
        let slope = Activation::LeakyRelu(config.leaky_slope);
        let mut trunk_sizes = bb.encoder_sizes(0);
        trunk_sizes.pop();
        let trunk = Mlp::new(&trunk_sizes, slope, slope, rng);
        let width = *trunk_sizes.last().expect("input width");
        let mu_head = Linear::new(width, config.latent_dim, rng);
        let logvar_head = Linear::new(width, config.latent_dim, rng);
        let decoder = Mlp::new(&bb.decoder_sizes(), slope, Activation::Sigmoid, rng);
        Ok(Self {
            config,
            trunk,
            mu_head,
            logvar_head,
            decoder,
        })
    }

    fn heads(&self, tape: &mut Tape, x: Var) -> Result<(Var, Var)> {
        let trunk = self.trunk.bind(tape);
        let h = if self.trunk.layers.is_empty() {
            x
        } else {
            trunk.forward(tape, x)?
        };
        let (mw, mb) = (tape.param(&self.mu_head.weight), tape.param(&self.mu_head.bias));
        let (lw, lb) = (
            tape.param(&self.logvar_head.weight),
            tape.param(&self.logvar_head.bias),
        );
        let mu = tape.matmul(h, mw)?;
        let mu = tape.add_bias(mu, mb)?;
        let lv = tape.matmul(h, lw)?;
        let lv = tape.add_bias(lv, lb)?;
        Ok((mu, lv))
    }

    fn forward_vars(&self, tape: &mut Tape, x: Var, rng: &mut Rng, mode: Mode) -> Result<VaeVars> {
        let (mu, logvar) = self.heads(tape, x)?;
        let dec = self.decoder.bind(tape);
        let z = match mode {
            Mode::Eval => mu,
            Mode::Train => {
                let half = tape.scalar_mul(logvar, 0.5);
                let sigma = tape.exp(half);
                let shape = tape.shape(mu).to_vec();
                let eps: Vec<f64> = (0..tape.value(mu).len()).map(|_| rng.normal()).collect();
                let eps = tape.constant(Tensor::new(shape, eps)?);
                let noise = tape.mul(sigma, eps)?;
                tape.add(mu, noise)?
            }
        };
        let reconstruction = dec.forward(tape, z)?;
        Ok(VaeVars {
            reconstruction,
            mu,
            logvar,
        })
    }

    pub fn vae_forward(&self, x: &Tensor, rng: &mut Rng, mode: Mode) -> Result<VaeForward> {
        let mut tape = Tape::new();
        let xv = tape.leaf(x);
        let v = self.forward_vars(&mut tape, xv, rng, mode)?;
        Ok(VaeForward {
            reconstruction: tape.value(v.reconstruction).clone(),
            mu: tape.value(v.mu).clone(),
            logvar: tape.value(v.logvar).clone(),
        })
    }

    /// Reconstruction is summed over pixels and averaged over the batch, so
    /// both terms are per-sample quantities.
    pub fn vae_loss(
        &self,
        tape: &mut Tape,
        reconstruction: Var,
        target: Var,
        mu: Var,
        logvar: Var,
    ) -> Result<VaeLoss> {
        let (m, n) = tape.value(mu).dims2()?;
        let d = tape.value(target).dims2()?.1;
        let mean = tape.loss(self.config.loss_kind, reconstruction, target)?;
        let rec = tape.scalar_mul(mean, d as f64);
        let mu2 = tape.mul(mu, mu)?;
        let var = tape.exp(logvar);
        let a = tape.add(mu2, var)?;
        let b = tape.sub(a, logvar)?;
        let s = tape.sum(b)?;
        let s = tape.scalar_mul(s, 0.5 / m as f64);
        let kl = tape.add_const(s, &Tensor::scalar(-0.5 * n as f64))?;
        let weighted = tape.scalar_mul(kl, self.config.beta);
        let total = tape.add(rec, weighted)?;
        Ok(VaeLoss {
            total,
            reconstruction: rec,
            kl,
        })
    }

    pub fn decode_codes(&self, codes: &Tensor) -> Result<Tensor> {
        chunked(codes, |c| {
            let mut tape = Tape::new();
            let cv = tape.leaf(c);
            let dec = self.decoder.bind(&mut tape);
            let out = dec.forward(&mut tape, cv)?;
            Ok(tape.value(out).clone())
        })
    }
}

impl Autoencoder for VaeModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Vae
    }

    fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    fn params(&self) -> Vec<&Tensor> {
        self.trunk
            .params()
            .chain([
                &self.mu_head.weight,
                &self.mu_head.bias,
                &self.logvar_head.weight,
                &self.logvar_head.bias,
            ])
            .chain(self.decoder.params())
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.trunk
            .params_mut()
            .chain([
                &mut self.mu_head.weight,
                &mut self.mu_head.bias,
                &mut self.logvar_head.weight,
                &mut self.logvar_head.bias,
            ])
            .chain(self.decoder.params_mut())
            .collect()
    }

    fn training_loss(&mut self, tape: &mut Tape, x: &Tensor, rng: &mut Rng) -> Result<Var> {
        let xv = tape.leaf(x);
        let v = self.forward_vars(tape, xv, rng, Mode::Train)?;
        Ok(self.vae_loss(tape, v.reconstruction, xv, v.mu, v.logvar)?.total)
    }

    fn latents(&self, x: &Tensor) -> Result<Tensor> {
        chunked(x, |c| Ok(self.vae_forward(c, &mut Rng::new(0), Mode::Eval)?.mu))
    }

    fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        chunked(x, |c| {
            Ok(self.vae_forward(c, &mut Rng::new(0), Mode::Eval)?.reconstruction)
        })
    }
}
