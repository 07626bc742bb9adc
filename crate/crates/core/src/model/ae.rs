use super::{chunked, Activation, Autoencoder, Mlp, ModelKind};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{LossKind, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct AeConfig {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub latent_dim: usize,
    pub loss_kind: LossKind,
    pub leaky_slope: f64,
}

impl AeConfig {
    pub fn new(input_dim: usize, latent_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_sizes: vec![256, 64],
            latent_dim,
            loss_kind: LossKind::Mse,
            leaky_slope: 0.01,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.latent_dim == 0 || self.hidden_sizes.contains(&0) {
            return Err(Error::Argument("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn encoder_sizes(&self, out: usize) -> Vec<usize> {
        let mut s = vec![self.input_dim];
        s.extend(&self.hidden_sizes);
        s.push(out);
        s
    }

    pub(crate) fn decoder_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.latent_dim];
        s.extend(self.hidden_sizes.iter().rev());
        s.push(self.input_dim);
        s
    }
}

/// Deterministic autoencoder with an unconstrained linear code.
#[derive(Clone, Debug, PartialEq)]
pub struct PlainAe {
    pub config: AeConfig,
    pub encoder: Mlp,
    pub decoder: Mlp,
}

impl PlainAe {
    pub fn new(config: AeConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let slope = Activation::LeakyRelu(config.leaky_slope);
        let encoder = Mlp::new(
            &config.encoder_sizes(config.latent_dim),
            slope,
            Activation::Identity,
            rng,
        );
        let decoder = Mlp::new(&config.decoder_sizes(), slope, Activation::Sigmoid, rng);
        Ok(Self {
            config,
            encoder,
            decoder,
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

    fn forward(&self, tape: &mut Tape, x: Var) -> Result<(Var, Var)> {
        let enc = self.encoder.bind(tape);
        let dec = self.decoder.bind(tape);
        let z = enc.forward(tape, x)?;
        let rec = dec.forward(tape, z)?;
        Ok((z, rec))
    }
}

impl Autoencoder for PlainAe {
    fn kind(&self) -> ModelKind {
        ModelKind::Ae
    }

    fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    fn params(&self) -> Vec<&Tensor> {
        self.encoder.params().chain(self.decoder.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.encoder
            .params_mut()
            .chain(self.decoder.params_mut())
            .collect()
    }

    fn training_loss(&mut self, tape: &mut Tape, x: &Tensor, _rng: &mut Rng) -> Result<Var> {
        let xv = tape.leaf(x);
        let (_, rec) = self.forward(tape, xv)?;
        tape.loss(self.config.loss_kind, rec, xv)
    }

    fn latents(&self, x: &Tensor) -> Result<Tensor> {
        chunked(x, |c| {
            let mut tape = Tape::new();
            let xv = tape.leaf(c);
            let (z, _) = self.forward(&mut tape, xv)?;
            Ok(tape.value(z).clone())
        })
    }

    fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        chunked(x, |c| {
            let mut tape = Tape::new();
            let xv = tape.leaf(c);
            let (_, r) = self.forward(&mut tape, xv)?;
            Ok(tape.value(r).clone())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        let mut cfg = AeConfig::new(8, 3);
        cfg.hidden_sizes = vec![4];
        let ae = PlainAe::new(cfg, &mut Rng::new(0)).unwrap();
        let x = Tensor::zeros(vec![5, 8]);
        assert_eq!(ae.latents(&x).unwrap().shape(), &[5, 3]);
        assert_eq!(ae.reconstruct(&x).unwrap().shape(), &[5, 8]);
        assert_eq!(ae.params().len(), 8);
    }
}
