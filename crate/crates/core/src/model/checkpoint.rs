//! `DAE1` checkpoint files.
//!
//! Layout (little-endian): magic `DAE1`, version `u32`, model kind `u8`
//! (0 dae, 1 ae, 2 vae), input width `u32`, latent width `u32`, hidden layer
//! count `u32` and widths `u32`, loss kind `u8` (0 mse, 1 bce), leaky slope
//! `f64`. DAE files continue with α, Λ, ρ, δ and eps as `f64`; VAE files with
//! β. Then every parameter tensor as `f64` in declaration order, and for DAE
//! files the moving min and max.

use std::fs;
use std::path::Path;

use super::{AeConfig, Autoencoder, DaeConfig, DaeModel, Model, ModelKind, PlainAe, VaeConfig, VaeModel};
use crate::binio::{Reader, WriteLe};
use crate::error::{Error, Result};
use crate::linalg::LambdaVector;
use crate::rng::Rng;
use crate::tensor::LossKind;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DAE1";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Backbone {
    input_dim: usize,
    latent_dim: usize,
    hidden: Vec<usize>,
    loss: LossKind,
    slope: f64,
}

fn put_backbone(out: &mut Vec<u8>, b: &Backbone) {
    out.put_u32(b.input_dim as u32);
    out.put_u32(b.latent_dim as u32);
    out.put_u32(b.hidden.len() as u32);
    for &h in &b.hidden {
        out.put_u32(h as u32);
    }
    out.put_u8(match b.loss {
        LossKind::Mse => 0,
        LossKind::Bce => 1,
    });
    out.put_f64(b.slope);
}

pub fn write_checkpoint(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.put_u32(CHECKPOINT_VERSION);
    out.put_u8(model.kind().code());
    match model {
        Model::Dae(m) => {
            let c = &m.config;
            put_backbone(
                &mut out,
                &Backbone {
                    input_dim: c.input_dim,
                    latent_dim: c.latent_dim,
                    hidden: c.hidden_sizes.clone(),
                    loss: c.loss_kind,
                    slope: c.leaky_slope,
                },
            );
            out.put_f64(c.lambda.alpha());
            for &w in c.lambda.weights() {
                out.put_f64(w);
            }
            out.put_f64(c.minmax_momentum);
            out.put_f64(c.minmax_init_delta);
            out.put_f64(c.minmax_eps);
        }
        Model::Ae(m) => {
            let c = &m.config;
            put_backbone(
                &mut out,
                &Backbone {
                    input_dim: c.input_dim,
                    latent_dim: c.latent_dim,
                    hidden: c.hidden_sizes.clone(),
                    loss: c.loss_kind,
                    slope: c.leaky_slope,
                },
            );
        }
        Model::Vae(m) => {
            let c = &m.config;
            put_backbone(
                &mut out,
                &Backbone {
                    input_dim: c.input_dim,
                    latent_dim: c.latent_dim,
                    hidden: c.hidden_sizes.clone(),
                    loss: c.loss_kind,
                    slope: c.leaky_slope,
                },
            );
            out.put_f64(c.beta);
        }
    }
    for p in model.params() {
        for &v in p.data() {
            out.put_f64(v);
        }
    }
    if let Model::Dae(m) = model {
        for &v in m.minmax.moving_min.iter().chain(&m.minmax.moving_max) {
            out.put_f64(v);
        }
    }
    out
}

fn read_backbone(r: &mut Reader) -> Result<Backbone> {
    let input_dim = r.u32("input width")? as usize;
    let latent_dim = r.u32("latent width")? as usize;
    let layers = r.u32("hidden layer count")? as usize;
    if layers > 64 {
        return r.fail(format!("implausible hidden layer count {layers}"));
    }
    let mut hidden = Vec::with_capacity(layers);
    for _ in 0..layers {
        hidden.push(r.u32("hidden width")? as usize);
    }
    let loss = match r.u8("loss kind")? {
        0 => LossKind::Mse,
        1 => LossKind::Bce,
        other => return r.fail(format!("unknown loss kind {other}")),
    };
    let slope = r.f64("leaky slope")?;
    let widths = [input_dim, latent_dim].into_iter().chain(hidden.iter().copied());
    if widths.clone().any(|w| w == 0 || w > 1 << 24) {
        return r.fail("implausible layer width");
    }
    Ok(Backbone {
        input_dim,
        latent_dim,
        hidden,
        loss,
        slope,
    })
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader::new(bytes);
    r.magic(CHECKPOINT_MAGIC)?;
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            what: "checkpoint",
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let code = r.u8("model kind")?;
    let Some(kind) = ModelKind::from_code(code) else {
        return r.fail(format!("unknown model kind {code}"));
    };
    let b = read_backbone(&mut r)?;
    let mut rng = Rng::new(0);
    let config_error = |r: &Reader, e: Error| -> Error {
        Error::Format {
            offset: r.offset(),
            message: format!("invalid model configuration: {e}"),
        }
    };
    let mut model = match kind {
        ModelKind::Dae => {
            let alpha = r.f64("alpha")?;
            let weights = r.f64s(b.latent_dim, "lambda")?;
            let lambda = LambdaVector::new(weights, alpha).map_err(|e| config_error(&r, e))?;
            let config = DaeConfig {
                input_dim: b.input_dim,
                hidden_sizes: b.hidden,
                latent_dim: b.latent_dim,
                lambda,
                loss_kind: b.loss,
                leaky_slope: b.slope,
                minmax_momentum: r.f64("momentum")?,
                minmax_init_delta: r.f64("init delta")?,
                minmax_eps: r.f64("eps")?,
            };
            Model::Dae(DaeModel::new(config, &mut rng).map_err(|e| config_error(&r, e))?)
        }
        ModelKind::Ae => {
            let config = AeConfig {
                input_dim: b.input_dim,
                hidden_sizes: b.hidden,
                latent_dim: b.latent_dim,
                loss_kind: b.loss,
                leaky_slope: b.slope,
            };
            Model::Ae(PlainAe::new(config, &mut rng).map_err(|e| config_error(&r, e))?)
        }
        ModelKind::Vae => {
            let config = VaeConfig {
                input_dim: b.input_dim,
                hidden_sizes: b.hidden,
                latent_dim: b.latent_dim,
                loss_kind: b.loss,
                leaky_slope: b.slope,
                beta: r.f64("beta")?,
            };
            Model::Vae(VaeModel::new(config, &mut rng).map_err(|e| config_error(&r, e))?)
        }
    };
    for p in model.params_mut() {
        let values = r.f64s(p.len(), "parameters")?;
        p.data_mut().copy_from_slice(&values);
    }
    if let Model::Dae(m) = &mut model {
        let n = m.config.latent_dim;
        m.minmax.moving_min = r.f64s(n, "moving min")?;
        m.minmax.moving_max = r.f64s(n, "moving max")?;
    }
    r.finish()?;
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_checkpoint(model))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    read_checkpoint(&fs::read(path)?)
}
