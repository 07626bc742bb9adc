use super::{chunked, Activation, Autoencoder, BoundMlp, Mlp, Mode, ModelKind};
use crate::error::{Error, Result};
use crate::linalg::LambdaVector;
use crate::rng::Rng;
use crate::tensor::{LossKind, ReduceOp, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct DaeConfig {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub latent_dim: usize,
    pub lambda: LambdaVector,
    pub loss_kind: LossKind,
    pub leaky_slope: f64,
    pub minmax_momentum: f64,
    pub minmax_init_delta: f64,
    pub minmax_eps: f64,
}

impl DaeConfig {
    /// Defaults: hidden `[256, 64]`, MSE, slope 0.01, ρ = δ = 0.01, eps 1e-6.
    pub fn new(input_dim: usize, lambda: LambdaVector) -> Self {
        Self {
            input_dim,
            hidden_sizes: vec![256, 64],
            latent_dim: lambda.len(),
            lambda,
            loss_kind: LossKind::Mse,
            leaky_slope: 0.01,
            minmax_momentum: 0.01,
            minmax_init_delta: 0.01,
            minmax_eps: 1e-6,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.lambda.alpha()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.latent_dim == 0 {
            return Err(Error::Argument("input and latent widths must be positive".into()));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::Argument("hidden widths must be positive".into()));
        }
        if self.lambda.len() != self.latent_dim {
            return Err(Error::dim("dae config", &[self.lambda.len()], &[self.latent_dim]));
        }
        if !(self.minmax_momentum > 0.0 && self.minmax_momentum <= 1.0) {
            return Err(Error::Argument(format!(
                "momentum must lie in (0, 1], got {}",
                self.minmax_momentum
            )));
        }
        if !(self.minmax_init_delta > 0.0 && self.minmax_init_delta < 0.5) {
            return Err(Error::Argument(format!(
                "init delta must lie in (0, 0.5), got {}",
                self.minmax_init_delta
            )));
        }
        if !(self.minmax_eps > 0.0) {
            return Err(Error::Argument("min-max eps must be positive".into()));
        }
        Ok(())
    }
}

/// Running per-feature min and max used by eval-mode normalisation.
#[derive(Clone, Debug, PartialEq)]
pub struct MovingMinMaxState {
    pub moving_min: Vec<f64>,
    pub moving_max: Vec<f64>,
}

impl MovingMinMaxState {
    /// Starts every feature at `[0.5 − δ, 0.5 + δ]`.
    pub fn new(n: usize, delta: f64) -> Self {
        Self {
            moving_min: vec![0.5 - delta; n],
            moving_max: vec![0.5 + delta; n],
        }
    }

    pub fn len(&self) -> usize {
        self.moving_min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moving_min.is_empty()
    }

    fn update(&mut self, batch_min: &[f64], batch_max: &[f64], rho: f64) {
        for (s, b) in self.moving_min.iter_mut().zip(batch_min) {
            *s = (1.0 - rho) * *s + rho * b;
        }
        for (s, b) in self.moving_max.iter_mut().zip(batch_max) {
            *s = (1.0 - rho) * *s + rho * b;
        }
    }
}

/// Per-feature min-max normalisation. Train mode uses (gradient-stopping)
/// batch statistics and folds them into `state`; eval mode uses `state`.
pub fn batch_minmax(
    tape: &mut Tape,
    code: Var,
    state: &mut MovingMinMaxState,
    mode: Mode,
    momentum: f64,
    eps: f64,
) -> Result<Var> {
    let (m, n) = tape.value(code).dims2()?;
    if n != state.len() {
        return Err(Error::dim("batch_minmax", tape.shape(code), &[state.len()]));
    }
    let (lo, hi) = match mode {
        Mode::Train => {
            if m < 2 {
                return Err(Error::BatchTooSmall {
                    op: "batch_minmax",
                    got: m,
                });
            }
            let lo = tape.reduce(ReduceOp::PerFeatureMin, code, Some(0))?;
            let hi = tape.reduce(ReduceOp::PerFeatureMax, code, Some(0))?;
            let lo = tape.value(lo).data().to_vec();
            let hi = tape.value(hi).data().to_vec();
            state.update(&lo, &hi, momentum);
            (lo, hi)
        }
        Mode::Eval => (state.moving_min.clone(), state.moving_max.clone()),
    };
    let scale: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 1.0 / (b - a + eps)).collect();
    tape.column_affine(code, &lo, &scale)
}

pub fn lambda_scale(tape: &mut Tape, y: Var, lambda: &LambdaVector) -> Result<Var> {
    let n = tape.value(y).dims2()?.1;
    if n != lambda.len() {
        return Err(Error::dim("lambda_scale", tape.shape(y), &[lambda.len()]));
    }
    tape.column_affine(y, &vec![0.0; n], lambda.weights())
}

/// `w[i][k] = min_{j≠i} |y[i][k] − y[j][k]|`, computed per column by sorting.
pub fn interpolation_widths(y: &Tensor) -> Result<Tensor> {
    let (m, n) = y.dims2()?;
    if m < 2 {
        return Err(Error::BatchTooSmall {
            op: "interpolate",
            got: m,
        });
    }
    let mut w = vec![0.0; m * n];
    let mut order: Vec<usize> = (0..m).collect();
    for k in 0..n {
        order.sort_by(|&a, &b| y.get(a, k).total_cmp(&y.get(b, k)));
        for (pos, &i) in order.iter().enumerate() {
            let v = y.get(i, k);
            let left = pos.checked_sub(1).map(|p| v - y.get(order[p], k));
            let right = order.get(pos + 1).map(|&j| y.get(j, k) - v);
            let gap = match (left, right) {
                (Some(a), Some(b)) => a.min(b),
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => unreachable!("m >= 2"),
            };
            w[i * n + k] = gap;
        }
    }
    Tensor::matrix(m, n, w)
}

/// Train mode adds `w ⊙ ε` with `ε ~ N(0, 1)`; eval mode is the identity.
pub fn interpolate(tape: &mut Tape, y: Var, rng: &mut Rng, mode: Mode) -> Result<Var> {
    if mode == Mode::Eval {
        return Ok(y);
    }
    let mut noise = interpolation_widths(tape.value(y))?;
    for v in noise.data_mut() {
        *v *= rng.normal();
    }
    tape.add_const(y, &noise)
}

/// `[cos 2πy₁, sin 2πy₁, …, cos 2πyₙ, sin 2πyₙ]`.
pub fn euler_map(tape: &mut Tape, y: Var) -> Result<Var> {
    let c = tape.cos2pi(y);
    let s = tape.sin2pi(y);
    tape.interleave(c, s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DaeModel {
    pub config: DaeConfig,
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub minmax: MovingMinMaxState,
}

/// Values of one forward pass.
#[derive(Clone, Debug)]
pub struct DaeForward {
    pub reconstruction: Tensor,
    /// Post-Λ, pre-interpolation code.
    pub latent: Tensor,
}

pub(crate) struct DaeVars {
    pub reconstruction: Var,
    pub latent: Var,
}

impl DaeModel {
    pub fn new(config: DaeConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let slope = Activation::LeakyRelu(config.leaky_slope);
        let mut enc = vec![config.input_dim];
        enc.extend(&config.hidden_sizes);
        enc.push(config.latent_dim);
        let mut dec = vec![2 * config.latent_dim];
        dec.extend(config.hidden_sizes.iter().rev());
        dec.push(config.input_dim);
        let encoder = Mlp::new(&enc, slope, Activation::Identity, rng);
        let decoder = Mlp::new(&dec, slope, Activation::Sigmoid, rng);
        let minmax = MovingMinMaxState::new(config.latent_dim, config.minmax_init_delta);
        Ok(Self {
            config,
            encoder,
            decoder,
            minmax,
        })
    }

    fn bind(&self, tape: &mut Tape) -> (BoundMlp, BoundMlp) {
        (self.encoder.bind(tape), self.decoder.bind(tape))
    }

    pub(crate) fn forward_vars(
        &mut self,
        tape: &mut Tape,
        x: Var,
        rng: &mut Rng,
        mode: Mode,
    ) -> Result<DaeVars> {
        let (enc, dec) = self.bind(tape);
        let raw = enc.forward(tape, x)?;
        let y = batch_minmax(
            tape,
            raw,
            &mut self.minmax,
            mode,
            self.config.minmax_momentum,
            self.config.minmax_eps,
        )?;
        let latent = lambda_scale(tape, y, &self.config.lambda)?;
        let noisy = interpolate(tape, latent, rng, mode)?;
        let euler = euler_map(tape, noisy)?;
        let reconstruction = dec.forward(tape, euler)?;
        Ok(DaeVars {
            reconstruction,
            latent,
        })
    }

    /// Full pipeline. Train mode updates the moving statistics.
    pub fn dae_forward(&mut self, x: &Tensor, rng: &mut Rng, mode: Mode) -> Result<DaeForward> {
        let mut tape = Tape::new();
        let xv = tape.leaf(x);
        let v = self.forward_vars(&mut tape, xv, rng, mode)?;
        Ok(DaeForward {
            reconstruction: tape.value(v.reconstruction).clone(),
            latent: tape.value(v.latent).clone(),
        })
    }

    /// Eval-mode forward that leaves the model untouched.
    pub fn eval_forward(&self, x: &Tensor) -> Result<DaeForward> {
        // Eval mode neither mutates state nor draws noise.
        let mut copy = self.minmax.clone();
        let mut tape = Tape::new();
        let xv = tape.leaf(x);
        let (enc, dec) = self.bind(&mut tape);
        let raw = enc.forward(&mut tape, xv)?;
        let y = batch_minmax(&mut tape, raw, &mut copy, Mode::Eval, 0.0, self.config.minmax_eps)?;
        let latent = lambda_scale(&mut tape, y, &self.config.lambda)?;
        let euler = euler_map(&mut tape, latent)?;
        let rec = dec.forward(&mut tape, euler)?;
        Ok(DaeForward {
            reconstruction: tape.value(rec).clone(),
            latent: tape.value(latent).clone(),
        })
    }

    /// Raw encoder output.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let xv = tape.leaf(x);
        let enc = self.encoder.bind(&mut tape);
        let out = enc.forward(&mut tape, xv)?;
        Ok(tape.value(out).clone())
    }

    /// Decoder applied to an Euler-mapped `m×2n` code.
    pub fn decode(&self, code: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let cv = tape.leaf(code);
        let dec = self.decoder.bind(&mut tape);
        let out = dec.forward(&mut tape, cv)?;
        Ok(tape.value(out).clone())
    }

    /// Euler map followed by the decoder, for post-Λ codes.
    pub fn decode_codes(&self, codes: &Tensor) -> Result<Tensor> {
        chunked(codes, |c| {
            let mut tape = Tape::new();
            let cv = tape.leaf(c);
            let dec = self.decoder.bind(&mut tape);
            let e = euler_map(&mut tape, cv)?;
            let out = dec.forward(&mut tape, e)?;
            Ok(tape.value(out).clone())
        })
    }
}

impl Autoencoder for DaeModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Dae
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

    fn training_loss(&mut self, tape: &mut Tape, x: &Tensor, rng: &mut Rng) -> Result<Var> {
        let xv = tape.leaf(x);
        let v = self.forward_vars(tape, xv, rng, Mode::Train)?;
        tape.loss(self.config.loss_kind, v.reconstruction, xv)
    }

    fn latents(&self, x: &Tensor) -> Result<Tensor> {
        chunked(x, |c| Ok(self.eval_forward(c)?.latent))
    }

    fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        chunked(x, |c| Ok(self.eval_forward(c)?.reconstruction))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(v: &[f64]) -> Tensor {
        Tensor::matrix(v.len(), 1, v.to_vec()).unwrap()
    }

    fn small_model(n: usize) -> DaeModel {
        let mut cfg = DaeConfig::new(6, LambdaVector::ones(n, 0.5).unwrap());
        cfg.hidden_sizes = vec![5];
        DaeModel::new(cfg, &mut Rng::new(3)).unwrap()
    }

    #[test]
    fn minmax_train_column() {
        let mut tape = Tape::new();
        let x = tape.constant(column(&[2.0, 4.0]));
        let mut st = MovingMinMaxState::new(1, 0.01);
        let y = batch_minmax(&mut tape, x, &mut st, Mode::Train, 0.01, 1e-6).unwrap();
        let out = tape.value(y).data();
        assert_eq!(out[0], 0.0);
        assert!((out[1] - 2.0 / (2.0 + 1e-6)).abs() < 1e-15);
        assert!((st.moving_min[0] - (0.99 * 0.49 + 0.01 * 2.0)).abs() < 1e-15);
        assert!((st.moving_max[0] - (0.99 * 0.51 + 0.01 * 4.0)).abs() < 1e-15);
    }

    #[test]
    fn minmax_constant_column_is_zero() {
        let mut tape = Tape::new();
        let x = tape.constant(column(&[5.0, 5.0]));
        let mut st = MovingMinMaxState::new(1, 0.01);
        let y = batch_minmax(&mut tape, x, &mut st, Mode::Train, 0.01, 1e-6).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0]);
    }

    #[test]
    fn minmax_eval_uses_initial_state() {
        let mut tape = Tape::new();
        let x = tape.constant(column(&[0.5]));
        let mut st = MovingMinMaxState::new(1, 0.01);
        let before = st.clone();
        let y = batch_minmax(&mut tape, x, &mut st, Mode::Eval, 0.01, 1e-6).unwrap();
        assert!((tape.value(y).data()[0] - 0.5).abs() < 1e-4);
        assert_eq!(st, before);
    }

    #[test]
    fn minmax_train_needs_two_rows() {
        let mut tape = Tape::new();
        let x = tape.constant(column(&[1.0]));
        let mut st = MovingMinMaxState::new(1, 0.01);
        assert!(matches!(
            batch_minmax(&mut tape, x, &mut st, Mode::Train, 0.01, 1e-6),
            Err(Error::BatchTooSmall { got: 1, .. })
        ));
    }

    #[test]
    fn lambda_scale_products() {
        let mut tape = Tape::new();
        let y = tape.constant(Tensor::matrix(1, 2, vec![0.5, 0.5]).unwrap());
        let lam = LambdaVector::new(vec![1.0, 0.005], 0.005).unwrap();
        let z = lambda_scale(&mut tape, y, &lam).unwrap();
        assert_eq!(tape.value(z).data(), &[0.5, 0.0025]);
        let bad = LambdaVector::ones(3, 0.5).unwrap();
        assert!(matches!(lambda_scale(&mut tape, y, &bad), Err(Error::Dimension { .. })));
    }

    #[test]
    fn widths_exclude_self() {
        let w = interpolation_widths(&column(&[0.0, 0.5, 0.9])).unwrap();
        let expected = [0.5, 0.4, 0.4];
        for (a, b) in w.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicates_get_no_noise() {
        let mut tape = Tape::new();
        let y = tape.constant(column(&[0.3, 0.3]));
        let z = interpolate(&mut tape, y, &mut Rng::new(1), Mode::Train).unwrap();
        assert_eq!(tape.value(z).data(), &[0.3, 0.3]);
    }

    #[test]
    fn interpolate_eval_is_identity() {
        let mut tape = Tape::new();
        let y = tape.constant(column(&[0.1, 0.7, 0.2]));
        let z = interpolate(&mut tape, y, &mut Rng::new(1), Mode::Eval).unwrap();
        assert_eq!(z, y);
        let one = tape.constant(column(&[0.1]));
        assert!(interpolate(&mut tape, one, &mut Rng::new(1), Mode::Train).is_err());
    }

    #[test]
    fn euler_layout() {
        let mut tape = Tape::new();
        let y = tape.constant(Tensor::matrix(1, 2, vec![0.0, 0.5]).unwrap());
        let e = euler_map(&mut tape, y).unwrap();
        let v = tape.value(e).data();
        assert_eq!(tape.shape(e), &[1, 4]);
        assert_eq!(&v[..2], &[1.0, 0.0]);
        assert!((v[2] + 1.0).abs() < 1e-12 && v[3].abs() < 1e-12);
    }

    #[test]
    fn zero_decoder_gives_half() {
        let mut m = small_model(2);
        m.decoder.params_mut().for_each(|p| p.data_mut().fill(0.0));
        let out = m.decode(&Tensor::zeros(vec![3, 4])).unwrap();
        assert_eq!(out.shape(), &[3, 6]);
        assert!(out.data().iter().all(|&v| v == 0.5));
        assert!(matches!(m.decode(&Tensor::zeros(vec![3, 2])), Err(Error::Dimension { .. })));
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let mut m = small_model(2);
        let x = Tensor::matrix(2, 6, (0..12).map(|i| i as f64 / 12.0).collect()).unwrap();
        let a = m.dae_forward(&x, &mut Rng::new(0), Mode::Eval).unwrap();
        let b = m.dae_forward(&x, &mut Rng::new(9), Mode::Eval).unwrap();
        assert_eq!(a.reconstruction, b.reconstruction);
        assert_eq!(a.latent, b.latent);
        assert_eq!(a.reconstruction.shape(), x.shape());
        assert!(a.reconstruction.data().iter().all(|&v| v > 0.0 && v < 1.0));
        let c = m.eval_forward(&x).unwrap();
        assert_eq!(a.reconstruction, c.reconstruction);
    }

    #[test]
    fn train_forward_is_seeded() {
        let x = Tensor::matrix(3, 6, (0..18).map(|i| (i % 7) as f64 / 7.0).collect()).unwrap();
        let mut m1 = small_model(2);
        let mut m2 = small_model(2);
        let a = m1.dae_forward(&x, &mut Rng::new(5), Mode::Train).unwrap();
        let b = m2.dae_forward(&x, &mut Rng::new(5), Mode::Train).unwrap();
        assert_eq!(a.reconstruction, b.reconstruction);
        assert_eq!(m1.minmax, m2.minmax);
        assert_ne!(m1.minmax, MovingMinMaxState::new(2, 0.01));
    }

    #[test]
    fn config_invariants() {
        let mut cfg = DaeConfig::new(4, LambdaVector::ones(2, 0.5).unwrap());
        cfg.latent_dim = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = DaeConfig::new(4, LambdaVector::ones(2, 0.5).unwrap());
        cfg.minmax_momentum = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = DaeConfig::new(4, LambdaVector::ones(2, 0.5).unwrap());
        cfg.minmax_init_delta = 0.0;
        assert!(cfg.validate().is_err());
    }
}
