//! Central finite-difference checks of every differentiable tape op and of
//! the full eval-mode DAE loss.

use dae_core::linalg::LambdaVector;
use dae_core::model::{
    batch_minmax, euler_map, interpolate, lambda_scale, Autoencoder, DaeConfig, DaeModel, Mode,
};
use dae_core::tensor::{LossKind, ReduceOp, Tape, Tensor, Var};
use dae_core::{Result, Rng};

const H: f64 = 1e-5;
const SEEDS: u64 = 20;

fn random(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform_range(lo, hi)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Scalar objective: the op output contracted with a fixed random weight.
fn objective<F>(f: &F, inputs: &[Tensor], weight: &Tensor) -> (Tape, Vec<Var>, Var)
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t)).collect();
    let out = f(&mut tape, &vars).unwrap();
    let loss = if tape.value(out).is_scalar() {
        out
    } else {
        let w = tape.constant(weight.clone());
        let p = tape.mul(out, w).unwrap();
        tape.sum(p).unwrap()
    };
    (tape, vars, loss)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Relative error `‖g − g_fd‖ / max(‖g‖, ‖g_fd‖)` over all inputs.
fn gradient_error<F>(f: F, inputs: &[Tensor], rng: &mut Rng) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let shape = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t)).collect();
        let out = f(&mut tape, &vars).unwrap();
        tape.shape(out).to_vec()
    };
    let weight = random(&shape, -1.0, 1.0, rng);

    let (mut tape, vars, loss) = objective(&f, inputs, &weight);
    tape.backward(loss).unwrap();
    let mut analytic = Vec::new();
    for (v, t) in vars.iter().zip(inputs) {
        match tape.grad(*v) {
            Some(g) => analytic.extend_from_slice(g),
            None => analytic.extend(std::iter::repeat(0.0).take(t.len())),
        }
    }

    let mut numeric = Vec::with_capacity(analytic.len());
    for i in 0..inputs.len() {
        for j in 0..inputs[i].len() {
            let eval = |delta: f64| {
                let mut shifted = inputs.to_vec();
                shifted[i].data_mut()[j] += delta;
                let (tape, _, loss) = objective(&f, &shifted, &weight);
                tape.value(loss).item()
            };
            numeric.push((eval(H) - eval(-H)) / (2.0 * H));
        }
    }
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    let scale = norm(&analytic).max(norm(&numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn check_op<F>(name: &str, shapes: &[&[usize]], range: (f64, f64), f: F)
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    for seed in 0..SEEDS {
        let mut rng = Rng::new(seed);
        let inputs: Vec<Tensor> = shapes.iter().map(|s| random(s, range.0, range.1, &mut rng)).collect();
        let err = gradient_error(&f, &inputs, &mut rng);
        assert!(err < 1e-4, "{name} seed {seed}: relative error {err:e}");
    }
}

#[test]
fn matmul() {
    check_op("matmul", &[&[3, 4], &[4, 5]], (-2.0, 2.0), |t, v| t.matmul(v[0], v[1]));
}

#[test]
fn binary_elementwise() {
    check_op("add", &[&[3, 4], &[3, 4]], (-2.0, 2.0), |t, v| t.add(v[0], v[1]));
    check_op("sub", &[&[3, 4], &[3, 4]], (-2.0, 2.0), |t, v| t.sub(v[0], v[1]));
    check_op("mul", &[&[3, 4], &[3, 4]], (-2.0, 2.0), |t, v| t.mul(v[0], v[1]));
}

#[test]
fn unary_elementwise() {
    let s: &[&[usize]] = &[&[4, 3]];
    check_op("scalar_mul", s, (-2.0, 2.0), |t, v| Ok(t.scalar_mul(v[0], -1.7)));
    check_op("sigmoid", s, (-2.0, 2.0), |t, v| Ok(t.sigmoid(v[0])));
    check_op("exp", s, (-2.0, 2.0), |t, v| Ok(t.exp(v[0])));
    check_op("sin2pi", s, (-2.0, 2.0), |t, v| Ok(t.sin2pi(v[0])));
    check_op("cos2pi", s, (-2.0, 2.0), |t, v| Ok(t.cos2pi(v[0])));
}

#[test]
fn leaky_relu_away_from_the_kink() {
    // Inputs stay at least 1e-3 from zero so the stencil never straddles it.
    for seed in 0..SEEDS {
        let mut rng = Rng::new(seed);
        let mut x = random(&[5, 4], -2.0, 2.0, &mut rng);
        for v in x.data_mut() {
            if v.abs() < 1e-3 {
                *v = 0.5;
            }
        }
        let err = gradient_error(|t: &mut Tape, v: &[Var]| Ok(t.leaky_relu(v[0], 0.01)), &[x], &mut rng);
        assert!(err < 1e-4, "leaky_relu seed {seed}: {err:e}");
    }
}

#[test]
fn add_bias() {
    check_op("add_bias", &[&[4, 3], &[3]], (-2.0, 2.0), |t, v| t.add_bias(v[0], v[1]));
}

#[test]
fn reductions() {
    let s: &[&[usize]] = &[&[4, 3]];
    check_op("sum", s, (-2.0, 2.0), |t, v| t.sum(v[0]));
    check_op("mean", s, (-2.0, 2.0), |t, v| t.mean(v[0]));
    for axis in [0, 1] {
        check_op("sum axis", s, (-2.0, 2.0), |t, v| t.reduce(ReduceOp::Sum, v[0], Some(axis)));
        check_op("mean axis", s, (-2.0, 2.0), |t, v| t.reduce(ReduceOp::Mean, v[0], Some(axis)));
    }
}

#[test]
fn column_affine_and_add_const() {
    check_op("column_affine", &[&[4, 3]], (-2.0, 2.0), |t, v| {
        t.column_affine(v[0], &[0.3, -1.0, 2.0], &[1.5, 0.2, -0.7])
    });
    let c = Tensor::matrix(2, 3, vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6]).unwrap();
    check_op("add_const", &[&[2, 3]], (-2.0, 2.0), move |t, v| t.add_const(v[0], &c));
}

#[test]
fn interleave() {
    check_op("interleave", &[&[3, 2], &[3, 2]], (-2.0, 2.0), |t, v| t.interleave(v[0], v[1]));
}

#[test]
fn losses() {
    check_op("mse", &[&[3, 4], &[3, 4]], (-2.0, 2.0), |t, v| t.loss(LossKind::Mse, v[0], v[1]));
    // Predictions inside (0, 1) keep the cross-entropy away from its clamp.
    check_op("bce", &[&[3, 4], &[3, 4]], (0.05, 0.95), |t, v| t.loss(LossKind::Bce, v[0], v[1]));
}

#[test]
fn composed_chain() {
    check_op("chain", &[&[4, 3], &[3, 2], &[2]], (-2.0, 2.0), |t, v| {
        let h = t.matmul(v[0], v[1])?;
        let h = t.add_bias(h, v[2])?;
        let s = t.sigmoid(h);
        let c = t.cos2pi(s);
        let e = t.sin2pi(s);
        let i = t.interleave(c, e)?;
        t.mean(i)
    });
}

/// Eval-mode DAE loss as a function of the parameter vector.
fn eval_loss(model: &DaeModel, x: &Tensor, tape: &mut Tape) -> Var {
    let mut state = model.minmax.clone();
    let enc = model.encoder.bind(tape);
    let dec = model.decoder.bind(tape);
    let xv = tape.leaf(x);
    let raw = enc.forward(tape, xv).unwrap();
    let y = batch_minmax(tape, raw, &mut state, Mode::Eval, 0.0, model.config.minmax_eps).unwrap();
    let z = lambda_scale(tape, y, &model.config.lambda).unwrap();
    let z = interpolate(tape, z, &mut Rng::new(0), Mode::Eval).unwrap();
    let e = euler_map(tape, z).unwrap();
    let rec = dec.forward(tape, e).unwrap();
    tape.loss(model.config.loss_kind, rec, xv).unwrap()
}

#[test]
fn end_to_end_eval_dae_loss() {
    for seed in 0..SEEDS {
        let mut rng = Rng::new(seed);
        let lambda = LambdaVector::new(vec![1.0, 0.5], 0.5).unwrap();
        let mut cfg = DaeConfig::new(6, lambda);
        cfg.hidden_sizes = vec![5, 4];
        if seed % 2 == 1 {
            cfg.loss_kind = LossKind::Bce;
        }
        let mut model = DaeModel::new(cfg, &mut rng).unwrap();
        // Moving statistics away from their initial values.
        model.minmax.moving_min = vec![-0.8, -0.3];
        model.minmax.moving_max = vec![0.9, 1.1];
        let x = random(&[7, 6], 0.0, 1.0, &mut rng);

        let mut tape = Tape::new();
        let loss = eval_loss(&model, &x, &mut tape);
        tape.backward(loss).unwrap();
        tape.write_grads(model.params_mut()).unwrap();
        let analytic: Vec<f64> = model
            .params()
            .iter()
            .flat_map(|p| p.grad.clone().unwrap())
            .collect();

        let mut numeric = Vec::with_capacity(analytic.len());
        let n_params = model.params().len();
        for pi in 0..n_params {
            for j in 0..model.params()[pi].len() {
                let mut value = |delta: f64| {
                    model.params_mut()[pi].data_mut()[j] += delta;
                    let mut tape = Tape::new();
                    let l = eval_loss(&model, &x, &mut tape);
                    model.params_mut()[pi].data_mut()[j] -= delta;
                    tape.value(l).item()
                };
                numeric.push((value(H) - value(-H)) / (2.0 * H));
            }
        }
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let err = norm(&diff) / norm(&analytic).max(norm(&numeric));
        assert!(err < 1e-3, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn replay_is_bit_identical() {
    let run = || {
        let mut rng = Rng::new(11);
        let a = random(&[3, 4], -2.0, 2.0, &mut rng);
        let b = random(&[4, 2], -2.0, 2.0, &mut rng);
        let mut tape = Tape::new();
        let (va, vb) = (tape.param(&a), tape.param(&b));
        let m = tape.matmul(va, vb).unwrap();
        let s = tape.sigmoid(m);
        let l = tape.mean(s).unwrap();
        tape.backward(l).unwrap();
        (
            tape.value(l).item().to_bits(),
            tape.grad(va).unwrap().iter().map(|g| g.to_bits()).collect::<Vec<_>>(),
        )
    };
    assert_eq!(run(), run());
}
