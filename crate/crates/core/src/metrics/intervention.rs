use super::{check_rows, FactorMatrix, LatentMatrix, MetricConfig};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Row indices grouped by factor value, for drawing samples that share one
/// factor. Values are drawn in proportion to their frequency by anchoring on
/// a uniformly chosen row; for exhaustive product datasets this is uniform.
/// Partners are drawn with replacement, so small groups are allowed.
#[derive(Clone, Debug)]
pub struct FactorSampler {
    groups: Vec<Vec<Vec<usize>>>,
    labels: Vec<Vec<usize>>,
    n_rows: usize,
}

impl FactorSampler {
    pub fn new(v: &FactorMatrix) -> Self {
        let mut groups: Vec<Vec<Vec<usize>>> =
            v.cardinalities().iter().map(|&c| vec![Vec::new(); c]).collect();
        let labels: Vec<Vec<usize>> = (0..v.n_factors()).map(|k| v.column(k)).collect();
        for (k, col) in labels.iter().enumerate() {
            for (row, &value) in col.iter().enumerate() {
                groups[k][value].push(row);
            }
        }
        Self {
            groups,
            labels,
            n_rows: v.n_rows(),
        }
    }

    /// A uniformly chosen anchor row and a partner sharing factor `k`,
    /// distinct from the anchor whenever the group allows it.
    pub fn pair(&self, k: usize, rng: &mut Rng) -> (usize, usize) {
        let a = rng.below(self.n_rows);
        let group = &self.groups[k][self.labels[k][a]];
        loop {
            let b = group[rng.below(group.len())];
            if b != a || group.len() == 1 {
                return (a, b);
            }
        }
    }

    /// `size` rows sharing one value of factor `k`.
    pub fn group(&self, k: usize, size: usize, rng: &mut Rng) -> Vec<usize> {
        let a = rng.below(self.n_rows);
        let group = &self.groups[k][self.labels[k][a]];
        let mut rows = Vec::with_capacity(size);
        rows.push(a);
        rows.extend((1..size).map(|_| group[rng.below(group.len())]));
        rows
    }
}

fn intervention_setup(
    metric: &'static str,
    z: &LatentMatrix,
    v: &FactorMatrix,
    config: &MetricConfig,
) -> Result<Vec<usize>> {
    check_rows(z, v)?;
    let active = v.active_factors();
    if active.len() < 2 {
        return Err(Error::undefined(
            metric,
            format!("needs at least 2 varying factors, found {}", active.len()),
        ));
    }
    if config.n_train == 0 || config.n_test == 0 || config.group_size == 0 {
        return Err(Error::Argument(format!("{metric}: sample counts must be positive")));
    }
    Ok(active)
}

/// Linear-classifier accuracy at identifying the fixed factor from mean
/// absolute code differences.
pub fn z_diff_score(
    z: &LatentMatrix,
    v: &FactorMatrix,
    config: &MetricConfig,
    rng: &mut Rng,
) -> Result<f64> {
    let active = intervention_setup("z_diff", z, v, config)?;
    let sampler = FactorSampler::new(v);
    let n = z.n_dims();
    let total = config.n_train + config.n_test;
    let mut features = Vec::with_capacity(total * n);
    let mut targets = Vec::with_capacity(total);
    for _ in 0..total {
        let class = rng.below(active.len());
        let k = active[class];
        let mut diff = vec![0.0; n];
        for _ in 0..config.group_size {
            let (a, b) = sampler.pair(k, rng);
            for ((d, x), y) in diff.iter_mut().zip(z.row(a)).zip(z.row(b)) {
                *d += (x - y).abs();
            }
        }
        features.extend(diff.iter().map(|d| d / config.group_size as f64));
        targets.push(class);
    }
    let (train_x, test_x) = features.split_at(config.n_train * n);
    let (train_y, test_y) = targets.split_at(config.n_train);
    let clf = SoftmaxClassifier::fit(
        train_x,
        train_y,
        n,
        active.len(),
        config.classifier_epochs,
        config.classifier_lr,
    );
    let correct = test_x
        .chunks_exact(n)
        .zip(test_y)
        .filter(|(x, &y)| clf.predict(x) == y)
        .count();
    Ok(correct as f64 / config.n_test as f64)
}

/// Majority-vote accuracy of the least-variance (std-normalised) dimension.
pub fn z_var_score(
    z: &LatentMatrix,
    v: &FactorMatrix,
    config: &MetricConfig,
    rng: &mut Rng,
) -> Result<f64> {
    let active = intervention_setup("z_var", z, v, config)?;
    if config.group_size < 2 {
        return Err(Error::Argument("z_var needs groups of at least 2".into()));
    }
    let sampler = FactorSampler::new(v);
    let std: Vec<f64> = (0..z.n_dims()).map(|j| population_std(&z.column(j))).collect();
    let dims: Vec<usize> = (0..z.n_dims()).filter(|&j| std[j] >= 1e-8).collect();
    if dims.is_empty() {
        return Err(Error::undefined("z_var", "every latent dimension is constant"));
    }

    let vote = |rng: &mut Rng| -> (usize, usize) {
        let class = rng.below(active.len());
        let rows = sampler.group(active[class], config.group_size, rng);
        let mut best = (f64::INFINITY, 0);
        for (slot, &j) in dims.iter().enumerate() {
            let vals: Vec<f64> = rows.iter().map(|&r| z.row(r)[j]).collect();
            let var = (population_std(&vals) / std[j]).powi(2);
            if var < best.0 {
                best = (var, slot);
            }
        }
        (best.1, class)
    };

    let mut counts = vec![vec![0usize; active.len()]; dims.len()];
    for _ in 0..config.n_train {
        let (d, c) = vote(rng);
        counts[d][c] += 1;
    }
    let majority: Vec<usize> = counts
        .iter()
        .map(|row| {
            // First maximum wins ties.
            let mut best = 0;
            for (c, &n) in row.iter().enumerate() {
                if n > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect();
    let correct = (0..config.n_test)
        .filter(|_| {
            let (d, c) = vote(rng);
            majority[d] == c
        })
        .count();
    Ok(correct as f64 / config.n_test as f64)
}

fn population_std(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Multinomial logistic regression by full-batch gradient descent on
/// standardised features, zero-initialised.
struct SoftmaxClassifier {
    mean: Vec<f64>,
    scale: Vec<f64>,
    weights: Vec<f64>,
    bias: Vec<f64>,
    classes: usize,
}

impl SoftmaxClassifier {
    fn fit(x: &[f64], y: &[usize], n: usize, classes: usize, epochs: usize, lr: f64) -> Self {
        let m = y.len();
        let mut mean = vec![0.0; n];
        for row in x.chunks_exact(n) {
            mean.iter_mut().zip(row).for_each(|(a, v)| *a += v / m as f64);
        }
        let mut scale = vec![0.0; n];
        for row in x.chunks_exact(n) {
            for j in 0..n {
                scale[j] += (row[j] - mean[j]).powi(2) / m as f64;
            }
        }
        for s in &mut scale {
            *s = if *s > 1e-24 { 1.0 / s.sqrt() } else { 1.0 };
        }
        let xs: Vec<f64> = x
            .chunks_exact(n)
            .flat_map(|row| (0..n).map(|j| (row[j] - mean[j]) * scale[j]).collect::<Vec<_>>())
            .collect();

        let mut clf = Self {
            mean,
            scale,
            weights: vec![0.0; n * classes],
            bias: vec![0.0; classes],
            classes,
        };
        let mut probs = vec![0.0; classes];
        for _ in 0..epochs {
            let mut gw = vec![0.0; n * classes];
            let mut gb = vec![0.0; classes];
            for (row, &label) in xs.chunks_exact(n).zip(y) {
                clf.softmax(row, &mut probs);
                for c in 0..classes {
                    let err = probs[c] - if c == label { 1.0 } else { 0.0 };
                    gb[c] += err;
                    for j in 0..n {
                        gw[j * classes + c] += err * row[j];
                    }
                }
            }
            let step = lr / m as f64;
            clf.weights.iter_mut().zip(&gw).for_each(|(w, g)| *w -= step * g);
            clf.bias.iter_mut().zip(&gb).for_each(|(b, g)| *b -= step * g);
        }
        clf
    }

    fn softmax(&self, standardized: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.bias[c]
                + standardized
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v * self.weights[j * self.classes + c])
                    .sum::<f64>();
        }
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            total += *o;
        }
        out.iter_mut().for_each(|o| *o /= total);
    }

    fn predict(&self, x: &[f64]) -> usize {
        let row: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(j, v)| (v - self.mean[j]) * self.scale[j])
            .collect();
        let mut p = vec![0.0; self.classes];
        self.softmax(&row, &mut p);
        let mut best = 0;
        for c in 1..self.classes {
            if p[c] > p[best] {
                best = c;
            }
        }
        best
    }
}
