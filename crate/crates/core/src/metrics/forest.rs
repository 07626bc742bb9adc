use super::{check_rows, FactorMatrix, LatentMatrix};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Bootstrap sample size as a fraction of the rows.
    pub bootstrap_fraction: f64,
    /// Candidate features per split; `None` means all of them.
    pub max_features: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 10,
            max_depth: 10,
            min_leaf: 5,
            bootstrap_fraction: 1.0,
            max_features: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

/// Bagged CART regression trees with impurity-decrease importances.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomForest {
    trees: Vec<Tree>,
    importances: Vec<f64>,
    n_features: usize,
}

struct Builder<'a> {
    x: &'a [f64],
    y: &'a [f64],
    n_cols: usize,
    config: &'a ForestConfig,
    max_features: usize,
    importances: Vec<f64>,
    /// Dense value ranks per column, for order-only tie-breaking.
    ranks: Vec<Vec<u32>>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
    /// Rows sorted by the split feature, and the left-side count.
    order: Vec<usize>,
    left_len: usize,
}

impl Builder<'_> {
    fn sse(&self, rows: &[usize]) -> f64 {
        let n = rows.len() as f64;
        let (s, s2) = rows
            .iter()
            .fold((0.0, 0.0), |(s, s2), &r| (s + self.y[r], s2 + self.y[r] * self.y[r]));
        (s2 - s * s / n).max(0.0)
    }

    fn grow(&mut self, nodes: &mut Vec<Node>, rows: Vec<usize>, depth: usize, rng: &mut Rng) -> usize {
        let id = nodes.len();
        let mean = rows.iter().map(|&r| self.y[r]).sum::<f64>() / rows.len() as f64;
        nodes.push(Node::Leaf(mean));
        let min_leaf = self.config.min_leaf.max(1);
        if depth >= self.config.max_depth || rows.len() < 2 * min_leaf {
            return id;
        }
        let parent = self.sse(&rows);
        if parent <= 1e-12 {
            return id;
        }
        let Some(best) = self.best_split(&rows, parent, min_leaf, rng) else {
            return id;
        };
        self.importances[best.feature] += best.gain;
        let mut order = best.order;
        let right_rows = order.split_off(best.left_len);
        let left = self.grow(nodes, order, depth + 1, rng);
        let right = self.grow(nodes, right_rows, depth + 1, rng);
        nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    /// Exact gain ties go to the column whose value ranks come first, which
    /// depends neither on column position nor on monotone rescaling.
    fn column_precedes(&self, a: usize, b: usize) -> bool {
        self.ranks[a] < self.ranks[b]
    }

    fn best_split(&self, rows: &[usize], parent: f64, min_leaf: usize, rng: &mut Rng) -> Option<BestSplit> {
        let n = rows.len();
        let mut best: Option<BestSplit> = None;
        let features = if self.max_features == self.n_cols {
            (0..self.n_cols).collect()
        } else {
            rng.sample_distinct(self.n_cols, self.max_features)
        };
        for feature in features {
            let value = |r: usize| self.x[r * self.n_cols + feature];
            let mut order = rows.to_vec();
            order.sort_by(|&a, &b| value(a).total_cmp(&value(b)));
            let total: f64 = order.iter().map(|&r| self.y[r]).sum();
            let total2: f64 = order.iter().map(|&r| self.y[r] * self.y[r]).sum();
            let (mut s, mut s2) = (0.0, 0.0);
            let mut local: Option<(f64, usize)> = None;
            for i in 1..n {
                let r = order[i - 1];
                s += self.y[r];
                s2 += self.y[r] * self.y[r];
                if i < min_leaf || n - i < min_leaf || value(order[i - 1]) >= value(order[i]) {
                    continue;
                }
                let (nl, nr) = (i as f64, (n - i) as f64);
                let sse = (s2 - s * s / nl) + ((total2 - s2) - (total - s).powi(2) / nr);
                if local.is_none_or(|(b, _)| sse < b) {
                    local = Some((sse, i));
                }
            }
            let Some((sse, i)) = local else { continue };
            let gain = parent - sse.max(0.0);
            let better = best.as_ref().is_none_or(|b| {
                gain > b.gain || (gain == b.gain && self.column_precedes(feature, b.feature))
            });
            if gain > 1e-12 && better {
                let threshold = 0.5 * (value(order[i - 1]) + value(order[i]));
                best = Some(BestSplit {
                    feature,
                    threshold,
                    gain,
                    order,
                    left_len: i,
                });
            }
        }
        best
    }
}

fn dense_ranks(x: &[f64], n_rows: usize, n_cols: usize, col: usize) -> Vec<u32> {
    let value = |r: usize| x[r * n_cols + col];
    let mut order: Vec<usize> = (0..n_rows).collect();
    order.sort_by(|&a, &b| value(a).total_cmp(&value(b)));
    let mut ranks = vec![0u32; n_rows];
    let mut rank = 0u32;
    for i in 1..n_rows {
        if value(order[i]) > value(order[i - 1]) {
            rank += 1;
        }
        ranks[order[i]] = rank;
    }
    ranks
}

impl RandomForest {
    /// Fits `n_rows × n_cols` features `x` to targets `y`.
    pub fn fit(
        x: &[f64],
        n_rows: usize,
        n_cols: usize,
        y: &[f64],
        config: &ForestConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        if x.len() != n_rows * n_cols || y.len() != n_rows {
            return Err(Error::dim("random forest", &[n_rows, n_cols], &[x.len(), y.len()]));
        }
        if n_cols == 0 {
            return Err(Error::EmptyInput("random forest"));
        }
        if n_rows < 2 * config.min_leaf.max(1) {
            return Err(Error::Argument(format!(
                "random forest needs at least {} rows, got {n_rows}",
                2 * config.min_leaf.max(1)
            )));
        }
        if config.n_trees == 0 || !(config.bootstrap_fraction > 0.0) {
            return Err(Error::Argument("forest needs trees and a positive bootstrap".into()));
        }
        let max_features = config
            .max_features
            .unwrap_or(n_cols)
            .clamp(1, n_cols);
        let sample = ((n_rows as f64 * config.bootstrap_fraction).round() as usize).max(1);
        let mut builder = Builder {
            x,
            y,
            n_cols,
            config,
            max_features,
            importances: vec![0.0; n_cols],
            ranks: (0..n_cols).map(|j| dense_ranks(x, n_rows, n_cols, j)).collect(),
        };
        let mut trees = Vec::with_capacity(config.n_trees);
        for _ in 0..config.n_trees {
            let rows: Vec<usize> = (0..sample).map(|_| rng.below(n_rows)).collect();
            let mut nodes = Vec::new();
            builder.grow(&mut nodes, rows, 0, rng);
            trees.push(Tree { nodes });
        }
        let mut importances = builder.importances;
        let total: f64 = importances.iter().sum();
        if total > 0.0 {
            importances.iter_mut().for_each(|v| *v /= total);
        }
        Ok(Self {
            trees,
            importances,
            n_features: n_cols,
        })
    }

    /// Normalised importances; all zero when no tree ever split.
    pub fn importances(&self) -> &[f64] {
        &self.importances
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        x.chunks_exact(self.n_features).map(|r| self.predict_row(r)).collect()
    }

    /// Coefficient of determination on `(x, y)`.
    pub fn r2_score(&self, x: &[f64], y: &[f64]) -> f64 {
        let pred = self.predict(x);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let ss_res: f64 = y.iter().zip(&pred).map(|(a, p)| (a - p).powi(2)).sum();
        let ss_tot: f64 = y.iter().map(|a| (a - mean).powi(2)).sum();
        if ss_tot == 0.0 {
            return if ss_res == 0.0 { 1.0 } else { 0.0 };
        }
        1.0 - ss_res / ss_tot
    }
}

/// `n × F` importance matrix: column `k` holds the importances of a forest
/// regressing factor `k` on the codes.
pub fn dci_importances(
    z: &LatentMatrix,
    factors: &[Vec<usize>],
    config: &ForestConfig,
    rng: &mut Rng,
) -> Result<Vec<Vec<f64>>> {
    let n = z.n_dims();
    let mut r = vec![vec![0.0; factors.len()]; n];
    for (k, labels) in factors.iter().enumerate() {
        let y: Vec<f64> = labels.iter().map(|&v| v as f64).collect();
        let forest = RandomForest::fit(z.codes(), z.n_rows(), n, &y, config, rng)?;
        for (j, &imp) in forest.importances().iter().enumerate() {
            r[j][k] = imp;
        }
    }
    Ok(r)
}

/// `Σ_j ρ_j (1 − H_F(p_j))` for an `n × F` importance matrix.
pub fn dci_disentanglement(r: &[Vec<f64>]) -> Result<f64> {
    let f = r.first().map_or(0, Vec::len);
    if f < 2 {
        return Err(Error::undefined("dci_rf", "needs at least 2 factors"));
    }
    let total: f64 = r.iter().flatten().sum();
    if total <= 0.0 {
        return Err(Error::undefined("dci_rf", "all importances are zero"));
    }
    let ln_f = (f as f64).ln();
    let mut score = 0.0;
    for row in r {
        let mass: f64 = row.iter().sum();
        if mass <= 0.0 {
            continue;
        }
        let h: f64 = row
            .iter()
            .map(|&x| x / mass)
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum();
        score += (mass / total) * (1.0 - h / ln_f);
    }
    Ok(score.clamp(0.0, 1.0))
}

pub fn dci_rf_score(
    z: &LatentMatrix,
    v: &FactorMatrix,
    config: &ForestConfig,
    rng: &mut Rng,
) -> Result<f64> {
    check_rows(z, v)?;
    let active = v.active_factors();
    if active.len() < 2 {
        return Err(Error::undefined("dci_rf", "needs at least 2 varying factors"));
    }
    let columns: Vec<Vec<usize>> = active.iter().map(|&k| v.column(k)).collect();
    let r = dci_importances(z, &columns, config, rng)?;
    dci_disentanglement(&r)
}
