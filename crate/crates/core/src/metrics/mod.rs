//! Supervised disentanglement scores computed from latent codes and
//! ground-truth factor labels.
//!
//! * `z_diff`: accuracy of a linear classifier predicting which factor was
//!   held fixed from mean absolute code differences over pairs.
//! * `z_var`: majority-vote accuracy of the least-variance dimension under a
//!   fixed factor.
//! * `dci_rf`: importance-weighted disentanglement from random-forest
//!   importances.
//! * `jemmig`, `dcimig`: histogram mutual-information gap scores.

mod forest;
mod info;
mod intervention;
mod probe;

pub use forest::{dci_disentanglement, dci_importances, dci_rf_score, ForestConfig, RandomForest};
pub use info::{
    dcimig_score, discretize, entropy, joint_entropy, jemmig_score, mutual_information,
};
pub use intervention::{z_diff_score, z_var_score, FactorSampler};
pub use probe::{equivariance_probe, grid_occupancy, ProbeReport};

use std::fmt::Write as _;

use crate::datasets::FactorDataset;
use crate::error::{Error, Result};
use crate::rng::{Rng, Stream};
use crate::tensor::Tensor;

/// `N × n` latent codes, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentMatrix {
    n_rows: usize,
    n_dims: usize,
    codes: Vec<f64>,
}

impl LatentMatrix {
    pub fn new(n_rows: usize, n_dims: usize, codes: Vec<f64>) -> Result<Self> {
        if codes.len() != n_rows * n_dims {
            return Err(Error::dim("latent matrix", &[n_rows, n_dims], &[codes.len()]));
        }
        if codes.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("latent codes contain NaN or infinity".into()));
        }
        Ok(Self {
            n_rows,
            n_dims,
            codes,
        })
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (m, n) = t.dims2()?;
        Self::new(m, n, t.data().to_vec())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_dims(&self) -> usize {
        self.n_dims
    }

    pub fn codes(&self) -> &[f64] {
        &self.codes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.codes[i * self.n_dims..(i + 1) * self.n_dims]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.codes[i * self.n_dims + j]).collect()
    }

    /// Reorders dimensions so that new column `j` is old column `perm[j]`.
    pub fn permute_dims(&self, perm: &[usize]) -> Self {
        let mut codes = Vec::with_capacity(self.codes.len());
        for i in 0..self.n_rows {
            let row = self.row(i);
            codes.extend(perm.iter().map(|&p| row[p]));
        }
        Self {
            n_rows: self.n_rows,
            n_dims: perm.len(),
            codes,
        }
    }
}

/// `N × F` integer factor labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorMatrix {
    n_rows: usize,
    labels: Vec<u16>,
    cardinalities: Vec<usize>,
}

impl FactorMatrix {
    pub fn new(labels: Vec<u16>, cardinalities: Vec<usize>) -> Result<Self> {
        let f = cardinalities.len();
        if f == 0 {
            return Err(Error::Argument("factor matrix needs at least one factor".into()));
        }
        if labels.len() % f != 0 {
            return Err(Error::dim("factor matrix", &[labels.len()], &[f]));
        }
        for (i, &v) in labels.iter().enumerate() {
            let card = cardinalities[i % f];
            if v as usize >= card {
                return Err(Error::Argument(format!(
                    "label {v} of factor {} exceeds cardinality {card}",
                    i % f
                )));
            }
        }
        Ok(Self {
            n_rows: labels.len() / f,
            labels,
            cardinalities,
        })
    }

    pub fn from_dataset(ds: &FactorDataset) -> Self {
        Self {
            n_rows: ds.len(),
            labels: ds.factors.clone(),
            cardinalities: ds.cardinalities(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_factors(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn label(&self, row: usize, factor: usize) -> usize {
        self.labels[row * self.n_factors() + factor] as usize
    }

    pub fn row(&self, i: usize) -> &[u16] {
        let f = self.n_factors();
        &self.labels[i * f..(i + 1) * f]
    }

    pub fn column(&self, k: usize) -> Vec<usize> {
        (0..self.n_rows).map(|i| self.label(i, k)).collect()
    }

    /// Factors that take at least two values.
    pub fn active_factors(&self) -> Vec<usize> {
        (0..self.n_factors())
            .filter(|&k| self.cardinalities[k] >= 2)
            .collect()
    }
}

pub(crate) fn check_rows(z: &LatentMatrix, v: &FactorMatrix) -> Result<()> {
    if z.n_rows() != v.n_rows() {
        return Err(Error::dim("metrics", &[z.n_rows()], &[v.n_rows()]));
    }
    if z.n_rows() == 0 {
        return Err(Error::EmptyInput("metrics"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricConfig {
    /// Training points (votes) for `z_diff` and `z_var`.
    pub n_train: usize,
    /// Held-out points for `z_diff` and `z_var`.
    pub n_test: usize,
    /// Pairs / samples per point.
    pub group_size: usize,
    pub classifier_epochs: usize,
    pub classifier_lr: f64,
    pub bins: usize,
    pub forest: ForestConfig,
    pub seed: u64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            n_train: 500,
            n_test: 100,
            group_size: 64,
            classifier_epochs: 200,
            classifier_lr: 0.5,
            bins: 20,
            forest: ForestConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub z_diff: f64,
    pub z_var: f64,
    pub dci_rf: f64,
    pub jemmig: f64,
    pub dcimig: f64,
    pub seed: u64,
    pub bins: usize,
    pub n_samples: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub group_size: usize,
    pub probes: Vec<ProbeReport>,
}

impl MetricReport {
    pub const SCORE_NAMES: [&'static str; 5] = ["z_diff", "z_var", "dci_rf", "jemmig", "dcimig"];

    pub fn scores(&self) -> [f64; 5] {
        [self.z_diff, self.z_var, self.dci_rf, self.jemmig, self.dcimig]
    }

    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, v) in Self::SCORE_NAMES.iter().zip(self.scores()) {
            let _ = writeln!(s, "{name}: {v:.6}");
        }
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "bins: {}", self.bins);
        let _ = writeln!(s, "n_samples: {}", self.n_samples);
        let _ = writeln!(s, "n_train: {}", self.n_train);
        let _ = writeln!(s, "n_test: {}", self.n_test);
        let _ = writeln!(s, "group_size: {}", self.group_size);
        for p in &self.probes {
            let _ = writeln!(s, "probe_factor_{}_dominant_dim: {}", p.factor, p.dominant_dim);
            let _ = writeln!(s, "probe_factor_{}_alignment_ratio: {:.6}", p.factor, p.alignment_ratio);
        }
        s
    }

    pub fn csv_header(&self) -> String {
        let mut cols: Vec<String> = Self::SCORE_NAMES.iter().map(|s| s.to_string()).collect();
        cols.extend(["seed", "bins", "n_samples"].map(String::from));
        for p in &self.probes {
            cols.push(format!("probe{}_dominant_dim", p.factor));
            cols.push(format!("probe{}_alignment_ratio", p.factor));
        }
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols: Vec<String> = self.scores().iter().map(|v| format!("{v:.6}")).collect();
        cols.push(self.seed.to_string());
        cols.push(self.bins.to_string());
        cols.push(self.n_samples.to_string());
        for p in &self.probes {
            cols.push(p.dominant_dim.to_string());
            cols.push(format!("{:.6}", p.alignment_ratio));
        }
        cols.join(",")
    }
}

/// Computes all five scores. Each score draws from its own child stream of
/// the metric seed.
pub fn evaluate(z: &LatentMatrix, v: &FactorMatrix, config: &MetricConfig) -> Result<MetricReport> {
    check_rows(z, v)?;
    let mut base = Rng::stream(config.seed, Stream::Metrics);
    let mut r_diff = base.fork();
    let mut r_var = base.fork();
    let mut r_dci = base.fork();
    Ok(MetricReport {
        z_diff: z_diff_score(z, v, config, &mut r_diff)?,
        z_var: z_var_score(z, v, config, &mut r_var)?,
        dci_rf: dci_rf_score(z, v, &config.forest, &mut r_dci)?,
        jemmig: jemmig_score(z, v, config.bins)?,
        dcimig: dcimig_score(z, v, config.bins)?,
        seed: config.seed,
        bins: config.bins,
        n_samples: z.n_rows(),
        n_train: config.n_train,
        n_test: config.n_test,
        group_size: config.group_size,
        probes: Vec::new(),
    })
}
