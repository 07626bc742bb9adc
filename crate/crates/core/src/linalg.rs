//! PCA singular values and the Λ (per-feature scale) vector derived from them.
//!
//! Singular values come from randomized subspace iteration on the
//! column-centred data matrix; the small projected problem is finished with a
//! cyclic Jacobi eigensolver on its Gram matrix.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::gemm;

pub const POWER_ITERATIONS: usize = 40;
pub const OVERSAMPLING: usize = 8;
/// Row cap above which a seeded uniform subsample is used.
pub const MAX_PCA_ROWS: usize = 10_000;

/// Top-k singular values, descending and non-negative.
#[derive(Clone, Debug, PartialEq)]
pub struct SingularSpectrum {
    pub values: Vec<f64>,
}

impl SingularSpectrum {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Argument(
                "singular values must be finite and non-negative".into(),
            ));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { values })
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    /// `S / max(S)`.
    pub fn normalized(&self) -> Result<Vec<f64>> {
        let max = self.values.iter().copied().fold(0.0, f64::max);
        if max <= 0.0 {
            return Err(Error::DegenerateSpectrum);
        }
        Ok(self.values.iter().map(|v| v / max).collect())
    }
}

/// Per-feature scale factors; each entry is either 1 or `alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaVector {
    weights: Vec<f64>,
    alpha: f64,
}

impl LambdaVector {
    pub fn new(weights: Vec<f64>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if let Some(w) = weights.iter().find(|&&w| w != 1.0 && w != alpha) {
            return Err(Error::Argument(format!(
                "lambda entry {w} is neither 1 nor alpha={alpha}"
            )));
        }
        Ok(Self { weights, alpha })
    }

    pub fn ones(n: usize, alpha: f64) -> Result<Self> {
        Self::new(vec![1.0; n], alpha)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Rounds to one decimal place, ties away from zero.
pub fn round_one_decimal(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Normalises by the largest value, rounds to one decimal and replaces every
/// rounded entry below 1 with `alpha`.
pub fn compute_lambda(spectrum: &SingularSpectrum, alpha: f64) -> Result<LambdaVector> {
    check_alpha(alpha)?;
    let weights = spectrum
        .normalized()?
        .into_iter()
        .map(|s| if round_one_decimal(s) < 1.0 { alpha } else { 1.0 })
        .collect();
    LambdaVector::new(weights, alpha)
}

/// Top-`k` singular values of the column-centred `n_rows × n_cols` matrix.
pub fn top_singular_values<T>(
    data: &[T],
    n_rows: usize,
    n_cols: usize,
    k: usize,
    rng: &mut Rng,
) -> Result<SingularSpectrum>
where
    T: Copy + Into<f64>,
{
    if data.len() != n_rows * n_cols {
        return Err(Error::dim("top_singular_values", &[n_rows, n_cols], &[data.len()]));
    }
    if n_rows < 2 {
        return Err(Error::Argument(format!("PCA needs at least 2 rows, got {n_rows}")));
    }
    if k == 0 || k > n_rows.min(n_cols) {
        return Err(Error::Argument(format!(
            "requested {k} components from a {n_rows}×{n_cols} matrix"
        )));
    }

    let rows: Vec<usize> = if n_rows > MAX_PCA_ROWS {
        let mut picked = rng.sample_distinct(n_rows, MAX_PCA_ROWS);
        picked.sort_unstable();
        picked
    } else {
        (0..n_rows).collect()
    };
    let n = rows.len();
    let d = n_cols;

    let mut a = Vec::with_capacity(n * d);
    for &r in &rows {
        a.extend(data[r * d..(r + 1) * d].iter().map(|&v| v.into()));
    }
    let mut means = vec![0.0; d];
    for row in a.chunks_exact(d) {
        means.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    for row in a.chunks_exact_mut(d) {
        row.iter_mut().zip(&means).for_each(|(v, m)| *v -= m);
    }

    let l = (k + OVERSAMPLING).min(n.min(d));
    let omega: Vec<f64> = (0..d * l).map(|_| rng.normal()).collect();
    let mut y = vec![0.0; n * l];
    gemm(&a, &omega, &mut y, (n, d, l), false, false, 0.0);
    orthonormalize(&mut y, n, l);

    let mut z = vec![0.0; d * l];
    for _ in 0..POWER_ITERATIONS {
        gemm(&a, &y, &mut z, (d, n, l), true, false, 0.0);
        orthonormalize(&mut z, d, l);
        gemm(&a, &z, &mut y, (n, d, l), false, false, 0.0);
        orthonormalize(&mut y, n, l);
    }

    // B = Qᵀ A is l×d; its singular values are sqrt(eig(B Bᵀ)).
    let mut b = vec![0.0; l * d];
    gemm(&y, &a, &mut b, (l, n, d), true, false, 0.0);
    let mut gram = vec![0.0; l * l];
    gemm(&b, &b, &mut gram, (l, d, l), false, true, 0.0);
    let mut values: Vec<f64> = symmetric_eigenvalues(&mut gram, l)
        .into_iter()
        .map(|e| e.max(0.0).sqrt())
        .collect();
    values.sort_by(|x, y| y.total_cmp(x));
    values.truncate(k);
    SingularSpectrum::new(values)
}

/// In-place modified Gram–Schmidt on the columns of a row-major `rows × cols`
/// matrix, run twice for stability. Columns that vanish become zero.
fn orthonormalize(m: &mut [f64], rows: usize, cols: usize) {
    let scale: f64 = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    let tiny = 1e-12 * scale.max(f64::MIN_POSITIVE);
    for _pass in 0..2 {
        for j in 0..cols {
            for p in 0..j {
                let dot: f64 = (0..rows).map(|i| m[i * cols + j] * m[i * cols + p]).sum();
                for i in 0..rows {
                    m[i * cols + j] -= dot * m[i * cols + p];
                }
            }
            let norm: f64 = (0..rows).map(|i| m[i * cols + j].powi(2)).sum::<f64>().sqrt();
            let inv = if norm > tiny { 1.0 / norm } else { 0.0 };
            for i in 0..rows {
                m[i * cols + j] *= inv;
            }
        }
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations. Destroys `a`.
pub(crate) fn symmetric_eigenvalues(a: &mut [f64], n: usize) -> Vec<f64> {
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j].powi(2))
            .sum();
        let diag: f64 = (0..n).map(|i| a[i * n + i].powi(2)).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}
