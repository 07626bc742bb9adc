use std::collections::{HashMap, HashSet};

use super::{check_rows, FactorMatrix, LatentMatrix};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    pub factor: usize,
    pub step: usize,
    pub pairs: usize,
    pub dominant_dim: usize,
    /// `mean|Δz_dominant| / Σ_j mean|Δz_j|`; 0 when no code moves.
    pub alignment_ratio: f64,
    pub mean_abs_shift: Vec<f64>,
}

/// Code response to advancing factor `k` by `step` with every other factor
/// held fixed. Pairs are found by exact factor lookup.
pub fn equivariance_probe(
    z: &LatentMatrix,
    v: &FactorMatrix,
    k: usize,
    step: usize,
) -> Result<ProbeReport> {
    check_rows(z, v)?;
    if k >= v.n_factors() {
        return Err(Error::Argument(format!("factor {k} out of range")));
    }
    if step == 0 || v.cardinalities()[k] < 2 {
        return Err(Error::Argument(format!(
            "factor {k} cannot advance by {step}"
        )));
    }
    let index: HashMap<&[u16], usize> = (0..v.n_rows()).map(|i| (v.row(i), i)).collect();
    let n = z.n_dims();
    let mut shift = vec![0.0; n];
    let mut pairs = 0usize;
    let mut key = Vec::with_capacity(v.n_factors());
    for i in 0..v.n_rows() {
        let target = v.label(i, k) + step;
        if target >= v.cardinalities()[k] {
            continue;
        }
        key.clear();
        key.extend_from_slice(v.row(i));
        key[k] = target as u16;
        if let Some(&j) = index.get(key.as_slice()) {
            for (s, (a, b)) in shift.iter_mut().zip(z.row(j).iter().zip(z.row(i))) {
                *s += (a - b).abs();
            }
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(Error::Argument(format!(
            "no sample pairs differ only in factor {k} by {step}"
        )));
    }
    shift.iter_mut().for_each(|s| *s /= pairs as f64);
    let mut dominant = 0;
    for (j, &s) in shift.iter().enumerate() {
        if s > shift[dominant] {
            dominant = j;
        }
    }
    let total: f64 = shift.iter().sum();
    Ok(ProbeReport {
        factor: k,
        step,
        pairs,
        dominant_dim: dominant,
        alignment_ratio: if total > 0.0 { shift[dominant] / total } else { 0.0 },
        mean_abs_shift: shift,
    })
}

/// Distinct `(round(a·g), round(b·g))` cells after rescaling each column to
/// `[0, 1]` by its min and max.
pub fn grid_occupancy(a: &[f64], b: &[f64], grid: usize) -> usize {
    let unit = |x: &[f64]| -> Vec<f64> {
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w = hi - lo;
        x.iter().map(|v| if w > 0.0 { (v - lo) / w } else { 0.0 }).collect()
    };
    let g = grid as f64;
    unit(a)
        .iter()
        .zip(unit(b))
        .map(|(x, y)| ((x * g).round() as i64, (y * g).round() as i64))
        .collect::<HashSet<_>>()
        .len()
}
