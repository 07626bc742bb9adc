//! Plug-in entropy and mutual information (nats) on discrete labels.

use super::{check_rows, FactorMatrix, LatentMatrix};
use crate::error::{Error, Result};

/// Uniform-width binning of each column between its min and max. Constant
/// columns land entirely in bin 0. Returns one label vector per column.
pub fn discretize(z: &LatentMatrix, bins: usize) -> Result<Vec<Vec<usize>>> {
    if bins < 2 {
        return Err(Error::Argument(format!("need at least 2 bins, got {bins}")));
    }
    Ok((0..z.n_dims())
        .map(|j| {
            let col = z.column(j);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let width = hi - lo;
            col.iter()
                .map(|&v| {
                    if width > 0.0 {
                        (((v - lo) / width * bins as f64) as usize).min(bins - 1)
                    } else {
                        0
                    }
                })
                .collect()
        })
        .collect())
}

fn plug_in(counts: impl Iterator<Item = usize>, n: usize) -> f64 {
    let n = n as f64;
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

pub fn entropy(labels: &[usize]) -> f64 {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; k];
    labels.iter().for_each(|&l| counts[l] += 1);
    plug_in(counts.into_iter(), labels.len())
}

pub fn joint_entropy(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "joint entropy needs paired labels");
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; ka * kb];
    a.iter().zip(b).for_each(|(&x, &y)| counts[x * kb + y] += 1);
    plug_in(counts.into_iter(), a.len())
}

/// `H(a) + H(b) − H(a, b)`, clipped at 0.
pub fn mutual_information(a: &[usize], b: &[usize]) -> f64 {
    (entropy(a) + entropy(b) - joint_entropy(a, b)).max(0.0)
}

/// `mi[k][j] = I(z_j; v_k)` over the active factors, plus the factor labels.
fn mi_table(z: &LatentMatrix, v: &FactorMatrix, bins: usize) -> Result<(Vec<Vec<usize>>, Vec<Vec<usize>>, Vec<Vec<f64>>)> {
    check_rows(z, v)?;
    let zb = discretize(z, bins)?;
    let factors: Vec<Vec<usize>> = v.active_factors().iter().map(|&k| v.column(k)).collect();
    let mi = factors
        .iter()
        .map(|f| zb.iter().map(|zj| mutual_information(zj, f)).collect())
        .collect();
    Ok((zb, factors, mi))
}

/// Indices of the largest and second-largest entries (first wins ties).
fn top_two(values: &[f64]) -> (usize, usize) {
    let mut first = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[first] {
            first = i;
        }
    }
    let mut second = if first == 0 { 1 } else { 0 };
    for (i, &v) in values.iter().enumerate() {
        if i != first && v > values[second] {
            second = i;
        }
    }
    (first, second)
}

/// Mean over factors of `1 − (H(z*, v) − I(z*; v) + I(z°; v)) / (H(v) + ln B)`
/// where `z*` and `z°` carry the most and second-most information about `v`.
pub fn jemmig_score(z: &LatentMatrix, v: &FactorMatrix, bins: usize) -> Result<f64> {
    if z.n_dims() < 2 {
        return Err(Error::undefined("jemmig", "needs at least 2 latent dimensions"));
    }
    let (zb, factors, mi) = mi_table(z, v, bins)?;
    if factors.is_empty() {
        return Err(Error::undefined("jemmig", "no varying factor"));
    }
    let ln_b = (bins as f64).ln();
    let total: f64 = factors
        .iter()
        .zip(&mi)
        .map(|(f, row)| {
            let (best, runner) = top_two(row);
            let gap = joint_entropy(&zb[best], f) - row[best] + row[runner];
            1.0 - gap / (entropy(f) + ln_b)
        })
        .sum();
    Ok((total / factors.len() as f64).clamp(0.0, 1.0))
}

/// `Σ_k g_k / Σ_k H(v_k)`, where `g_k` is the largest information gap of any
/// dimension whose most-informative factor is `k`.
pub fn dcimig_score(z: &LatentMatrix, v: &FactorMatrix, bins: usize) -> Result<f64> {
    let (_, factors, mi) = mi_table(z, v, bins)?;
    if factors.len() < 2 {
        return Err(Error::undefined("dcimig", "needs at least 2 varying factors"));
    }
    let h_total: f64 = factors.iter().map(|f| entropy(f)).sum();
    if h_total <= 0.0 {
        return Err(Error::undefined("dcimig", "factor entropy is zero"));
    }
    let mut g = vec![0.0f64; factors.len()];
    for j in 0..z.n_dims() {
        let col: Vec<f64> = mi.iter().map(|row| row[j]).collect();
        let (k1, k2) = top_two(&col);
        g[k1] = g[k1].max(col[k1] - col[k2]);
    }
    Ok((g.iter().sum::<f64>() / h_total).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn entropy_closed_forms() {
        assert!((entropy(&[0, 1, 2, 3]) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(&[2, 2, 2]), 0.0);
        let a = [0, 1, 1, 2, 0, 3, 3, 3];
        assert!((mutual_information(&a, &a) - entropy(&a)).abs() < 1e-15);
    }

    #[test]
    fn independent_labels_have_little_information() {
        let mut rng = Rng::new(0);
        let a: Vec<usize> = (0..10_000).map(|_| rng.below(10)).collect();
        let b: Vec<usize> = (0..10_000).map(|_| rng.below(10)).collect();
        assert!(mutual_information(&a, &b) < 0.05);
    }

    #[test]
    fn binning_edges() {
        let z = LatentMatrix::new(4, 2, vec![0.0, 1.0, 0.5, 1.0, 0.99, 1.0, 1.0, 1.0]).unwrap();
        let b = discretize(&z, 20).unwrap();
        assert_eq!(b[0], vec![0, 10, 19, 19]);
        assert_eq!(b[1], vec![0, 0, 0, 0]);
        assert!(discretize(&z, 1).is_err());
    }

    #[test]
    fn one_to_one_codes() {
        // 10 × 10 grid, each dimension is one factor.
        let mut labels = Vec::new();
        let mut codes = Vec::new();
        for a in 0..10u16 {
            for b in 0..10u16 {
                labels.extend([a, b]);
                codes.extend([a as f64, b as f64]);
            }
        }
        let v = FactorMatrix::new(labels, vec![10, 10]).unwrap();
        let z = LatentMatrix::new(100, 2, codes).unwrap();
        assert!(jemmig_score(&z, &v, 20).unwrap() > 0.9);
        assert!((dcimig_score(&z, &v, 20).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn top_two_ties() {
        assert_eq!(top_two(&[1.0, 1.0, 0.5]), (0, 1));
        assert_eq!(top_two(&[0.1, 0.5, 0.9]), (2, 1));
    }
}
