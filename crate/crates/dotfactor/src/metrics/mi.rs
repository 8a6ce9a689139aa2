//! Discrete plug-in mutual information and the scores built on it.

use super::binning::discretize;
use super::CodeMatrix;

/// Plug-in MI (nats) between every discretized code dimension and every
/// factor, plus the factor entropies.
///
/// Returns `(mi, entropies)` with `mi[j][k] = I(code_j, factor_k)`.
pub fn mi_matrix(codes: &CodeMatrix, bins: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = codes.rows;
    let dims = codes.dims;
    let n_factors = codes.cards.len();

    let factor_hist: Vec<Vec<f64>> = (0..n_factors)
        .map(|k| {
            let mut counts = vec![0.0f64; codes.cards[k]];
            for r in 0..n {
                counts[codes.factors[r * n_factors + k] as usize] += 1.0;
            }
            counts
        })
        .collect();
    let entropies: Vec<f64> = factor_hist.iter().map(|h| entropy(h, n as f64)).collect();

    let mut mi = vec![vec![0.0f64; n_factors]; dims];
    let mut column = vec![0.0f64; n];
    for j in 0..dims {
        for r in 0..n {
            column[r] = codes.codes[r * dims + j];
        }
        let (assignment, n_bins) = discretize(&column, bins);
        let mut code_hist = vec![0.0f64; n_bins];
        for &b in &assignment {
            code_hist[b] += 1.0;
        }
        for k in 0..n_factors {
            let card = codes.cards[k];
            let mut joint = vec![0.0f64; n_bins * card];
            for r in 0..n {
                let v = codes.factors[r * n_factors + k] as usize;
                joint[assignment[r] * card + v] += 1.0;
            }
            let mut info = 0.0f64;
            for b in 0..n_bins {
                for v in 0..card {
                    let c = joint[b * card + v];
                    if c > 0.0 {
                        let p = c / n as f64;
                        let pb = code_hist[b] / n as f64;
                        let pv = factor_hist[k][v] / n as f64;
                        info += p * (p / (pb * pv)).ln();
                    }
                }
            }
            mi[j][k] = info.max(0.0);
        }
    }
    (mi, entropies)
}

fn entropy(counts: &[f64], total: f64) -> f64 {
    let mut h = 0.0;
    for &c in counts {
        if c > 0.0 {
            let p = c / total;
            h -= p * p.ln();
        }
    }
    h
}

/// Mutual information gap: mean over factors of the normalized gap between
/// the two most informative code dimensions, clipped to `[0, 1]`.
/// Factors with zero entropy are excluded.
pub fn mig(mi: &[Vec<f64>], entropies: &[f64]) -> f64 {
    let n_factors = entropies.len();
    let mut total = 0.0f64;
    let mut used = 0usize;
    for k in 0..n_factors {
        if entropies[k] <= 0.0 {
            eprintln!("mig: factor {k} has zero entropy, excluded");
            continue;
        }
        let mut top = 0.0f64;
        let mut second = 0.0f64;
        for row in mi {
            let v = row[k];
            if v > top {
                second = top;
                top = v;
            } else if v > second {
                second = v;
            }
        }
        total += (top - second) / entropies[k];
        used += 1;
    }
    if used == 0 {
        return 0.0;
    }
    (total / used as f64).clamp(0.0, 1.0)
}

/// Mean per-dimension modularity: each dimension is penalized by its squared
/// off-target information relative to its best factor. Dimensions with no
/// information count as perfectly modular.
pub fn modularity(mi: &[Vec<f64>]) -> f64 {
    let n_factors = mi.first().map_or(0, |row| row.len());
    assert!(n_factors >= 2, "modularity needs at least 2 factors");
    let mut total = 0.0f64;
    for row in mi {
        let theta = row.iter().cloned().fold(0.0f64, f64::max);
        if theta <= 1e-12 {
            total += 1.0;
            continue;
        }
        let best = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let mut delta = 0.0f64;
        for (k, &v) in row.iter().enumerate() {
            if k != best {
                delta += v * v;
            }
        }
        delta /= theta * theta * (n_factors - 1) as f64;
        total += 1.0 - delta;
    }
    (total / mi.len() as f64).clamp(0.0, 1.0)
}
