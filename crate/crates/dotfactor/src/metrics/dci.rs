//! Importance-matrix scores and the explicitness probe.

use crate::diffcore::SplitMixRng;

use super::linmodel::{roc_auc, standardize, LogisticL1, SoftmaxRegression};
use super::{CodeMatrix, MetricError};

/// Disentanglement and completeness of a nonnegative importance matrix
/// `r[dim][factor]`.
///
/// Rows are weighted by their share of total importance and scored by one
/// minus their entropy in log base `F`; columns analogously in log base `D`.
pub fn dci_from_importance(r: &[Vec<f64>]) -> (f64, f64) {
    let dims = r.len();
    let n_factors = r.first().map_or(0, |row| row.len());
    if dims == 0 || n_factors == 0 {
        return (0.0, 0.0);
    }
    let total: f64 = r.iter().flat_map(|row| row.iter()).sum();
    if total <= 1e-12 {
        return (0.0, 0.0);
    }

    let mut d_score = 0.0f64;
    for row in r {
        let row_sum: f64 = row.iter().sum();
        if row_sum <= 1e-12 {
            continue;
        }
        let h = normalized_entropy(row.iter().map(|&v| v / row_sum), n_factors);
        d_score += (row_sum / total) * (1.0 - h);
    }

    let mut c_score = 0.0f64;
    for k in 0..n_factors {
        let col_sum: f64 = r.iter().map(|row| row[k]).sum();
        if col_sum <= 1e-12 {
            continue;
        }
        let h = normalized_entropy(r.iter().map(|row| row[k] / col_sum), dims);
        c_score += (col_sum / total) * (1.0 - h);
    }
    (d_score.clamp(0.0, 1.0), c_score.clamp(0.0, 1.0))
}

/// Entropy of a distribution in log base `base_count` (0 when the base has a
/// single outcome).
fn normalized_entropy(probs: impl Iterator<Item = f64>, base_count: usize) -> f64 {
    if base_count <= 1 {
        return 0.0;
    }
    let mut h = 0.0f64;
    for p in probs {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    h / (base_count as f64).ln()
}

pub struct DciScores {
    pub disentanglement: f64,
    pub completeness: f64,
    pub informativeness: f64,
    pub importance: Vec<Vec<f64>>,
}

/// Fits per-factor classifiers on the codes.
///
/// Importances come from one-vs-rest L1 logistic models (mean absolute
/// coefficient per dimension over a factor's classes). Informativeness is
/// the held-out accuracy of a multinomial linear classifier per factor,
/// averaged over factors; one-vs-rest argmax cannot separate interior
/// ordinal levels, so the multinomial head does the predicting.
pub fn dci(codes: &CodeMatrix, seed: u64) -> Result<DciScores, MetricError> {
    let dims = codes.dims;
    let n = codes.rows;
    let n_factors = codes.cards.len();

    // drop constant code dims
    let retained: Vec<usize> = (0..dims)
        .filter(|&j| {
            let first = codes.codes[j];
            (1..n).any(|r| codes.codes[r * dims + j] != first)
        })
        .collect();
    if retained.len() < 2 {
        return Err(MetricError::TooFewDims(retained.len()));
    }

    let mut features = vec![0.0f64; n * retained.len()];
    for r in 0..n {
        for (jj, &j) in retained.iter().enumerate() {
            features[r * retained.len() + jj] = codes.codes[r * dims + j];
        }
    }
    let cols = retained.len();
    standardize(&mut features, n, cols);

    let mut order: Vec<usize> = (0..n).collect();
    SplitMixRng::new(seed).shuffle(&mut order);
    let train_n = (n as f64 * 0.8) as usize;
    let gather = |rows: &[usize]| -> Vec<f64> {
        let mut out = vec![0.0f64; rows.len() * cols];
        for (i, &r) in rows.iter().enumerate() {
            out[i * cols..(i + 1) * cols].copy_from_slice(&features[r * cols..(r + 1) * cols]);
        }
        out
    };
    let train_rows = &order[..train_n];
    let test_rows = &order[train_n..];
    let train_x = gather(train_rows);
    let test_x = gather(test_rows);

    let mut importance = vec![vec![0.0f64; n_factors]; dims];
    let mut info_total = 0.0f64;
    for k in 0..n_factors {
        let card = codes.cards[k];
        let train_y: Vec<usize> =
            train_rows.iter().map(|&r| codes.factors[r * n_factors + k] as usize).collect();
        let test_y: Vec<usize> =
            test_rows.iter().map(|&r| codes.factors[r * n_factors + k] as usize).collect();

        // importance: one-vs-rest logistic with an L1 penalty per class
        for class in 0..card {
            let targets: Vec<bool> = train_y.iter().map(|&y| y == class).collect();
            let model = LogisticL1::fit(&train_x, &targets, train_n, cols, 0.01, 300, 0.5);
            for (jj, &j) in retained.iter().enumerate() {
                importance[j][k] += model.weights[jj].abs() / card as f64;
            }
        }

        // informativeness: multinomial linear classifier
        let clf = SoftmaxRegression::fit(&train_x, &train_y, train_n, cols, card, 400, 1.0);
        info_total += clf.accuracy(&test_x, &test_y, test_rows.len());
    }

    let (d, c) = dci_from_importance(&importance);
    Ok(DciScores {
        disentanglement: d,
        completeness: c,
        informativeness: info_total / n_factors as f64,
        importance,
    })
}

/// Mean one-vs-rest ROC-AUC of logistic probes on the full code, rescaled
/// from `[0.5, 1]` to `[0, 1]`.
///
/// Each dimension contributes a quadratic pair `(x, x^2)` so probes can
/// carve out interior value ranges; classes missing from a split are
/// skipped with a warning.
pub fn explicitness(codes: &CodeMatrix, seed: u64) -> Result<f64, MetricError> {
    let dims = codes.dims;
    let n = codes.rows;
    let n_factors = codes.cards.len();
    let cols = dims * 2;
    let mut features = vec![0.0f64; n * cols];
    for r in 0..n {
        for j in 0..dims {
            let v = codes.codes[r * dims + j];
            features[r * cols + 2 * j] = v;
            features[r * cols + 2 * j + 1] = v * v;
        }
    }
    standardize(&mut features, n, cols);

    let mut order: Vec<usize> = (0..n).collect();
    SplitMixRng::new(seed).shuffle(&mut order);
    let train_n = (n as f64 * 0.8) as usize;
    let slice_rows = |rows: &[usize]| -> Vec<f64> {
        let mut out = vec![0.0f64; rows.len() * cols];
        for (i, &r) in rows.iter().enumerate() {
            out[i * cols..(i + 1) * cols].copy_from_slice(&features[r * cols..(r + 1) * cols]);
        }
        out
    };
    let train_rows = &order[..train_n];
    let test_rows = &order[train_n..];
    let train_x = slice_rows(train_rows);
    let test_x = slice_rows(test_rows);

    let mut auc_total = 0.0f64;
    let mut auc_count = 0usize;
    for k in 0..n_factors {
        for class in 0..codes.cards[k] {
            let train_y: Vec<bool> = train_rows
                .iter()
                .map(|&r| codes.factors[r * n_factors + k] as usize == class)
                .collect();
            let test_y: Vec<bool> = test_rows
                .iter()
                .map(|&r| codes.factors[r * n_factors + k] as usize == class)
                .collect();
            let train_pos = train_y.iter().filter(|&&p| p).count();
            if train_pos == 0 || train_pos == train_y.len() {
                eprintln!("explicitness: class {class} of factor {k} absent from a split, skipped");
                continue;
            }
            let model = LogisticL1::fit(&train_x, &train_y, train_n, cols, 0.0, 1500, 1.0);
            let scores: Vec<f64> = (0..test_rows.len())
                .map(|i| model.score(&test_x[i * cols..(i + 1) * cols]))
                .collect();
            match roc_auc(&scores, &test_y) {
                Some(auc) => {
                    auc_total += auc;
                    auc_count += 1;
                }
                None => {
                    eprintln!("explicitness: class {class} of factor {k} absent from a split, skipped");
                }
            }
        }
    }
    if auc_count == 0 {
        return Err(MetricError::Invalid("no class had both positives and negatives".into()));
    }
    let mean_auc = auc_total / auc_count as f64;
    Ok(((mean_auc - 0.5) / 0.5).clamp(0.0, 1.0))
}
