//! Linear classifiers used by the score protocols: multinomial softmax
//! regression, L1-penalized binary logistic regression, and ROC-AUC.
//!
//! Everything runs in f64 with zero initialization and a fixed iteration
//! count, so results are deterministic functions of their inputs.

/// Column-standardizes a feature matrix in place; returns (means, stds).
/// Constant columns get std 1 so they map to zero.
pub fn standardize(features: &mut [f64], rows: usize, cols: usize) -> (Vec<f64>, Vec<f64>) {
    let mut means = vec![0.0; cols];
    let mut stds = vec![0.0; cols];
    for c in 0..cols {
        let mut sum = 0.0;
        for r in 0..rows {
            sum += features[r * cols + c];
        }
        let mean = sum / rows as f64;
        let mut var = 0.0;
        for r in 0..rows {
            let d = features[r * cols + c] - mean;
            var += d * d;
        }
        let std = (var / rows as f64).sqrt();
        let std = if std > 1e-12 { std } else { 1.0 };
        for r in 0..rows {
            features[r * cols + c] = (features[r * cols + c] - mean) / std;
        }
        means[c] = mean;
        stds[c] = std;
    }
    (means, stds)
}

/// Multinomial softmax regression trained by full-batch gradient descent.
pub struct SoftmaxRegression {
    /// `[classes, features + 1]`, bias last.
    pub weights: Vec<f64>,
    pub classes: usize,
    pub features: usize,
}

impl SoftmaxRegression {
    pub fn fit(
        features: &[f64],
        labels: &[usize],
        rows: usize,
        cols: usize,
        classes: usize,
        iters: usize,
        lr: f64,
    ) -> Self {
        let width = cols + 1;
        let mut weights = vec![0.0f64; classes * width];
        let mut scores = vec![0.0f64; classes];
        let mut grad = vec![0.0f64; classes * width];
        for _ in 0..iters {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for r in 0..rows {
                let x = &features[r * cols..(r + 1) * cols];
                let mut max = f64::NEG_INFINITY;
                for k in 0..classes {
                    let w = &weights[k * width..(k + 1) * width];
                    let mut s = w[cols];
                    for j in 0..cols {
                        s += w[j] * x[j];
                    }
                    scores[k] = s;
                    if s > max {
                        max = s;
                    }
                }
                let mut denom = 0.0;
                for k in 0..classes {
                    scores[k] = (scores[k] - max).exp();
                    denom += scores[k];
                }
                for k in 0..classes {
                    let p = scores[k] / denom;
                    let delta = p - if labels[r] == k { 1.0 } else { 0.0 };
                    let g = &mut grad[k * width..(k + 1) * width];
                    for j in 0..cols {
                        g[j] += delta * x[j];
                    }
                    g[cols] += delta;
                }
            }
            let scale = lr / rows as f64;
            for (w, g) in weights.iter_mut().zip(&grad) {
                *w -= scale * g;
            }
        }
        SoftmaxRegression { weights, classes, features: cols }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let width = self.features + 1;
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for k in 0..self.classes {
            let w = &self.weights[k * width..(k + 1) * width];
            let mut s = w[self.features];
            for j in 0..self.features {
                s += w[j] * x[j];
            }
            if s > best_score {
                best_score = s;
                best = k;
            }
        }
        best
    }

    pub fn accuracy(&self, features: &[f64], labels: &[usize], rows: usize) -> f64 {
        if rows == 0 {
            return 0.0;
        }
        let cols = self.features;
        let correct = (0..rows)
            .filter(|&r| self.predict(&features[r * cols..(r + 1) * cols]) == labels[r])
            .count();
        correct as f64 / rows as f64
    }
}

/// Binary logistic regression with an L1 penalty, trained by proximal
/// gradient (ISTA). The bias is unpenalized.
pub struct LogisticL1 {
    /// `features + 1` weights, bias last.
    pub weights: Vec<f64>,
    pub features: usize,
}

impl LogisticL1 {
    pub fn fit(
        features: &[f64],
        targets: &[bool],
        rows: usize,
        cols: usize,
        l1: f64,
        iters: usize,
        lr: f64,
    ) -> Self {
        let width = cols + 1;
        let mut weights = vec![0.0f64; width];
        let mut grad = vec![0.0f64; width];
        for _ in 0..iters {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for r in 0..rows {
                let x = &features[r * cols..(r + 1) * cols];
                let mut s = weights[cols];
                for j in 0..cols {
                    s += weights[j] * x[j];
                }
                let p = sigmoid(s);
                let delta = p - if targets[r] { 1.0 } else { 0.0 };
                for j in 0..cols {
                    grad[j] += delta * x[j];
                }
                grad[cols] += delta;
            }
            let scale = lr / rows as f64;
            for j in 0..cols {
                let w = weights[j] - scale * grad[j];
                weights[j] = soft_threshold(w, lr * l1);
            }
            weights[cols] -= scale * grad[cols];
        }
        LogisticL1 { weights, features: cols }
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        let mut s = self.weights[self.features];
        for j in 0..self.features {
            s += self.weights[j] * x[j];
        }
        s
    }
}

fn soft_threshold(w: f64, t: f64) -> f64 {
    if w > t {
        w - t
    } else if w < -t {
        w + t
    } else {
        0.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ROC-AUC from scores and binary labels, ties handled by average ranks.
pub fn roc_auc(scores: &[f64], positives: &[bool]) -> Option<f64> {
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; tied scores share the average rank
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if positives[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}
