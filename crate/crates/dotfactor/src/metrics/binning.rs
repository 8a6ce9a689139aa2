//! Equal-frequency discretization for mutual-information estimates.

/// Bin edges at the empirical quantiles of `values`.
///
/// Edges are order statistics, deduplicated, so repeated values always land
/// in the same bin and any strictly increasing transform of the column
/// leaves assignments unchanged.
pub fn equal_frequency_edges(values: &[f64], bins: usize) -> Vec<f64> {
    assert!(bins >= 2, "need at least 2 bins");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len();
    let max = sorted[n - 1];
    let mut edges = Vec::with_capacity(bins - 1);
    for k in 1..bins {
        let pos = (n * k / bins).min(n - 1);
        let e = sorted[pos.saturating_sub(1)];
        // an edge at the maximum would leave an empty top bin
        if e < max && edges.last().is_none_or(|&last| e > last) {
            edges.push(e);
        }
    }
    edges
}

/// Bin index of `x`: the count of edges strictly below it.
pub fn assign_bin(x: f64, edges: &[f64]) -> usize {
    // binary search for the partition point of (edge < x)
    let mut lo = 0usize;
    let mut hi = edges.len();
    while lo < hi {
        let mid = (lo + hi) / 2;
        if edges[mid] < x {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Discretizes a column; returns assignments and the effective bin count.
pub fn discretize(values: &[f64], bins: usize) -> (Vec<usize>, usize) {
    let edges = equal_frequency_edges(values, bins);
    let assignments: Vec<usize> = values.iter().map(|&v| assign_bin(v, &edges)).collect();
    (assignments, edges.len() + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::SplitMixRng;

    #[test]
    fn continuous_values_split_near_evenly() {
        let mut rng = SplitMixRng::new(1);
        let values: Vec<f64> = (0..2000).map(|_| rng.next_f64()).collect();
        let (bins, count) = discretize(&values, 20);
        assert_eq!(count, 20);
        let mut counts = vec![0usize; count];
        for b in bins {
            counts[b] += 1;
        }
        for &c in &counts {
            assert!((c as i64 - 100).unsigned_abs() <= 2, "counts {counts:?}");
        }
    }

    #[test]
    fn tied_values_share_a_bin() {
        // 8 distinct levels, 96 repeats each: bins collapse onto the levels
        let values: Vec<f64> = (0..768).map(|i| (i / 96) as f64).collect();
        let (assignments, count) = discretize(&values, 20);
        assert_eq!(count, 8);
        for (i, &b) in assignments.iter().enumerate() {
            assert_eq!(b, i / 96);
        }
    }

    #[test]
    fn strictly_increasing_maps_preserve_assignments() {
        let mut rng = SplitMixRng::new(2);
        let values: Vec<f64> = (0..500).map(|_| rng.next_f64() * 4.0 - 2.0).collect();
        let mapped: Vec<f64> = values.iter().map(|&v| v.exp() + v.powi(3)).collect();
        let (a, _) = discretize(&values, 20);
        let (b, _) = discretize(&mapped, 20);
        assert_eq!(a, b);
    }
}
