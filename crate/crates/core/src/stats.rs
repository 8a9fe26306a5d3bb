//! Order-statistic helpers.

/// Percentile `p ∈ [0, 100]` of sorted data by linear interpolation between
/// order statistics (position `p/100·(n−1)`).
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let n = sorted.len();
    let pos = (p / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let f = pos - lo as f64;
    if hi == lo {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * f
    }
}

pub fn sorted_copy<I: IntoIterator<Item = f64>>(values: I) -> Vec<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn percentile<I: IntoIterator<Item = f64>>(values: I, p: f64) -> f64 {
    percentile_sorted(&sorted_copy(values), p)
}

pub fn median(values: &[f64]) -> f64 {
    percentile(values.iter().copied(), 50.0)
}

/// Nearest-rank percentile: the `⌈p/100·n⌉`-th order statistic (1-based,
/// at least the first).
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let n = sorted.len();
    let rank = ((p / 100.0).clamp(0.0, 1.0) * n as f64 - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_values() {
        let v: Vec<f64> = (1..=10).map(|x| x as f64).collect();
        assert_eq!(nearest_rank(&v, 50.0), 5.0);
        assert_eq!(nearest_rank(&v, 85.0), 9.0);
        assert_eq!(nearest_rank(&v, 0.0), 1.0);
        assert_eq!(nearest_rank(&v, 100.0), 10.0);
        assert_eq!(nearest_rank(&[3.0], 50.0), 3.0);
    }

    #[test]
    fn matches_numpy_linear() {
        // numpy.percentile([1, 2, 3, 4], 40) == 2.2
        assert!((percentile([1.0, 2.0, 3.0, 4.0], 40.0) - 2.2).abs() < 1e-12);
        assert_eq!(percentile([5.0], 99.0), 5.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }
}
