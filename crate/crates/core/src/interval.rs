//! Empirical quantile intervals shared by the bootstrap and posterior summaries.

/// Nearest-rank (type-1) quantile of an ascending slice.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let n = sorted.len();
    // The small guard keeps p·n that is an integer up to float noise on that integer.
    let rank = (p * n as f64 - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// Equal-tailed interval at `level` from the ((1−level)/2, (1+level)/2)
/// nearest-rank quantiles, rounded outward to integers.
pub fn percentile_interval(values: &[f64], level: f64) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = nearest_rank(&sorted, (1.0 - level) / 2.0);
    let hi = nearest_rank(&sorted, (1.0 + level) / 2.0);
    (lo.floor(), hi.ceil())
}

/// Integer seat counts convenience wrapper.
pub fn seat_interval(seats: &[u32], level: f64) -> (u32, u32) {
    let v: Vec<f64> = seats.iter().map(|&s| s as f64).collect();
    let (lo, hi) = percentile_interval(&v, level);
    (lo as u32, hi as u32)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance with divisor n − 1 (0 for fewer than two values).
pub fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64
}
