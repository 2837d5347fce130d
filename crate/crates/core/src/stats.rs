//! Order statistics shared by the smoother normalization and the
//! evaluation summaries. Quantiles use the midpoint convention: at a jump
//! of the empirical CDF the two adjacent order statistics are averaged.

/// Sorted copy of the data; NaNs are rejected by debug assertion upstream.
pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in statistics input"));
    v
}

/// Midpoint-convention quantile of pre-sorted data, `0 <= p <= 1`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty data");
    let k = p * n as f64;
    let lower = k.floor();
    if (k - lower).abs() < 1e-12 {
        // Exactly at a CDF jump: average the adjacent order statistics.
        let i = lower as usize;
        if i == 0 {
            sorted[0]
        } else if i >= n {
            sorted[n - 1]
        } else {
            0.5 * (sorted[i - 1] + sorted[i])
        }
    } else {
        sorted[(k.ceil() as usize - 1).min(n - 1)]
    }
}

pub fn median_sorted(sorted: &[f64]) -> f64 {
    quantile_sorted(sorted, 0.5)
}

pub fn median(values: &[f64]) -> f64 {
    median_sorted(&sorted(values))
}

/// Interquartile range (q75 - q25), midpoint convention.
pub fn iqr(values: &[f64]) -> f64 {
    let s = sorted(values);
    quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
