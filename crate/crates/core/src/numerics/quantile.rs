use crate::error::{contract, Result};

/// Type-1 (inverse CDF) empirical quantile: the `ceil(p * B)`-th order
/// statistic of the `B` samples.
pub fn empirical_quantile(samples: &[f64], p: f64) -> Result<f64> {
    if samples.is_empty() {
        return contract("empirical_quantile of an empty sample");
    }
    if !(p > 0.0 && p < 1.0) {
        return contract(format!("quantile order must lie in (0,1), got {p}"));
    }
    let b = samples.len();
    let rank = order_rank(p, b);
    let mut buf = samples.to_vec();
    let (_, v, _) = buf.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(*v)
}

/// One-based rank `ceil(p * b)` clamped into `1..=b`. The small offset keeps
/// products such as `0.95 * 100` from rounding up past an exact integer.
pub(crate) fn order_rank(p: f64, b: usize) -> usize {
    let raw = (p * b as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(b)
}
