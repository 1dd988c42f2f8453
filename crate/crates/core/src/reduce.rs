//! Deterministic reductions.
//!
//! Sums are accumulated in fixed-size blocks folded in index order, so a
//! result never depends on how work was distributed across threads: parallel
//! callers compute independent per-element values, and every reduction over
//! those values goes through these serial, block-ordered folds.

const BLOCK: usize = 1024;

/// Sum of a slice, accumulated block-by-block in index order.
pub(crate) fn blocked_sum(values: &[f64]) -> f64 {
    let mut total = 0.0;
    for chunk in values.chunks(BLOCK) {
        let mut partial = 0.0;
        for &v in chunk {
            partial += v;
        }
        total += partial;
    }
    total
}

/// Arithmetic mean via [`blocked_sum`]. Returns 0 for an empty slice.
pub(crate) fn blocked_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    blocked_sum(values) / values.len() as f64
}
