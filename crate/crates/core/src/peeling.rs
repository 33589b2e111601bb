//! Index selection by peeling.
//!
//! Reversed peeling draws every noisy set up front and then, for round `k`,
//! releases the surviving index with the smallest value in row `k`. The
//! released indices are evaluated on row 0, which was never used for
//! selection. Forward peeling (the DP-BH baseline) instead adds fresh noise
//! to the survivors in each round.

use crate::error::{domain, invalid, Result};
use crate::num::Real;
use crate::stream::RandomStream;
use crate::transform::NoisyMatrix;

/// Peeled indices in peel order together with their inference-row values.
#[derive(Clone, Debug, PartialEq)]
pub struct PeelOutcome<T> {
    pub peeled_indices: Vec<usize>,
    pub inference_pvals: Vec<T>,
}

impl<T: Real> PeelOutcome<T> {
    pub fn len(&self) -> usize {
        self.peeled_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peeled_indices.is_empty()
    }

    /// Pairs `(index, inference value)` sorted by value, ties by index.
    pub fn sorted_by_value(&self) -> Vec<(usize, T)> {
        let mut pairs: Vec<(usize, T)> = self
            .peeled_indices
            .iter()
            .copied()
            .zip(self.inference_pvals.iter().copied())
            .collect();
        pairs.sort_unstable_by(|a, b| {
            a.1.partial_cmp(&b.1).expect("noisy p-values are never NaN").then(a.0.cmp(&b.0))
        });
        pairs
    }
}

/// Position in `alive` of the survivor with the smallest key; ties go to the
/// smallest hypothesis index.
fn argmin_alive<T: Real>(alive: &[usize], keys: &[T]) -> usize {
    let mut best = 0;
    let mut best_idx = alive[0];
    let mut best_key = keys[best_idx];
    for (pos, &j) in alive.iter().enumerate().skip(1) {
        let key = keys[j];
        if key < best_key || (key == best_key && j < best_idx) {
            best = pos;
            best_idx = j;
            best_key = key;
        }
    }
    best
}

/// Reversed peeling: for `k = 1..=m′`, removes the surviving index that
/// minimises row `k`.
pub fn reversed_peel<T: Real>(matrix: &NoisyMatrix<T>) -> Result<PeelOutcome<T>> {
    let m = matrix.cols();
    let m_peel = matrix.m_peel();
    if m_peel == 0 {
        return Err(domain("peeling needs at least one peeling row"));
    }
    if m_peel > m {
        return Err(domain(format!("cannot peel {m_peel} of {m} hypotheses")));
    }
    let mut alive: Vec<usize> = (0..m).collect();
    let mut peeled = Vec::with_capacity(m_peel);
    for k in 1..=m_peel {
        let pos = argmin_alive(&alive, matrix.row_keys(k));
        peeled.push(alive.swap_remove(pos));
    }
    let inference_pvals = peeled.iter().map(|&j| matrix.value(0, j)).collect();
    Ok(PeelOutcome { peeled_indices: peeled, inference_pvals })
}

/// Forward peeling on log p-values: each round adds fresh `Laplace(scale)`
/// noise to every survivor, releases the minimiser, and reports its log
/// p-value plus one more fresh draw. Round `r` draws from `stream.child(r)`
/// in increasing index order.
pub fn forward_peel_baseline<T: Real>(
    log_pvals: &[T],
    m_peel: usize,
    laplace_scale: T,
    stream: &RandomStream,
) -> Result<Vec<(usize, T)>> {
    let m = log_pvals.len();
    if m == 0 {
        return Err(invalid("no p-values"));
    }
    if !(laplace_scale > T::zero()) || !laplace_scale.is_finite() {
        return Err(domain(format!("laplace scale must be positive, got {laplace_scale}")));
    }
    if m_peel > m {
        return Err(domain(format!("cannot peel {m_peel} of {m} hypotheses")));
    }
    if let Some(bad) = log_pvals.iter().find(|v| v.is_nan()) {
        return Err(invalid(format!("log p-value is not a number: {bad}")));
    }
    let scale = laplace_scale.f64();
    let mut alive: Vec<usize> = (0..m).collect();
    let mut out = Vec::with_capacity(m_peel);
    for r in 0..m_peel {
        let mut rs = stream.child(r as u64);
        let mut best_pos = 0;
        let mut best_val = f64::INFINITY;
        for (pos, &j) in alive.iter().enumerate() {
            let v = log_pvals[j].f64() + rs.laplace(scale);
            if v < best_val {
                best_val = v;
                best_pos = pos;
            }
        }
        let j = alive.remove(best_pos);
        let report = log_pvals[j] + T::of(rs.laplace(scale));
        out.push((j, report));
    }
    Ok(out)
}
