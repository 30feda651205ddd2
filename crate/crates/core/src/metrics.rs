//! Support-recovery rates over the covariate indices `1..=p`.

use std::collections::BTreeSet;

/// `(tpr, fpr)` of an estimated support against the true one.
///
/// Index 0 (the intercept) is ignored in both sets. An empty true support gives
/// `tpr = 1`; a true support covering every covariate gives `fpr = 0`.
pub fn tpr_fpr(est_support: &[usize], true_support: &[usize], p: usize) -> (f64, f64) {
    let est: BTreeSet<usize> = est_support.iter().copied().filter(|&j| j >= 1 && j <= p).collect();
    let truth: BTreeSet<usize> = true_support.iter().copied().filter(|&j| j >= 1 && j <= p).collect();
    let hits = est.intersection(&truth).count();
    let false_pos = est.len() - hits;
    let tpr = if truth.is_empty() { 1.0 } else { hits as f64 / truth.len() as f64 };
    let nulls = p - truth.len();
    let fpr = if nulls == 0 { 0.0 } else { false_pos as f64 / nulls as f64 };
    (tpr, fpr)
}
