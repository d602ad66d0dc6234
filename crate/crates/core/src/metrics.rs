//! Precision, recall and Jaccard over marker sets, and the cross-modality
//! comparison built on them.

use alloc::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetMetrics {
    pub precision: f64,
    pub recall: f64,
    pub jaccard: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("EmptyReference: recall is undefined for an empty reference set")]
    EmptyReference,
}

/// `precision = |M∩D|/|M|`, `recall = |M∩D|/|D|`, `jaccard = |M∩D|/|M∪D|`.
///
/// An empty prediction has precision 0.
pub fn compute_set_metrics<T: Ord>(predicted: &BTreeSet<T>, reference: &BTreeSet<T>) -> Result<SetMetrics, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let hits = predicted.intersection(reference).count() as f64;
    let union = (predicted.len() + reference.len()) as f64 - hits;
    let precision = if predicted.is_empty() { 0.0 } else { hits / predicted.len() as f64 };
    Ok(SetMetrics { precision, recall: hits / reference.len() as f64, jaccard: hits / union })
}

/// Two single-modality marker sets scored against one reference, with the
/// intersection judged on precision and the union on recall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalityComparison {
    pub first: SetMetrics,
    pub second: SetMetrics,
    pub intersection_precision: f64,
    pub union_recall: f64,
    /// Intersection precision beats both single modalities.
    pub precision_improved: bool,
    /// Union recall beats both single modalities.
    pub recall_improved: bool,
}

pub fn compare_modalities<T: Ord + Clone>(
    first: &BTreeSet<T>,
    second: &BTreeSet<T>,
    reference: &BTreeSet<T>,
) -> Result<ModalityComparison, MetricsError> {
    let a = compute_set_metrics(first, reference)?;
    let b = compute_set_metrics(second, reference)?;
    let inter: BTreeSet<T> = first.intersection(second).cloned().collect();
    let union: BTreeSet<T> = first.union(second).cloned().collect();
    let intersection_precision = compute_set_metrics(&inter, reference)?.precision;
    let union_recall = compute_set_metrics(&union, reference)?.recall;
    Ok(ModalityComparison {
        first: a,
        second: b,
        intersection_precision,
        union_recall,
        precision_improved: intersection_precision > a.precision && intersection_precision > b.precision,
        recall_improved: union_recall > a.recall && union_recall > b.recall,
    })
}
