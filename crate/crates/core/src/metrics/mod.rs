//! Multi-label evaluation: per-label confusion counts, Macro/Micro/Instance-F1,
//! precision@k, multi-class accuracy, and the Micro-F1 upper bound
//! `2 Σ min(K̂_i, K_i) / Σ (K_i + K̂_i)` that depends only on set sizes.
//!
//! Every ratio with a zero denominator is defined as 0.

mod table;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predict::{top_k_labels, PredictionSet};

pub use table::{ResultsTable, Summary};

/// `2·tp / (2·tp + fp + fn)`, with 0/0 = 0.
pub fn f1_score(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl LabelCounts {
    pub fn f1(&self) -> f64 {
        f1_score(self.tp, self.fp, self.fn_)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub per_label: Vec<LabelCounts>,
    pub tp_sum: usize,
    pub fp_sum: usize,
    pub fn_sum: usize,
}

fn check_aligned(truth: usize, pred: usize) -> Result<()> {
    if truth != pred {
        return Err(Error::DimensionMismatch(format!(
            "{truth} ground-truth rows but {pred} prediction rows"
        )));
    }
    Ok(())
}

/// Per-label TP/FP/FN by set intersection and difference.
///
/// Both `truth` and `pred` hold sorted, duplicate-free label sets.
pub fn confusion(truth: &[Vec<usize>], pred: &[Vec<usize>], n_labels: usize) -> Result<ConfusionCounts> {
    check_aligned(truth.len(), pred.len())?;
    let mut per_label = vec![LabelCounts::default(); n_labels];
    for (t, p) in truth.iter().zip(pred) {
        for &l in t.iter().chain(p) {
            if l >= n_labels {
                return Err(Error::invalid(format!(
                    "label {l} outside a {n_labels}-label vocabulary"
                )));
            }
        }
        for &l in p {
            if t.binary_search(&l).is_ok() {
                per_label[l].tp += 1;
            } else {
                per_label[l].fp += 1;
            }
        }
        for &l in t {
            if p.binary_search(&l).is_err() {
                per_label[l].fn_ += 1;
            }
        }
    }
    let tp_sum = per_label.iter().map(|c| c.tp).sum();
    let fp_sum = per_label.iter().map(|c| c.fp).sum();
    let fn_sum = per_label.iter().map(|c| c.fn_).sum();
    Ok(ConfusionCounts {
        per_label,
        tp_sum,
        fp_sum,
        fn_sum,
    })
}

/// Mean of per-label F1 over the whole vocabulary, including labels that
/// never occur (they contribute 0).
pub fn macro_f1(counts: &ConfusionCounts) -> f64 {
    if counts.per_label.is_empty() {
        return 0.0;
    }
    counts.per_label.iter().map(LabelCounts::f1).sum::<f64>() / counts.per_label.len() as f64
}

pub fn micro_f1(counts: &ConfusionCounts) -> f64 {
    f1_score(counts.tp_sum, counts.fp_sum, counts.fn_sum)
}

fn intersection_size(a: &[usize], b: &[usize]) -> usize {
    a.iter().filter(|l| b.binary_search(l).is_ok()).count()
}

/// Mean over instances of `2|T ∩ P| / (|T| + |P|)`.
pub fn instance_f1(truth: &[Vec<usize>], pred: &[Vec<usize>]) -> Result<f64> {
    check_aligned(truth.len(), pred.len())?;
    if truth.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = truth
        .iter()
        .zip(pred)
        .map(|(t, p)| {
            let denom = t.len() + p.len();
            if denom == 0 {
                0.0
            } else {
                2.0 * intersection_size(t, p) as f64 / denom as f64
            }
        })
        .sum();
    Ok(total / truth.len() as f64)
}

/// `2 Σ min(K̂_i, K_i) / Σ (K_i + K̂_i)`; an upper bound on Micro-F1 for any
/// prediction with sizes `k_hat`.
pub fn micro_upper_bound(k: &[usize], k_hat: &[usize]) -> Result<f64> {
    check_aligned(k.len(), k_hat.len())?;
    let num: usize = k.iter().zip(k_hat).map(|(&a, &b)| a.min(b)).sum();
    let denom: usize = k.iter().zip(k_hat).map(|(&a, &b)| a + b).sum();
    Ok(if denom == 0 {
        0.0
    } else {
        2.0 * num as f64 / denom as f64
    })
}

/// Fraction of instances whose single predicted label is the single true one.
pub fn multiclass_accuracy(truth: &[Vec<usize>], pred: &[Vec<usize>]) -> Result<f64> {
    check_aligned(truth.len(), pred.len())?;
    if let Some(i) = (0..truth.len()).find(|&i| truth[i].len() != 1 || pred[i].len() != 1) {
        return Err(Error::invalid(format!(
            "multi-class accuracy needs singleton sets; instance {i} is not"
        )));
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let correct = truth.iter().zip(pred).filter(|(t, p)| t[0] == p[0]).count();
    Ok(correct as f64 / truth.len() as f64)
}

/// Mean over instances of `|top_k(decisions_i) ∩ truth_i| / k`.
pub fn precision_at_k(truth: &[Vec<usize>], decisions: &[Vec<f64>], k: usize) -> Result<f64> {
    check_aligned(truth.len(), decisions.len())?;
    if k == 0 {
        return Err(Error::invalid("precision@k needs k >= 1"));
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (t, row) in truth.iter().zip(decisions) {
        if k > row.len() {
            return Err(Error::invalid(format!("k = {k} exceeds {} labels", row.len())));
        }
        let top = top_k_labels(row, k);
        total += intersection_size(&top, t) as f64 / k as f64;
    }
    Ok(total / truth.len() as f64)
}

/// Flat evaluation summary, serialized as one JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub strategy: Option<String>,
    pub ground_truth_used: bool,
    pub n_test: usize,
    pub n_labels: usize,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub instance_f1: f64,
    pub accuracy_multiclass: Option<f64>,
    pub precision_at_k: Option<f64>,
    pub k: Option<usize>,
    pub micro_upper_bound: f64,
    pub micro_within_bound: bool,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Computes every applicable measure for a prediction.
///
/// precision@k is filled in when `k` is given (it ranks the stored decision
/// matrix); multi-class accuracy only when every truth and prediction set is a
/// singleton.
pub fn evaluate(truth: &[Vec<usize>], pred: &PredictionSet, k: Option<usize>) -> Result<MetricsReport> {
    evaluate_sets(
        truth,
        &pred.predicted,
        pred.n_labels,
        k.map(|k| (k, &pred.decisions[..])),
    )
    .map(|mut r| {
        r.strategy = Some(pred.strategy.as_str().to_string());
        r.ground_truth_used = pred.ground_truth_used;
        r
    })
}

/// [`evaluate`] on bare label sets, with optional decisions for precision@k.
pub fn evaluate_sets(
    truth: &[Vec<usize>],
    predicted: &[Vec<usize>],
    n_labels: usize,
    ranking: Option<(usize, &[Vec<f64>])>,
) -> Result<MetricsReport> {
    let counts = confusion(truth, predicted, n_labels)?;
    let micro = micro_f1(&counts);
    let k_true: Vec<usize> = truth.iter().map(Vec::len).collect();
    let k_pred: Vec<usize> = predicted.iter().map(Vec::len).collect();
    let bound = micro_upper_bound(&k_true, &k_pred)?;
    let singletons = truth.iter().chain(predicted).all(|s| s.len() == 1);
    let accuracy = if singletons && !truth.is_empty() {
        Some(multiclass_accuracy(truth, predicted)?)
    } else {
        None
    };
    let (k, p_at_k) = match ranking {
        Some((k, decisions)) => (Some(k), Some(precision_at_k(truth, decisions, k)?)),
        None => (None, None),
    };
    Ok(MetricsReport {
        strategy: None,
        ground_truth_used: false,
        n_test: truth.len(),
        n_labels,
        macro_f1: macro_f1(&counts),
        micro_f1: micro,
        instance_f1: instance_f1(truth, predicted)?,
        accuracy_multiclass: accuracy,
        precision_at_k: p_at_k,
        k,
        micro_upper_bound: bound,
        micro_within_bound: micro <= bound + 1e-12,
    })
}
