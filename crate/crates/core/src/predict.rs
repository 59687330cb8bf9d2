//! Turning decision values into predicted label sets.
//!
//! | strategy | rule |
//! |---|---|
//! | `basic` | label j iff `d_ij ≥ 0` |
//! | `no-empty` | as `basic`, but an empty row gets its arg-max label |
//! | `as-calibrated` | `basic` on a thresholded model (Δ already folded in) |
//! | `cost-sensitive-no-empty` | `no-empty` on a cost-sensitive model |
//! | `top-k` | the k largest values per row |
//! | `unrealistic` | the K_i largest values, with K_i read from the ground truth |
//!
//! Ties in value always go to the smaller label index.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::data::SparseDataset;
use crate::error::{Error, Result};
use crate::trainer::OvRModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PredictionStrategy {
    Unrealistic,
    Basic,
    NoEmpty,
    AsCalibrated,
    CostSensitiveNoEmpty,
    TopK,
}

impl PredictionStrategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            PredictionStrategy::Unrealistic => "unrealistic",
            PredictionStrategy::Basic => "basic",
            PredictionStrategy::NoEmpty => "no-empty",
            PredictionStrategy::AsCalibrated => "as-calibrated",
            PredictionStrategy::CostSensitiveNoEmpty => "cost-sensitive-no-empty",
            PredictionStrategy::TopK => "top-k",
        }
    }
}

impl fmt::Display for PredictionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PredictionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "unrealistic" => PredictionStrategy::Unrealistic,
            "basic" => PredictionStrategy::Basic,
            "no-empty" => PredictionStrategy::NoEmpty,
            "as-calibrated" => PredictionStrategy::AsCalibrated,
            "cost-sensitive-no-empty" => PredictionStrategy::CostSensitiveNoEmpty,
            "top-k" => PredictionStrategy::TopK,
            other => return Err(Error::invalid(format!("unknown prediction strategy {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub decisions: Vec<Vec<f64>>,
    /// Sorted label subsets, one per instance.
    pub predicted: Vec<Vec<usize>>,
    pub strategy: PredictionStrategy,
    pub n_labels: usize,
    /// Set only by [`predict_unrealistic`].
    pub ground_truth_used: bool,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }

    /// Predicted set sizes K̂_i.
    pub fn predicted_counts(&self) -> Vec<usize> {
        self.predicted.iter().map(Vec::len).collect()
    }

    /// Relabels the strategy (e.g. `basic` → `as-calibrated`) without
    /// changing any prediction.
    pub fn tagged(mut self, strategy: PredictionStrategy) -> Self {
        self.strategy = strategy;
        self
    }
}

/// `d_ij = w_jᵀx_i + bias_j + Δ_j`; always-negative labels give −∞.
pub fn decision_matrix(model: &OvRModel, test: &SparseDataset) -> Result<Vec<Vec<f64>>> {
    if test.n_features() > model.n_features {
        return Err(Error::DimensionMismatch(format!(
            "test data has {} features, model was trained on {}",
            test.n_features(),
            model.n_features
        )));
    }
    Ok((0..test.n_instances())
        .into_par_iter()
        .map(|i| {
            let row = test.row(i);
            model.models.iter().map(|m| m.score(row)).collect()
        })
        .collect())
}

fn n_labels_of(decisions: &[Vec<f64>]) -> usize {
    decisions.first().map_or(0, Vec::len)
}

fn sign_rule(row: &[f64]) -> Vec<usize> {
    (0..row.len()).filter(|&j| row[j] >= 0.0).collect()
}

fn argmax(row: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for j in 0..row.len() {
        if best.is_none_or(|b| row[j] > row[b]) {
            best = Some(j);
        }
    }
    best
}

/// Indices of the `k` largest values (smaller index wins ties), ascending.
pub fn top_k_labels(row: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    let mut top: Vec<usize> = order.into_iter().take(k).collect();
    top.sort_unstable();
    top
}

fn build(decisions: &[Vec<f64>], predicted: Vec<Vec<usize>>, strategy: PredictionStrategy) -> PredictionSet {
    PredictionSet {
        decisions: decisions.to_vec(),
        predicted,
        strategy,
        n_labels: n_labels_of(decisions),
        ground_truth_used: false,
    }
}

pub fn predict_basic(decisions: &[Vec<f64>]) -> PredictionSet {
    let predicted = decisions.iter().map(|row| sign_rule(row)).collect();
    build(decisions, predicted, PredictionStrategy::Basic)
}

/// Sign rule, with empty rows rescued by their highest-valued label.
pub fn predict_no_empty(decisions: &[Vec<f64>]) -> PredictionSet {
    let predicted = decisions
        .iter()
        .map(|row| {
            let set = sign_rule(row);
            if set.is_empty() {
                argmax(row).into_iter().collect()
            } else {
                set
            }
        })
        .collect();
    build(decisions, predicted, PredictionStrategy::NoEmpty)
}

pub fn predict_top_k(decisions: &[Vec<f64>], k: usize) -> Result<PredictionSet> {
    let n_labels = n_labels_of(decisions);
    if k > n_labels && !decisions.is_empty() {
        return Err(Error::invalid(format!("k = {k} exceeds {n_labels} labels")));
    }
    let predicted = decisions.iter().map(|row| top_k_labels(row, k)).collect();
    Ok(build(decisions, predicted, PredictionStrategy::TopK))
}

/// Predicts exactly `true_label_counts[i]` labels for instance i.
///
/// This consumes ground-truth information from the test set; it exists to
/// measure how much that leak inflates scores, and every result is flagged.
pub fn predict_unrealistic(decisions: &[Vec<f64>], true_label_counts: &[usize]) -> Result<PredictionSet> {
    if decisions.len() != true_label_counts.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} decision rows but {} label counts",
            decisions.len(),
            true_label_counts.len()
        )));
    }
    let n_labels = n_labels_of(decisions);
    if let Some(&k) = true_label_counts.iter().find(|&&k| k > n_labels) {
        return Err(Error::invalid(format!("label count {k} exceeds {n_labels} labels")));
    }
    log::warn!(
        "unrealistic prediction: ground-truth label counts of {} test instances were used",
        true_label_counts.len()
    );
    let predicted = decisions
        .iter()
        .zip(true_label_counts)
        .map(|(row, &k)| top_k_labels(row, k))
        .collect();
    let mut set = build(decisions, predicted, PredictionStrategy::Unrealistic);
    set.ground_truth_used = true;
    Ok(set)
}

/// One line per instance: comma-separated labels, empty line for the empty set.
pub fn write_predictions(w: impl Write, set: &PredictionSet) -> Result<()> {
    crate::data::write_label_lines(w, &set.predicted)
}

/// Tab-separated decision values, one row per instance.
pub fn write_decisions_tsv(mut w: impl Write, decisions: &[Vec<f64>]) -> Result<()> {
    for row in decisions {
        let line = row.iter().map(f64::to_string).collect::<Vec<_>>().join("\t");
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_decisions_tsv(reader: impl BufRead) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let row = line
            .split('\t')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(i + 1, format!("bad decision value {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first().map(Vec::len) {
            if first != row.len() {
                return Err(Error::parse(i + 1, "rows have different lengths"));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}
