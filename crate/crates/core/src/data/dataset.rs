use crate::error::{Error, Result};

/// Borrowed view of one sparse instance.
#[derive(Debug, Clone, Copy)]
pub struct SparseRow<'a> {
    pub indices: &'a [usize],
    pub values: &'a [f64],
}

impl<'a> SparseRow<'a> {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + 'a {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// Dot product with a dense vector. Indices past the end of `w` are ignored.
    pub fn dot(&self, w: &[f64]) -> f64 {
        self.iter().filter(|&(j, _)| j < w.len()).map(|(j, v)| w[j] * v).sum()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.indices.last().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Row-sparse feature matrix (CSR) with one sorted label set per instance.
///
/// Construction validates the invariants: feature indices are strictly
/// increasing within a row and below `n_features`, label sets are strictly
/// increasing and below `n_labels`. Instances without labels are kept; for
/// every binary problem they are negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDataset {
    n_features: usize,
    n_labels: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    labels: Vec<Vec<usize>>,
}

impl SparseDataset {
    /// Builds a dataset from per-instance rows and label sets.
    ///
    /// Rows may be unsorted; they are sorted by feature index. Label sets are
    /// sorted as well. Duplicates of either kind are rejected. When
    /// `n_features`/`n_labels` are `None` they default to the largest observed
    /// index plus one; explicit values must cover every observed index.
    pub fn from_rows(
        rows: Vec<Vec<(usize, f64)>>,
        label_sets: Vec<Vec<usize>>,
        n_features: Option<usize>,
        n_labels: Option<usize>,
    ) -> Result<Self> {
        if rows.len() != label_sets.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows but {} label sets",
                rows.len(),
                label_sets.len()
            )));
        }
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut max_feature = None::<usize>;
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|&(j, _)| j);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::invalid(format!(
                        "instance {i}: duplicate feature index {}",
                        w[0].0
                    )));
                }
            }
            if let Some(&(j, _)) = row.last() {
                max_feature = Some(max_feature.map_or(j, |m| m.max(j)));
            }
            for (j, v) in row {
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }

        let mut labels = Vec::with_capacity(label_sets.len());
        let mut max_label = None::<usize>;
        for (i, mut set) in label_sets.into_iter().enumerate() {
            set.sort_unstable();
            if set.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid(format!("instance {i}: duplicate label")));
            }
            if let Some(&l) = set.last() {
                max_label = Some(max_label.map_or(l, |m| m.max(l)));
            }
            labels.push(set);
        }

        let observed_features = max_feature.map_or(0, |m| m + 1);
        let observed_labels = max_label.map_or(0, |m| m + 1);
        let n_features = match n_features {
            Some(n) if n < observed_features => {
                return Err(Error::invalid(format!(
                    "n_features = {n} but feature index {} occurs",
                    observed_features - 1
                )))
            }
            Some(n) => n,
            None => observed_features,
        };
        let n_labels = match n_labels {
            Some(n) if n < observed_labels => {
                return Err(Error::invalid(format!(
                    "n_labels = {n} but label {} occurs",
                    observed_labels - 1
                )))
            }
            Some(n) => n,
            None => observed_labels,
        };

        Ok(SparseDataset {
            n_features,
            n_labels,
            indptr,
            indices,
            values,
            labels,
        })
    }

    pub fn n_instances(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> SparseRow<'_> {
        let (lo, hi) = (self.indptr[i], self.indptr[i + 1]);
        SparseRow {
            indices: &self.indices[lo..hi],
            values: &self.values[lo..hi],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = SparseRow<'_>> + '_ {
        (0..self.n_instances()).map(move |i| self.row(i))
    }

    pub fn label_set(&self, i: usize) -> &[usize] {
        &self.labels[i]
    }

    pub fn label_sets(&self) -> &[Vec<usize>] {
        &self.labels
    }

    pub fn has_label(&self, i: usize, label: usize) -> bool {
        self.labels[i].binary_search(&label).is_ok()
    }

    /// True label counts K_i.
    pub fn label_counts(&self) -> Vec<usize> {
        self.labels.iter().map(Vec::len).collect()
    }

    /// Number of instances carrying `label`.
    pub fn label_frequency(&self, label: usize) -> usize {
        (0..self.n_instances()).filter(|&i| self.has_label(i, label)).count()
    }

    pub fn empty_label_count(&self) -> usize {
        self.labels.iter().filter(|s| s.is_empty()).count()
    }

    /// Copies the given instances (in the given order) into a new dataset
    /// with the same feature and label dimensions.
    pub fn subset(&self, instances: &[usize]) -> SparseDataset {
        let mut indptr = Vec::with_capacity(instances.len() + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut labels = Vec::with_capacity(instances.len());
        for &i in instances {
            let row = self.row(i);
            indices.extend_from_slice(row.indices);
            values.extend_from_slice(row.values);
            indptr.push(indices.len());
            labels.push(self.labels[i].clone());
        }
        SparseDataset {
            n_features: self.n_features,
            n_labels: self.n_labels,
            indptr,
            indices,
            values,
            labels,
        }
    }

    /// Widens the declared dimensions (never shrinks them).
    pub fn with_dimensions(mut self, n_features: usize, n_labels: usize) -> Result<Self> {
        if n_features < self.n_features || n_labels < self.n_labels {
            return Err(Error::DimensionMismatch(format!(
                "cannot shrink dataset from ({}, {}) to ({n_features}, {n_labels})",
                self.n_features, self.n_labels
            )));
        }
        self.n_features = n_features;
        self.n_labels = n_labels;
        Ok(self)
    }

    /// Scales every instance to unit Euclidean norm. All-zero rows are left alone.
    pub fn normalize_l2(&mut self) {
        for i in 0..self.n_instances() {
            let (lo, hi) = (self.indptr[i], self.indptr[i + 1]);
            let norm = self.values[lo..hi].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                self.values[lo..hi].iter_mut().for_each(|v| *v /= norm);
            }
        }
    }

    /// First (instance, feature) holding a NaN or infinite value.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        (0..self.n_instances()).find_map(|i| self.row(i).iter().find(|(_, v)| !v.is_finite()).map(|(j, _)| (i, j)))
    }
}
