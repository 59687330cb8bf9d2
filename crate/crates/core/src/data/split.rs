use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, shuffle};

/// A seeded train/test partition of `0..n_instances`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub seed: u64,
    pub train_fraction: f64,
    pub n_instances: usize,
    /// Ascending.
    pub train_indices: Vec<usize>,
    /// Ascending.
    pub test_indices: Vec<usize>,
}

/// Shuffles `0..n_instances` and keeps the first `round(train_fraction * n)`
/// positions for training.
pub fn make_split(n_instances: usize, seed: u64, train_fraction: f64) -> Result<SplitPlan> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if n_instances < 2 {
        return Err(Error::invalid("a split needs at least two instances"));
    }
    let n_train = (train_fraction * n_instances as f64).round() as usize;
    if n_train == 0 || n_train == n_instances {
        return Err(Error::invalid(format!(
            "train_fraction {train_fraction} leaves one side of a {n_instances}-instance split empty"
        )));
    }
    let mut perm: Vec<usize> = (0..n_instances).collect();
    shuffle(&mut rng_from_seed(seed), &mut perm);
    let mut train_indices = perm[..n_train].to_vec();
    let mut test_indices = perm[n_train..].to_vec();
    train_indices.sort_unstable();
    test_indices.sort_unstable();
    Ok(SplitPlan {
        seed,
        train_fraction,
        n_instances,
        train_indices,
        test_indices,
    })
}

/// Balanced assignment of `train_size` positions to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub seed: u64,
    pub k: usize,
    /// `assignment[p]` is the fold of training position `p`.
    pub assignment: Vec<usize>,
}

pub fn make_folds(train_size: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid(format!("fold count must be at least 2, got {k}")));
    }
    if k > train_size {
        return Err(Error::invalid(format!(
            "{k} folds requested for {train_size} training instances"
        )));
    }
    let mut perm: Vec<usize> = (0..train_size).collect();
    shuffle(&mut rng_from_seed(seed), &mut perm);
    let mut assignment = vec![0; train_size];
    for (pos, &p) in perm.iter().enumerate() {
        assignment[p] = pos % k;
    }
    Ok(FoldPlan { seed, k, assignment })
}

impl FoldPlan {
    pub fn train_size(&self) -> usize {
        self.assignment.len()
    }

    /// Positions held out in `fold`, ascending.
    pub fn validation(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&p| self.assignment[p] == fold)
            .collect()
    }

    /// Positions used for fitting when `fold` is held out, ascending.
    pub fn training(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&p| self.assignment[p] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# fold-plan v1\n");
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "k {}", self.k);
        let _ = writeln!(s, "assignment {}", join(&self.assignment));
        s
    }

    pub fn from_text(text: &str) -> Result<FoldPlan> {
        let fields = keyed_lines(text)?;
        let seed = scalar(&fields, "seed")?;
        let k = scalar(&fields, "k")?;
        let assignment = list(&fields, "assignment")?;
        if assignment.iter().any(|&f| f >= k) {
            return Err(Error::invalid("fold id out of range"));
        }
        Ok(FoldPlan {
            seed,
            k: k as usize,
            assignment: assignment.into_iter().map(|f| f as usize).collect(),
        })
    }

    /// SHA-256 of the text form, hex encoded.
    pub fn digest(&self) -> String {
        digest(&self.to_text())
    }
}

impl SplitPlan {
    pub fn to_text(&self) -> String {
        let mut s = String::from("# split-plan v1\n");
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "train_fraction {}", self.train_fraction);
        let _ = writeln!(s, "n_instances {}", self.n_instances);
        let _ = writeln!(s, "train {}", join(&self.train_indices));
        let _ = writeln!(s, "test {}", join(&self.test_indices));
        s
    }

    pub fn from_text(text: &str) -> Result<SplitPlan> {
        let fields = keyed_lines(text)?;
        let train_fraction = fields
            .iter()
            .find(|(k, _)| k == "train_fraction")
            .ok_or_else(|| Error::invalid("missing train_fraction"))?
            .1
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::invalid("bad train_fraction"))?;
        let plan = SplitPlan {
            seed: scalar(&fields, "seed")?,
            train_fraction,
            n_instances: scalar(&fields, "n_instances")? as usize,
            train_indices: list(&fields, "train")?.into_iter().map(|v| v as usize).collect(),
            test_indices: list(&fields, "test")?.into_iter().map(|v| v as usize).collect(),
        };
        let mut all: Vec<usize> = plan.train_indices.iter().chain(&plan.test_indices).copied().collect();
        all.sort_unstable();
        if all != (0..plan.n_instances).collect::<Vec<_>>() {
            return Err(Error::invalid("split indices are not a partition of 0..n_instances"));
        }
        Ok(plan)
    }

    pub fn digest(&self) -> String {
        digest(&self.to_text())
    }
}

fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn join(values: &[usize]) -> String {
    values.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

fn keyed_lines(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            let (k, v) = l.split_once(' ').unwrap_or((l, ""));
            Ok((k.to_string(), v.to_string()))
        })
        .collect()
}

fn scalar(fields: &[(String, String)], key: &str) -> Result<u64> {
    fields
        .iter()
        .find(|(k, _)| k == key)
        .ok_or_else(|| Error::invalid(format!("missing {key}")))?
        .1
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("bad value for {key}")))
}

fn list(fields: &[(String, String)], key: &str) -> Result<Vec<u64>> {
    fields
        .iter()
        .find(|(k, _)| k == key)
        .ok_or_else(|| Error::invalid(format!("missing {key}")))?
        .1
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::invalid(format!("bad entry in {key}"))))
        .collect()
}
