//! Fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use ovrlab::data::SparseDataset;
use ovrlab::metrics::f1_score;
use ovrlab::rng::{rng_from_seed, DetRng};
use rand::Rng;

/// Two labels, two features. Label j is positive with probability 0.2 and is
/// signalled only by feature j: negatives draw it from [0, 0.05] and
/// positives from [0.15, 0.2]. The feature scale is so small that a C = 1
/// fit never scores a positive at or above 0, yet the ranking separates.
pub fn shifted_separable(seed: u64, n: usize) -> SparseDataset {
    let mut rng = rng_from_seed(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = Vec::new();
        let mut set = Vec::new();
        for j in 0..2 {
            let positive = rng.random::<f64>() < 0.2;
            let x = if positive {
                rng.random_range(0.15..=0.2)
            } else {
                rng.random_range(0.0..=0.05)
            };
            row.push((j, x));
            if positive {
                set.push(j);
            }
        }
        rows.push(row);
        labels.push(set);
    }
    SparseDataset::from_rows(rows, labels, Some(2), Some(2)).expect("valid fixture")
}

/// Dense random problem with `n_labels` labels that depend linearly on the
/// features plus noise.
pub fn random_dense(rng: &mut DetRng, n: usize, d: usize, n_labels: usize) -> SparseDataset {
    let w: Vec<Vec<f64>> = (0..n_labels)
        .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let set = (0..n_labels)
            .filter(|&j| {
                let s: f64 = w[j].iter().zip(&x).map(|(a, b)| a * b).sum();
                s + rng.random_range(-0.5..0.5) > 0.3
            })
            .collect();
        rows.push(x.into_iter().enumerate().collect());
        labels.push(set);
    }
    SparseDataset::from_rows(rows, labels, Some(d), Some(n_labels)).expect("valid random data")
}

pub fn random_sets(rng: &mut DetRng, n: usize, n_labels: usize) -> Vec<Vec<usize>> {
    (0..n)
        .map(|_| (0..n_labels).filter(|_| rng.random::<bool>()).collect())
        .collect()
}

/// Per-label (tp, fp, fn) by scanning every (instance, label) cell.
pub fn oracle_counts(truth: &[Vec<usize>], pred: &[Vec<usize>], n_labels: usize) -> Vec<(usize, usize, usize)> {
    let mut out = vec![(0, 0, 0); n_labels];
    for (t, p) in truth.iter().zip(pred) {
        for (j, cell) in out.iter_mut().enumerate() {
            let in_t = t.contains(&j);
            let in_p = p.contains(&j);
            match (in_t, in_p) {
                (true, true) => cell.0 += 1,
                (false, true) => cell.1 += 1,
                (true, false) => cell.2 += 1,
                (false, false) => {}
            }
        }
    }
    out
}

pub fn oracle_macro(truth: &[Vec<usize>], pred: &[Vec<usize>], n_labels: usize) -> f64 {
    let counts = oracle_counts(truth, pred, n_labels);
    counts.iter().map(|&(tp, fp, fn_)| f1_score(tp, fp, fn_)).sum::<f64>() / n_labels as f64
}

pub fn oracle_micro(truth: &[Vec<usize>], pred: &[Vec<usize>], n_labels: usize) -> f64 {
    let counts = oracle_counts(truth, pred, n_labels);
    let (tp, fp, fn_) = counts.iter().fold((0, 0, 0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2));
    f1_score(tp, fp, fn_)
}

pub fn oracle_instance(truth: &[Vec<usize>], pred: &[Vec<usize>]) -> f64 {
    let per: Vec<f64> = truth
        .iter()
        .zip(pred)
        .map(|(t, p)| {
            let inter = t.iter().filter(|j| p.contains(j)).count();
            let denom = t.len() + p.len();
            if denom == 0 {
                0.0
            } else {
                2.0 * inter as f64 / denom as f64
            }
        })
        .collect();
    per.iter().sum::<f64>() / per.len() as f64
}

/// Top-k by rank counting: label j is in the top k iff fewer than k labels
/// beat it, where a larger value beats it and an equal value with a smaller
/// index beats it.
pub fn oracle_top_k(row: &[f64], k: usize) -> Vec<usize> {
    (0..row.len())
        .filter(|&j| {
            let beaten_by = (0..row.len())
                .filter(|&l| row[l] > row[j] || (row[l] == row[j] && l < j))
                .count();
            beaten_by < k
        })
        .collect()
}

pub fn oracle_precision_at_k(truth: &[Vec<usize>], decisions: &[Vec<f64>], k: usize) -> f64 {
    let total: f64 = truth
        .iter()
        .zip(decisions)
        .map(|(t, row)| oracle_top_k(row, k).iter().filter(|j| t.contains(j)).count() as f64 / k as f64)
        .sum();
    total / truth.len() as f64
}

/// Best F1 over every cut of a scored list, and the smallest number of
/// predicted positives among the cuts reaching it.
///
/// Cuts are "predict positive iff value ≥ τ" for τ in the distinct values
/// plus +∞, which covers every distinct prediction a threshold can make.
pub fn oracle_best_cut(values: &[(f64, bool)]) -> (f64, usize) {
    let mut taus: Vec<f64> = values.iter().map(|v| v.0).collect();
    taus.push(f64::INFINITY);
    let mut best = (-1.0, usize::MAX);
    for &tau in &taus {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for &(v, pos) in values {
            match (v >= tau, pos) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        let f = f1_score(tp, fp, fn_);
        let n_pos = tp + fp;
        if f > best.0 || (f == best.0 && n_pos < best.1) {
            best = (f, n_pos);
        }
    }
    best
}

/// F1 and positive count when predicting `value + delta ≥ 0`.
pub fn f1_with_delta(values: &[(f64, bool)], delta: f64) -> (f64, usize) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for &(v, pos) in values {
        match (v + delta >= 0.0, pos) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    (f1_score(tp, fp, fn_), tp + fp)
}

/// Root of `w = 1 / (1 + e^w)` by bisection on [0, 1]: the optimum of
/// `w²/2 + log(1 + e^{-w})`.
pub fn one_d_optimum() -> f64 {
    let g = |w: f64| w - 1.0 / (1.0 + w.exp());
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Writes a 3-label problem as two dense feature files sharing one label file
/// and returns a config pointing at them. The second representation is a
/// noisier linear mix of the first, so the two score differently.
pub fn write_experiment_fixture(dir: &std::path::Path, n: usize) -> ovrlab::experiment::ExperimentConfig {
    use std::fmt::Write as _;
    let mut rng = rng_from_seed(606);
    let data = random_dense(&mut rng, n, 4, 3);
    let (mut a, mut b, mut y) = (String::new(), String::new(), String::new());
    for i in 0..n {
        let mut x = [0.0; 4];
        for (j, v) in data.row(i).iter() {
            x[j] = v;
        }
        let line: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        writeln!(a, "{}", line.join(" ")).unwrap();
        let mixed: Vec<String> = (0..4)
            .map(|j| (x[j] + 0.5 * x[(j + 1) % 4] + rng.random_range(-0.3..0.3)).to_string())
            .collect();
        writeln!(b, "{}", mixed.join(" ")).unwrap();
        let set: Vec<String> = data.label_set(i).iter().map(|l| l.to_string()).collect();
        writeln!(y, "{}", set.join(",")).unwrap();
    }
    std::fs::write(dir.join("plain.txt"), a).unwrap();
    std::fs::write(dir.join("mixed.txt"), b).unwrap();
    std::fs::write(dir.join("labels.txt"), y).unwrap();
    ovrlab::experiment::ExperimentConfig {
        features: vec![dir.join("plain.txt"), dir.join("mixed.txt")],
        labels: Some(dir.join("labels.txt")),
        c_grid: Some(vec![0.01, 0.1, 1.0, 10.0, 100.0]),
        ..Default::default()
    }
}

/// Up to 50 labelled scores on a coarse grid, so ties are common.
pub fn random_scored_list(rng: &mut DetRng) -> Vec<(f64, bool)> {
    let n = rng.random_range(1..=50);
    let p_pos = rng.random_range(0.0..1.0);
    (0..n)
        .map(|_| (rng.random_range(-20..=20) as f64 / 8.0, rng.random::<f64>() < p_pos))
        .collect()
}
