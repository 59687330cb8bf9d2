//! Empirical checks of three facts about Micro-F1 and a demonstration of how
//! much knowing the true label counts inflates it.
//!
//! 1. For any prediction, Micro-F1 ≤ `2 Σ min(K̂_i, K_i) / Σ (K_i + K̂_i)` ≤ 1,
//!    with the bound equal to 1 when K̂_i = K_i.
//! 2. If every instance ranks its true labels strictly above its false ones,
//!    predicting the K̂_i top-ranked labels is optimal among predictions of
//!    those sizes and attains the bound exactly.
//! 3. On single-label data with single-label predictions, accuracy equals
//!    Micro-F1.
//!
//! Checks run on seeded random instances; the brute-force optimality check
//! only runs where labels per instance are at most [`MAX_BRUTE_FORCE_LABELS`].

use std::fmt::Write as _;

use rand::Rng;
use serde::Serialize;

use crate::calibration::sweep_threshold;
use crate::error::{Error, Result};
use crate::metrics::{confusion, macro_f1, micro_f1, micro_upper_bound, multiclass_accuracy};
use crate::predict::{predict_basic, predict_no_empty, predict_unrealistic, top_k_labels};
use crate::rng::{index_below, mix_seed, rng_from_seed, DetRng};

pub const MAX_BRUTE_FORCE_LABELS: usize = 6;
/// Joint enumeration over all instances is used up to this many candidate predictions.
const MAX_JOINT_ENUMERATION: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticRanking {
    pub n_instances: usize,
    pub n_labels: usize,
    pub truth: Vec<Vec<usize>>,
    pub decisions: Vec<Vec<f64>>,
    pub perfect: bool,
}

/// True if every row's smallest true-label value strictly exceeds its largest
/// false-label value.
pub fn is_perfect_ranking(truth: &[Vec<usize>], decisions: &[Vec<f64>]) -> bool {
    truth.iter().zip(decisions).all(|(t, row)| {
        let lo_true = t.iter().map(|&j| row[j]).fold(f64::INFINITY, f64::min);
        let hi_false = (0..row.len())
            .filter(|j| t.binary_search(j).is_err())
            .map(|j| row[j])
            .fold(f64::NEG_INFINITY, f64::max);
        lo_true > hi_false
    })
}

fn random_truth(rng: &mut DetRng, n_labels: usize, density: f64) -> Vec<usize> {
    let mut set: Vec<usize> = (0..n_labels).filter(|_| rng.random::<f64>() < density).collect();
    if set.is_empty() && n_labels > 0 {
        set.push(index_below(rng, n_labels));
    }
    set
}

/// Uniform draw from the open interval (lo, hi).
fn open_uniform(rng: &mut DetRng, lo: f64, hi: f64) -> f64 {
    loop {
        let v = rng.random_range(lo..hi);
        if v > lo {
            return v;
        }
    }
}

/// Random label sets (each label with probability `label_density`, at least
/// one per instance) scored so that true labels fall in (0.5, 1) and false
/// labels in (0, 0.5).
pub fn gen_perfect_ranking(
    seed: u64,
    n_instances: usize,
    n_labels: usize,
    label_density: f64,
) -> Result<SyntheticRanking> {
    if !(label_density > 0.0 && label_density < 1.0) {
        return Err(Error::invalid(format!(
            "label density must lie in (0, 1), got {label_density}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut truth = Vec::with_capacity(n_instances);
    let mut decisions = Vec::with_capacity(n_instances);
    for _ in 0..n_instances {
        let set = random_truth(&mut rng, n_labels, label_density);
        let row = (0..n_labels)
            .map(|j| {
                if set.binary_search(&j).is_ok() {
                    open_uniform(&mut rng, 0.5, 1.0)
                } else {
                    open_uniform(&mut rng, 0.0, 0.5)
                }
            })
            .collect();
        truth.push(set);
        decisions.push(row);
    }
    Ok(SyntheticRanking {
        n_instances,
        n_labels,
        truth,
        decisions,
        perfect: true,
    })
}

/// Outcome of one checker.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub statement: String,
    pub trials: usize,
    pub violations: usize,
    /// Largest |observed − expected| over the equality checks (0 for inequality checks).
    pub max_abs_error: f64,
    /// Smallest bound − Micro-F1 observed (inequality checks only).
    pub min_slack: Option<f64>,
    pub max_slack: Option<f64>,
    pub equality_cases: usize,
    pub brute_force_instances: usize,
    pub notes: Vec<String>,
    pub counterexample: Option<String>,
}

impl CheckReport {
    fn new(name: &str, statement: &str, trials: usize) -> Self {
        CheckReport {
            name: name.into(),
            statement: statement.into(),
            trials,
            violations: 0,
            max_abs_error: 0.0,
            min_slack: None,
            max_slack: None,
            equality_cases: 0,
            brute_force_instances: 0,
            notes: Vec::new(),
            counterexample: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    fn violation(&mut self, detail: impl FnOnce() -> String) {
        self.violations += 1;
        if self.counterexample.is_none() {
            self.counterexample = Some(detail());
        }
    }
}

fn micro_of(truth: &[Vec<usize>], pred: &[Vec<usize>], n_labels: usize) -> f64 {
    micro_f1(&confusion(truth, pred, n_labels).expect("aligned synthetic data"))
}

fn sizes(sets: &[Vec<usize>]) -> Vec<usize> {
    sets.iter().map(Vec::len).collect()
}

fn random_subset(rng: &mut DetRng, n_labels: usize) -> Vec<usize> {
    (0..n_labels).filter(|_| rng.random::<bool>()).collect()
}

const SLACK_TOL: f64 = 1e-12;

/// Micro-F1 never exceeds the size-only bound; the bound reaches 1 at K̂ = K.
pub fn check_size_bound(seed: u64, trials: usize) -> Result<CheckReport> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let mut report = CheckReport::new(
        "size-bound",
        "Micro-F1 <= 2*sum(min(Khat_i, K_i)) / sum(K_i + Khat_i) <= 1, with equality to 1 when Khat_i = K_i",
        trials,
    );
    let mut min_slack = f64::INFINITY;
    let mut max_slack = f64::NEG_INFINITY;
    for trial in 0..trials {
        let mut rng = rng_from_seed(mix_seed(seed, trial as u64));
        let n = 1 + index_below(&mut rng, 20);
        let l = 1 + index_below(&mut rng, 6);
        let truth: Vec<_> = (0..n).map(|_| random_subset(&mut rng, l)).collect();
        let pred: Vec<_> = (0..n).map(|_| random_subset(&mut rng, l)).collect();

        let micro = micro_of(&truth, &pred, l);
        let bound = micro_upper_bound(&sizes(&truth), &sizes(&pred))?;
        let slack = bound - micro;
        min_slack = min_slack.min(slack);
        max_slack = max_slack.max(slack);
        if slack.abs() <= SLACK_TOL {
            report.equality_cases += 1;
        }
        if slack < -SLACK_TOL || bound > 1.0 + SLACK_TOL {
            report.violation(|| format!("trial {trial}: truth {truth:?} pred {pred:?} micro {micro} bound {bound}"));
        }

        // pred = truth reaches micro = bound = 1 whenever any label is present
        if truth.iter().any(|s| !s.is_empty()) {
            let m = micro_of(&truth, &truth, l);
            let b = micro_upper_bound(&sizes(&truth), &sizes(&truth))?;
            report.max_abs_error = report.max_abs_error.max((m - 1.0).abs()).max((b - 1.0).abs());
            if m != 1.0 || b != 1.0 {
                report.violation(|| format!("trial {trial}: identity prediction gave micro {m}, bound {b}"));
            }
        }

        // K̂ = K on a perfect ranking gives micro = 1
        let ranking = gen_perfect_ranking(mix_seed(seed ^ 0x5EED, trial as u64), n, l, 0.4)?;
        let top: Vec<_> = ranking
            .decisions
            .iter()
            .zip(&ranking.truth)
            .map(|(row, t)| top_k_labels(row, t.len()))
            .collect();
        let m = micro_of(&ranking.truth, &top, l);
        report.max_abs_error = report.max_abs_error.max((m - 1.0).abs());
        if m != 1.0 {
            report.violation(|| format!("trial {trial}: perfect ranking with Khat = K gave micro {m}"));
        }
    }
    report.min_slack = Some(min_slack);
    report.max_slack = Some(max_slack);
    Ok(report)
}

fn subsets_of_size(n_labels: usize, size: usize) -> Vec<Vec<usize>> {
    (0u32..(1 << n_labels))
        .filter(|mask| mask.count_ones() as usize == size)
        .map(|mask| (0..n_labels).filter(|&j| mask & (1 << j) != 0).collect())
        .collect()
}

/// Best Micro-F1 over all predictions with the given sizes, by brute force.
///
/// Small cases enumerate every joint prediction; larger ones use the fact that
/// with sizes fixed the Micro-F1 denominator is fixed, so the optimum
/// maximizes true positives instance by instance.
pub fn brute_force_best_micro(truth: &[Vec<usize>], k_hat: &[usize], n_labels: usize) -> f64 {
    let choices: Vec<Vec<Vec<usize>>> = k_hat.iter().map(|&k| subsets_of_size(n_labels, k)).collect();
    let joint = choices.iter().try_fold(1usize, |acc, c| {
        acc.checked_mul(c.len()).filter(|&v| v <= MAX_JOINT_ENUMERATION)
    });
    if joint.is_some() {
        let mut best = 0.0f64;
        let mut idx = vec![0usize; choices.len()];
        loop {
            let pred: Vec<Vec<usize>> = idx.iter().zip(&choices).map(|(&i, c)| c[i].clone()).collect();
            best = best.max(micro_of(truth, &pred, n_labels));
            // odometer increment
            let mut pos = 0;
            loop {
                if pos == idx.len() {
                    return best;
                }
                idx[pos] += 1;
                if idx[pos] < choices[pos].len() {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
        }
    }
    let tp: usize = truth
        .iter()
        .zip(&choices)
        .map(|(t, c)| {
            c.iter()
                .map(|s| s.iter().filter(|j| t.binary_search(j).is_ok()).count())
                .max()
                .unwrap_or(0)
        })
        .sum();
    let denom: usize = truth.iter().map(Vec::len).sum::<usize>() + k_hat.iter().sum::<usize>();
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// On perfect rankings, top-K̂ prediction attains the bound and is optimal.
pub fn check_top_k_optimality(seed: u64, trials: usize) -> Result<CheckReport> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let mut report = CheckReport::new(
        "top-k-optimality",
        "under perfect ranking, predicting the Khat_i top-ranked labels is optimal and \
         Micro-F1 = 2*sum(min(Khat_i, K_i)) / sum(K_i + Khat_i)",
        trials,
    );
    let mut joint_cases = 0;
    for trial in 0..trials {
        let mut rng = rng_from_seed(mix_seed(seed, trial as u64));
        let n = 1 + index_below(&mut rng, 20);
        let l = 1 + index_below(&mut rng, MAX_BRUTE_FORCE_LABELS);
        let density = rng.random_range(0.1..0.9);
        let ranking = gen_perfect_ranking(rng.random(), n, l, density)?;
        if !is_perfect_ranking(&ranking.truth, &ranking.decisions) {
            report.violation(|| format!("trial {trial}: generator produced an imperfect ranking"));
            continue;
        }
        let k_true = sizes(&ranking.truth);
        let k_hat: Vec<usize> = match trial % 10 {
            0 => k_true.clone(),
            1 => vec![0; n],
            _ => (0..n).map(|_| index_below(&mut rng, l + 1)).collect(),
        };
        let pred: Vec<_> = ranking
            .decisions
            .iter()
            .zip(&k_hat)
            .map(|(row, &k)| top_k_labels(row, k))
            .collect();
        let micro = micro_of(&ranking.truth, &pred, l);
        let formula = micro_upper_bound(&k_true, &k_hat)?;
        let err = (micro - formula).abs();
        report.max_abs_error = report.max_abs_error.max(err);
        if err <= SLACK_TOL {
            report.equality_cases += 1;
        } else {
            report.violation(|| format!("trial {trial}: micro {micro} != formula {formula} (Khat {k_hat:?})"));
        }
        if k_hat == k_true && micro != 1.0 {
            report.violation(|| format!("trial {trial}: Khat = K but micro = {micro}"));
        }
        if k_hat.iter().all(|&k| k == 0) && (micro != 0.0 || formula != 0.0) {
            report.violation(|| format!("trial {trial}: Khat = 0 but micro = {micro}, bound = {formula}"));
        }

        let joint: Option<usize> = k_hat.iter().try_fold(1usize, |acc, &k| {
            acc.checked_mul(subsets_of_size(l, k).len())
                .filter(|&v| v <= MAX_JOINT_ENUMERATION)
        });
        if joint.is_some() {
            joint_cases += 1;
        }
        let best = brute_force_best_micro(&ranking.truth, &k_hat, l);
        report.brute_force_instances += n;
        if best > micro + SLACK_TOL {
            report.violation(|| format!("trial {trial}: a same-size prediction reaches {best} > top-Khat {micro}"));
        }
    }
    report.notes.push(format!(
        "brute force over all same-size predictions with <= {MAX_BRUTE_FORCE_LABELS} labels; \
         {joint_cases} trials enumerated jointly (<= {MAX_JOINT_ENUMERATION} candidates), the rest per instance"
    ));
    Ok(report)
}

/// Multi-class accuracy equals Micro-F1 on singleton truths and predictions.
pub fn check_multiclass_accuracy(seed: u64, trials: usize) -> Result<CheckReport> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let mut report = CheckReport::new(
        "multiclass-accuracy",
        "for multi-class problems, accuracy = Micro-F1",
        trials,
    );
    for trial in 0..trials {
        let mut rng = rng_from_seed(mix_seed(seed, trial as u64));
        let n = 1 + index_below(&mut rng, 50);
        let l = 1 + index_below(&mut rng, 8);
        let truth: Vec<Vec<usize>> = (0..n).map(|_| vec![index_below(&mut rng, l)]).collect();
        let pred: Vec<Vec<usize>> = match trial % 10 {
            0 => truth.clone(),
            1 if l > 1 => truth.iter().map(|t| vec![(t[0] + 1) % l]).collect(),
            _ => (0..n).map(|_| vec![index_below(&mut rng, l)]).collect(),
        };
        let acc = multiclass_accuracy(&truth, &pred)?;
        let micro = micro_of(&truth, &pred, l);
        let err = (acc - micro).abs();
        report.max_abs_error = report.max_abs_error.max(err);
        if err <= 1e-15 {
            report.equality_cases += 1;
        } else {
            report.violation(|| format!("trial {trial}: accuracy {acc} != micro {micro}"));
        }
    }
    Ok(report)
}

/// Scores of every prediction rule at one noise level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoRow {
    pub noise: f64,
    pub true_below_boundary: usize,
    pub unrealistic_micro: f64,
    pub basic_micro: f64,
    pub no_empty_micro: f64,
    pub thresholded_micro: f64,
    pub unrealistic_macro: f64,
    pub basic_macro: f64,
    pub no_empty_macro: f64,
    pub thresholded_macro: f64,
    /// unrealistic − basic Micro-F1.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoReport {
    pub seed: u64,
    pub n_instances: usize,
    pub n_labels: usize,
    pub shift: f64,
    pub rows: Vec<DemoRow>,
}

pub const DEMO_NOISE_LEVELS: [f64; 4] = [0.0, 0.1, 0.2, 0.4];
const DEMO_INSTANCES: usize = 500;
const DEMO_LABELS: usize = 6;
const DEMO_DENSITY: f64 = 0.3;
/// Subtracted from the perfect-ranking bands, placing true labels in
/// (−0.25, 0.25) so that some fall below the sign boundary.
pub const DEMO_SHIFT: f64 = 0.75;

fn noisy_ranking(seed: u64, noise: f64) -> Result<SyntheticRanking> {
    let mut ranking = gen_perfect_ranking(seed, DEMO_INSTANCES, DEMO_LABELS, DEMO_DENSITY)?;
    let mut rng = rng_from_seed(mix_seed(seed, 0xD15EA5E));
    for (t, row) in ranking.truth.iter().zip(ranking.decisions.iter_mut()) {
        row.iter_mut().for_each(|v| *v -= DEMO_SHIFT);
        let falses: Vec<usize> = (0..row.len()).filter(|j| t.binary_search(j).is_err()).collect();
        if rng.random::<f64>() < noise && !t.is_empty() && !falses.is_empty() {
            let a = t[index_below(&mut rng, t.len())];
            let b = falses[index_below(&mut rng, falses.len())];
            row.swap(a, b);
        }
    }
    ranking.perfect = is_perfect_ranking(&ranking.truth, &ranking.decisions);
    Ok(ranking)
}

/// Compares leaked-count prediction with realistic rules on shifted synthetic
/// rankings at several noise levels.
///
/// Thresholded prediction picks each label's Δ by [`sweep_threshold`] on an
/// independent validation draw from the same generator.
pub fn overestimation_demo(seed: u64) -> Result<DemoReport> {
    let mut rows = Vec::new();
    for (level, &noise) in DEMO_NOISE_LEVELS.iter().enumerate() {
        let test = noisy_ranking(mix_seed(seed, 2 * level as u64), noise)?;
        let valid = noisy_ranking(mix_seed(seed, 2 * level as u64 + 1), noise)?;

        let deltas: Vec<f64> = (0..DEMO_LABELS)
            .map(|j| {
                let column: Vec<(f64, bool)> = valid
                    .decisions
                    .iter()
                    .zip(&valid.truth)
                    .map(|(row, t)| (row[j], t.binary_search(&j).is_ok()))
                    .collect();
                sweep_threshold(&column).0
            })
            .collect();
        let shifted: Vec<Vec<f64>> = test
            .decisions
            .iter()
            .map(|row| row.iter().zip(&deltas).map(|(v, d)| v + d).collect())
            .collect();

        let score = |pred: &[Vec<usize>]| {
            let c = confusion(&test.truth, pred, DEMO_LABELS).expect("aligned");
            (micro_f1(&c), macro_f1(&c))
        };
        let unrealistic = score(&predict_unrealistic(&test.decisions, &sizes(&test.truth))?.predicted);
        let basic = score(&predict_basic(&test.decisions).predicted);
        let no_empty = score(&predict_no_empty(&test.decisions).predicted);
        let thresholded = score(&predict_basic(&shifted).predicted);
        let true_below_boundary = test
            .truth
            .iter()
            .zip(&test.decisions)
            .map(|(t, row)| t.iter().filter(|&&j| row[j] < 0.0).count())
            .sum();
        rows.push(DemoRow {
            noise,
            true_below_boundary,
            unrealistic_micro: unrealistic.0,
            basic_micro: basic.0,
            no_empty_micro: no_empty.0,
            thresholded_micro: thresholded.0,
            unrealistic_macro: unrealistic.1,
            basic_macro: basic.1,
            no_empty_macro: no_empty.1,
            thresholded_macro: thresholded.1,
            gap: unrealistic.0 - basic.0,
        });
    }
    Ok(DemoReport {
        seed,
        n_instances: DEMO_INSTANCES,
        n_labels: DEMO_LABELS,
        shift: DEMO_SHIFT,
        rows,
    })
}

impl DemoReport {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "over-estimation demo (seed {}, {} instances, {} labels, scores shifted by -{})\n",
            self.seed, self.n_instances, self.n_labels, self.shift
        );
        s.push_str("noise | true<0 | Micro: unrealistic  basic  no-empty  thresholded | gap\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>5.2} | {:>6} |       {:>11.4} {:>6.4} {:>9.4} {:>12.4} | {:.4}",
                r.noise,
                r.true_below_boundary,
                r.unrealistic_micro,
                r.basic_micro,
                r.no_empty_micro,
                r.thresholded_micro,
                r.gap
            );
        }
        s
    }
}

/// All checkers plus the demo.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub seed: u64,
    pub trials: usize,
    pub checks: Vec<CheckReport>,
    pub demo: DemoReport,
    pub passed: bool,
}

pub fn run_verification(seed: u64, trials: usize) -> Result<VerificationReport> {
    let checks = vec![
        check_size_bound(seed, trials)?,
        check_top_k_optimality(seed, trials)?,
        check_multiclass_accuracy(seed, trials)?,
    ];
    let demo = overestimation_demo(seed)?;
    let demo_ok = demo
        .rows
        .first()
        .is_some_and(|r| r.unrealistic_micro == 1.0 && r.gap > 0.0);
    let passed = checks.iter().all(CheckReport::passed) && demo_ok;
    Ok(VerificationReport {
        seed,
        trials,
        checks,
        demo,
        passed,
    })
}

impl VerificationReport {
    pub fn to_text(&self) -> String {
        let mut s = format!("verification (seed {}, {} trials per check)\n", self.seed, self.trials);
        for t in &self.checks {
            let _ = writeln!(
                s,
                "{:<9} {} violations={} max_abs_error={:e} equality_cases={}{}",
                t.name,
                if t.passed() { "PASS" } else { "FAIL" },
                t.violations,
                t.max_abs_error,
                t.equality_cases,
                t.min_slack.map_or(String::new(), |m| format!(" min_slack={m:e}"))
            );
            for note in &t.notes {
                let _ = writeln!(s, "          note: {note}");
            }
            if let Some(cx) = &t.counterexample {
                let _ = writeln!(s, "          counterexample: {cx}");
            }
        }
        s.push_str(&self.demo.to_text());
        let _ = writeln!(s, "overall: {}", if self.passed { "PASS" } else { "FAIL" });
        s
    }
}
