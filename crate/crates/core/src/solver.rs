//! Cost-weighted L2-regularized logistic regression for one label.
//!
//! Minimizes
//!
//! ```text
//! f(w) = ½ wᵀw + C⁺ Σ_{y_i=+1} ξ(y_i wᵀx_i) + C⁻ Σ_{y_i=−1} ξ(y_i wᵀx_i),
//! ξ(z) = log(1 + e^{−z}),   C⁺ = C(2 − t),   C⁻ = C·t
//! ```
//!
//! The bias is an extra coordinate of `w` paired with a constant feature 1,
//! so it is regularized like every other weight. The solver is a trust-region
//! Newton method whose inner step is truncated conjugate gradient on
//! Hessian-vector products; it stops once
//! `‖∇f(w)‖ ≤ tolerance · max(1, ‖∇f(0)‖)` and reports an error otherwise.

use crate::data::{SparseDataset, SparseRow};
use crate::error::{Error, Result};

/// Per-class loss weights derived from `(C, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub c_pos: f64,
    pub c_neg: f64,
}

impl CostWeights {
    pub fn new(c: f64, t: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid(format!("C must be positive, got {c}")));
        }
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::invalid(format!("t must lie in (0, 1], got {t}")));
        }
        Ok(CostWeights {
            c_pos: c * (2.0 - t),
            c_neg: c * t,
        })
    }
}

/// One label's binary view of a shared dataset.
#[derive(Debug, Clone)]
pub struct BinaryProblem<'a> {
    data: &'a SparseDataset,
    rows: Vec<usize>,
    label: usize,
    y: Vec<f64>,
    fit_bias: bool,
}

impl<'a> BinaryProblem<'a> {
    /// All instances of `data`; `y_i = +1` iff `label` is in instance i's set.
    pub fn new(data: &'a SparseDataset, label: usize) -> Self {
        Self::with_rows(data, (0..data.n_instances()).collect(), label)
    }

    /// Restricts the problem to the given instances of `data`.
    pub fn with_rows(data: &'a SparseDataset, rows: Vec<usize>, label: usize) -> Self {
        let y = rows
            .iter()
            .map(|&i| if data.has_label(i, label) { 1.0 } else { -1.0 })
            .collect();
        BinaryProblem {
            data,
            rows,
            label,
            y,
            fit_bias: true,
        }
    }

    pub fn without_bias(mut self) -> Self {
        self.fit_bias = false;
        self
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn fit_bias(&self) -> bool {
        self.fit_bias
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn n_positive(&self) -> usize {
        self.y.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn n_negative(&self) -> usize {
        self.len() - self.n_positive()
    }

    pub fn n_features(&self) -> usize {
        self.data.n_features()
    }

    fn row(&self, k: usize) -> SparseRow<'a> {
        self.data.row(self.rows[k])
    }

    /// Length of the augmented parameter vector.
    fn dim(&self) -> usize {
        self.data.n_features() + usize::from(self.fit_bias)
    }

    fn dot(&self, k: usize, theta: &[f64]) -> f64 {
        let n = self.data.n_features();
        let mut z = self.row(k).dot(&theta[..n]);
        if self.fit_bias {
            z += theta[n];
        }
        z
    }

    fn axpy_row(&self, k: usize, scale: f64, out: &mut [f64]) {
        for (j, v) in self.row(k).iter() {
            out[j] += scale * v;
        }
        if self.fit_bias {
            out[self.data.n_features()] += scale;
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrainDiagnostics {
    pub iterations: usize,
    pub grad_norm: f64,
}

/// A trained linear scorer for one label.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Additive threshold shift applied after the linear score.
    pub delta: f64,
    pub c: f64,
    pub t: f64,
    /// Set when the training data had no positives; every score is −∞.
    pub always_negative: bool,
    pub diagnostics: TrainDiagnostics,
}

impl BinaryModel {
    pub fn zeros(n_features: usize, c: f64, t: f64) -> Self {
        BinaryModel {
            weights: vec![0.0; n_features],
            bias: 0.0,
            delta: 0.0,
            c,
            t,
            always_negative: false,
            diagnostics: TrainDiagnostics::default(),
        }
    }

    pub fn always_negative(n_features: usize, c: f64, t: f64) -> Self {
        BinaryModel {
            always_negative: true,
            ..Self::zeros(n_features, c, t)
        }
    }

    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    /// `wᵀx + bias + delta`, or −∞ for an always-negative model.
    pub fn decision_value(&self, x: SparseRow<'_>) -> Result<f64> {
        if let Some(j) = x.max_index() {
            if j >= self.weights.len() {
                return Err(Error::DimensionMismatch(format!(
                    "feature index {j} outside a {}-feature model",
                    self.weights.len()
                )));
            }
        }
        Ok(self.score(x))
    }

    /// Unchecked variant of [`decision_value`](Self::decision_value);
    /// out-of-range features are ignored.
    pub fn score(&self, x: SparseRow<'_>) -> f64 {
        if self.always_negative {
            return f64::NEG_INFINITY;
        }
        x.dot(&self.weights) + self.bias + self.delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-4,
            max_iter: 1000,
        }
    }
}

/// ξ(z) = log(1 + e^{−z}) without overflow.
pub fn logistic_loss(z: f64) -> f64 {
    if z >= 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Objective with cached per-instance curvature for Hessian-vector products.
struct Objective<'p, 'a> {
    problem: &'p BinaryProblem<'a>,
    cost: Vec<f64>,
    curvature: Vec<f64>,
}

impl<'p, 'a> Objective<'p, 'a> {
    fn new(problem: &'p BinaryProblem<'a>, weights: CostWeights) -> Self {
        let cost = problem
            .y
            .iter()
            .map(|&y| if y > 0.0 { weights.c_pos } else { weights.c_neg })
            .collect();
        Objective {
            problem,
            cost,
            curvature: vec![0.0; problem.len()],
        }
    }

    fn value(&self, theta: &[f64]) -> f64 {
        let p = self.problem;
        let loss: f64 = (0..p.len())
            .map(|k| self.cost[k] * logistic_loss(p.y[k] * p.dot(k, theta)))
            .sum();
        0.5 * dot(theta, theta) + loss
    }

    /// Gradient at `theta`; refreshes the curvature cache.
    fn gradient(&mut self, theta: &[f64]) -> Vec<f64> {
        let p = self.problem;
        let mut g = theta.to_vec();
        for k in 0..p.len() {
            let s = sigmoid(p.y[k] * p.dot(k, theta));
            self.curvature[k] = self.cost[k] * s * (1.0 - s);
            p.axpy_row(k, self.cost[k] * (s - 1.0) * p.y[k], &mut g);
        }
        g
    }

    fn hessian_vec(&self, v: &[f64]) -> Vec<f64> {
        let p = self.problem;
        let mut out = v.to_vec();
        for k in 0..p.len() {
            let xv = p.dot(k, v);
            if xv != 0.0 {
                p.axpy_row(k, self.curvature[k] * xv, &mut out);
            }
        }
        out
    }
}

/// Objective value and exact gradient `(f, ∂f/∂w, ∂f/∂bias)`.
///
/// With a bias-free problem the bias argument is ignored and its gradient is 0.
pub fn objective_and_gradient(
    problem: &BinaryProblem<'_>,
    w: &[f64],
    bias: f64,
    c: f64,
    t: f64,
) -> Result<(f64, Vec<f64>, f64)> {
    let n = problem.n_features();
    if w.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "weight vector has length {}, problem has {n} features",
            w.len()
        )));
    }
    let mut theta = w.to_vec();
    if problem.fit_bias {
        theta.push(bias);
    }
    let mut obj = Objective::new(problem, CostWeights::new(c, t)?);
    let f = obj.value(&theta);
    let mut g = obj.gradient(&theta);
    let gb = if problem.fit_bias { g.pop().unwrap_or(0.0) } else { 0.0 };
    Ok((f, g, gb))
}

/// Trains one label's model to the relative-gradient certificate.
///
/// A problem without positives yields an always-negative model and no
/// optimization. A warm-started fit also aims for an absolute gradient norm
/// of at most `tolerance`; the objective is 1-strongly convex, so its result
/// then lies within `tolerance` of the optimum.
pub fn train_binary(
    problem: &BinaryProblem<'_>,
    c: f64,
    t: f64,
    opts: &SolverOptions,
    warm_start: Option<&BinaryModel>,
) -> Result<BinaryModel> {
    let weights = CostWeights::new(c, t)?;
    if opts.tolerance.is_nan() || opts.tolerance <= 0.0 {
        return Err(Error::invalid("tolerance must be positive"));
    }
    if problem.is_empty() {
        return Err(Error::EmptyProblem { label: problem.label });
    }
    for k in 0..problem.len() {
        if let Some((feature, _)) = problem.row(k).iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                instance: problem.rows[k],
                feature,
            });
        }
    }
    let n = problem.n_features();
    if problem.n_positive() == 0 {
        return Ok(BinaryModel::always_negative(n, c, t));
    }

    let dim = problem.dim();
    let mut theta = vec![0.0; dim];
    if let Some(ws) = warm_start.filter(|m| !m.always_negative && m.weights.len() == n) {
        theta[..n].copy_from_slice(&ws.weights);
        if problem.fit_bias {
            theta[n] = ws.bias;
        }
    }

    let mut obj = Objective::new(problem, weights);
    let g_zero = obj.gradient(&vec![0.0; dim]);
    let target = opts.tolerance * norm(&g_zero).max(1.0);
    let warm = warm_start.is_some_and(|m| !m.always_negative && m.weights.len() == n);
    let goal = if warm { target.min(opts.tolerance) } else { target };
    let (theta, diagnostics) = trust_region_newton(&mut obj, theta, target, goal, opts.max_iter)?;

    let bias = if problem.fit_bias { theta[n] } else { 0.0 };
    let mut w = theta;
    w.truncate(n);
    Ok(BinaryModel {
        weights: w,
        bias,
        delta: 0.0,
        c,
        t,
        always_negative: false,
        diagnostics,
    })
}

const ETA0: f64 = 1e-4;
const ETA1: f64 = 0.25;
const ETA2: f64 = 0.75;
const SIGMA1: f64 = 0.25;
const SIGMA2: f64 = 0.5;
const SIGMA3: f64 = 4.0;
/// Objective changes below this fraction of |f| are floating-point noise.
const STALL_EPS: f64 = 10.0 * f64::EPSILON;

fn trust_region_newton(
    obj: &mut Objective<'_, '_>,
    mut theta: Vec<f64>,
    target: f64,
    goal: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, TrainDiagnostics)> {
    let mut f = obj.value(&theta);
    let mut g = obj.gradient(&theta);
    let mut gnorm = norm(&g);
    let mut radius = gnorm;
    let mut iter = 0;

    // `goal` ≤ `target`; a stall between the two still meets the certificate
    while gnorm > goal {
        if iter >= max_iter && gnorm <= target {
            break;
        }
        if iter >= max_iter {
            return Err(Error::NotConverged {
                iterations: iter,
                grad_norm: gnorm,
                target,
            });
        }
        let (s, r) = truncated_cg(obj, &g, radius);
        let candidate: Vec<f64> = theta.iter().zip(&s).map(|(a, b)| a + b).collect();
        let gs = dot(&g, &s);
        let predicted = -0.5 * (gs - dot(&s, &r));
        let f_new = obj.value(&candidate);
        let actual = f - f_new;
        let snorm = norm(&s);
        if iter == 0 {
            radius = radius.min(snorm);
        }

        let alpha = if f_new - f - gs <= 0.0 {
            SIGMA3
        } else {
            SIGMA1.max(-0.5 * (gs / (f_new - f - gs)))
        };
        radius = if actual < ETA0 * predicted {
            (alpha.max(SIGMA1) * snorm).min(SIGMA2 * radius)
        } else if actual < ETA1 * predicted {
            (SIGMA1 * radius).max((alpha * snorm).min(SIGMA2 * radius))
        } else if actual < ETA2 * predicted {
            (SIGMA1 * radius).max((alpha * snorm).min(SIGMA3 * radius))
        } else {
            radius.max((alpha * snorm).min(SIGMA3 * radius))
        };

        iter += 1;
        if actual > ETA0 * predicted {
            theta = candidate;
            f = f_new;
            g = obj.gradient(&theta);
            gnorm = norm(&g);
            continue;
        }
        let noise = STALL_EPS * f.abs();
        let in_noise = actual.abs() <= noise && predicted.abs() <= noise;
        if in_noise && predicted > 0.0 {
            // f cannot resolve the step; judge it by the gradient instead
            let g_new = obj.gradient(&candidate);
            let gnorm_new = norm(&g_new);
            if gnorm_new < gnorm {
                theta = candidate;
                f = f_new;
                g = g_new;
                gnorm = gnorm_new;
                continue;
            }
        }
        // rejected step: the model cannot make further progress in floating point
        let stalled = (actual.abs() <= 0.0 && predicted <= 0.0) || in_noise;
        if stalled && gnorm <= target {
            break;
        }
        if stalled {
            return Err(Error::NotConverged {
                iterations: iter,
                grad_norm: gnorm,
                target,
            });
        }
    }

    Ok((
        theta,
        TrainDiagnostics {
            iterations: iter,
            grad_norm: gnorm,
        },
    ))
}

/// Approximately solves `H s = −g` inside `‖s‖ ≤ radius`; returns `(s, −g − H s)`.
fn truncated_cg(obj: &Objective<'_, '_>, g: &[f64], radius: f64) -> (Vec<f64>, Vec<f64>) {
    let n = g.len();
    let mut s = vec![0.0; n];
    let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut d = r.clone();
    let mut rtr = dot(&r, &r);
    // forcing term O(‖g‖) keeps the outer Newton iteration quadratic near the optimum
    let gnorm = norm(g);
    let cg_tol = gnorm.min(0.1) * gnorm;

    for _ in 0..(2 * n + 10) {
        if rtr.sqrt() <= cg_tol {
            break;
        }
        let hd = obj.hessian_vec(&d);
        let alpha = rtr / dot(&d, &hd);
        s.iter_mut().zip(&d).for_each(|(si, di)| *si += alpha * di);
        if norm(&s) > radius {
            // step back and move to the trust-region boundary along d
            s.iter_mut().zip(&d).for_each(|(si, di)| *si -= alpha * di);
            let std = dot(&s, &d);
            let sts = dot(&s, &s);
            let dtd = dot(&d, &d);
            let dsq = radius * radius;
            let rad = (std * std + dtd * (dsq - sts)).sqrt();
            let alpha = if std >= 0.0 {
                (dsq - sts) / (std + rad)
            } else {
                (rad - std) / dtd
            };
            s.iter_mut().zip(&d).for_each(|(si, di)| *si += alpha * di);
            r.iter_mut().zip(&hd).for_each(|(ri, hi)| *ri -= alpha * hi);
            break;
        }
        r.iter_mut().zip(&hd).for_each(|(ri, hi)| *ri -= alpha * hi);
        let rtr_new = dot(&r, &r);
        let beta = rtr_new / rtr;
        d.iter_mut().zip(&r).for_each(|(di, ri)| *di = beta * *di + ri);
        rtr = rtr_new;
    }
    (s, r)
}
