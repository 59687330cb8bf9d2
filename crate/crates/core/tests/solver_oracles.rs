mod common;

use ovrlab::data::SparseDataset;
use ovrlab::rng::rng_from_seed;
use ovrlab::solver::{logistic_loss, objective_and_gradient, train_binary, BinaryProblem, SolverOptions};
use ovrlab::trainer::CGrid;
use ovrlab::Error;
use rand::Rng;

fn single(x: f64, y_pos: bool) -> SparseDataset {
    SparseDataset::from_rows(
        vec![vec![(0, x)]],
        vec![if y_pos { vec![0] } else { vec![] }],
        Some(1),
        Some(1),
    )
    .unwrap()
}

#[test]
fn one_d_fixture_matches_bisection() {
    let data = single(1.0, true);
    let problem = BinaryProblem::new(&data, 0).without_bias();
    let model = train_binary(&problem, 1.0, 1.0, &SolverOptions::default(), None).unwrap();
    let oracle = common::one_d_optimum();
    // the root is 0.40106; 0.4012 is the commonly quoted rounding
    assert!((oracle - 0.4012).abs() < 2e-4, "bisection root {oracle}");
    assert!(
        (model.weights[0] - oracle).abs() < 1e-4,
        "w = {}, oracle {oracle}",
        model.weights[0]
    );
}

#[test]
fn symmetric_pair_gives_zero() {
    let data = SparseDataset::from_rows(
        vec![vec![(0, 1.0)], vec![(0, 1.0)]],
        vec![vec![0], vec![]],
        Some(1),
        Some(1),
    )
    .unwrap();
    let problem = BinaryProblem::new(&data, 0).without_bias();
    let model = train_binary(&problem, 1.0, 1.0, &SolverOptions::default(), None).unwrap();
    assert_eq!(model.weights[0], 0.0);
}

#[test]
fn objective_at_zero() {
    let data = single(1.0, true);
    let problem = BinaryProblem::new(&data, 0).without_bias();
    let (f, g, gb) = objective_and_gradient(&problem, &[0.0], 0.0, 1.0, 1.0).unwrap();
    assert!((f - 2f64.ln()).abs() < 1e-15);
    assert!((g[0] + 0.5).abs() < 1e-15);
    assert_eq!(gb, 0.0);
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = rng_from_seed(11);
    for trial in 0..20 {
        let n = rng.random_range(3..15);
        let d = rng.random_range(1..6);
        let data = common::random_dense(&mut rng, n, d, 1);
        let problem = BinaryProblem::new(&data, 0);
        let c = rng.random_range(0.1..10.0);
        let t = rng.random_range(0.05..=1.0);
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b = rng.random_range(-1.0..1.0);
        let (_, g, gb) = objective_and_gradient(&problem, &w, b, c, t).unwrap();
        let h = 1e-5;
        let f_at = |w: &[f64], b: f64| objective_and_gradient(&problem, w, b, c, t).unwrap().0;
        for k in 0..=d {
            let (plus, minus) = if k < d {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[k] += h;
                wm[k] -= h;
                (f_at(&wp, b), f_at(&wm, b))
            } else {
                (f_at(&w, b + h), f_at(&w, b - h))
            };
            let fd = (plus - minus) / (2.0 * h);
            let analytic = if k < d { g[k] } else { gb };
            let rel = (fd - analytic).abs() / analytic.abs().max(1.0);
            assert!(rel < 1e-6, "trial {trial} coord {k}: analytic {analytic}, fd {fd}");
        }
    }
}

#[test]
fn doubling_positive_weight_adds_positive_loss() {
    let mut rng = rng_from_seed(5);
    let data = common::random_dense(&mut rng, 12, 3, 1);
    let problem = BinaryProblem::new(&data, 0);
    let w = [0.3, -0.2, 0.7];
    let b = 0.1;
    // (C, t) = (1, 1) gives C⁺ = C⁻ = 1; (1.5, 2/3) gives C⁺ = 2, C⁻ = 1.
    let (f1, _, _) = objective_and_gradient(&problem, &w, b, 1.0, 1.0).unwrap();
    let (f2, _, _) = objective_and_gradient(&problem, &w, b, 1.5, 2.0 / 3.0).unwrap();
    let pos_loss: f64 = (0..data.n_instances())
        .filter(|&i| data.has_label(i, 0))
        .map(|i| logistic_loss(data.row(i).dot(&w) + b))
        .sum();
    assert!((f2 - f1 - pos_loss).abs() < 1e-12, "{} vs {pos_loss}", f2 - f1);
}

#[test]
fn objective_is_convex_along_segments() {
    let mut rng = rng_from_seed(21);
    let data = common::random_dense(&mut rng, 20, 4, 1);
    let problem = BinaryProblem::new(&data, 0);
    for _ in 0..50 {
        let w1: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        let w2: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (b1, b2) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let mid: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| 0.5 * (a + b)).collect();
        let f = |w: &[f64], b: f64| objective_and_gradient(&problem, w, b, 2.0, 0.4).unwrap().0;
        assert!(f(&mid, 0.5 * (b1 + b2)) <= 0.5 * (f(&w1, b1) + f(&w2, b2)) + 1e-9);
    }
}

#[test]
fn t_one_is_the_unweighted_problem() {
    let mut rng = rng_from_seed(8);
    let data = common::random_dense(&mut rng, 30, 3, 1);
    let problem = BinaryProblem::new(&data, 0);
    let c = 2.0;
    // ½‖(w, b)‖² + C Σ log(1 + e^{−y(wᵀx + b)}), written out independently
    let plain = |w: &[f64], b: f64| {
        let reg = 0.5 * (w.iter().map(|v| v * v).sum::<f64>() + b * b);
        let loss: f64 = (0..data.n_instances())
            .map(|i| {
                let y = if data.has_label(i, 0) { 1.0 } else { -1.0 };
                (1.0 + (-y * (data.row(i).dot(w) + b)).exp()).ln()
            })
            .sum();
        reg + c * loss
    };
    for _ in 0..10 {
        let w: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b = rng.random_range(-1.0..1.0);
        let (f, _, _) = objective_and_gradient(&problem, &w, b, c, 1.0).unwrap();
        assert!((f - plain(&w, b)).abs() < 1e-10 * f.abs().max(1.0));
    }
    let opts = SolverOptions {
        tolerance: 1e-8,
        ..Default::default()
    };
    let a = train_binary(&problem, c, 1.0, &opts, None).unwrap();
    let b = train_binary(&problem, c, 1.0, &opts, None).unwrap();
    assert_eq!(a, b);
    // the optimum of the plain objective: no coordinate step lowers it
    let h = 1e-4;
    let base = plain(&a.weights, a.bias);
    for k in 0..3 {
        for s in [h, -h] {
            let mut w = a.weights.clone();
            w[k] += s;
            assert!(plain(&w, a.bias) >= base - 1e-8);
        }
    }
}

#[test]
fn certificate_holds_on_returned_models() {
    let mut rng = rng_from_seed(99);
    for _ in 0..10 {
        let data = common::random_dense(&mut rng, 40, 5, 1);
        let problem = BinaryProblem::new(&data, 0);
        let (c, t) = (rng.random_range(0.01..50.0), rng.random_range(0.1..=1.0));
        let opts = SolverOptions::default();
        let m = train_binary(&problem, c, t, &opts, None).unwrap();
        let (_, g, gb) = objective_and_gradient(&problem, &m.weights, m.bias, c, t).unwrap();
        let (_, g0, gb0) = objective_and_gradient(&problem, &[0.0; 5], 0.0, c, t).unwrap();
        let norm = |g: &[f64], b: f64| (g.iter().map(|v| v * v).sum::<f64>() + b * b).sqrt();
        assert!(norm(&g, gb) <= opts.tolerance * norm(&g0, gb0).max(1.0));
        assert_eq!(m.diagnostics.grad_norm, norm(&g, gb));
    }
}

fn grad_norm(problem: &BinaryProblem<'_>, m: &ovrlab::solver::BinaryModel) -> f64 {
    let (_, g, gb) = objective_and_gradient(problem, &m.weights, m.bias, m.c, m.t).unwrap();
    (g.iter().map(|v| v * v).sum::<f64>() + gb * gb).sqrt()
}

fn augmented_norm(row: ovrlab::data::SparseRow<'_>) -> f64 {
    (row.values.iter().map(|v| v * v).sum::<f64>() + 1.0).sqrt()
}

#[test]
fn warm_and_cold_starts_agree_within_the_certificate() {
    // The objective is 1-strongly convex, so two points with gradients g_c and
    // g_w lie within ‖g_c‖ + ‖g_w‖ of each other and their scores on (x, 1)
    // differ by at most that times ‖(x, 1)‖.
    for seed in 0..4 {
        let mut rng = rng_from_seed(seed);
        let data = common::random_dense(&mut rng, 120, 6, 1);
        let problem = BinaryProblem::with_rows(&data, (0..90).collect(), 0);
        let opts = SolverOptions::default();
        let mut previous = None;
        for &c in CGrid::default().values() {
            let cold = train_binary(&problem, c, 1.0, &opts, None).unwrap();
            let warm = train_binary(&problem, c, 1.0, &opts, previous.as_ref()).unwrap();
            let slack = grad_norm(&problem, &cold) + grad_norm(&problem, &warm);
            for i in 90..120 {
                let (a, b) = (cold.score(data.row(i)), warm.score(data.row(i)));
                let bound = slack * augmented_norm(data.row(i));
                assert!(
                    (a - b).abs() <= bound * (1.0 + 1e-9) + 1e-12,
                    "seed {seed} C = {c}: {a} vs {b}"
                );
            }
            previous = Some(warm);
        }
    }
}

#[test]
fn warm_started_fits_lie_within_tolerance_of_the_optimum() {
    let mut rng = rng_from_seed(12);
    let data = common::random_dense(&mut rng, 100, 5, 1);
    let problem = BinaryProblem::new(&data, 0);
    let opts = SolverOptions::default();
    let mut previous = None;
    for &c in CGrid::default().values() {
        let warm = train_binary(&problem, c, 0.7, &opts, previous.as_ref()).unwrap();
        if previous.is_some() {
            // strong convexity: distance to the optimum ≤ gradient norm
            assert!(grad_norm(&problem, &warm) <= opts.tolerance, "C = {c}");
        }
        previous = Some(warm);
    }
}

#[test]
fn warm_and_cold_starts_agree_at_tight_tolerance() {
    let opts = SolverOptions {
        tolerance: 1e-9,
        ..Default::default()
    };
    for seed in 0..4 {
        let mut rng = rng_from_seed(seed);
        let data = common::random_dense(&mut rng, 120, 6, 1);
        let problem = BinaryProblem::with_rows(&data, (0..90).collect(), 0);
        let mut previous = None;
        for &c in CGrid::default().values() {
            let cold = train_binary(&problem, c, 1.0, &opts, None).unwrap();
            let warm = train_binary(&problem, c, 1.0, &opts, previous.as_ref()).unwrap();
            for i in 90..120 {
                let (a, b) = (cold.score(data.row(i)), warm.score(data.row(i)));
                assert!((a - b).abs() <= 1e-4, "seed {seed} C = {c}: cold {a}, warm {b}");
            }
            previous = Some(warm);
        }
    }
}

#[test]
fn positive_recall_grows_as_t_shrinks() {
    let mut rng = rng_from_seed(40);
    for fixture in 0..10 {
        let data = common::random_dense(&mut rng, 60, 3, 1);
        let problem = BinaryProblem::new(&data, 0);
        if problem.n_positive() == 0 {
            continue;
        }
        let recall = |t: f64| {
            let m = train_binary(&problem, 1.0, t, &SolverOptions::default(), None).unwrap();
            let hit = (0..data.n_instances())
                .filter(|&i| data.has_label(i, 0) && m.score(data.row(i)) >= 0.0)
                .count();
            hit as f64 / problem.n_positive() as f64
        };
        let ts = [1.0, 0.8, 0.6, 0.4, 0.2, 0.1];
        let r: Vec<f64> = ts.iter().map(|&t| recall(t)).collect();
        assert!(r.windows(2).all(|w| w[1] >= w[0]), "fixture {fixture}: recall {r:?}");
    }
}

#[test]
fn input_errors() {
    let data = single(f64::NAN, true);
    let problem = BinaryProblem::new(&data, 0);
    assert!(matches!(
        train_binary(&problem, 1.0, 1.0, &SolverOptions::default(), None),
        Err(Error::NonFinite { .. })
    ));
    let ok = single(1.0, true);
    let problem = BinaryProblem::new(&ok, 0);
    assert!(train_binary(&problem, 0.0, 1.0, &SolverOptions::default(), None).is_err());
    assert!(train_binary(&problem, 1.0, 0.0, &SolverOptions::default(), None).is_err());
    assert!(train_binary(&problem, 1.0, 1.5, &SolverOptions::default(), None).is_err());
    let empty = BinaryProblem::with_rows(&ok, vec![], 0);
    assert!(matches!(
        train_binary(&empty, 1.0, 1.0, &SolverOptions::default(), None),
        Err(Error::EmptyProblem { .. })
    ));
    let negatives = single(1.0, false);
    let m = train_binary(
        &BinaryProblem::new(&negatives, 0),
        1.0,
        1.0,
        &SolverOptions::default(),
        None,
    )
    .unwrap();
    assert!(m.always_negative);
    assert_eq!(m.score(negatives.row(0)), f64::NEG_INFINITY);
}

#[test]
fn decision_value_examples() {
    let mut m = ovrlab::solver::BinaryModel::zeros(2, 1.0, 1.0);
    m.weights = vec![1.0, -1.0];
    let x = SparseDataset::from_rows(vec![vec![(0, 2.0)]], vec![vec![]], Some(2), Some(0)).unwrap();
    assert_eq!(m.decision_value(x.row(0)).unwrap(), 2.0);
    m.delta = 0.5;
    assert_eq!(m.decision_value(x.row(0)).unwrap(), 2.5);
    let wide = SparseDataset::from_rows(vec![vec![(3, 1.0)]], vec![vec![]], Some(4), Some(0)).unwrap();
    assert!(matches!(
        m.decision_value(wide.row(0)),
        Err(Error::DimensionMismatch(_))
    ));
}
