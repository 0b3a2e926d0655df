//! Bisection on small models with known optima.

use std::sync::Arc;

use rand::Rng;
use ssdm_core::bisection::{minimize, objective_range, BisectionConfig, BisectionResult, EngineKind, StepOutcome};
use ssdm_core::geometry::{Mat, PolyhedralRep, StagePolyhedron};
use ssdm_core::model::{FnSource, Scenario, SemiStochasticModel};
use ssdm_core::oracle::{OracleConfig, Schedule};
use ssdm_core::Error;

fn no_stage(n: usize) -> Arc<FnSource> {
    Arc::new(FnSource::new(1, |_| Scenario::new(vec![vec![]]).unwrap(), move |_, _| {
        StagePolyhedron::new(Mat::zeros(0, n), Mat::zeros(0, 0), Mat::zeros(0, 0), vec![])
    }))
}

/// Feasible iff `y >= xi`, `xi ~ U[lo, hi]`, on `Y = [0, 1]`.
fn threshold_model(lo: f64, hi: f64) -> SemiStochasticModel {
    let src = FnSource::new(
        1,
        move |rng| Scenario::new(vec![vec![rng.random_range(lo..=hi)]]).unwrap(),
        |_, p| StagePolyhedron::new(Mat::from_rows(&[vec![-1.0]], 1)?, Mat::zeros(1, 0), Mat::zeros(1, 0), vec![-p[0][0]]),
    );
    SemiStochasticModel::new(PolyhedralRep::boxed(&[0.0], &[1.0]).unwrap(), vec![0.0], vec![1.0], Arc::new(src)).unwrap()
}

fn config(kappa: f64, rho: f64, eps: f64, delta: f64, seed: u64) -> BisectionConfig {
    BisectionConfig {
        objective: vec![1.0],
        kappa,
        rho,
        oracle: OracleConfig::new(eps, delta, Schedule::Adaptive, seed).unwrap(),
        engine: EngineKind::Bl,
        budget: None,
    }
}

#[test]
fn range_of_box_and_point() {
    let m = SemiStochasticModel::new(
        PolyhedralRep::boxed(&[0.0, 0.0], &[1.0, 1.0]).unwrap(),
        vec![0.0, 0.0],
        vec![1.0, 1.0],
        no_stage(2),
    )
    .unwrap();
    let (lo, hi) = objective_range(&m, &[1.0, 1.0]).unwrap();
    assert!(lo.abs() < 1e-12 && (hi - 2.0).abs() < 1e-12);

    let p = SemiStochasticModel::new(
        PolyhedralRep::boxed(&[0.3, 0.4], &[0.3, 0.4]).unwrap(),
        vec![0.3, 0.4],
        vec![0.3, 0.4],
        no_stage(2),
    )
    .unwrap();
    let (lo, hi) = objective_range(&p, &[1.0, 2.0]).unwrap();
    assert!((lo - 1.1).abs() < 1e-12 && (hi - 1.1).abs() < 1e-12);
}

#[test]
fn range_of_lifted_cross_polytope() {
    // |y_i| <= w_i, w_1 + w_2 <= 1.
    let a = Mat::from_rows(
        &[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0], vec![0.0, 0.0]],
        2,
    )
    .unwrap();
    let c = Mat::from_rows(
        &[vec![-1.0, 0.0], vec![-1.0, 0.0], vec![0.0, -1.0], vec![0.0, -1.0], vec![1.0, 1.0]],
        2,
    )
    .unwrap();
    let y = PolyhedralRep::new(a, c, vec![0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
    let m = SemiStochasticModel::new(y, vec![-1.0, -1.0], vec![1.0, 1.0], no_stage(2)).unwrap();
    let (lo, hi) = objective_range(&m, &[1.0, 0.0]).unwrap();
    assert!((lo + 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
    let (lo, hi) = objective_range(&m, &[1.0, 1.0]).unwrap();
    assert!((lo + 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
}

#[test]
fn unbounded_objective_is_reported() {
    let y = PolyhedralRep::new(Mat::from_rows(&[vec![1.0]], 1).unwrap(), Mat::zeros(1, 0), vec![1.0]).unwrap();
    let m = SemiStochasticModel::new(y, vec![-1.0], vec![1.0], no_stage(1)).unwrap();
    assert_eq!(objective_range(&m, &[1.0]).unwrap_err(), Error::UnboundedObjective);
}

#[test]
fn deterministic_half_interval() {
    // Y_* = {y in [0,1] : y >= 0.5}.
    let m = threshold_model(0.5, 0.5);
    let kappa = 0.1;
    let out = minimize(&m, &config(kappa, 0.02, 0.05, 0.01, 1)).unwrap();
    match out.result {
        BisectionResult::Solved { ref y_hat, bound } => {
            assert!(y_hat[0] >= 0.5 - 1e-9 && y_hat[0] <= 0.5 + kappa, "{y_hat:?}");
            assert!(y_hat[0] <= bound + 1e-8);
        }
        BisectionResult::Failed => panic!("bisection failed: {:?}", out.steps),
    }
    // Localizer halves exactly and calls accumulate.
    let width = out.range.1 - out.range.0;
    for (k, s) in out.steps.iter().enumerate() {
        assert_eq!(s.hi - s.lo, width / 2f64.powi(k as i32 + 1));
        if k > 0 {
            assert!(s.calls > out.steps[k - 1].calls);
        }
        if s.outcome == StepOutcome::A {
            assert!(s.objective_value.unwrap() <= s.phi + 1e-8);
        }
    }
}

#[test]
fn empty_target_fails() {
    // Stage requires y >= 2 on Y = [0, 1].
    let m = threshold_model(2.0, 2.0);
    let out = minimize(&m, &config(0.2, 0.05, 0.1, 0.1, 3)).unwrap();
    assert_eq!(out.result, BisectionResult::Failed);
    assert!(out.steps.iter().all(|s| matches!(s.outcome, StepOutcome::B | StepOutcome::C)));
}

#[test]
fn statistical_guarantee_on_threshold_model() {
    // xi ~ U[0, 0.5]: Y_*[s] = [0.5, s], stability (s - 0.5)/2, so with
    // rho = 0.05 the reference level is s_* = 0.6.
    let m = threshold_model(0.0, 0.5);
    let kappa = 0.1;
    let runs = 50;
    let mut good = 0;
    for seed in 0..runs {
        let out = minimize(&m, &config(kappa, 0.05, 0.02, 0.1, seed)).unwrap();
        if let BisectionResult::Solved { y_hat, .. } = out.result {
            if y_hat[0] <= 0.6 + kappa {
                good += 1;
            }
        }
    }
    assert!(good as f64 >= 0.9 * runs as f64, "{good}/{runs}");
}
