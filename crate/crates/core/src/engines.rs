//! Cutting engines that drive an oracle until it gets stuck.
//!
//! The Bundle-Level engine keeps every cut, tracks the min-max value `Delta`
//! of the bundle over the initial ball and steps by projecting onto the
//! half-level set. A nonnegative `Delta` proves that no point of the ball
//! passes all cuts. The Ellipsoid engine uses central cuts.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::ball::{project_to_level, solve_min_max, Bundle};
use crate::error::{Error, Result};
use crate::geometry::Ball;
use crate::oracle::{QueryOutcome, SeparationOracle, SeparatorSource};

/// `Delta` at or above this value certifies infeasibility.
pub const INFEASIBILITY_GUARD: f64 = -1e-8;

/// Oracle budget `floor(32 R^2 / rho^2) + 1`.
pub fn bl_budget(radius: f64, rho: f64) -> Result<u64> {
    if !(rho > 0.0) {
        return Err(Error::InvalidConfig(format!("rho = {rho} must be positive")));
    }
    let b = 32.0 * radius * radius / (rho * rho);
    if !b.is_finite() || b > 1e15 {
        return Err(Error::InvalidConfig("bundle-level budget overflows".into()));
    }
    Ok(b.floor() as u64 + 1)
}

/// Oracle budget `ceil(2 n^2 ln(1 + R/rho))`.
pub fn ellipsoid_budget(n: usize, radius: f64, rho: f64) -> Result<u64> {
    if !(rho > 0.0) {
        return Err(Error::InvalidConfig(format!("rho = {rho} must be positive")));
    }
    let nf = n as f64;
    let b = 2.0 * nf * nf * (1.0 + radius / rho).ln();
    if !b.is_finite() || b > 1e15 {
        return Err(Error::InvalidConfig("ellipsoid budget overflows".into()));
    }
    Ok(((b - 1e-9).ceil() as u64).max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOutcome {
    YSeparator,
    StageSeparator,
    Stuck,
}

/// One oracle call as seen by an engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Global call index.
    pub s: u64,
    /// Bundle value after the call, when computed.
    pub delta: Option<f64>,
    pub samples: u64,
    pub outcome: StepOutcome,
    pub stage: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EngineResult {
    Candidate { y: Vec<f64>, calls: u64, samples: u64 },
    Infeasible { delta_r: f64, bundle: Bundle },
    BudgetExhausted { calls: u64, last_delta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineRun {
    pub result: EngineResult,
    pub log: Vec<IterationRecord>,
}

impl EngineRun {
    pub fn samples(&self) -> u64 {
        self.log.iter().map(|r| r.samples).sum()
    }
}

fn record(s: u64, out: &QueryOutcome, delta: Option<f64>) -> IterationRecord {
    let (outcome, stage) = match out {
        QueryOutcome::Stuck { .. } => (StepOutcome::Stuck, None),
        QueryOutcome::Separator {
            source: SeparatorSource::YMembership,
            ..
        } => (StepOutcome::YSeparator, None),
        QueryOutcome::Separator {
            source: SeparatorSource::Stage(t),
            ..
        } => (StepOutcome::StageSeparator, Some(*t)),
    };
    IterationRecord {
        s,
        delta,
        samples: out.samples(),
        outcome,
        stage,
    }
}

/// Bundle-Level engine started at the ball center.
pub fn run_bl(oracle: &mut impl SeparationOracle, ball: &Ball, budget: u64) -> Result<EngineRun> {
    check_inputs(oracle, ball, budget)?;
    let mut y = ball.center.clone();
    let mut bundle = Bundle::new();
    let mut last_delta = f64::NEG_INFINITY;
    let mut log = Vec::new();
    let mut samples = 0u64;
    for k in 1..=budget {
        let out = oracle.query(&y)?;
        samples += out.samples();
        let s = oracle.calls();
        match out {
            QueryOutcome::Stuck { .. } => {
                log.push(record(s, &out, None));
                log::info!("bl: stuck at call {s} after {k} queries");
                return Ok(EngineRun {
                    result: EngineResult::Candidate { y, calls: k, samples },
                    log,
                });
            }
            QueryOutcome::Separator { ref sep, .. } => {
                bundle.push(sep.clone());
                let mm = solve_min_max(&bundle, ball)?;
                // Bundles only grow, so the previous value is still a lower bound.
                let delta = mm.delta.max(last_delta);
                log.push(record(s, &out, Some(delta)));
                log::debug!("bl: call {s} delta {delta:.6e} bundle {}", bundle.len());
                if delta >= INFEASIBILITY_GUARD {
                    return Ok(EngineRun {
                        result: EngineResult::Infeasible { delta_r: delta, bundle },
                        log,
                    });
                }
                y = project_to_level(&y, &bundle, 0.5 * delta, ball)?;
                last_delta = delta;
            }
        }
    }
    Ok(EngineRun {
        result: EngineResult::BudgetExhausted {
            calls: budget,
            last_delta,
        },
        log,
    })
}

fn check_inputs(oracle: &impl SeparationOracle, ball: &Ball, budget: u64) -> Result<()> {
    if budget == 0 {
        return Err(Error::InvalidConfig("engine budget must be at least 1".into()));
    }
    if oracle.dim() != ball.dim() {
        return Err(Error::Dimension(format!(
            "oracle dimension {} vs ball dimension {}",
            oracle.dim(),
            ball.dim()
        )));
    }
    Ok(())
}

/// `{y : (y - c)^T P^{-1} (y - c) <= 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidState {
    pub center: Vec<f64>,
    pub shape: DMatrix<f64>,
}

impl EllipsoidState {
    pub fn from_ball(ball: &Ball) -> Self {
        let n = ball.dim();
        Self {
            center: ball.center.clone(),
            shape: DMatrix::identity(n, n) * (ball.radius * ball.radius),
        }
    }

    pub fn log_det(&self) -> f64 {
        let eig = SymmetricEigen::new(self.shape.clone());
        eig.eigenvalues.iter().map(|v| v.ln()).sum()
    }

    /// Minimum-volume ellipsoid containing `{y in E : a^T (y - c) <= 0}`.
    pub fn central_cut(&mut self, a: &[f64]) -> Result<()> {
        let n = self.center.len();
        let av = DVector::from_column_slice(a);
        let pa = &self.shape * &av;
        let g = av.dot(&pa);
        if !(g > 0.0) {
            return Err(Error::ShapeDegenerate);
        }
        let b = pa / g.sqrt();
        if n == 1 {
            self.center[0] -= 0.5 * b[0];
            self.shape *= 0.25;
            return Ok(());
        }
        let nf = n as f64;
        for i in 0..n {
            self.center[i] -= b[i] / (nf + 1.0);
        }
        let scale = nf * nf / (nf * nf - 1.0);
        let bbt = &b * b.transpose();
        self.shape = (&self.shape - bbt * (2.0 / (nf + 1.0))) * scale;
        self.repair()
    }

    fn repair(&mut self) -> Result<()> {
        let sym = (&self.shape + self.shape.transpose()) * 0.5;
        if sym.clone().cholesky().is_some() {
            self.shape = sym;
            return Ok(());
        }
        let mut eig = SymmetricEigen::new(sym);
        for v in eig.eigenvalues.iter_mut() {
            *v = v.max(1e-14);
        }
        let fixed = eig.recompose();
        let fixed = (&fixed + fixed.transpose()) * 0.5;
        if fixed.clone().cholesky().is_none() {
            return Err(Error::ShapeDegenerate);
        }
        self.shape = fixed;
        Ok(())
    }
}

/// Central-cut Ellipsoid engine. Budget defaults to
/// [`ellipsoid_budget`]`(n, R, rho)`.
pub fn run_ellipsoid(
    oracle: &mut impl SeparationOracle,
    ball: &Ball,
    rho: Option<f64>,
    budget_override: Option<u64>,
) -> Result<EngineRun> {
    let budget = match (budget_override, rho) {
        (Some(b), _) => b,
        (None, Some(r)) => ellipsoid_budget(ball.dim(), ball.radius, r)?,
        (None, None) => {
            return Err(Error::InvalidConfig("ellipsoid needs rho or an explicit budget".into()))
        }
    };
    check_inputs(oracle, ball, budget)?;
    let mut state = EllipsoidState::from_ball(ball);
    let mut bundle = Bundle::new();
    let mut log = Vec::new();
    let mut samples = 0u64;
    for k in 1..=budget {
        let y = state.center.clone();
        let out = oracle.query(&y)?;
        samples += out.samples();
        let s = oracle.calls();
        log.push(record(s, &out, None));
        match out {
            QueryOutcome::Stuck { .. } => {
                log::info!("ellipsoid: stuck at call {s} after {k} queries");
                return Ok(EngineRun {
                    result: EngineResult::Candidate { y, calls: k, samples },
                    log,
                });
            }
            QueryOutcome::Separator { sep, .. } => {
                state.central_cut(sep.gradient())?;
                bundle.push(sep);
            }
        }
    }
    let delta = solve_min_max(&bundle, ball)?.delta;
    if let Some(last) = log.last_mut() {
        last.delta = Some(delta);
    }
    let result = if delta >= INFEASIBILITY_GUARD {
        EngineResult::Infeasible { delta_r: delta, bundle }
    } else {
        EngineResult::BudgetExhausted {
            calls: budget,
            last_delta: delta,
        }
    };
    Ok(EngineRun { result, log })
}
