//! Bisection on a linear objective over implementable decisions.
//!
//! Step `k` restricts `Y` by `f^T y <= phi_k`, where `phi_k` is the midpoint
//! of the current localizer, and asks an engine for a candidate. A candidate
//! (outcome A) keeps the lower half; a certificate (B) or an exhausted budget
//! (C) keeps the upper half. The oracle call counter is shared by all steps.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engines::{bl_budget, ellipsoid_budget, run_bl, run_ellipsoid, EngineResult, EngineRun};
use crate::error::{Error, Result};
use crate::geometry::norm2;
use crate::lp::{solve_lp, LinearProgram, LpOutcome};
use crate::model::SemiStochasticModel;
use crate::oracle::{OracleConfig, OracleState, SamplingOracle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Bl,
    Ellipsoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionConfig {
    pub objective: Vec<f64>,
    pub kappa: f64,
    pub rho: f64,
    pub oracle: OracleConfig,
    pub engine: EngineKind,
    /// Per-step oracle budget replacing the engine default.
    #[serde(default)]
    pub budget: Option<u64>,
}

impl BisectionConfig {
    pub fn validate(&self) -> Result<()> {
        self.oracle.validate()?;
        if !(norm2(&self.objective) > 0.0) || self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("objective must be finite and nonzero".into()));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::InvalidConfig(format!("kappa = {} must be positive", self.kappa)));
        }
        if !(self.rho > 0.0) {
            return Err(Error::InvalidConfig(format!("rho = {} must be positive", self.rho)));
        }
        if self.budget == Some(0) {
            return Err(Error::InvalidConfig("budget must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepOutcome {
    /// Candidate found.
    A,
    /// Infeasibility certificate.
    B,
    /// Budget exhausted.
    C,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionStep {
    pub k: usize,
    pub phi: f64,
    pub outcome: StepOutcome,
    /// Localizer after the step.
    pub lo: f64,
    pub hi: f64,
    /// Oracle calls made so far, all steps included.
    pub calls: u64,
    pub samples: u64,
    pub objective_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BisectionResult {
    Solved { y_hat: Vec<f64>, bound: f64 },
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BisectionOutcome {
    pub result: BisectionResult,
    pub range: (f64, f64),
    pub steps: Vec<BisectionStep>,
    /// Engine runs in step order.
    pub runs: Vec<EngineRun>,
}

/// `[min_{y in Y} f^T y, max_{y in Y} f^T y]`.
pub fn objective_range(model: &SemiStochasticModel, f: &[f64]) -> Result<(f64, f64)> {
    let rep = model.static_set();
    if f.len() != rep.dim() {
        return Err(Error::Dimension(format!("objective of length {} for n = {}", f.len(), rep.dim())));
    }
    let g = rep.a.hcat(&rep.c);
    let mut c: Vec<f64> = f.to_vec();
    c.resize(g.cols(), 0.0);
    let mut ends = [0.0; 2];
    for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
        let cost: Vec<f64> = c.iter().map(|v| sign * v).collect();
        match solve_lp(&LinearProgram::new(cost, g.clone(), rep.d.clone()))? {
            LpOutcome::Optimal(sol) => ends[k] = sign * sol.value,
            LpOutcome::Unbounded { .. } => return Err(Error::UnboundedObjective),
            LpOutcome::Infeasible(_) => return Err(Error::EmptyStaticSet),
        }
    }
    Ok((ends[0], ends[1].max(ends[0])))
}

/// Number of steps: the smallest integer above `log2(width / kappa)`,
/// at least one.
pub fn bisection_steps(width: f64, kappa: f64) -> usize {
    let l = (width / kappa).log2().floor() + 1.0;
    if l.is_finite() && l >= 1.0 {
        l as usize
    } else {
        1
    }
}

pub fn minimize(model: &SemiStochasticModel, config: &BisectionConfig) -> Result<BisectionOutcome> {
    config.validate()?;
    let f = &config.objective;
    let (lo0, hi0) = objective_range(model, f)?;
    let width = hi0 - lo0;
    if !(width > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "objective is constant ({lo0}) over Y; nothing to bisect"
        )));
    }
    let steps_total = bisection_steps(width, config.kappa);
    let ball = model.ball();
    let budget = match (config.budget, config.engine) {
        (Some(b), _) => b,
        (None, EngineKind::Bl) => bl_budget(ball.radius, config.rho)?,
        (None, EngineKind::Ellipsoid) => ellipsoid_budget(ball.dim(), ball.radius, config.rho)?,
    };
    let pool = match config.oracle.threads {
        Some(k) => Some(Arc::new(
            rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?,
        )),
        None => None,
    };
    log::info!("bisection: range [{lo0}, {hi0}], {steps_total} steps, budget {budget} per step");

    let mut state = OracleState::new(config.oracle.seed);
    let (mut lo, mut hi) = (lo0, hi0);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut steps = Vec::with_capacity(steps_total);
    let mut runs = Vec::with_capacity(steps_total);
    for k in 1..=steps_total {
        let phi = 0.5 * (lo + hi);
        let restricted = model.with_y_row(f, phi);
        let mut oracle = SamplingOracle::with_pool(&restricted, &config.oracle, &mut state, pool.clone());
        let run = match config.engine {
            EngineKind::Bl => run_bl(&mut oracle, &ball, budget)?,
            EngineKind::Ellipsoid => run_ellipsoid(&mut oracle, &ball, Some(config.rho), Some(budget))?,
        };
        let (outcome, value) = match &run.result {
            EngineResult::Candidate { y, .. } => {
                let v = crate::geometry::dot(f, y);
                best = Some((y.clone(), phi));
                hi = phi;
                (StepOutcome::A, Some(v))
            }
            EngineResult::Infeasible { .. } => {
                lo = phi;
                (StepOutcome::B, None)
            }
            EngineResult::BudgetExhausted { .. } => {
                lo = phi;
                (StepOutcome::C, None)
            }
        };
        log::info!("bisection step {k}: phi {phi:.6} outcome {outcome:?} localizer [{lo:.6}, {hi:.6}]");
        steps.push(BisectionStep {
            k,
            phi,
            outcome,
            lo,
            hi,
            calls: state.calls(),
            samples: run.samples(),
            objective_value: value,
        });
        runs.push(run);
    }
    let result = match best {
        Some((y_hat, bound)) => BisectionResult::Solved { y_hat, bound },
        None => BisectionResult::Failed,
    };
    Ok(BisectionOutcome {
        result,
        range: (lo0, hi0),
        steps,
        runs,
    })
}
