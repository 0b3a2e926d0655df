//! The semi-stochastic model: a static set `Y`, stage sets `Z^t_xi` built
//! from sampled data, and the checks the oracle runs against them.

use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{bounding_ball, dot, normalize_separator, Ball, Mat, PolyhedralRep, Separator, StagePolyhedron};
use crate::lp::{lp_feasible, Feasibility};
use crate::oracle::{substream, VALIDATION_TAG};

/// One realization `(xi_1, ..., xi_K)`; stage `t` sees the prefix up to `t`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Scenario {
    stages: Vec<Vec<f64>>,
}

impl Scenario {
    pub fn new(stages: Vec<Vec<f64>>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::ModelContractViolation("scenario without stages".into()));
        }
        if stages.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::ModelContractViolation("non-finite scenario data".into()));
        }
        Ok(Self { stages })
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    /// Data of stage `t` (1-based).
    pub fn stage(&self, t: usize) -> &[f64] {
        &self.stages[t - 1]
    }

    /// `(xi_1, ..., xi_t)`.
    pub fn prefix(&self, t: usize) -> &[Vec<f64>] {
        &self.stages[..t]
    }

    pub fn stages(&self) -> &[Vec<f64>] {
        &self.stages
    }
}

/// Sampler plus stage-set builder.
pub trait ScenarioSource: Send + Sync {
    fn stages(&self) -> usize;

    fn sample(&self, rng: &mut dyn RngCore) -> Scenario;

    /// `Z^t` for the data prefix `(xi_1, ..., xi_t)`; `t` is 1-based.
    fn stage_polyhedron(&self, t: usize, prefix: &[Vec<f64>]) -> Result<StagePolyhedron>;
}

type SampleFn = dyn Fn(&mut dyn RngCore) -> Scenario + Send + Sync;
type BuildFn = dyn Fn(usize, &[Vec<f64>]) -> Result<StagePolyhedron> + Send + Sync;

/// Closure-backed [`ScenarioSource`].
pub struct FnSource {
    stages: usize,
    sampler: Box<SampleFn>,
    builder: Box<BuildFn>,
}

impl FnSource {
    pub fn new(
        stages: usize,
        sampler: impl Fn(&mut dyn RngCore) -> Scenario + Send + Sync + 'static,
        builder: impl Fn(usize, &[Vec<f64>]) -> Result<StagePolyhedron> + Send + Sync + 'static,
    ) -> Self {
        Self {
            stages,
            sampler: Box::new(sampler),
            builder: Box::new(builder),
        }
    }
}

impl ScenarioSource for FnSource {
    fn stages(&self) -> usize {
        self.stages
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Scenario {
        (self.sampler)(rng)
    }

    fn stage_polyhedron(&self, t: usize, prefix: &[Vec<f64>]) -> Result<StagePolyhedron> {
        (self.builder)(t, prefix)
    }
}

#[derive(Clone)]
pub struct SemiStochasticModel {
    n: usize,
    y: PolyhedralRep,
    lo: Vec<f64>,
    hi: Vec<f64>,
    source: Arc<dyn ScenarioSource>,
}

impl fmt::Debug for SemiStochasticModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SemiStochasticModel")
            .field("n", &self.n)
            .field("stages", &self.source.stages())
            .field("y_rows", &self.y.num_rows())
            .finish()
    }
}

impl SemiStochasticModel {
    /// Builds the model and checks that `Y` is nonempty. `lo`/`hi` bound `Y`
    /// and define the initial ball.
    pub fn new(y: PolyhedralRep, lo: Vec<f64>, hi: Vec<f64>, source: Arc<dyn ScenarioSource>) -> Result<Self> {
        let n = y.dim();
        if lo.len() != n || hi.len() != n {
            return Err(Error::Dimension(format!("box of length {}/{} for n = {n}", lo.len(), hi.len())));
        }
        if source.stages() == 0 {
            return Err(Error::ModelContractViolation("model needs at least one stage".into()));
        }
        bounding_ball(&lo, &hi)?;
        let g = y.a.hcat(&y.c);
        if let Feasibility::Infeasible(_) = lp_feasible(&g, &y.d)? {
            return Err(Error::EmptyStaticSet);
        }
        Ok(Self { n, y, lo, hi, source })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn stages(&self) -> usize {
        self.source.stages()
    }

    pub fn static_set(&self) -> &PolyhedralRep {
        &self.y
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    pub fn source(&self) -> &Arc<dyn ScenarioSource> {
        &self.source
    }

    /// Initial ball `E_1` around the bounding box.
    pub fn ball(&self) -> Ball {
        bounding_ball(&self.lo, &self.hi).expect("box validated at construction")
    }

    /// Same model with the extra static constraint `g^T y <= rhs`.
    pub fn with_y_row(&self, g: &[f64], rhs: f64) -> Self {
        Self {
            y: self.y.with_row(g, rhs),
            ..self.clone()
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Scenario {
        self.source.sample(rng)
    }

    pub fn stage_polyhedron(&self, t: usize, scenario: &Scenario) -> Result<StagePolyhedron> {
        if t == 0 || t > self.stages() || scenario.num_stages() < t {
            return Err(Error::ModelContractViolation(format!(
                "stage {t} requested from a scenario with {} stages",
                scenario.num_stages()
            )));
        }
        let poly = self.source.stage_polyhedron(t, scenario.prefix(t))?;
        if poly.y_dim() != self.n {
            return Err(Error::Dimension(format!(
                "stage {t} has y-block of width {}, model has n = {}",
                poly.y_dim(),
                self.n
            )));
        }
        Ok(poly)
    }
}

/// Result of a single stage check.
#[derive(Debug, Clone, PartialEq)]
pub enum StageCheck {
    Feasible(Vec<f64>),
    Infeasible { t: usize, farkas: Vec<f64> },
}

/// Outcome of the `Y` membership test.
#[derive(Debug, Clone, PartialEq)]
pub enum Membership {
    InY,
    Separator(Separator),
}

/// `exists (x, w): B x + C w <= d - A y` for a given stage polyhedron.
pub fn check_polyhedron(poly: &StagePolyhedron, t: usize, y: &[f64]) -> Result<StageCheck> {
    let g = poly.b.hcat(&poly.c);
    let ay = poly.a.mul_vec(y);
    let h: Vec<f64> = poly.d.iter().zip(&ay).map(|(d, a)| d - a).collect();
    Ok(match lp_feasible(&g, &h)? {
        Feasibility::Feasible(z) => StageCheck::Feasible(z[..poly.x_dim()].to_vec()),
        Feasibility::Infeasible(farkas) => StageCheck::Infeasible { t, farkas },
    })
}

pub fn stage_feasible(model: &SemiStochasticModel, t: usize, scenario: &Scenario, y: &[f64]) -> Result<StageCheck> {
    check_dim(model, y)?;
    let poly = model.stage_polyhedron(t, scenario)?;
    check_polyhedron(&poly, t, y)
}

/// Separator `(A^T lambda, lambda^T d)` from row multipliers of an
/// infeasible system `A y + (other blocks) <= d`.
pub fn separator_from_rows(a: &Mat, d: &[f64], farkas: &[f64]) -> Result<Separator> {
    let g = a.tr_mul_vec(farkas);
    let gamma = dot(farkas, d);
    normalize_separator(&g, gamma).map_err(|e| match e {
        Error::ZeroGradient { norm } => Error::ModelContractViolation(format!(
            "certificate does not involve y (gradient norm {norm:e}): the set is empty for every y"
        )),
        other => other,
    })
}

pub fn separator_from_infeasibility(
    model: &SemiStochasticModel,
    t: usize,
    scenario: &Scenario,
    y: &[f64],
    farkas: &[f64],
) -> Result<Separator> {
    check_dim(model, y)?;
    let poly = model.stage_polyhedron(t, scenario)?;
    separator_from_rows(&poly.a, &poly.d, farkas)
}

pub fn membership_or_separator(model: &SemiStochasticModel, y: &[f64]) -> Result<Membership> {
    check_dim(model, y)?;
    let rep = &model.y;
    let ay = rep.a.mul_vec(y);
    let h: Vec<f64> = rep.d.iter().zip(&ay).map(|(d, a)| d - a).collect();
    match lp_feasible(&rep.c, &h)? {
        Feasibility::Feasible(_) => Ok(Membership::InY),
        Feasibility::Infeasible(farkas) => Ok(Membership::Separator(separator_from_rows(&rep.a, &rep.d, &farkas)?)),
    }
}

/// First infeasible stage of a scenario at `y`, with its separator.
pub fn first_violation(model: &SemiStochasticModel, scenario: &Scenario, y: &[f64]) -> Result<Option<(usize, Separator)>> {
    for t in 1..=model.stages() {
        let poly = model.stage_polyhedron(t, scenario)?;
        if let StageCheck::Infeasible { farkas, .. } = check_polyhedron(&poly, t, y)? {
            return Ok(Some((t, separator_from_rows(&poly.a, &poly.d, &farkas)?)));
        }
    }
    Ok(None)
}

/// Whether every stage of the scenario is feasible at `y`.
pub fn scenario_feasible(model: &SemiStochasticModel, scenario: &Scenario, y: &[f64]) -> Result<bool> {
    for t in 1..=model.stages() {
        let poly = model.stage_polyhedron(t, scenario)?;
        if let StageCheck::Infeasible { .. } = check_polyhedron(&poly, t, y)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Monte Carlo estimate of the probability that some stage is infeasible
/// at `y`; equals 1 off `Y`.
pub fn epsilon_hat(model: &SemiStochasticModel, y: &[f64], n_samples: usize, seed: u64) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::InvalidConfig("epsilon_hat needs at least one sample".into()));
    }
    if let Membership::Separator(_) = membership_or_separator(model, y)? {
        return Ok(1.0);
    }
    let failures = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, VALIDATION_TAG, 0, i as u64);
            let scenario = model.sample(&mut rng);
            scenario_feasible(model, &scenario, y).map(|ok| usize::from(!ok))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(failures as f64 / n_samples as f64)
}

fn check_dim(model: &SemiStochasticModel, y: &[f64]) -> Result<()> {
    if y.len() != model.n {
        return Err(Error::Dimension(format!("point of length {} for n = {}", y.len(), model.n)));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Dimension("non-finite point".into()));
    }
    Ok(())
}
