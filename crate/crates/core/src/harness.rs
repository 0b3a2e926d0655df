//! File formats and end-to-end commands.
//!
//! Instances and decisions are JSON documents carrying `format_version`;
//! logs and reports are CSV. Every artifact depends only on the inputs and
//! the seed, never on timing or thread count.
//!
//! Instance document:
//!
//! ```text
//! { "format_version": 1,
//!   "problem": { "kind": "inventory", ...inventory fields... }
//!            | { "kind": "finite", "static_set": {a, c, d}, "lo", "hi",
//!                "stages", "scenarios": [{weight, stages: [{a, b, c, d}]}] },
//!   "objective": [..]  (optional; inventory defaults to the total budget),
//!   "remodel": { "blocks": [sizes], "basis": [[{kind, ...}]],
//!                "chi_box": "auto" | {lo, hi} }  (optional) }
//! ```
//!
//! A finite instance lists its scenarios explicitly; scenario `i` is drawn
//! with probability proportional to its weight and every stage reads the
//! data `[i]`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bisection::{minimize, objective_range, BisectionConfig, BisectionOutcome, BisectionResult, EngineKind};
use crate::engines::{bl_budget, ellipsoid_budget, run_bl, run_ellipsoid, EngineResult, EngineRun, IterationRecord};
use crate::error::{Error, Result};
use crate::geometry::{Mat, PolyhedralRep, StagePolyhedron};
use crate::inventory::{
    build_model, greedy_local_policy, nominal_scenario, utopian_cost, InventoryInstance, StrategicDecisionView,
};
use crate::model::{membership_or_separator, scenario_feasible, FnSource, Membership, Scenario, SemiStochasticModel};
use crate::oracle::{substream, OracleConfig, OracleState, SamplingOracle, Schedule, VALIDATION_TAG};
use crate::remodel::{chi_box, embed, evaluate, lift, BasisFunction, BlockSplit, DecisionBasis};

pub const FORMAT_VERSION: u32 = 1;

/// Slack on the total-budget check of the greedy policy.
pub const BUDGET_TOL: f64 = 1e-6;

/// Bisection steps used when no `kappa` is given.
pub const DEFAULT_STEPS: u32 = 10;

/// Default `kappa` is the objective range over this ratio, which lies
/// in `[2^9, 2^10)` and so gives [`DEFAULT_STEPS`] steps.
pub const DEFAULT_WIDTH_RATIO: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticSpec {
    pub a: Vec<Vec<f64>>,
    #[serde(default)]
    pub c: Vec<Vec<f64>>,
    pub d: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub a: Vec<Vec<f64>>,
    #[serde(default)]
    pub b: Vec<Vec<f64>>,
    #[serde(default)]
    pub c: Vec<Vec<f64>>,
    pub d: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteScenarioSpec {
    #[serde(default = "unit_weight")]
    pub weight: f64,
    pub stages: Vec<StageSpec>,
}

fn unit_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteInstance {
    pub static_set: StaticSpec,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub stages: usize,
    pub scenarios: Vec<FiniteScenarioSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Problem {
    Inventory(InventoryInstance),
    Finite(FiniteInstance),
}

impl Problem {
    pub fn kind(&self) -> &'static str {
        match self {
            Problem::Inventory(_) => "inventory",
            Problem::Finite(_) => "finite",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChiBoxSpec {
    Explicit { lo: Vec<f64>, hi: Vec<f64> },
    /// `"auto"`: derived from the bounding box of `Y`.
    Auto(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemodelSpec {
    pub blocks: Vec<usize>,
    pub basis: Vec<Vec<BasisFunction>>,
    #[serde(default)]
    pub chi_box: Option<ChiBoxSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub format_version: u32,
    pub problem: Problem,
    #[serde(default)]
    pub objective: Option<Vec<f64>>,
    #[serde(default)]
    pub remodel: Option<RemodelSpec>,
}

impl InstanceFile {
    pub fn inventory(instance: InventoryInstance) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            problem: Problem::Inventory(instance),
            objective: None,
            remodel: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionFile {
    pub format_version: u32,
    pub kind: String,
    /// Whether `y` holds rule coefficients of a lifted model.
    pub lifted: bool,
    pub y: Vec<f64>,
    #[serde(default)]
    pub bound: Option<f64>,
    #[serde(default)]
    pub view: Option<StrategicDecisionView>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn parse_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| parse_err(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn check_version(path: &Path, v: u32) -> Result<()> {
    if v != FORMAT_VERSION {
        return Err(parse_err(path, format!("format_version {v} is not supported (expected {FORMAT_VERSION})")));
    }
    Ok(())
}

fn mat_or_zeros(rows: &[Vec<f64>], m: usize, name: &str) -> Result<Mat> {
    if rows.is_empty() {
        return Ok(Mat::zeros(m, 0));
    }
    if rows.len() != m {
        return Err(Error::BadInstance(format!("{name} has {} rows, expected {m}", rows.len())));
    }
    Mat::from_rows(rows, rows[0].len()).map_err(|e| Error::BadInstance(format!("{name}: {e}")))
}

impl FiniteInstance {
    fn validate(&self) -> Result<()> {
        let n = self.lo.len();
        if self.hi.len() != n || n == 0 {
            return Err(Error::BadInstance("lo/hi must be nonempty and of equal length".into()));
        }
        if self.stages == 0 || self.scenarios.is_empty() {
            return Err(Error::BadInstance("need at least one stage and one scenario".into()));
        }
        for (i, sc) in self.scenarios.iter().enumerate() {
            if !(sc.weight > 0.0 && sc.weight.is_finite()) {
                return Err(Error::BadInstance(format!("scenario {i} has weight {}", sc.weight)));
            }
            if sc.stages.len() != self.stages {
                return Err(Error::BadInstance(format!(
                    "scenario {i} lists {} stages, expected {}",
                    sc.stages.len(),
                    self.stages
                )));
            }
            for (t, st) in sc.stages.iter().enumerate() {
                let poly = stage_from_spec(st).map_err(|e| Error::BadInstance(format!("scenario {i}, stage {}: {e}", t + 1)))?;
                if poly.y_dim() != n {
                    return Err(Error::BadInstance(format!(
                        "scenario {i}, stage {}: A has {} columns, expected {n}",
                        t + 1,
                        poly.y_dim()
                    )));
                }
            }
        }
        Ok(())
    }

    fn build(&self) -> Result<SemiStochasticModel> {
        self.validate()?;
        let n = self.lo.len();
        let s = &self.static_set;
        let m = s.d.len();
        let a = if s.a.is_empty() && m == 0 { Mat::zeros(0, n) } else { mat_or_zeros(&s.a, m, "static_set.a")? };
        let c = mat_or_zeros(&s.c, m, "static_set.c")?;
        let rep = PolyhedralRep::new(a, c, s.d.clone())?;
        let polys: Vec<Vec<StagePolyhedron>> = self
            .scenarios
            .iter()
            .map(|sc| sc.stages.iter().map(stage_from_spec).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        let weights: Vec<f64> = self.scenarios.iter().map(|s| s.weight).collect();
        let total: f64 = weights.iter().sum();
        let stages = self.stages;
        let polys = Arc::new(polys);
        let source = FnSource::new(
            stages,
            move |rng: &mut dyn RngCore| {
                let mut u = rng.random::<f64>() * total;
                let mut idx = weights.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    if u < *w {
                        idx = i;
                        break;
                    }
                    u -= w;
                }
                Scenario::new(vec![vec![idx as f64]; stages]).expect("finite data")
            },
            move |t, prefix| {
                let idx = prefix[0][0] as usize;
                polys
                    .get(idx)
                    .map(|p| p[t - 1].clone())
                    .ok_or_else(|| Error::ModelContractViolation(format!("unknown scenario index {idx}")))
            },
        );
        SemiStochasticModel::new(rep, self.lo.clone(), self.hi.clone(), Arc::new(source))
    }
}

fn stage_from_spec(st: &StageSpec) -> Result<StagePolyhedron> {
    let m = st.d.len();
    if st.a.len() != m {
        return Err(Error::BadInstance(format!("A has {} rows, d has {m}", st.a.len())));
    }
    let a = Mat::from_rows(&st.a, st.a.first().map_or(0, |r| r.len()))?;
    StagePolyhedron::new(a, mat_or_zeros(&st.b, m, "B")?, mat_or_zeros(&st.c, m, "C")?, st.d.clone())
}

/// A parsed instance with its model, lifted when a remodel section is given.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub file: InstanceFile,
    pub base: SemiStochasticModel,
    pub model: SemiStochasticModel,
    pub lift: Option<(BlockSplit, DecisionBasis)>,
}

impl Loaded {
    pub fn new(file: InstanceFile) -> Result<Self> {
        let base = match &file.problem {
            Problem::Inventory(inst) => build_model(inst)?,
            Problem::Finite(fin) => fin.build()?,
        };
        let (model, lift_info) = match &file.remodel {
            None => (base.clone(), None),
            Some(spec) => {
                let split = BlockSplit::from_sizes(&spec.blocks)?;
                let basis = DecisionBasis {
                    blocks: spec.basis.clone(),
                };
                let bx = match &spec.chi_box {
                    None => None,
                    Some(ChiBoxSpec::Explicit { lo, hi }) => Some((lo.clone(), hi.clone())),
                    Some(ChiBoxSpec::Auto(s)) if s == "auto" => {
                        let (lo, hi) = base.bounds();
                        Some(chi_box(&split, &basis, lo, hi)?)
                    }
                    Some(ChiBoxSpec::Auto(s)) => {
                        return Err(Error::BadInstance(format!("chi_box must be \"auto\" or {{lo, hi}}, got {s:?}")))
                    }
                };
                (lift(&base, &split, &basis, bx)?, Some((split, basis)))
            }
        };
        Ok(Self {
            file,
            base,
            model,
            lift: lift_info,
        })
    }

    pub fn inventory(&self) -> Option<&InventoryInstance> {
        match &self.file.problem {
            Problem::Inventory(i) => Some(i),
            Problem::Finite(_) => None,
        }
    }

    /// Objective over the model's strategic vector: the instance's own,
    /// else the total budget for inventory instances. When lifted, an
    /// objective over the original `y` acts on the constant coefficients.
    pub fn objective(&self) -> Result<Vec<f64>> {
        let f = match &self.file.objective {
            Some(f) if f.len() == self.model.dim() => return Ok(f.clone()),
            Some(f) if self.lift.is_some() && f.len() == self.base.dim() => f.clone(),
            Some(f) => {
                return Err(Error::Dimension(format!(
                    "objective of length {} for n = {}",
                    f.len(),
                    self.model.dim()
                )))
            }
            None => {
                let inst = self
                    .inventory()
                    .ok_or_else(|| Error::InvalidConfig("finite instances need an \"objective\" for minimize".into()))?;
                let mut f = vec![0.0; inst.dim()];
                f[inst.total_budget_index()] = 1.0;
                f
            }
        };
        match &self.lift {
            None => Ok(f),
            Some((split, basis)) => embed(split, basis, &f),
        }
    }

    /// Fixed strategic vector the rules take on scenario `sc` (the decision
    /// itself when nothing is lifted).
    pub fn realized(&self, y: &[f64], sc: &Scenario) -> Result<Vec<f64>> {
        match &self.lift {
            None => Ok(y.to_vec()),
            Some((split, basis)) => evaluate(split, basis, y, sc.stages()),
        }
    }
}

pub fn load_instance(path: &Path) -> Result<Loaded> {
    let file: InstanceFile = read_json(path)?;
    check_version(path, file.format_version)?;
    Loaded::new(file)
}

pub fn load_decision(path: &Path) -> Result<DecisionFile> {
    let dec: DecisionFile = read_json(path)?;
    check_version(path, dec.format_version)?;
    Ok(dec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Fixed,
    Adaptive,
}

/// Settings shared by all commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub rho: f64,
    /// Bisection accuracy; defaults to a width giving [`DEFAULT_STEPS`] steps.
    pub kappa: Option<f64>,
    pub engine: EngineKind,
    pub schedule: ScheduleKind,
    /// Oracle calls per engine run; defaults to the engine's bound.
    pub budget: Option<u64>,
    pub seed: u64,
    /// Not recorded in artifacts: results do not depend on it.
    #[serde(skip)]
    pub threads: Option<usize>,
    /// Scenarios drawn by `validate`.
    pub samples: usize,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            delta: 0.01,
            rho: 0.1,
            kappa: None,
            engine: EngineKind::Bl,
            schedule: ScheduleKind::Adaptive,
            budget: None,
            seed: 0,
            threads: None,
            samples: 1000,
            out_dir: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidConfig(format!("rho = {} must be positive", self.rho)));
        }
        if let Some(k) = self.kappa {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::InvalidConfig(format!("kappa = {k} must be positive")));
            }
        }
        if self.budget == Some(0) {
            return Err(Error::InvalidConfig("budget must be at least 1".into()));
        }
        if self.samples == 0 {
            return Err(Error::InvalidConfig("samples must be at least 1".into()));
        }
        self.oracle(1)?.validate()
    }

    fn engine_budget(&self, model: &SemiStochasticModel) -> Result<u64> {
        let ball = model.ball();
        match (self.budget, self.engine) {
            (Some(b), _) => Ok(b),
            (None, EngineKind::Bl) => bl_budget(ball.radius, self.rho),
            (None, EngineKind::Ellipsoid) => ellipsoid_budget(ball.dim(), ball.radius, self.rho),
        }
    }

    /// Oracle settings; the fixed schedule uses the engine budget as `M`.
    fn oracle(&self, budget: u64) -> Result<OracleConfig> {
        let schedule = match self.schedule {
            ScheduleKind::Fixed => Schedule::Fixed { m: budget },
            ScheduleKind::Adaptive => Schedule::Adaptive,
        };
        Ok(OracleConfig::new(self.epsilon, self.delta, schedule, self.seed)?.with_threads(self.threads))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn outcome_name(r: &IterationRecord) -> &'static str {
    match r.outcome {
        crate::engines::StepOutcome::YSeparator => "y_separator",
        crate::engines::StepOutcome::StageSeparator => "stage_separator",
        crate::engines::StepOutcome::Stuck => "stuck",
    }
}

/// Iteration log; `step` is the bisection step or 0 for a single run.
pub fn iterations_csv(runs: &[(usize, &EngineRun)]) -> String {
    let mut out = String::from("step,s,delta,samples,outcome,stage\n");
    for (step, run) in runs {
        for r in &run.log {
            let stage = r.stage.map(|t| t.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{step},{},{},{},{},{stage}", r.s, fmt_opt(r.delta), r.samples, outcome_name(r));
        }
    }
    out
}

pub fn bisection_csv(outcome: &BisectionOutcome) -> String {
    let mut out = String::from("k,phi,outcome,lo,hi,calls,samples,objective_value\n");
    for s in &outcome.steps {
        let _ = writeln!(
            out,
            "{},{},{:?},{},{},{},{},{}",
            s.k,
            s.phi,
            s.outcome,
            s.lo,
            s.hi,
            s.calls,
            s.samples,
            fmt_opt(s.objective_value)
        );
    }
    out
}

pub fn scenario_csv(sc: &Scenario) -> String {
    let mut out = String::from("t,component,value\n");
    for (t, xi) in sc.stages().iter().enumerate() {
        for (i, v) in xi.iter().enumerate() {
            let _ = writeln!(out, "{},{i},{v}", t + 1);
        }
    }
    out
}

pub fn nominals_csv(inst: &InventoryInstance) -> String {
    let mut out = String::from("t,product,demand,order_cost,holding_cost,backlog_cost,revenue\n");
    for (t, eta) in inst.nominal.iter().enumerate() {
        for i in 0..inst.products {
            let _ = writeln!(
                out,
                "{},{i},{},{},{},{},{}",
                t + 1,
                eta.demand[i],
                eta.order_cost[i],
                eta.holding_cost[i],
                eta.backlog_cost[i],
                eta.revenue[i]
            );
        }
    }
    out
}

pub fn decision_stages_csv(view: &StrategicDecisionView) -> String {
    let mut out = String::from("t,product,lower,upper,stage_budget\n");
    for t in 0..view.lower.len() {
        for i in 0..view.lower[t].len() {
            let _ = writeln!(
                out,
                "{},{i},{},{},{}",
                t + 1,
                view.lower[t][i],
                view.upper[t][i],
                view.stage_budget[t]
            );
        }
    }
    out
}

fn decision_file(loaded: &Loaded, y: &[f64], bound: Option<f64>) -> Result<DecisionFile> {
    let view = match (loaded.inventory(), &loaded.lift) {
        (Some(inst), None) => Some(StrategicDecisionView::from_flat(inst, y)?),
        _ => None,
    };
    Ok(DecisionFile {
        format_version: FORMAT_VERSION,
        kind: loaded.file.problem.kind().to_string(),
        lifted: loaded.lift.is_some(),
        y: y.to_vec(),
        bound,
        view,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub format_version: u32,
    pub command: String,
    pub outcome: String,
    pub exit_code: i32,
    pub calls: u64,
    pub samples: u64,
    pub delta_r: Option<f64>,
    pub last_delta: Option<f64>,
    pub budget: u64,
    pub dim: usize,
    pub radius: f64,
    pub config: RunConfig,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub exit_code: i32,
    pub run: EngineRun,
    pub summary: SolveSummary,
}

/// One engine run from the ball center. Writes `iterations.csv`,
/// `summary.json` and, on a candidate, `decision.json`. Exit code 0 for a
/// candidate, 2 for an infeasibility certificate, 3 for an exhausted budget.
pub fn cmd_solve(loaded: &Loaded, cfg: &RunConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let model = &loaded.model;
    let ball = model.ball();
    let budget = cfg.engine_budget(model)?;
    let oc = cfg.oracle(budget)?;
    let mut state = OracleState::new(cfg.seed);
    let mut oracle = SamplingOracle::new(model, &oc, &mut state)?;
    log::info!("solve: n = {}, R = {}, budget {budget}", model.dim(), ball.radius);
    let run = match cfg.engine {
        EngineKind::Bl => run_bl(&mut oracle, &ball, budget)?,
        EngineKind::Ellipsoid => run_ellipsoid(&mut oracle, &ball, Some(cfg.rho), Some(budget))?,
    };
    let calls = oracle.state().calls();
    let (outcome, exit_code, delta_r, last_delta) = match &run.result {
        EngineResult::Candidate { y, .. } => {
            write_json(&cfg.path("decision.json"), &decision_file(loaded, y, None)?)?;
            ("candidate", 0, None, None)
        }
        EngineResult::Infeasible { delta_r, .. } => ("infeasible", 2, Some(*delta_r), None),
        EngineResult::BudgetExhausted { last_delta, .. } => {
            ("budget_exhausted", 3, None, Some(*last_delta).filter(|v| v.is_finite()))
        }
    };
    write_text(&cfg.path("iterations.csv"), &iterations_csv(&[(0, &run)]))?;
    let summary = SolveSummary {
        format_version: FORMAT_VERSION,
        command: "solve".into(),
        outcome: outcome.into(),
        exit_code,
        calls,
        samples: run.samples(),
        delta_r,
        last_delta,
        budget,
        dim: model.dim(),
        radius: ball.radius,
        config: cfg.clone(),
    };
    write_json(&cfg.path("summary.json"), &summary)?;
    Ok(SolveReport { exit_code, run, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizeSummary {
    pub format_version: u32,
    pub command: String,
    pub outcome: String,
    pub exit_code: i32,
    pub range: (f64, f64),
    pub kappa: f64,
    pub steps: usize,
    pub bound: Option<f64>,
    pub objective_value: Option<f64>,
    pub calls: u64,
    pub budget: u64,
    pub config: RunConfig,
}

#[derive(Debug, Clone)]
pub struct MinimizeReport {
    pub exit_code: i32,
    pub outcome: BisectionOutcome,
    pub summary: MinimizeSummary,
}

/// Bisection on the instance objective. Writes `bisection.csv`,
/// `iterations.csv`, `summary.json` and, when solved, `decision.json`.
/// Exit code 0 when solved, 4 when no step produced a candidate.
pub fn cmd_minimize(loaded: &Loaded, cfg: &RunConfig) -> Result<MinimizeReport> {
    cfg.validate()?;
    let model = &loaded.model;
    let f = loaded.objective()?;
    let kappa = match cfg.kappa {
        Some(k) => k,
        None => {
            let (lo, hi) = objective_range(model, &f)?;
            (hi - lo) / DEFAULT_WIDTH_RATIO
        }
    };
    if !(kappa > 0.0) {
        return Err(Error::InvalidConfig("objective is constant over Y; nothing to minimize".into()));
    }
    let budget = cfg.engine_budget(model)?;
    let bc = BisectionConfig {
        objective: f.clone(),
        kappa,
        rho: cfg.rho,
        oracle: cfg.oracle(budget)?,
        engine: cfg.engine,
        budget: Some(budget),
    };
    let outcome = minimize(model, &bc)?;
    let (name, exit_code, bound, value) = match &outcome.result {
        BisectionResult::Solved { y_hat, bound } => {
            write_json(&cfg.path("decision.json"), &decision_file(loaded, y_hat, Some(*bound))?)?;
            ("solved", 0, Some(*bound), Some(crate::geometry::dot(&f, y_hat)))
        }
        BisectionResult::Failed => ("failed", 4, None, None),
    };
    write_text(&cfg.path("bisection.csv"), &bisection_csv(&outcome))?;
    let runs: Vec<(usize, &EngineRun)> = outcome.runs.iter().enumerate().map(|(k, r)| (k + 1, r)).collect();
    write_text(&cfg.path("iterations.csv"), &iterations_csv(&runs))?;
    let summary = MinimizeSummary {
        format_version: FORMAT_VERSION,
        command: "minimize".into(),
        outcome: name.into(),
        exit_code,
        range: outcome.range,
        kappa,
        steps: outcome.steps.len(),
        bound,
        objective_value: value,
        calls: outcome.steps.last().map_or(0, |s| s.calls),
        budget,
        config: cfg.clone(),
    };
    write_json(&cfg.path("summary.json"), &summary)?;
    Ok(MinimizeReport {
        exit_code,
        outcome,
        summary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostStats {
    pub min: f64,
    pub mean: f64,
    /// Midpoint of the two middle values for an even count.
    pub median: f64,
    pub max: f64,
}

impl CostStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        Some(Self {
            min: v[0],
            mean: v.iter().sum::<f64>() / n as f64,
            median,
            max: v[n - 1],
        })
    }
}

/// Monte Carlo report. A scenario fails when some stage is infeasible at
/// the decision. On the remaining scenarios the greedy policy runs; a
/// budget violation is a feasible scenario where the policy fails or its
/// total cost exceeds the total budget. Cost statistics and the excess over
/// the clairvoyant cost cover feasible scenarios only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub format_version: u32,
    pub n_scenarios: usize,
    pub n_failures: usize,
    pub failure_rate: f64,
    pub budget_violations: usize,
    pub cost: Option<CostStats>,
    pub bound: Option<f64>,
    pub mean_relative_excess: Option<f64>,
    pub clairvoyant_infeasible: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
struct ScenarioRecord {
    feasible: bool,
    failed_stage: Option<usize>,
    greedy: Option<f64>,
    utopian: Option<f64>,
    violation: bool,
    bound: Option<f64>,
}

fn validate_one(loaded: &Loaded, y: &[f64], in_y: bool, sc: &Scenario) -> Result<ScenarioRecord> {
    let feasible = in_y && scenario_feasible(&loaded.model, sc, y)?;
    let mut rec = ScenarioRecord {
        feasible,
        failed_stage: None,
        greedy: None,
        utopian: None,
        violation: false,
        bound: None,
    };
    let Some(inst) = loaded.inventory() else {
        return Ok(rec);
    };
    let fixed = loaded.realized(y, sc)?;
    let omega = fixed[inst.total_budget_index()];
    rec.bound = Some(omega);
    let run = greedy_local_policy(inst, &fixed, sc)?;
    rec.failed_stage = run.failed_stage;
    if !feasible {
        return Ok(rec);
    }
    if !run.feasible || run.total_cost > omega + BUDGET_TOL {
        rec.violation = true;
    }
    if run.feasible {
        rec.greedy = Some(run.total_cost);
        rec.utopian = match utopian_cost(inst, sc, true) {
            Ok(v) => Some(v),
            Err(Error::ClairvoyantInfeasible) => None,
            Err(e) => return Err(e),
        };
    }
    Ok(rec)
}

fn validation_csv(records: &[ScenarioRecord]) -> String {
    let mut out = String::from("index,feasible,failed_stage,greedy_cost,utopian_cost,budget_violation\n");
    for (i, r) in records.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{}",
            r.feasible,
            r.failed_stage.map(|t| t.to_string()).unwrap_or_default(),
            fmt_opt(r.greedy),
            fmt_opt(r.utopian),
            r.violation
        );
    }
    out
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(k) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(f)),
        None => Ok(f()),
    }
}

/// Evaluates a decision on `cfg.samples` fresh scenarios from the
/// validation stream. Writes `validation.json`, `validation.csv` and, for
/// inventory decisions, `decision_stages.csv`.
pub fn cmd_validate(loaded: &Loaded, decision: &DecisionFile, cfg: &RunConfig) -> Result<ValidationReport> {
    cfg.validate()?;
    let model = &loaded.model;
    if decision.y.len() != model.dim() {
        return Err(Error::Dimension(format!(
            "decision of length {} for an instance with n = {}",
            decision.y.len(),
            model.dim()
        )));
    }
    if decision.lifted != loaded.lift.is_some() || decision.kind != loaded.file.problem.kind() {
        return Err(Error::InvalidConfig(format!(
            "decision ({}, lifted = {}) does not match the instance ({}, lifted = {})",
            decision.kind,
            decision.lifted,
            loaded.file.problem.kind(),
            loaded.lift.is_some()
        )));
    }
    let y = &decision.y;
    let in_y = matches!(membership_or_separator(model, y)?, Membership::InY);
    let seed = cfg.seed;
    let records: Vec<ScenarioRecord> = in_pool(cfg.threads, || {
        (0..cfg.samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(seed, VALIDATION_TAG, 1, i as u64);
                let sc = model.sample(&mut rng);
                validate_one(loaded, y, in_y, &sc)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let n = records.len();
    let n_failures = records.iter().filter(|r| !r.feasible).count();
    let costs: Vec<f64> = records.iter().filter(|r| r.feasible).filter_map(|r| r.greedy).collect();
    let excess: Vec<f64> = records
        .iter()
        .filter(|r| r.feasible)
        .filter_map(|r| match (r.greedy, r.utopian) {
            (Some(g), Some(u)) => Some((g - u) / u.abs().max(1e-12)),
            _ => None,
        })
        .collect();
    let bound = match &loaded.lift {
        None => records.first().and_then(|r| r.bound),
        Some(_) => None,
    };
    let report = ValidationReport {
        format_version: FORMAT_VERSION,
        n_scenarios: n,
        n_failures,
        failure_rate: n_failures as f64 / n as f64,
        budget_violations: records.iter().filter(|r| r.violation).count(),
        cost: CostStats::from_values(&costs),
        bound,
        mean_relative_excess: if excess.is_empty() {
            None
        } else {
            Some(excess.iter().sum::<f64>() / excess.len() as f64)
        },
        clairvoyant_infeasible: records.iter().filter(|r| r.feasible && r.greedy.is_some() && r.utopian.is_none()).count(),
        seed,
    };
    write_text(&cfg.path("validation.csv"), &validation_csv(&records))?;
    write_json(&cfg.path("validation.json"), &report)?;
    if let (Some(inst), None) = (loaded.inventory(), &loaded.lift) {
        write_text(&cfg.path("decision_stages.csv"), &decision_stages_csv(&StrategicDecisionView::from_flat(inst, y)?))?;
    }
    log::info!(
        "validate: {n_failures}/{n} failures, {} budget violations",
        report.budget_violations
    );
    Ok(report)
}

/// Per-step budget of the inventory demo when none is given.
pub const DEMO_BUDGET: u64 = 200;

#[derive(Debug, Clone)]
pub struct DemoReport {
    pub minimize: MinimizeReport,
    pub validation: Option<ValidationReport>,
}

/// Shipped inventory instance end to end: writes `instance.json`,
/// `nominals.csv` and `nominal_scenario.csv`, minimizes the total budget
/// and validates the result.
pub fn cmd_demo(cfg: &RunConfig) -> Result<DemoReport> {
    let inst = InventoryInstance::default_instance();
    let file = InstanceFile::inventory(inst.clone());
    write_json(&cfg.path("instance.json"), &file)?;
    write_text(&cfg.path("nominals.csv"), &nominals_csv(&inst))?;
    write_text(&cfg.path("nominal_scenario.csv"), &scenario_csv(&nominal_scenario(&inst)))?;
    let loaded = Loaded::new(file)?;
    let mut cfg = cfg.clone();
    cfg.budget = cfg.budget.or(Some(DEMO_BUDGET));
    let minimize = cmd_minimize(&loaded, &cfg)?;
    let validation = if minimize.exit_code == 0 {
        let decision = load_decision(&cfg.path("decision.json"))?;
        Some(cmd_validate(&loaded, &decision, &cfg)?)
    } else {
        None
    };
    Ok(DemoReport { minimize, validation })
}
