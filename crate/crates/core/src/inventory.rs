//! Multi-product inventory over `K` stages.
//!
//! The strategic vector fixes, for every stage, a band `[l_t, u_t]` for the
//! inventory level and a stage budget `w_t`, plus a total budget `w`:
//!
//! ```text
//! y = [l_1; u_1; w_1; ...; l_K; u_K; w_K; w],   n = K (2d + 1) + 1
//! ```
//!
//! Stage data is `eta_t = [demand; order cost; holding cost; backlog cost;
//! revenue]` (each of length `d`). Stage `t <= K` asks for an order `x_t`
//! keeping the level inside the band and the stage cost within `w_t`;
//! stage `K + 1` asks for a whole order plan `(x_1, ..., x_K)` meeting all
//! stage conditions at once with total cost within `w`. Positive parts
//! `max[u, 0]`, `max[-l, 0]` are linearized with auxiliary columns.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, Mat, PolyhedralRep, StagePolyhedron};
use crate::lp::{solve_lp, LinearProgram, LpOutcome};
use crate::model::{Scenario, ScenarioSource, SemiStochasticModel};

/// Slack allowed on the greedy budget checks.
pub const POLICY_TOL: f64 = 1e-7;

/// Nominal data of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageNominal {
    pub demand: Vec<f64>,
    pub order_cost: Vec<f64>,
    pub holding_cost: Vec<f64>,
    pub backlog_cost: Vec<f64>,
    pub revenue: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventoryInstance {
    pub products: usize,
    pub stages: usize,
    pub z0: Vec<f64>,
    /// Per stage, per product.
    pub z_lo: Vec<Vec<f64>>,
    pub z_hi: Vec<Vec<f64>>,
    pub x_lo: Vec<Vec<f64>>,
    pub x_hi: Vec<Vec<f64>>,
    pub storage_weights: Vec<f64>,
    pub storage_capacity: f64,
    /// Upper bound on the cost of each stage.
    pub stage_cost_cap: Vec<f64>,
    pub stage_budget_lo: Vec<f64>,
    pub stage_budget_hi: Vec<f64>,
    pub total_budget_lo: f64,
    pub total_budget_hi: f64,
    pub nominal: Vec<StageNominal>,
    /// Every uncertain entry is uniform on `[ratios[0], ratios[1]] * nominal`.
    pub ratios: [f64; 2],
}

/// Stage data split into its five blocks.
#[derive(Debug, Clone, Copy)]
pub struct Eta<'a> {
    pub demand: &'a [f64],
    pub order_cost: &'a [f64],
    pub holding_cost: &'a [f64],
    pub backlog_cost: &'a [f64],
    pub revenue: &'a [f64],
}

impl<'a> Eta<'a> {
    pub fn split(eta: &'a [f64], d: usize) -> Result<Self> {
        if eta.len() != 5 * d {
            return Err(Error::ModelContractViolation(format!(
                "stage data of length {} for d = {d}",
                eta.len()
            )));
        }
        Ok(Self {
            demand: &eta[..d],
            order_cost: &eta[d..2 * d],
            holding_cost: &eta[2 * d..3 * d],
            backlog_cost: &eta[3 * d..4 * d],
            revenue: &eta[4 * d..],
        })
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::BadInstance(msg.into())
}

fn check_len(name: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(bad(format!("{name} has length {}, expected {n}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(bad(format!("{name} has non-finite entries")));
    }
    Ok(())
}

fn check_per_stage(name: &str, v: &[Vec<f64>], k: usize, d: usize) -> Result<()> {
    if v.len() != k {
        return Err(bad(format!("{name} has {} stages, expected {k}", v.len())));
    }
    for (t, row) in v.iter().enumerate() {
        check_len(&format!("{name}[{}]", t + 1), row, d)?;
    }
    Ok(())
}

fn check_ordered(name: &str, lo: &[f64], hi: &[f64]) -> Result<()> {
    if let Some(i) = (0..lo.len()).find(|&i| lo[i] > hi[i]) {
        return Err(bad(format!("{name}: lower bound {} above upper bound {} at {i}", lo[i], hi[i])));
    }
    Ok(())
}

impl InventoryInstance {
    pub fn validate(&self) -> Result<()> {
        let (d, k) = (self.products, self.stages);
        if d == 0 || k == 0 {
            return Err(bad("need at least one product and one stage"));
        }
        check_len("z0", &self.z0, d)?;
        for (name, v) in [("z_lo", &self.z_lo), ("z_hi", &self.z_hi), ("x_lo", &self.x_lo), ("x_hi", &self.x_hi)] {
            check_per_stage(name, v, k, d)?;
        }
        for t in 0..k {
            check_ordered(&format!("z bounds at stage {}", t + 1), &self.z_lo[t], &self.z_hi[t])?;
            check_ordered(&format!("order bounds at stage {}", t + 1), &self.x_lo[t], &self.x_hi[t])?;
        }
        check_len("storage_weights", &self.storage_weights, d)?;
        if self.storage_weights.iter().any(|&s| s < 0.0) {
            return Err(bad("storage weights must be nonnegative"));
        }
        if !self.storage_capacity.is_finite() {
            return Err(bad("storage capacity must be finite"));
        }
        check_len("stage_cost_cap", &self.stage_cost_cap, k)?;
        check_len("stage_budget_lo", &self.stage_budget_lo, k)?;
        check_len("stage_budget_hi", &self.stage_budget_hi, k)?;
        check_ordered("stage budgets", &self.stage_budget_lo, &self.stage_budget_hi)?;
        let capped: Vec<f64> = (0..k).map(|t| self.stage_budget_hi[t].min(self.stage_cost_cap[t])).collect();
        check_ordered("stage budget vs cost cap", &self.stage_budget_lo, &capped)?;
        if !(self.total_budget_lo.is_finite() && self.total_budget_hi.is_finite()) {
            return Err(bad("total budget bounds must be finite"));
        }
        check_ordered("total budget", &[self.total_budget_lo], &[self.total_budget_hi])?;
        let [r0, r1] = self.ratios;
        if !(r0.is_finite() && r1.is_finite() && 0.0 <= r0 && r0 <= r1) {
            return Err(bad(format!("ratios ({r0}, {r1}) must satisfy 0 <= lo <= hi")));
        }
        if self.nominal.len() != k {
            return Err(bad(format!("nominal data has {} stages, expected {k}", self.nominal.len())));
        }
        for (t, eta) in self.nominal.iter().enumerate() {
            let s = t + 1;
            check_len(&format!("demand[{s}]"), &eta.demand, d)?;
            check_len(&format!("order_cost[{s}]"), &eta.order_cost, d)?;
            check_len(&format!("holding_cost[{s}]"), &eta.holding_cost, d)?;
            check_len(&format!("backlog_cost[{s}]"), &eta.backlog_cost, d)?;
            check_len(&format!("revenue[{s}]"), &eta.revenue, d)?;
            if eta.demand.iter().any(|&v| v <= 0.0) {
                return Err(bad(format!("nominal demand at stage {s} must be positive")));
            }
            if eta.holding_cost.iter().chain(&eta.backlog_cost).any(|&v| v < 0.0) {
                return Err(bad(format!("holding and backlog costs at stage {s} must be nonnegative")));
            }
        }
        Ok(())
    }

    /// Strategic dimension `K (2d + 1) + 1`.
    pub fn dim(&self) -> usize {
        self.stages * (2 * self.products + 1) + 1
    }

    /// Offset of `l_t` (1-based stage).
    pub fn ell_offset(&self, t: usize) -> usize {
        (t - 1) * (2 * self.products + 1)
    }

    pub fn upper_offset(&self, t: usize) -> usize {
        self.ell_offset(t) + self.products
    }

    pub fn stage_budget_index(&self, t: usize) -> usize {
        self.ell_offset(t) + 2 * self.products
    }

    pub fn total_budget_index(&self) -> usize {
        self.dim() - 1
    }

    fn stage_budget_top(&self, t: usize) -> f64 {
        self.stage_budget_hi[t - 1].min(self.stage_cost_cap[t - 1])
    }

    /// Shipped example: four products over a year of monthly stages with
    /// seasonal demand, no backlog and no revenue.
    pub fn default_instance() -> Self {
        let (d, k) = (4usize, 12usize);
        let season = |t: usize, i: usize| (2.0 * PI * (t as f64 + 3.0 * i as f64) / 12.0).sin();
        let nominal = (1..=k)
            .map(|t| StageNominal {
                demand: (0..d).map(|i| 0.25 + 0.08 * season(t, i)).collect(),
                order_cost: (0..d).map(|i| 1.0 + 0.1 * i as f64 + 0.1 * season(t + 3, 0)).collect(),
                holding_cost: vec![0.05; d],
                backlog_cost: vec![1.0; d],
                revenue: vec![0.0; d],
            })
            .collect();
        Self {
            products: d,
            stages: k,
            z0: vec![0.3; d],
            z_lo: vec![vec![0.0; d]; k],
            z_hi: vec![vec![1.0; d]; k],
            x_lo: vec![vec![0.0; d]; k],
            x_hi: vec![vec![0.8; d]; k],
            storage_weights: vec![1.0; d],
            storage_capacity: 2.0,
            stage_cost_cap: vec![4.0; k],
            stage_budget_lo: vec![0.0; k],
            stage_budget_hi: vec![4.0; k],
            total_budget_lo: 0.0,
            total_budget_hi: 48.0,
            nominal,
            ratios: [0.7, 1.3],
        }
    }
}

/// Named view over the flat strategic vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategicDecisionView {
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
    pub stage_budget: Vec<f64>,
    pub total_budget: f64,
}

impl StrategicDecisionView {
    pub fn from_flat(inst: &InventoryInstance, y: &[f64]) -> Result<Self> {
        if y.len() != inst.dim() {
            return Err(Error::Dimension(format!("decision of length {} for n = {}", y.len(), inst.dim())));
        }
        let d = inst.products;
        let mut view = Self {
            lower: Vec::with_capacity(inst.stages),
            upper: Vec::with_capacity(inst.stages),
            stage_budget: Vec::with_capacity(inst.stages),
            total_budget: y[inst.total_budget_index()],
        };
        for t in 1..=inst.stages {
            let l = inst.ell_offset(t);
            view.lower.push(y[l..l + d].to_vec());
            view.upper.push(y[l + d..l + 2 * d].to_vec());
            view.stage_budget.push(y[l + 2 * d]);
        }
        Ok(view)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut y = Vec::new();
        for t in 0..self.lower.len() {
            y.extend_from_slice(&self.lower[t]);
            y.extend_from_slice(&self.upper[t]);
            y.push(self.stage_budget[t]);
        }
        y.push(self.total_budget);
        y
    }
}

/// Dense rows over `[y | x | w]` assembled from sparse entries.
struct RowSet {
    cols: usize,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

impl RowSet {
    fn new(cols: usize) -> Self {
        Self {
            cols,
            rows: Vec::new(),
            rhs: Vec::new(),
        }
    }

    fn push(&mut self, entries: &[(usize, f64)], rhs: f64) {
        let mut row = vec![0.0; self.cols];
        for &(j, v) in entries {
            row[j] += v;
        }
        self.rows.push(row);
        self.rhs.push(rhs);
    }

    /// Splits the columns at `cuts` into consecutive blocks.
    fn split(self, cuts: &[usize]) -> Result<(Vec<Mat>, Vec<f64>)> {
        let mut bounds = vec![0];
        bounds.extend_from_slice(cuts);
        bounds.push(self.cols);
        let blocks = bounds
            .windows(2)
            .map(|w| {
                let part: Vec<Vec<f64>> = self.rows.iter().map(|r| r[w[0]..w[1]].to_vec()).collect();
                Mat::from_rows(&part, w[1] - w[0])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((blocks, self.rhs))
    }
}

/// `Y`: ordered bands inside the level bounds, stage and total budgets in
/// range, and the storage limit on every upper band via auxiliary positive
/// parts. Returns the representation and its bounding box.
pub fn static_set(inst: &InventoryInstance) -> Result<(PolyhedralRep, Vec<f64>, Vec<f64>)> {
    inst.validate()?;
    let (d, k, n) = (inst.products, inst.stages, inst.dim());
    let mut rows = RowSet::new(n + d * k);
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for t in 1..=k {
        let (lt, ut) = (inst.ell_offset(t), inst.upper_offset(t));
        for i in 0..d {
            rows.push(&[(lt + i, 1.0), (ut + i, -1.0)], 0.0);
            rows.push(&[(lt + i, -1.0)], -inst.z_lo[t - 1][i]);
            rows.push(&[(ut + i, 1.0)], inst.z_hi[t - 1][i]);
            let v = n + (t - 1) * d + i;
            rows.push(&[(ut + i, 1.0), (v, -1.0)], 0.0);
            rows.push(&[(v, -1.0)], 0.0);
            lo[lt + i] = inst.z_lo[t - 1][i];
            hi[lt + i] = inst.z_hi[t - 1][i];
            lo[ut + i] = inst.z_lo[t - 1][i];
            hi[ut + i] = inst.z_hi[t - 1][i];
        }
        let storage: Vec<(usize, f64)> = (0..d).map(|i| (n + (t - 1) * d + i, inst.storage_weights[i])).collect();
        rows.push(&storage, inst.storage_capacity);
        let b = inst.stage_budget_index(t);
        rows.push(&[(b, -1.0)], -inst.stage_budget_lo[t - 1]);
        rows.push(&[(b, 1.0)], inst.stage_budget_top(t));
        lo[b] = inst.stage_budget_lo[t - 1];
        hi[b] = inst.stage_budget_top(t);
    }
    let w = inst.total_budget_index();
    rows.push(&[(w, -1.0)], -inst.total_budget_lo);
    rows.push(&[(w, 1.0)], inst.total_budget_hi);
    lo[w] = inst.total_budget_lo;
    hi[w] = inst.total_budget_hi;
    let (mut blocks, rhs) = rows.split(&[n])?;
    let c = blocks.pop().expect("two blocks");
    let a = blocks.pop().expect("two blocks");
    Ok((PolyhedralRep::new(a, c, rhs)?, lo, hi))
}

/// Rows of stage `t` with the order at columns `x..x+d`, the positive part
/// of `u_t` at `w..w+d` and of `-l_t` at `w+d..w+2d`.
fn push_stage_rows(rows: &mut RowSet, inst: &InventoryInstance, t: usize, eta: &Eta<'_>, x: usize, w: usize) {
    let d = inst.products;
    let (lt, ut) = (inst.ell_offset(t), inst.upper_offset(t));
    for i in 0..d {
        let dem = eta.demand[i];
        // l_{t-1} + x - dem >= l_t and u_{t-1} + x - dem <= u_t.
        if t == 1 {
            rows.push(&[(lt + i, 1.0), (x + i, -1.0)], inst.z0[i] - dem);
            rows.push(&[(x + i, 1.0), (ut + i, -1.0)], dem - inst.z0[i]);
        } else {
            let (lp, up) = (inst.ell_offset(t - 1), inst.upper_offset(t - 1));
            rows.push(&[(lt + i, 1.0), (lp + i, -1.0), (x + i, -1.0)], -dem);
            rows.push(&[(up + i, 1.0), (x + i, 1.0), (ut + i, -1.0)], dem);
        }
        rows.push(&[(ut + i, 1.0), (w + i, -1.0)], 0.0);
        rows.push(&[(w + i, -1.0)], 0.0);
        rows.push(&[(lt + i, -1.0), (w + d + i, -1.0)], 0.0);
        rows.push(&[(w + d + i, -1.0)], 0.0);
        rows.push(&[(x + i, 1.0)], inst.x_hi[t - 1][i]);
        rows.push(&[(x + i, -1.0)], -inst.x_lo[t - 1][i]);
    }
    let mut cost = cost_entries(eta, d, x, w);
    cost.push((inst.stage_budget_index(t), -1.0));
    rows.push(&cost, dot(eta.revenue, eta.demand));
}

fn cost_entries(eta: &Eta<'_>, d: usize, x: usize, w: usize) -> Vec<(usize, f64)> {
    let mut e = Vec::with_capacity(3 * d + 1);
    for i in 0..d {
        e.push((x + i, eta.order_cost[i]));
        e.push((w + i, eta.holding_cost[i]));
        e.push((w + d + i, eta.backlog_cost[i]));
    }
    e
}

/// Stage set for `t = 1..=K+1` given the data prefix.
pub fn stage_polyhedron(inst: &InventoryInstance, t: usize, prefix: &[Vec<f64>]) -> Result<StagePolyhedron> {
    let (d, k, n) = (inst.products, inst.stages, inst.dim());
    if t == 0 || t > k + 1 || prefix.len() < t.min(k) {
        return Err(Error::ModelContractViolation(format!(
            "stage {t} with a prefix of {} stages",
            prefix.len()
        )));
    }
    if t <= k {
        let eta = Eta::split(&prefix[t - 1], d)?;
        let mut rows = RowSet::new(n + 3 * d);
        push_stage_rows(&mut rows, inst, t, &eta, n, n + d);
        let (mut b, rhs) = rows.split(&[n, n + d])?;
        let c = b.pop().expect("three blocks");
        let x = b.pop().expect("three blocks");
        let a = b.pop().expect("three blocks");
        return StagePolyhedron::new(a, x, c, rhs);
    }
    let (xw, ww) = (n, n + d * k);
    let mut rows = RowSet::new(n + 3 * d * k);
    let mut total = Vec::new();
    let mut rhs = 0.0;
    for s in 1..=k {
        let eta = Eta::split(&prefix[s - 1], d)?;
        let (x, w) = (xw + (s - 1) * d, ww + (s - 1) * 2 * d);
        push_stage_rows(&mut rows, inst, s, &eta, x, w);
        total.extend(cost_entries(&eta, d, x, w));
        rhs += dot(eta.revenue, eta.demand);
    }
    total.push((inst.total_budget_index(), -1.0));
    rows.push(&total, rhs);
    let (mut b, rhs) = rows.split(&[n, ww])?;
    let c = b.pop().expect("three blocks");
    let x = b.pop().expect("three blocks");
    let a = b.pop().expect("three blocks");
    StagePolyhedron::new(a, x, c, rhs)
}

/// Scenario with stages `1..=K` holding `eta_t` and an empty final stage
/// (stage `K + 1` reads the whole prefix).
pub fn sample_scenario(inst: &InventoryInstance, rng: &mut dyn RngCore) -> Scenario {
    let [r0, r1] = inst.ratios;
    let mut stages: Vec<Vec<f64>> = inst
        .nominal
        .iter()
        .map(|eta| {
            flatten(eta)
                .into_iter()
                .map(|v| {
                    let u: f64 = rng.random();
                    v * (r0 + (r1 - r0) * u)
                })
                .collect()
        })
        .collect();
    stages.push(Vec::new());
    Scenario::new(stages).expect("finite data")
}

/// Scenario at the nominal data.
pub fn nominal_scenario(inst: &InventoryInstance) -> Scenario {
    let mut stages: Vec<Vec<f64>> = inst.nominal.iter().map(flatten).collect();
    stages.push(Vec::new());
    Scenario::new(stages).expect("finite data")
}

fn flatten(eta: &StageNominal) -> Vec<f64> {
    [&eta.demand, &eta.order_cost, &eta.holding_cost, &eta.backlog_cost, &eta.revenue]
        .into_iter()
        .flat_map(|v| v.iter().copied())
        .collect()
}

struct InventorySource {
    inst: Arc<InventoryInstance>,
}

impl ScenarioSource for InventorySource {
    fn stages(&self) -> usize {
        self.inst.stages + 1
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Scenario {
        sample_scenario(&self.inst, rng)
    }

    fn stage_polyhedron(&self, t: usize, prefix: &[Vec<f64>]) -> Result<StagePolyhedron> {
        stage_polyhedron(&self.inst, t, prefix)
    }
}

pub fn build_model(inst: &InventoryInstance) -> Result<SemiStochasticModel> {
    let (rep, lo, hi) = static_set(inst)?;
    let source = InventorySource {
        inst: Arc::new(inst.clone()),
    };
    SemiStochasticModel::new(rep, lo, hi, Arc::new(source))
}

/// Greedy run of the local decisions on one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRun {
    pub orders: Vec<Vec<f64>>,
    pub stage_costs: Vec<f64>,
    pub total_cost: f64,
    pub feasible: bool,
    pub failed_stage: Option<usize>,
}

/// At every stage, the cheapest order keeping the level inside the band;
/// the stage fails if no order does or if its cost exceeds the stage
/// budget. The problem separates by product, so each order is an endpoint
/// of its admissible interval.
pub fn greedy_local_policy(inst: &InventoryInstance, y: &[f64], scenario: &Scenario) -> Result<PolicyRun> {
    let view = StrategicDecisionView::from_flat(inst, y)?;
    let (d, k) = (inst.products, inst.stages);
    if scenario.num_stages() < k {
        return Err(Error::ModelContractViolation(format!(
            "scenario has {} stages, instance has {k}",
            scenario.num_stages()
        )));
    }
    let mut run = PolicyRun {
        orders: Vec::with_capacity(k),
        stage_costs: Vec::with_capacity(k),
        total_cost: 0.0,
        feasible: true,
        failed_stage: None,
    };
    for t in 1..=k {
        let eta = Eta::split(scenario.stage(t), d)?;
        let (l, u) = (&view.lower[t - 1], &view.upper[t - 1]);
        let mut x = vec![0.0; d];
        let mut ok = true;
        for i in 0..d {
            let (lp, up) = if t == 1 {
                (inst.z0[i], inst.z0[i])
            } else {
                (view.lower[t - 2][i], view.upper[t - 2][i])
            };
            let lo = inst.x_lo[t - 1][i].max(eta.demand[i] + l[i] - lp);
            let hi = inst.x_hi[t - 1][i].min(eta.demand[i] + u[i] - up);
            if lo > hi + POLICY_TOL * (1.0 + lo.abs()) {
                ok = false;
                break;
            }
            x[i] = if eta.order_cost[i] >= 0.0 { lo.min(hi) } else { hi };
        }
        if !ok {
            run.feasible = false;
            run.failed_stage = Some(t);
            return Ok(run);
        }
        let cost: f64 = (0..d)
            .map(|i| {
                eta.order_cost[i] * x[i] + eta.holding_cost[i] * u[i].max(0.0) + eta.backlog_cost[i] * (-l[i]).max(0.0)
                    - eta.revenue[i] * eta.demand[i]
            })
            .sum();
        run.orders.push(x);
        run.stage_costs.push(cost);
        run.total_cost += cost;
        let budget = view.stage_budget[t - 1];
        if cost > budget + POLICY_TOL * (1.0 + budget.abs()) {
            run.feasible = false;
            run.failed_stage = Some(t);
            return Ok(run);
        }
    }
    Ok(run)
}

/// Hindsight-optimal cost of serving the scenario: one LP over orders and
/// split levels `z_t = z_t^+ - z_t^-` with the level bounds, storage limit,
/// order boxes and, when `enforce_caps` is set, the per-stage cost caps.
pub fn utopian_cost(inst: &InventoryInstance, scenario: &Scenario, enforce_caps: bool) -> Result<f64> {
    inst.validate()?;
    let (d, k) = (inst.products, inst.stages);
    if scenario.num_stages() < k {
        return Err(Error::ModelContractViolation(format!(
            "scenario has {} stages, instance has {k}",
            scenario.num_stages()
        )));
    }
    // Columns per stage: x, z+, z-.
    let nv = 3 * d * k;
    let col = |t: usize, part: usize, i: usize| 3 * d * (t - 1) + part * d + i;
    let mut rows = RowSet::new(nv);
    let mut c = vec![0.0; nv];
    let mut lo = vec![0.0; nv];
    let mut hi = vec![f64::INFINITY; nv];
    let mut constant = 0.0;
    for t in 1..=k {
        let eta = Eta::split(scenario.stage(t), d)?;
        let mut stage_cost = Vec::with_capacity(3 * d);
        for i in 0..d {
            let (x, zp, zm) = (col(t, 0, i), col(t, 1, i), col(t, 2, i));
            lo[x] = inst.x_lo[t - 1][i];
            hi[x] = inst.x_hi[t - 1][i];
            c[x] = eta.order_cost[i];
            c[zp] = eta.holding_cost[i];
            c[zm] = eta.backlog_cost[i];
            // z_t - z_{t-1} - x = -dem
            let mut bal = vec![(zp, 1.0), (zm, -1.0), (x, -1.0)];
            let mut rhs = -eta.demand[i];
            if t == 1 {
                rhs += inst.z0[i];
            } else {
                bal.push((col(t - 1, 1, i), -1.0));
                bal.push((col(t - 1, 2, i), 1.0));
            }
            let neg: Vec<(usize, f64)> = bal.iter().map(|&(j, v)| (j, -v)).collect();
            rows.push(&bal, rhs);
            rows.push(&neg, -rhs);
            rows.push(&[(zp, 1.0), (zm, -1.0)], inst.z_hi[t - 1][i]);
            rows.push(&[(zp, -1.0), (zm, 1.0)], -inst.z_lo[t - 1][i]);
            stage_cost.extend([(x, eta.order_cost[i]), (zp, eta.holding_cost[i]), (zm, eta.backlog_cost[i])]);
        }
        let storage: Vec<(usize, f64)> = (0..d).map(|i| (col(t, 1, i), inst.storage_weights[i])).collect();
        rows.push(&storage, inst.storage_capacity);
        let income = dot(eta.revenue, eta.demand);
        constant -= income;
        if enforce_caps {
            rows.push(&stage_cost, inst.stage_cost_cap[t - 1] + income);
        }
    }
    let (mut g, h) = rows.split(&[])?;
    let lp = LinearProgram::new(c, g.pop().expect("one block"), h).with_bounds(lo, hi);
    match solve_lp(&lp)? {
        LpOutcome::Optimal(sol) => Ok(sol.value + constant),
        LpOutcome::Infeasible(_) => Err(Error::ClairvoyantInfeasible),
        LpOutcome::Unbounded { .. } => Err(Error::NumericalFailure {
            iterations: 0,
            detail: "clairvoyant program reported unbounded".into(),
        }),
    }
}
