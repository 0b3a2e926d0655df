//! Dense bounded-variable primal simplex.
//!
//! Solves `min c^T z  s.t.  G z <= h,  lo <= z <= hi` (bounds may be
//! infinite) and classifies the outcome exactly: an optimal vertex, a Farkas
//! certificate of infeasibility, or an unbounded ray. Phase one minimizes
//! the sum of artificials; at a positive phase-one optimum the negated row
//! duals are the Farkas multipliers.
//!
//! Pricing is Dantzig's rule with lowest-index tie breaking. After a run of
//! degenerate pivots the solver switches to Bland's rule until the objective
//! moves again, which guarantees termination.

use crate::error::{Error, Result};
use crate::geometry::{dot, norm1, norm_inf, Mat};

/// Relative primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-8;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 40;
const DEGENERATE_STREAK: usize = 30;

/// `min c^T z  s.t.  G z <= h,  lo <= z <= hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub c: Vec<f64>,
    pub g: Mat,
    pub h: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl LinearProgram {
    /// Program with free variables.
    pub fn new(c: Vec<f64>, g: Mat, h: Vec<f64>) -> Self {
        let n = c.len();
        Self {
            c,
            g,
            h,
            lo: vec![f64::NEG_INFINITY; n],
            hi: vec![f64::INFINITY; n],
        }
    }

    pub fn with_bounds(mut self, lo: Vec<f64>, hi: Vec<f64>) -> Self {
        self.lo = lo;
        self.hi = hi;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.h.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.c.len();
        if self.g.cols() != n || self.g.rows() != self.h.len() || self.lo.len() != n || self.hi.len() != n
        {
            return Err(Error::Dimension(format!(
                "LP with {n} variables: G is {}x{}, h {}, bounds {}/{}",
                self.g.rows(),
                self.g.cols(),
                self.h.len(),
                self.lo.len(),
                self.hi.len()
            )));
        }
        if self.c.iter().any(|x| !x.is_finite())
            || self.h.iter().any(|x| x.is_nan())
            || !self.g.is_finite()
        {
            return Err(Error::Dimension("non-finite LP data".into()));
        }
        if self.lo.iter().any(|&l| l == f64::INFINITY) || self.hi.iter().any(|&u| u == f64::NEG_INFINITY) {
            return Err(Error::Dimension("bound at the wrong infinity".into()));
        }
        Ok(())
    }

    /// Scale used by the relative feasibility tolerance.
    pub fn scale(&self) -> f64 {
        let hb = norm_inf(&self.h);
        let bb = self
            .lo
            .iter()
            .chain(&self.hi)
            .filter(|x| x.is_finite())
            .fold(0.0f64, |m, x| m.max(x.abs()));
        1.0 + hb.max(bb)
    }
}

/// Multipliers certifying that `G z <= h, lo <= z <= hi` has no solution:
/// all entries are nonnegative, `rows^T G - lower + upper = 0` and
/// `rows^T h - lower^T lo + upper^T hi < 0`. L1-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct FarkasCertificate {
    pub rows: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl FarkasCertificate {
    /// `rows^T G - lower + upper`, which should vanish.
    pub fn residual(&self, lp: &LinearProgram) -> Vec<f64> {
        let mut r = lp.g.tr_mul_vec(&self.rows);
        for j in 0..r.len() {
            r[j] += self.upper[j] - self.lower[j];
        }
        r
    }

    /// Right-hand side of the aggregated inequality; negative for a valid
    /// certificate.
    pub fn aggregated_rhs(&self, lp: &LinearProgram) -> f64 {
        let mut v = dot(&self.rows, &lp.h);
        for j in 0..lp.num_vars() {
            if self.lower[j] > 0.0 {
                v -= self.lower[j] * lp.lo[j];
            }
            if self.upper[j] > 0.0 {
                v += self.upper[j] * lp.hi[j];
            }
        }
        v
    }

    fn normalize(&mut self) {
        let s = norm1(&self.rows) + norm1(&self.lower) + norm1(&self.upper);
        if s > 0.0 {
            for v in self.rows.iter_mut().chain(&mut self.lower).chain(&mut self.upper) {
                *v /= s;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub z: Vec<f64>,
    pub value: f64,
    /// Row multipliers `lambda >= 0` of the optimal basis.
    pub row_duals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible(FarkasCertificate),
    Unbounded { ray: Vec<f64> },
}

impl LpOutcome {
    pub fn optimal(&self) -> Option<&LpSolution> {
        match self {
            LpOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpOutcome> {
    lp.validate()?;
    Simplex::new(lp).run()
}

/// Outcome of a pure feasibility check `G z <= h` with free `z`.
#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible(Vec<f64>),
    /// L1-normalized row multipliers `lambda >= 0` with `lambda^T G ~ 0` and
    /// `lambda^T h < 0`.
    Infeasible(Vec<f64>),
}

/// Phase-one feasibility of `G z <= h` over free variables.
///
/// Rows with a single nonzero coefficient are turned into variable bounds
/// before the simplex runs, and bound multipliers of the certificate are
/// mapped back onto the rows that produced them.
pub fn lp_feasible(g: &Mat, h: &[f64]) -> Result<Feasibility> {
    if g.rows() != h.len() {
        return Err(Error::Dimension(format!(
            "G has {} rows, h has {}",
            g.rows(),
            h.len()
        )));
    }
    let n = g.cols();
    let m = g.rows();
    let tol = FEAS_TOL * (1.0 + norm_inf(h));
    let mut lo = vec![f64::NEG_INFINITY; n];
    let mut hi = vec![f64::INFINITY; n];
    let mut lo_src: Vec<Option<(usize, f64)>> = vec![None; n];
    let mut hi_src: Vec<Option<(usize, f64)>> = vec![None; n];
    let mut kept = Vec::new();

    let mut worst_empty: Option<(usize, f64)> = None;
    for i in 0..m {
        let row = g.row(i);
        let mut nz = row.iter().enumerate().filter(|(_, v)| **v != 0.0);
        match (nz.next(), nz.next()) {
            (None, _) => {
                // Rows without variables are checked on their own scale.
                if h[i] < -FEAS_TOL * (1.0 + h[i].abs()) && worst_empty.is_none_or(|(_, v)| h[i] < v) {
                    worst_empty = Some((i, h[i]));
                }
            }
            (Some((j, &coef)), None) => {
                let bound = h[i] / coef;
                if coef > 0.0 {
                    if bound < hi[j] {
                        hi[j] = bound;
                        hi_src[j] = Some((i, coef));
                    }
                } else if bound > lo[j] {
                    lo[j] = bound;
                    lo_src[j] = Some((i, -coef));
                }
            }
            _ => kept.push(i),
        }
    }
    if let Some((i, _)) = worst_empty {
        let mut lambda = vec![0.0; m];
        lambda[i] = 1.0;
        return Ok(Feasibility::Infeasible(lambda));
    }
    for j in 0..n {
        if lo[j] > hi[j] {
            let (il, cl) = lo_src[j].expect("finite lower bound has a source row");
            let (ih, ch) = hi_src[j].expect("finite upper bound has a source row");
            // Scale-aware: compare the crossing against the row data.
            let gap = lo[j] - hi[j];
            if gap * cl.min(ch) > tol {
                let mut lambda = vec![0.0; m];
                lambda[il] += 1.0 / cl;
                lambda[ih] += 1.0 / ch;
                let s = norm1(&lambda);
                lambda.iter_mut().for_each(|v| *v /= s);
                return Ok(Feasibility::Infeasible(lambda));
            }
            let mid = 0.5 * (lo[j] + hi[j]);
            lo[j] = mid;
            hi[j] = mid;
        }
    }

    let mut rg = Mat::zeros(0, n);
    let mut rh = Vec::with_capacity(kept.len());
    for &i in &kept {
        rg.push_row(g.row(i));
        rh.push(h[i]);
    }
    let lp = LinearProgram::new(vec![0.0; n], rg, rh).with_bounds(lo, hi);
    match solve_lp(&lp)? {
        LpOutcome::Optimal(sol) => Ok(Feasibility::Feasible(sol.z)),
        LpOutcome::Infeasible(cert) => {
            let mut lambda = vec![0.0; m];
            for (k, &i) in kept.iter().enumerate() {
                lambda[i] += cert.rows[k];
            }
            for j in 0..n {
                if cert.lower[j] > 0.0 {
                    if let Some((i, c)) = lo_src[j] {
                        lambda[i] += cert.lower[j] / c;
                    }
                }
                if cert.upper[j] > 0.0 {
                    if let Some((i, c)) = hi_src[j] {
                        lambda[i] += cert.upper[j] / c;
                    }
                }
            }
            let s = norm1(&lambda);
            if s > 0.0 {
                lambda.iter_mut().for_each(|v| *v /= s);
            }
            Ok(Feasibility::Infeasible(lambda))
        }
        LpOutcome::Unbounded { .. } => Err(Error::NumericalFailure {
            iterations: 0,
            detail: "feasibility problem reported unbounded".into(),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Status {
    Basic(usize),
    AtLower,
    AtUpper,
    FreeZero,
}

struct Simplex<'a> {
    lp: &'a LinearProgram,
    n: usize,
    m: usize,
    /// Column-major copy of G.
    gcols: Vec<f64>,
    /// Row of each artificial column (coefficient -1).
    art_rows: Vec<usize>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    x: Vec<f64>,
    status: Vec<Status>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    iterations: usize,
    max_iterations: usize,
    scale: f64,
}

enum PhaseEnd {
    Optimal,
    Unbounded(Vec<f64>),
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a LinearProgram) -> Self {
        let n = lp.num_vars();
        let m = lp.num_rows();
        let mut gcols = vec![0.0; n * m];
        for i in 0..m {
            for (j, &v) in lp.g.row(i).iter().enumerate() {
                gcols[j * m + i] = v;
            }
        }
        let scale = lp.scale();
        let mut lb: Vec<f64> = lp.lo.clone();
        let mut ub: Vec<f64> = lp.hi.clone();
        let mut x = vec![0.0; n];
        let mut status = Vec::with_capacity(n + 2 * m);
        for j in 0..n {
            if lb[j] > ub[j] {
                // Crossed bounds are handled by the phase-one certificate via
                // an artificial row; keep the variable at its lower bound.
            }
            let (v, s) = if lb[j].is_finite() {
                (lb[j], Status::AtLower)
            } else if ub[j].is_finite() {
                (ub[j], Status::AtUpper)
            } else {
                (0.0, Status::FreeZero)
            };
            x[j] = v;
            status.push(s);
        }
        // Row residuals at the starting point.
        let mut resid = lp.h.clone();
        for j in 0..n {
            if x[j] != 0.0 {
                for i in 0..m {
                    resid[i] -= gcols[j * m + i] * x[j];
                }
            }
        }
        let feas = FEAS_TOL * scale;
        let mut basis = vec![0usize; m];
        let mut binv = vec![0.0; m * m];
        let mut art_rows = Vec::new();
        // Slacks.
        for i in 0..m {
            lb.push(0.0);
            ub.push(f64::INFINITY);
            if resid[i] >= -feas {
                x.push(resid[i].max(0.0));
                status.push(Status::Basic(i));
                basis[i] = n + i;
                binv[i * m + i] = 1.0;
            } else {
                x.push(0.0);
                status.push(Status::AtLower);
                art_rows.push(i);
            }
        }
        for (k, &i) in art_rows.iter().enumerate() {
            let j = n + m + k;
            lb.push(0.0);
            ub.push(f64::INFINITY);
            x.push(-resid[i]);
            status.push(Status::Basic(i));
            basis[i] = j;
            binv[i * m + i] = -1.0;
        }
        let max_iterations = 50 * (m + n).max(1) + 100;
        Self {
            lp,
            n,
            m,
            gcols,
            art_rows,
            lb,
            ub,
            x,
            status,
            basis,
            binv,
            iterations: 0,
            max_iterations,
            scale,
        }
    }

    fn num_cols(&self) -> usize {
        self.n + self.m + self.art_rows.len()
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if j < self.n {
            out.copy_from_slice(&self.gcols[j * self.m..(j + 1) * self.m]);
        } else if j < self.n + self.m {
            out[j - self.n] = 1.0;
        } else {
            out[self.art_rows[j - self.n - self.m]] = -1.0;
        }
    }

    /// `a_j^T y`
    fn col_dot(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            dot(&self.gcols[j * self.m..(j + 1) * self.m], y)
        } else if j < self.n + self.m {
            y[j - self.n]
        } else {
            -y[self.art_rows[j - self.n - self.m]]
        }
    }

    fn ftran(&self, col: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m];
        for (k, &c) in col.iter().enumerate() {
            if c != 0.0 {
                for i in 0..m {
                    out[i] += self.binv[i * m + k] * c;
                }
            }
        }
        out
    }

    /// `y^T = c_B^T B^{-1}`
    fn btran(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for i in 0..m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for k in 0..m {
                    y[k] += cb * row[k];
                }
            }
        }
        y
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        if m == 0 {
            return Ok(());
        }
        // Gauss-Jordan on [B | I].
        let mut b = vec![0.0; m * m];
        let mut col = vec![0.0; m];
        for (pos, &j) in self.basis.iter().enumerate() {
            self.column(j, &mut col);
            for i in 0..m {
                b[i * m + pos] = col[i];
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for k in 0..m {
            let (p, pv) = (k..m)
                .map(|i| (i, b[i * m + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pv < 1e-13 {
                return Err(Error::NumericalFailure {
                    iterations: self.iterations,
                    detail: "singular basis".into(),
                });
            }
            if p != k {
                for c in 0..m {
                    b.swap(k * m + c, p * m + c);
                    inv.swap(k * m + c, p * m + c);
                }
            }
            let d = b[k * m + k];
            for c in 0..m {
                b[k * m + c] /= d;
                inv[k * m + c] /= d;
            }
            for i in 0..m {
                if i != k {
                    let f = b[i * m + k];
                    if f != 0.0 {
                        for c in 0..m {
                            b[i * m + c] -= f * b[k * m + c];
                            inv[i * m + c] -= f * inv[k * m + c];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        self.recompute_basics();
        Ok(())
    }

    fn recompute_basics(&mut self) {
        let m = self.m;
        let mut rhs = self.lp.h.clone();
        let mut col = vec![0.0; m];
        for j in 0..self.num_cols() {
            if !matches!(self.status[j], Status::Basic(_)) && self.x[j] != 0.0 {
                self.column(j, &mut col);
                for i in 0..m {
                    rhs[i] -= col[i] * self.x[j];
                }
            }
        }
        let xb = self.ftran(&rhs);
        for (i, &j) in self.basis.iter().enumerate() {
            self.x[j] = xb[i];
        }
    }

    fn pivot(&mut self, r: usize, alpha: &[f64]) {
        let m = self.m;
        let p = alpha[r];
        for c in 0..m {
            self.binv[r * m + c] /= p;
        }
        let (head, rest) = self.binv.split_at_mut(r * m);
        let (prow, tail) = rest.split_at_mut(m);
        for i in 0..m {
            if i == r || alpha[i] == 0.0 {
                continue;
            }
            let f = alpha[i];
            let row = if i < r {
                &mut head[i * m..(i + 1) * m]
            } else {
                &mut tail[(i - r - 1) * m..(i - r) * m]
            };
            for c in 0..m {
                row[c] -= f * prow[c];
            }
        }
    }

    fn run_phase(&mut self, cost: &[f64]) -> Result<PhaseEnd> {
        let m = self.m;
        let ncols = self.num_cols();
        let dual_tol = DUAL_TOL * (1.0 + norm_inf(cost));
        let mut degenerate = 0usize;
        let mut since_refactor = 0usize;
        let mut col = vec![0.0; m];
        loop {
            self.iterations += 1;
            if self.iterations > self.max_iterations {
                return Err(Error::NumericalFailure {
                    iterations: self.iterations,
                    detail: format!("iteration cap on a {}x{} program", m, self.n),
                });
            }
            if since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
                since_refactor = 0;
            }
            let bland = degenerate >= DEGENERATE_STREAK;
            let y = self.btran(cost);

            let mut entering: Option<(usize, f64, f64)> = None; // (j, dir, |d|)
            for j in 0..ncols {
                let st = self.status[j];
                if matches!(st, Status::Basic(_)) || self.lb[j] == self.ub[j] {
                    continue;
                }
                let d = cost[j] - self.col_dot(j, &y);
                let dir = match st {
                    Status::AtLower if d < -dual_tol => 1.0,
                    Status::AtUpper if d > dual_tol => -1.0,
                    Status::FreeZero if d.abs() > dual_tol => -d.signum(),
                    _ => continue,
                };
                if bland {
                    entering = Some((j, dir, d.abs()));
                    break;
                }
                if entering.is_none_or(|(_, _, best)| d.abs() > best) {
                    entering = Some((j, dir, d.abs()));
                }
            }
            let Some((q, dir, _)) = entering else {
                return Ok(PhaseEnd::Optimal);
            };

            self.column(q, &mut col);
            let alpha = self.ftran(&col);

            let mut t_best = if self.lb[q].is_finite() && self.ub[q].is_finite() {
                self.ub[q] - self.lb[q]
            } else {
                f64::INFINITY
            };
            let mut leave: Option<(usize, bool)> = None; // (row, to_upper)
            let mut best_piv = 0.0;
            for i in 0..m {
                let a = alpha[i];
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let b = self.basis[i];
                let delta = -dir * a;
                let (t, to_upper) = if delta < 0.0 {
                    if !self.lb[b].is_finite() {
                        continue;
                    }
                    (((self.x[b] - self.lb[b]) / -delta).max(0.0), false)
                } else {
                    if !self.ub[b].is_finite() {
                        continue;
                    }
                    (((self.ub[b] - self.x[b]) / delta).max(0.0), true)
                };
                let tie_eps = 1e-12 * (1.0 + t_best.abs().min(1e12));
                let better = match leave {
                    _ if t < t_best - tie_eps => true,
                    Some((r, _)) if t <= t_best + tie_eps => {
                        if bland {
                            b < self.basis[r]
                        } else {
                            a.abs() > best_piv
                        }
                    }
                    None if t <= t_best + tie_eps && t_best.is_finite() => {
                        // Prefer a basis change over a bound flip on ties.
                        true
                    }
                    _ => false,
                };
                if better {
                    t_best = t.min(t_best);
                    leave = Some((i, to_upper));
                    best_piv = a.abs();
                }
            }
            if !t_best.is_finite() {
                let mut ray = vec![0.0; self.n];
                if q < self.n {
                    ray[q] = dir;
                }
                for i in 0..m {
                    let b = self.basis[i];
                    if b < self.n {
                        ray[b] = -dir * alpha[i];
                    }
                }
                return Ok(PhaseEnd::Unbounded(ray));
            }

            let t = t_best;
            if t <= 1e-12 * self.scale {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.x[q] += dir * t;
            for i in 0..m {
                let b = self.basis[i];
                self.x[b] -= dir * t * alpha[i];
            }
            match leave {
                None => {
                    // Bound flip.
                    if dir > 0.0 {
                        self.x[q] = self.ub[q];
                        self.status[q] = Status::AtUpper;
                    } else {
                        self.x[q] = self.lb[q];
                        self.status[q] = Status::AtLower;
                    }
                }
                Some((r, to_upper)) => {
                    let b = self.basis[r];
                    if to_upper {
                        self.x[b] = self.ub[b];
                        self.status[b] = Status::AtUpper;
                    } else {
                        self.x[b] = self.lb[b];
                        self.status[b] = Status::AtLower;
                    }
                    self.pivot(r, &alpha);
                    self.basis[r] = q;
                    self.status[q] = Status::Basic(r);
                    since_refactor += 1;
                }
            }
        }
    }

    fn run(mut self) -> Result<LpOutcome> {
        let n = self.n;
        let m = self.m;
        let ncols = self.num_cols();
        let feas = FEAS_TOL * self.scale;

        // Crossed variable bounds: immediate certificate.
        for j in 0..n {
            if self.lb[j] > self.ub[j] + feas {
                let mut cert = FarkasCertificate {
                    rows: vec![0.0; m],
                    lower: vec![0.0; n],
                    upper: vec![0.0; n],
                };
                cert.lower[j] = 1.0;
                cert.upper[j] = 1.0;
                cert.normalize();
                return Ok(LpOutcome::Infeasible(cert));
            }
        }

        if !self.art_rows.is_empty() {
            let mut cost = vec![0.0; ncols];
            for c in cost.iter_mut().skip(n + m) {
                *c = 1.0;
            }
            match self.run_phase(&cost)? {
                PhaseEnd::Optimal => {}
                PhaseEnd::Unbounded(_) => {
                    return Err(Error::NumericalFailure {
                        iterations: self.iterations,
                        detail: "phase one unbounded".into(),
                    })
                }
            }
            self.refactor()?;
            let infeas: f64 = (n + m..ncols).map(|j| self.x[j].max(0.0)).sum();
            if infeas > feas {
                return Ok(LpOutcome::Infeasible(self.farkas(&cost)));
            }
            // Pin artificials at zero for phase two.
            for j in n + m..ncols {
                self.ub[j] = 0.0;
                if !matches!(self.status[j], Status::Basic(_)) {
                    self.x[j] = 0.0;
                    self.status[j] = Status::AtLower;
                }
            }
        }

        let mut cost = vec![0.0; ncols];
        cost[..n].copy_from_slice(&self.lp.c);
        match self.run_phase(&cost)? {
            PhaseEnd::Unbounded(mut ray) => {
                let s = crate::geometry::norm2(&ray);
                if s > 0.0 {
                    ray.iter_mut().for_each(|v| *v /= s);
                }
                Ok(LpOutcome::Unbounded { ray })
            }
            PhaseEnd::Optimal => {
                self.refactor()?;
                let z: Vec<f64> = self.x[..n].to_vec();
                let value = dot(&self.lp.c, &z);
                let y = self.btran(&cost);
                let row_duals = y.iter().map(|v| (-v).max(0.0)).collect();
                Ok(LpOutcome::Optimal(LpSolution {
                    z,
                    value,
                    row_duals,
                }))
            }
        }
    }

    fn farkas(&self, cost: &[f64]) -> FarkasCertificate {
        let n = self.n;
        let y = self.btran(cost);
        let rows: Vec<f64> = y.iter().map(|v| (-v).max(0.0)).collect();
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for j in 0..n {
            // Reduced cost of z_j under zero phase-one cost.
            let d = dot(&self.gcols[j * self.m..(j + 1) * self.m], &rows);
            if d > 0.0 && self.lb[j].is_finite() {
                lower[j] = d;
            } else if d < 0.0 && self.ub[j].is_finite() {
                upper[j] = -d;
            }
        }
        let mut cert = FarkasCertificate { rows, lower, upper };
        cert.normalize();
        cert
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Mat {
        let cols = rows.first().map_or(0, |r| r.len());
        Mat::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), cols).unwrap()
    }

    #[test]
    fn simple_optimum() {
        // min z s.t. z >= 1, z <= 3
        let lp = LinearProgram::new(vec![1.0], mat(&[&[-1.0], &[1.0]]), vec![-1.0, 3.0]);
        let sol = solve_lp(&lp).unwrap();
        let s = sol.optimal().unwrap();
        assert!((s.z[0] - 1.0).abs() < 1e-12);
        assert!((s.value - 1.0).abs() < 1e-12);
        assert!((s.row_duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_rows_give_balanced_certificate() {
        // min 0 s.t. -z <= -2, z <= 1
        let lp = LinearProgram::new(vec![0.0], mat(&[&[-1.0], &[1.0]]), vec![-2.0, 1.0]);
        match solve_lp(&lp).unwrap() {
            LpOutcome::Infeasible(cert) => {
                assert!((cert.rows[0] - 0.5).abs() < 1e-12);
                assert!((cert.rows[1] - 0.5).abs() < 1e-12);
                assert!(cert.aggregated_rhs(&lp) < -1e-9);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn unbounded_ray() {
        // min -z, z >= 0
        let lp = LinearProgram::new(vec![-1.0], Mat::zeros(0, 1), vec![])
            .with_bounds(vec![0.0], vec![f64::INFINITY]);
        match solve_lp(&lp).unwrap() {
            LpOutcome::Unbounded { ray } => assert_eq!(ray, vec![1.0]),
            other => panic!("expected unbounded, got {other:?}"),
        }
        let lp = LinearProgram::new(vec![-1.0], mat(&[&[-1.0]]), vec![0.0]);
        match solve_lp(&lp).unwrap() {
            LpOutcome::Unbounded { ray } => assert!((ray[0] - 1.0).abs() < 1e-12),
            other => panic!("expected unbounded, got {other:?}"),
        }
    }

    #[test]
    fn crossed_bounds_are_infeasible() {
        let lp = LinearProgram::new(vec![0.0], Mat::zeros(0, 1), vec![])
            .with_bounds(vec![2.0], vec![1.0]);
        match solve_lp(&lp).unwrap() {
            LpOutcome::Infeasible(cert) => {
                assert!(cert.aggregated_rhs(&lp) < 0.0);
                assert!(norm_inf(&cert.residual(&lp)) < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn feasibility_examples() {
        let g = mat(&[&[1.0], &[-1.0]]);
        match lp_feasible(&g, &[1.0, 0.0]).unwrap() {
            Feasibility::Feasible(z) => assert!((0.0..=1.0).contains(&z[0])),
            f => panic!("{f:?}"),
        }
        match lp_feasible(&g, &[-2.0, 1.0]).unwrap() {
            Feasibility::Infeasible(l) => {
                assert!((l[0] - 0.5).abs() < 1e-12 && (l[1] - 0.5).abs() < 1e-12)
            }
            f => panic!("{f:?}"),
        }
        match lp_feasible(&Mat::zeros(0, 3), &[]).unwrap() {
            Feasibility::Feasible(z) => assert_eq!(z, vec![0.0; 3]),
            f => panic!("{f:?}"),
        }
    }

    #[test]
    fn zero_rows_and_zero_columns() {
        // 0 * z <= -1 is infeasible on its own.
        let g = mat(&[&[0.0, 0.0], &[1.0, 1.0]]);
        match lp_feasible(&g, &[-1.0, 5.0]).unwrap() {
            Feasibility::Infeasible(l) => assert_eq!(l, vec![1.0, 0.0]),
            f => panic!("{f:?}"),
        }
        // No variables at all.
        let g = Mat::zeros(2, 0);
        assert!(matches!(
            lp_feasible(&g, &[1.0, 0.0]).unwrap(),
            Feasibility::Feasible(_)
        ));
        match lp_feasible(&g, &[1.0, -3.0]).unwrap() {
            Feasibility::Infeasible(l) => assert_eq!(l, vec![0.0, 1.0]),
            f => panic!("{f:?}"),
        }
    }

    #[test]
    fn coupled_rows_certificate_is_valid() {
        // x + y <= 1, -x <= -1, -y <= -1
        let g = mat(&[&[1.0, 1.0], &[-1.0, 0.0], &[0.0, -1.0]]);
        let h = [1.0, -1.0, -1.0];
        match lp_feasible(&g, &h).unwrap() {
            Feasibility::Infeasible(l) => {
                assert!(l.iter().all(|v| *v >= 0.0));
                assert!((norm1(&l) - 1.0).abs() < 1e-12);
                assert!(norm_inf(&g.tr_mul_vec(&l)) < 1e-12);
                assert!(dot(&l, &h) < -1e-9);
            }
            f => panic!("{f:?}"),
        }
    }

    #[test]
    fn deterministic_outcomes() {
        let g = mat(&[&[1.0, 2.0], &[3.0, -1.0], &[-1.0, -1.0]]);
        let lp = LinearProgram::new(vec![1.0, -1.0], g, vec![4.0, 3.0, 1.0]);
        assert_eq!(solve_lp(&lp).unwrap(), solve_lp(&lp).unwrap());
    }

    #[test]
    fn bounded_variables_with_flip() {
        // max x + y over the box [0,1]^2 with x + y <= 1.5
        let lp = LinearProgram::new(vec![-1.0, -1.0], mat(&[&[1.0, 1.0]]), vec![1.5])
            .with_bounds(vec![0.0, 0.0], vec![1.0, 1.0]);
        let s = solve_lp(&lp).unwrap();
        let s = s.optimal().unwrap();
        assert!((s.value + 1.5).abs() < 1e-12);
    }
}
