//! Min-max of affine cuts over a ball, and projection onto a level set.
//!
//! Both programs reduce to Euclidean projections onto polyhedra, solved by a
//! dual active-set method (Goldfarb-Idnani with identity Hessian). The
//! min-max value is found by Newton's method on the distance from the ball
//! center to the sublevel polyhedron, which approaches the optimum from
//! below and yields a dual certificate at every step.

use crate::error::{Error, Result};
use crate::geometry::{axpy, dot, norm2, Ball, Separator};
use serde::{Deserialize, Serialize};

/// Ordered collection of cuts `f_r(y) = a_r^T y + alpha_r`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    cuts: Vec<Separator>,
}

impl Bundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, f: Separator) {
        self.cuts.push(f);
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    pub fn cuts(&self) -> &[Separator] {
        &self.cuts
    }

    /// `max_r f_r(y)`, or `-inf` for an empty bundle.
    pub fn eval_max(&self, y: &[f64]) -> f64 {
        self.cuts
            .iter()
            .map(|f| f.eval(y))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Dual value `sum λ_r (alpha_r + a_r^T c) - R ||sum λ_r a_r||` for weights
    /// on the simplex; a lower bound on the min-max over the ball.
    pub fn dual_value(&self, lambda: &[f64], ball: &Ball) -> f64 {
        let mut u = vec![0.0; ball.dim()];
        let mut v = 0.0;
        for (f, &l) in self.cuts.iter().zip(lambda) {
            if l != 0.0 {
                axpy(l, f.gradient(), &mut u);
                v += l * f.eval(&ball.center);
            }
        }
        v - ball.radius * norm2(&u)
    }
}

impl FromIterator<Separator> for Bundle {
    fn from_iter<I: IntoIterator<Item = Separator>>(iter: I) -> Self {
        Self {
            cuts: iter.into_iter().collect(),
        }
    }
}

/// Solution of the min-max program.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMax {
    /// Certified lower bound on the optimal value.
    pub delta: f64,
    /// Point of the ball; `max_r f_r(argmin) = upper`.
    pub argmin: Vec<f64>,
    pub upper: f64,
    /// Dual weights on the simplex.
    pub weights: Vec<f64>,
}

/// `min_{y in ball} max_r f_r(y)`.
pub fn min_max_over_ball(bundle: &Bundle, ball: &Ball) -> Result<(f64, Vec<f64>)> {
    let mm = solve_min_max(bundle, ball)?;
    Ok((mm.delta, mm.argmin))
}

pub fn solve_min_max(bundle: &Bundle, ball: &Ball) -> Result<MinMax> {
    if bundle.is_empty() {
        return Err(Error::EmptyBundle);
    }
    let n = ball.dim();
    if bundle.cuts.iter().any(|f| f.dim() != n) {
        return Err(Error::Dimension("bundle and ball dimensions differ".into()));
    }
    let r = ball.radius;
    let c = &ball.center;
    let shifted: Vec<f64> = bundle.cuts.iter().map(|f| f.eval(c)).collect();
    let grads: Vec<&[f64]> = bundle.cuts.iter().map(|f| f.gradient()).collect();
    let m = shifted.len();
    let tol = 1e-10 * (1.0 + r + shifted.iter().fold(0.0f64, |a, v| a.max(v.abs())));

    // Best single cut gives the starting lower bound.
    let (k0, _) = shifted
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (k, &v)| if v > b.1 { (k, v) } else { b });
    let mut weights = vec![0.0; m];
    weights[k0] = 1.0;
    let mut lower = shifted[k0] - r;
    let mut t = lower;
    let mut best: Option<(Vec<f64>, f64)> = None;

    for _ in 0..200 {
        let rhs: Vec<f64> = shifted.iter().map(|a| (t - a) / r).collect();
        let origin = vec![0.0; n];
        match project_onto_polyhedron(&origin, &grads, &rhs)? {
            PolyProjection::Infeasible { mult } => {
                let lam = simplex_weights(&mult, m);
                let dv = bundle.dual_value(&lam, ball);
                if dv > lower {
                    lower = dv;
                    weights = lam;
                }
                t = lower.max(t + 1e-12 * (1.0 + t.abs()));
            }
            PolyProjection::Point { x: v, mult } => {
                let nv = norm2(&v);
                if nv <= 1.0 + 1e-12 {
                    // The sublevel set reaches the ball: t is attained.
                    let y: Vec<f64> = c.iter().zip(&v).map(|(ci, vi)| ci + r * vi).collect();
                    let upper = bundle.eval_max(&y);
                    if !mult.is_empty() {
                        let lam = simplex_weights(&mult, m);
                        let dv = bundle.dual_value(&lam, ball);
                        if dv > lower {
                            lower = dv;
                            weights = lam;
                        }
                    }
                    lower = lower.max(t.min(upper));
                    return Ok(MinMax {
                        delta: lower.min(upper),
                        argmin: y,
                        upper,
                        weights,
                    });
                }
                let y: Vec<f64> = c.iter().zip(&v).map(|(ci, vi)| ci + r * vi / nv).collect();
                let upper = bundle.eval_max(&y);
                let total: f64 = mult.iter().map(|(_, u)| u).sum();
                let lam = simplex_weights(&mult, m);
                let dv = bundle.dual_value(&lam, ball);
                if dv > lower {
                    lower = dv;
                    weights = lam;
                }
                lower = lower.max(t);
                if best.as_ref().is_none_or(|(_, u)| upper < *u) {
                    best = Some((y, upper));
                }
                let (by, bu) = best.as_ref().expect("just set");
                if bu - lower <= tol {
                    return Ok(MinMax {
                        delta: lower,
                        argmin: by.clone(),
                        upper: *bu,
                        weights,
                    });
                }
                if total <= 0.0 {
                    break;
                }
                let next = t + 0.5 * (nv * nv - 1.0) * r / total;
                if next <= t {
                    break;
                }
                t = next.max(lower);
            }
        }
    }
    match best {
        Some((y, upper)) => Ok(MinMax {
            delta: lower,
            argmin: y,
            upper,
            weights,
        }),
        None => Err(Error::NumericalFailure {
            iterations: 200,
            detail: "min-max over ball did not converge".into(),
        }),
    }
}

fn simplex_weights(mult: &[(usize, f64)], m: usize) -> Vec<f64> {
    let mut lam = vec![0.0; m];
    let s: f64 = mult.iter().map(|(_, u)| u.max(0.0)).sum();
    for &(k, u) in mult {
        lam[k] += u.max(0.0) / s;
    }
    lam
}

/// Nearest point to `y_prev` in `{y in ball : max_r f_r(y) <= level}`.
pub fn project_to_level(y_prev: &[f64], bundle: &Bundle, level: f64, ball: &Ball) -> Result<Vec<f64>> {
    let n = ball.dim();
    if y_prev.len() != n || bundle.cuts.iter().any(|f| f.dim() != n) {
        return Err(Error::Dimension("projection inputs disagree in dimension".into()));
    }
    let grads: Vec<&[f64]> = bundle.cuts.iter().map(|f| f.gradient()).collect();
    let rhs: Vec<f64> = bundle.cuts.iter().map(|f| level - f.offset()).collect();
    let c = &ball.center;
    let r = ball.radius;
    let solve = |mu: f64| -> Result<Vec<f64>> {
        let target: Vec<f64> = y_prev
            .iter()
            .zip(c)
            .map(|(p, ci)| (p + mu * ci) / (1.0 + mu))
            .collect();
        match project_onto_polyhedron(&target, &grads, &rhs)? {
            PolyProjection::Point { x, .. } => Ok(x),
            PolyProjection::Infeasible { .. } => Err(Error::EmptyLevelSet { level }),
        }
    };
    let dist = |y: &[f64]| crate::geometry::dist2(y, c);

    let y0 = solve(0.0)?;
    if dist(&y0) <= r * (1.0 + 1e-12) {
        return Ok(y0);
    }
    // Ball constraint is active: find its multiplier.
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut y_hi = solve(hi)?;
    while dist(&y_hi) > r {
        lo = hi;
        hi *= 4.0;
        if hi > 1e14 {
            if dist(&y_hi) > r * (1.0 + 1e-9) {
                return Err(Error::EmptyLevelSet { level });
            }
            return Ok(y_hi);
        }
        y_hi = solve(hi)?;
    }
    while hi - lo > 1e-10 * (1.0 + lo) {
        let mid = 0.5 * (lo + hi);
        let y = solve(mid)?;
        if dist(&y) > r {
            lo = mid;
        } else {
            hi = mid;
            y_hi = y;
        }
    }
    Ok(y_hi)
}

/// Outcome of projecting onto `{x : g_j^T x <= b_j}`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum PolyProjection {
    /// Projection with its nonzero multipliers `(j, mu_j)`:
    /// `p - x = sum mu_j g_j`.
    Point { x: Vec<f64>, mult: Vec<(usize, f64)> },
    /// Nonnegative `mu` with `sum mu_j g_j = 0` and `sum mu_j b_j < 0`.
    Infeasible { mult: Vec<(usize, f64)> },
}

/// Orthonormal basis of the active normals with the triangular factor.
struct Factor {
    q: Vec<Vec<f64>>,
    /// Column j holds rows 0..=j.
    r: Vec<Vec<f64>>,
}

impl Factor {
    fn new() -> Self {
        Self {
            q: Vec::new(),
            r: Vec::new(),
        }
    }

    /// `(z, d)` with `z` the component of `v` orthogonal to the span and `d`
    /// the coordinates of the in-span part.
    fn split(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut z = v.to_vec();
        let mut d = vec![0.0; self.q.len()];
        for _ in 0..2 {
            for (k, qk) in self.q.iter().enumerate() {
                let s = dot(qk, &z);
                d[k] += s;
                axpy(-s, qk, &mut z);
            }
        }
        (z, d)
    }

    fn solve_r(&self, d: &[f64]) -> Vec<f64> {
        let q = d.len();
        let mut x = d.to_vec();
        for i in (0..q).rev() {
            for j in i + 1..q {
                x[i] -= self.r[j][i] * x[j];
            }
            x[i] /= self.r[i][i];
        }
        x
    }

    fn push(&mut self, v: &[f64]) -> bool {
        let (z, mut d) = self.split(v);
        let nz = norm2(&z);
        if nz <= 1e-12 * norm2(v).max(1e-300) {
            return false;
        }
        d.push(nz);
        self.q.push(z.into_iter().map(|x| x / nz).collect());
        self.r.push(d);
        true
    }

    fn rebuild<'a>(cols: impl Iterator<Item = &'a [f64]>) -> Self {
        let mut f = Self::new();
        for v in cols {
            f.push(v);
        }
        f
    }
}

/// Euclidean projection of `p` onto `{x : g_j^T x <= b_j}`.
pub(crate) fn project_onto_polyhedron(p: &[f64], g: &[&[f64]], b: &[f64]) -> Result<PolyProjection> {
    let n = p.len();
    let m = g.len();
    let mut x = p.to_vec();
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut normals: Vec<Vec<f64>> = Vec::new();
    let mut fac = Factor::new();
    let cap = 20 * (m + n) + 100;
    let mut steps = 0usize;
    let gnorm: Vec<f64> = g.iter().map(|gj| norm2(gj)).collect();

    // Slack of constraint j in `>=` orientation: b_j - g_j^T x.
    let slack = |x: &[f64], j: usize| b[j] - dot(g[j], x);

    loop {
        let xn = norm2(&x);
        let mut worst: Option<(usize, f64)> = None;
        for j in 0..m {
            if active.contains(&j) {
                continue;
            }
            let s = slack(&x, j);
            let tol = 1e-11 * (1.0 + b[j].abs() + gnorm[j] * xn);
            if s < -tol && worst.is_none_or(|(_, w)| s / gnorm[j] < w) {
                worst = Some((j, s / gnorm[j]));
            }
        }
        let Some((pj, _)) = worst else {
            let mult = active.iter().copied().zip(u.iter().copied()).filter(|(_, v)| *v > 0.0).collect();
            return Ok(PolyProjection::Point { x, mult });
        };
        // Normal in `>=` orientation.
        let nplus: Vec<f64> = g[pj].iter().map(|v| -v).collect();
        let mut uplus = 0.0;
        loop {
            steps += 1;
            if steps > cap {
                return Err(Error::NumericalFailure {
                    iterations: steps,
                    detail: "projection active-set cycling".into(),
                });
            }
            let (z, d) = fac.split(&nplus);
            let r = fac.solve_r(&d);
            let mut t1 = f64::INFINITY;
            let mut drop_k = None;
            for (k, &rk) in r.iter().enumerate() {
                if rk > 1e-14 {
                    let ratio = u[k] / rk;
                    if ratio < t1 {
                        t1 = ratio;
                        drop_k = Some(k);
                    }
                }
            }
            let zn2 = dot(&z, &nplus);
            let t2 = if norm2(&z) > 1e-12 * gnorm[pj] && zn2 > 0.0 {
                (-slack(&x, pj)).max(0.0) / zn2
            } else {
                f64::INFINITY
            };
            if t1.is_infinite() && t2.is_infinite() {
                let mut mult: Vec<(usize, f64)> = vec![(pj, 1.0)];
                for (k, &j) in active.iter().enumerate() {
                    if -r[k] > 0.0 {
                        mult.push((j, -r[k]));
                    }
                }
                return Ok(PolyProjection::Infeasible { mult });
            }
            let t = t1.min(t2);
            if t2.is_finite() {
                axpy(t, &z, &mut x);
            }
            for (k, rk) in r.iter().enumerate() {
                u[k] -= t * rk;
            }
            uplus += t;
            if t2 <= t1 {
                active.push(pj);
                u.push(uplus);
                normals.push(nplus.clone());
                if !fac.push(&nplus) {
                    fac = Factor::rebuild(normals.iter().map(|v| v.as_slice()));
                }
                break;
            }
            let k = drop_k.expect("finite partial step has a blocking index");
            active.remove(k);
            u.remove(k);
            normals.remove(k);
            fac = Factor::rebuild(normals.iter().map(|v| v.as_slice()));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cut(a: &[f64], alpha: f64) -> Separator {
        Separator::new(a.to_vec(), alpha).unwrap()
    }

    #[test]
    fn single_cut() {
        let b: Bundle = [cut(&[1.0, 0.0], -1.0)].into_iter().collect();
        let ball = Ball::new(vec![0.0, 0.0], 2.0).unwrap();
        let (d, y) = min_max_over_ball(&b, &ball).unwrap();
        assert!((d + 3.0).abs() < 1e-9);
        assert!((y[0] + 2.0).abs() < 1e-9 && y[1].abs() < 1e-9);
    }

    #[test]
    fn symmetric_cuts_meet_in_the_middle() {
        let b: Bundle = [cut(&[1.0, 0.0], 0.0), cut(&[-1.0, 0.0], 0.0)].into_iter().collect();
        let ball = Ball::new(vec![0.0, 0.0], 2.0).unwrap();
        let (d, y) = min_max_over_ball(&b, &ball).unwrap();
        assert!(d.abs() < 1e-9);
        assert!(y[0].abs() < 1e-9);
    }

    #[test]
    fn empty_bundle_rejected() {
        let ball = Ball::new(vec![0.0], 1.0).unwrap();
        assert_eq!(min_max_over_ball(&Bundle::new(), &ball), Err(Error::EmptyBundle));
    }

    #[test]
    fn interior_optimum() {
        // max(y1 - 0.5, -y1 - 0.5, y2 - 1, -y2 - 1) over a large ball: -0.5.
        let b: Bundle = [
            cut(&[1.0, 0.0], -0.5),
            cut(&[-1.0, 0.0], -0.5),
            cut(&[0.0, 1.0], -1.0),
            cut(&[0.0, -1.0], -1.0),
        ]
        .into_iter()
        .collect();
        let ball = Ball::new(vec![3.0, 1.0], 10.0).unwrap();
        let mm = solve_min_max(&b, &ball).unwrap();
        assert!((mm.delta + 0.5).abs() < 1e-9, "{mm:?}");
        assert!((mm.upper + 0.5).abs() < 1e-9);
    }

    #[test]
    fn projection_examples() {
        let b: Bundle = [cut(&[1.0, 0.0], 0.0)].into_iter().collect();
        let ball = Ball::new(vec![0.0, 0.0], 3.0).unwrap();
        let y = project_to_level(&[2.0, 0.0], &b, 0.0, &ball).unwrap();
        assert!(y[0].abs() < 1e-12 && y[1].abs() < 1e-12);
        let y = project_to_level(&[-1.0, 0.5], &b, 0.0, &ball).unwrap();
        assert_eq!(y, vec![-1.0, 0.5]);
    }

    #[test]
    fn projection_onto_ball_cap() {
        // Level set y1 <= -2 inside the radius-3 ball; from (0, 5).
        let b: Bundle = [cut(&[1.0, 0.0], 2.0)].into_iter().collect();
        let ball = Ball::new(vec![0.0, 0.0], 3.0).unwrap();
        let y = project_to_level(&[0.0, 5.0], &b, 0.0, &ball).unwrap();
        let expect = [-2.0, 5f64.sqrt()];
        assert!((y[0] - expect[0]).abs() < 1e-7 && (y[1] - expect[1]).abs() < 1e-7, "{y:?}");
    }

    #[test]
    fn empty_level_set_detected() {
        let b: Bundle = [cut(&[1.0], 5.0)].into_iter().collect();
        let ball = Ball::new(vec![0.0], 1.0).unwrap();
        assert!(matches!(
            project_to_level(&[0.0], &b, 0.0, &ball),
            Err(Error::EmptyLevelSet { .. })
        ));
        let b: Bundle = [cut(&[1.0], 1.0), cut(&[-1.0], 1.0)].into_iter().collect();
        assert!(matches!(
            project_to_level(&[0.0], &b, 0.0, &ball),
            Err(Error::EmptyLevelSet { .. })
        ));
    }

    #[test]
    fn polyhedral_projection_kkt() {
        let g1 = [1.0, 1.0];
        let g2 = [1.0, -1.0];
        let g: Vec<&[f64]> = vec![&g1, &g2];
        match project_onto_polyhedron(&[3.0, 0.5], &g, &[1.0, 1.0]).unwrap() {
            PolyProjection::Point { x, mult } => {
                assert!((x[0] - 1.0).abs() < 1e-12 && x[1].abs() < 1e-12, "{x:?}");
                let mut res = vec![3.0 - x[0], 0.5 - x[1]];
                for (j, mu) in mult {
                    axpy(-mu, g[j], &mut res);
                }
                assert!(norm2(&res) < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn polyhedral_infeasibility_certificate() {
        let g1 = [1.0, 0.0];
        let g2 = [-1.0, 0.0];
        let g3 = [0.0, 1.0];
        let g: Vec<&[f64]> = vec![&g1, &g3, &g2];
        let b = [-1.0, 0.0, -1.0];
        match project_onto_polyhedron(&[0.0, 0.0], &g, &b).unwrap() {
            PolyProjection::Infeasible { mult } => {
                let mut s = vec![0.0, 0.0];
                let mut rhs = 0.0;
                for (j, mu) in mult {
                    assert!(mu >= 0.0);
                    axpy(mu, g[j], &mut s);
                    rhs += mu * b[j];
                }
                assert!(norm2(&s) < 1e-12 && rhs < 0.0);
            }
            other => panic!("{other:?}"),
        }
    }
}
