//! Dense vectors and matrices, polyhedral representations, separators and
//! Euclidean balls.
//!
//! Everything here is small and dense. Vectors are plain `Vec<f64>`/`&[f64]`;
//! [`Mat`] is a row-major matrix with explicit dimensions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gradient norms at or below this are treated as zero.
pub const ZERO_GRADIENT_TOL: f64 = 1e-12;

/// Tolerance on the unit-norm invariant of a separator gradient.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// Floor applied to degenerate bounding-ball radii.
pub const MIN_RADIUS: f64 = 1e-9;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from rows; all rows must share one length. An empty
    /// list yields a 0 x `cols` matrix.
    pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.cols, "row length mismatch");
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    /// `self * x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `self^T * y`
    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                axpy(yi, self.row(i), &mut out);
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hcat(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows);
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Mat {
            rows: self.rows,
            cols,
            data,
        }
    }

    pub fn max_abs(&self) -> f64 {
        norm_inf(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl TryFrom<Vec<Vec<f64>>> for Mat {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        Mat::from_rows(&rows, cols)
    }
}

impl From<Mat> for Vec<Vec<f64>> {
    fn from(m: Mat) -> Self {
        (0..m.rows).map(|i| m.row(i).to_vec()).collect()
    }
}

/// A lifted polyhedron `{y : exists w, A y + C w <= d}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyhedralRep {
    pub a: Mat,
    pub c: Mat,
    pub d: Vec<f64>,
}

impl PolyhedralRep {
    pub fn new(a: Mat, c: Mat, d: Vec<f64>) -> Result<Self> {
        if a.rows() != d.len() || c.rows() != d.len() {
            return Err(Error::Dimension(format!(
                "row counts disagree: A {}, C {}, d {}",
                a.rows(),
                c.rows(),
                d.len()
            )));
        }
        Ok(Self { a, c, d })
    }

    /// Axis-aligned box `lo <= y <= hi` with no auxiliary variables.
    pub fn boxed(lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension("box bounds of different length".into()));
        }
        let n = lo.len();
        let mut a = Mat::zeros(0, n);
        let mut d = Vec::new();
        for j in 0..n {
            let mut row = vec![0.0; n];
            row[j] = 1.0;
            a.push_row(&row);
            d.push(hi[j]);
            row[j] = -1.0;
            a.push_row(&row);
            d.push(-lo[j]);
        }
        Ok(Self {
            a,
            c: Mat::zeros(2 * n, 0),
            d,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.cols()
    }

    pub fn aux_dim(&self) -> usize {
        self.c.cols()
    }

    pub fn num_rows(&self) -> usize {
        self.d.len()
    }

    /// Appends the row `g^T y <= rhs` (zero in the auxiliary block).
    pub fn with_row(&self, g: &[f64], rhs: f64) -> Self {
        let mut out = self.clone();
        out.a.push_row(g);
        out.c.push_row(&vec![0.0; self.c.cols()]);
        out.d.push(rhs);
        out
    }
}

/// Stage set `{(y, x) : exists w, A y + B x + C w <= d}` with the column
/// split recorded by the block shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct StagePolyhedron {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Vec<f64>,
}

impl StagePolyhedron {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Vec<f64>) -> Result<Self> {
        let m = d.len();
        if a.rows() != m || b.rows() != m || c.rows() != m {
            return Err(Error::Dimension(format!(
                "stage row counts disagree: A {}, B {}, C {}, d {m}",
                a.rows(),
                b.rows(),
                c.rows()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    pub fn y_dim(&self) -> usize {
        self.a.cols()
    }

    pub fn x_dim(&self) -> usize {
        self.b.cols()
    }

    pub fn w_dim(&self) -> usize {
        self.c.cols()
    }

    pub fn num_rows(&self) -> usize {
        self.d.len()
    }
}

/// Affine function `f(y) = a^T y + alpha` with `||a||_2 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Separator {
    a: Vec<f64>,
    alpha: f64,
}

impl Separator {
    /// Rescales `(a, alpha)` so the gradient has unit norm.
    pub fn new(a: Vec<f64>, alpha: f64) -> Result<Self> {
        let norm = norm2(&a);
        if !(norm > ZERO_GRADIENT_TOL) || !alpha.is_finite() {
            return Err(Error::ZeroGradient { norm });
        }
        if (norm - 1.0).abs() <= UNIT_NORM_TOL {
            return Ok(Self { a, alpha });
        }
        Ok(Self {
            a: a.iter().map(|x| x / norm).collect(),
            alpha: alpha / norm,
        })
    }

    pub fn gradient(&self) -> &[f64] {
        &self.a
    }

    pub fn offset(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        dot(&self.a, y) + self.alpha
    }
}

/// Builds the separator `f(y) = (g^T y - gamma) / ||g||_2`.
pub fn normalize_separator(g: &[f64], gamma: f64) -> Result<Separator> {
    let norm = norm2(g);
    if !(norm > ZERO_GRADIENT_TOL) {
        return Err(Error::ZeroGradient { norm });
    }
    Ok(Separator {
        a: g.iter().map(|x| x / norm).collect(),
        alpha: -gamma / norm,
    })
}

/// Euclidean ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() || center.iter().any(|x| !x.is_finite()) {
            return Err(Error::BadBox(format!("invalid ball radius {radius}")));
        }
        Ok(Self { center, radius })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        dist2(y, &self.center) <= self.radius + tol
    }
}

/// Smallest ball around the box `[lo, hi]` centred at its midpoint.
pub fn bounding_ball(lo: &[f64], hi: &[f64]) -> Result<Ball> {
    if lo.len() != hi.len() {
        return Err(Error::BadBox("bounds of different length".into()));
    }
    for (j, (l, h)) in lo.iter().zip(hi).enumerate() {
        if !l.is_finite() || !h.is_finite() {
            return Err(Error::BadBox(format!("non-finite bound at coordinate {j}")));
        }
        if l > h {
            return Err(Error::BadBox(format!("lo > hi at coordinate {j}")));
        }
    }
    let center: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect();
    let half: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| 0.5 * (h - l)).collect();
    let radius = norm2(&half).max(MIN_RADIUS);
    Ok(Ball { center, radius })
}
