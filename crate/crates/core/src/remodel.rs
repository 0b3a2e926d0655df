//! Decision rules in place of fixed strategic blocks.
//!
//! The strategic vector is split into blocks `y_0, ..., y_S` (`S` = number
//! of stages), block `s` being allowed to depend on `xi_s`. A rule
//! `y_s(xi_s) = sum_r b_{sr}(xi_s) chi_{sr}` with scalar basis functions
//! `b_{sr}` and coefficient vectors `chi_{sr}` of the block's size turns
//! every stage row into a row that is linear in `chi` once the data is
//! fixed. The lifted model has strategic vector
//! `chi = [chi_{0,1}; ...; chi_{0,r_0}; chi_{1,1}; ...]`, static set a box
//! and one extra stage checking `y(chi; xi) in Y` on the full data.

use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mat, PolyhedralRep, StagePolyhedron};
use crate::model::{Scenario, ScenarioSource, SemiStochasticModel};

/// Block boundaries: block `s` is `y[offsets[s]..offsets[s+1]]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSplit {
    offsets: Vec<usize>,
}

impl BlockSplit {
    pub fn new(offsets: Vec<usize>) -> Result<Self> {
        if offsets.len() < 2 || offsets[0] != 0 || offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::BasisDimensionMismatch(format!(
                "offsets {offsets:?} must start at 0 and be nondecreasing"
            )));
        }
        Ok(Self { offsets })
    }

    /// Split from block sizes.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let mut offsets = vec![0];
        for s in sizes {
            offsets.push(offsets.last().unwrap() + s);
        }
        Self::new(offsets)
    }

    pub fn num_blocks(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn block(&self, s: usize) -> std::ops::Range<usize> {
        self.offsets[s]..self.offsets[s + 1]
    }

    pub fn size(&self, s: usize) -> usize {
        self.offsets[s + 1] - self.offsets[s]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }
}

type CustomFn = dyn Fn(&[Vec<f64>]) -> f64 + Send + Sync;

/// Scalar basis function of the data prefix `(xi_1, ..., xi_s)`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisFunction {
    Constant,
    /// `xi_stage[index]`; `scale` bounds its magnitude for [`chi_box`].
    Coordinate {
        stage: usize,
        index: usize,
        #[serde(default = "one")]
        scale: f64,
    },
    #[serde(skip)]
    Custom { f: Arc<CustomFn>, scale: f64 },
}

fn one() -> f64 {
    1.0
}

impl fmt::Debug for BasisFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisFunction::Constant => write!(f, "Constant"),
            BasisFunction::Coordinate { stage, index, scale } => {
                write!(f, "Coordinate {{ stage: {stage}, index: {index}, scale: {scale} }}")
            }
            BasisFunction::Custom { scale, .. } => write!(f, "Custom {{ scale: {scale} }}"),
        }
    }
}

impl BasisFunction {
    pub fn custom(f: impl Fn(&[Vec<f64>]) -> f64 + Send + Sync + 'static, scale: f64) -> Self {
        BasisFunction::Custom { f: Arc::new(f), scale }
    }

    pub fn eval(&self, prefix: &[Vec<f64>]) -> Result<f64> {
        match self {
            BasisFunction::Constant => Ok(1.0),
            BasisFunction::Coordinate { stage, index, .. } => prefix
                .get(stage.wrapping_sub(1))
                .and_then(|xi| xi.get(*index))
                .copied()
                .ok_or_else(|| {
                    Error::BasisDimensionMismatch(format!(
                        "coordinate ({stage}, {index}) outside data of {} stages",
                        prefix.len()
                    ))
                }),
            BasisFunction::Custom { f, .. } => {
                let v = f(prefix);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::BasisDimensionMismatch("custom basis function returned a non-finite value".into()))
                }
            }
        }
    }

    fn scale(&self) -> f64 {
        match self {
            BasisFunction::Constant => 1.0,
            BasisFunction::Coordinate { scale, .. } | BasisFunction::Custom { scale, .. } => *scale,
        }
    }
}

/// Basis functions per block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionBasis {
    pub blocks: Vec<Vec<BasisFunction>>,
}

impl DecisionBasis {
    /// Constant rules only; the lift then reproduces the original model.
    pub fn constant(num_blocks: usize) -> Self {
        Self {
            blocks: vec![vec![BasisFunction::Constant]; num_blocks],
        }
    }

    fn validate(&self, split: &BlockSplit) -> Result<()> {
        if self.blocks.len() != split.num_blocks() {
            return Err(Error::BasisDimensionMismatch(format!(
                "basis for {} blocks, split has {}",
                self.blocks.len(),
                split.num_blocks()
            )));
        }
        for (s, fs) in self.blocks.iter().enumerate() {
            if !fs.iter().any(|f| matches!(f, BasisFunction::Constant)) {
                return Err(Error::BasisDimensionMismatch(format!("block {s} has no constant basis function")));
            }
            for f in fs {
                match f {
                    BasisFunction::Coordinate { stage, .. } if *stage == 0 || *stage > s => {
                        return Err(Error::BasisDimensionMismatch(format!(
                            "block {s} reads data of stage {stage}, only stages 1..={s} are known"
                        )))
                    }
                    BasisFunction::Coordinate { scale, .. } | BasisFunction::Custom { scale, .. } if !(*scale > 0.0) => {
                        return Err(Error::BasisDimensionMismatch(format!("block {s} has a nonpositive scale")))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Length of the coefficient vector.
    pub fn lifted_dim(&self, split: &BlockSplit) -> usize {
        (0..split.num_blocks()).map(|s| self.blocks[s].len() * split.size(s)).sum()
    }

    /// Offset of `chi_{s,r}` in the coefficient vector.
    fn chi_offset(&self, split: &BlockSplit, s: usize, r: usize) -> usize {
        let before: usize = (0..s).map(|q| self.blocks[q].len() * split.size(q)).sum();
        before + r * split.size(s)
    }
}

/// Coefficient box covering the strategic box `[lo, hi]`: constant
/// coefficients range over the box, every other coefficient over
/// `+-(hi - lo) / scale`.
pub fn chi_box(split: &BlockSplit, basis: &DecisionBasis, lo: &[f64], hi: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    basis.validate(split)?;
    if lo.len() != split.dim() || hi.len() != split.dim() {
        return Err(Error::BasisDimensionMismatch(format!(
            "box of length {} for a split of {}",
            lo.len(),
            split.dim()
        )));
    }
    let mut clo = Vec::with_capacity(basis.lifted_dim(split));
    let mut chi = Vec::with_capacity(clo.capacity());
    for s in 0..split.num_blocks() {
        for f in &basis.blocks[s] {
            for i in split.block(s) {
                if let BasisFunction::Constant = f {
                    clo.push(lo[i]);
                    chi.push(hi[i]);
                } else {
                    let w = (hi[i] - lo[i]) / f.scale();
                    clo.push(-w);
                    chi.push(w);
                }
            }
        }
    }
    Ok((clo, chi))
}

/// Coefficients reproducing the fixed decision `y`: the first constant of
/// each block carries the block, everything else is zero.
pub fn embed(split: &BlockSplit, basis: &DecisionBasis, y: &[f64]) -> Result<Vec<f64>> {
    basis.validate(split)?;
    if y.len() != split.dim() {
        return Err(Error::BasisDimensionMismatch(format!("y of length {} for {}", y.len(), split.dim())));
    }
    let mut chi = vec![0.0; basis.lifted_dim(split)];
    for s in 0..split.num_blocks() {
        let r = basis.blocks[s]
            .iter()
            .position(|f| matches!(f, BasisFunction::Constant))
            .expect("validated");
        let off = basis.chi_offset(split, s, r);
        chi[off..off + split.size(s)].copy_from_slice(&y[split.block(s)]);
    }
    Ok(chi)
}

/// Rule values `y_s(xi_s)` for blocks `0..=t` given `chi` and the prefix
/// `(xi_1, ..., xi_t)`; later blocks are left at zero.
pub fn evaluate(split: &BlockSplit, basis: &DecisionBasis, chi: &[f64], prefix: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut y = vec![0.0; split.dim()];
    let t = prefix.len().min(split.num_blocks() - 1);
    for s in 0..=t {
        for (r, f) in basis.blocks[s].iter().enumerate() {
            let b = f.eval(&prefix[..s])?;
            let off = basis.chi_offset(split, s, r);
            for (k, i) in split.block(s).enumerate() {
                y[i] += b * chi[off + k];
            }
        }
    }
    Ok(y)
}

/// `A M(xi)` where `y = M(xi) chi` over blocks `0..=t`. Columns of `A` in
/// later blocks must vanish.
fn substitute(a: &Mat, split: &BlockSplit, basis: &DecisionBasis, prefix: &[Vec<f64>], t: usize) -> Result<Mat> {
    let nchi = basis.lifted_dim(split);
    let mut out = Mat::zeros(a.rows(), nchi);
    for s in 0..split.num_blocks() {
        if s > t {
            for i in split.block(s) {
                if (0..a.rows()).any(|k| a[(k, i)] != 0.0) {
                    return Err(Error::ModelContractViolation(format!(
                        "stage {t} involves block {s} of the strategic vector"
                    )));
                }
            }
            continue;
        }
        for (r, f) in basis.blocks[s].iter().enumerate() {
            let b = f.eval(&prefix[..s])?;
            if b == 0.0 {
                continue;
            }
            let off = basis.chi_offset(split, s, r);
            for (k, i) in split.block(s).enumerate() {
                for row in 0..a.rows() {
                    out[(row, off + k)] = b * a[(row, i)];
                }
            }
        }
    }
    Ok(out)
}

struct LiftedSource {
    inner: Arc<dyn ScenarioSource>,
    y: PolyhedralRep,
    split: BlockSplit,
    basis: DecisionBasis,
}

impl ScenarioSource for LiftedSource {
    fn stages(&self) -> usize {
        self.inner.stages() + 1
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Scenario {
        let base = self.inner.sample(rng);
        let mut stages = base.stages().to_vec();
        stages.push(Vec::new());
        Scenario::new(stages).expect("inner scenario is valid")
    }

    fn stage_polyhedron(&self, t: usize, prefix: &[Vec<f64>]) -> Result<StagePolyhedron> {
        let last = self.inner.stages();
        if t <= last {
            let poly = self.inner.stage_polyhedron(t, &prefix[..t])?;
            let a = substitute(&poly.a, &self.split, &self.basis, &prefix[..t], t)?;
            return StagePolyhedron::new(a, poly.b, poly.c, poly.d);
        }
        let a = substitute(&self.y.a, &self.split, &self.basis, &prefix[..last], last)?;
        let m = self.y.num_rows();
        StagePolyhedron::new(a, Mat::zeros(m, 0), self.y.c.clone(), self.y.d.clone())
    }
}

/// Lifted model over the coefficient vector, with static set `chi_box`.
/// The split needs one block per stage plus a leading block known before
/// any data.
pub fn lift(
    model: &SemiStochasticModel,
    split: &BlockSplit,
    basis: &DecisionBasis,
    chi_box: Option<(Vec<f64>, Vec<f64>)>,
) -> Result<SemiStochasticModel> {
    if split.dim() != model.dim() {
        return Err(Error::BasisDimensionMismatch(format!(
            "split covers {} coordinates, model has {}",
            split.dim(),
            model.dim()
        )));
    }
    if split.num_blocks() != model.stages() + 1 {
        return Err(Error::BasisDimensionMismatch(format!(
            "split has {} blocks, model with {} stages needs {}",
            split.num_blocks(),
            model.stages(),
            model.stages() + 1
        )));
    }
    basis.validate(split)?;
    let (lo, hi) = chi_box.ok_or(Error::UnboundedChi)?;
    let nchi = basis.lifted_dim(split);
    if lo.len() != nchi || hi.len() != nchi {
        return Err(Error::BasisDimensionMismatch(format!(
            "coefficient box of length {}/{} for {nchi} coefficients",
            lo.len(),
            hi.len()
        )));
    }
    if lo.iter().chain(&hi).any(|v| !v.is_finite()) {
        return Err(Error::UnboundedChi);
    }
    let source = LiftedSource {
        inner: model.source().clone(),
        y: model.static_set().clone(),
        split: split.clone(),
        basis: basis.clone(),
    };
    let rep = PolyhedralRep::boxed(&lo, &hi)?;
    SemiStochasticModel::new(rep, lo, hi, Arc::new(source))
}
