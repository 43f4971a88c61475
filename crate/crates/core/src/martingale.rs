//! Finite filtrations of `M_n` by block-diagonal subalgebras and the square
//! functions of martingale differences.

use crate::conditioned::{self, ConditionalExpectation};
use crate::error::{Error, Result};
use crate::spaces::SymmetricSpace;
use crate::tracial::{Operator, TracialAlgebra};

/// `𝓝_0 ⊂ 𝓝_1 ⊂ ⋯ ⊂ 𝓝_d = M_n`, each `𝓝_k` below the top either the
/// scalars or the block diagonal of a partition. Increasing algebras mean
/// partitions that get coarser with `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixFiltration {
    dim: usize,
    levels: Vec<ConditionalExpectation>,
}

/// Whether the range of `a` sits inside the range of `b`.
fn nested(a: &ConditionalExpectation, b: &ConditionalExpectation) -> bool {
    use ConditionalExpectation::*;
    match (a, b) {
        (Scalar, _) | (_, Identity) => true,
        (Pinching(p), Pinching(q)) => p.iter().all(|blk| q.iter().any(|big| blk.iter().all(|i| big.contains(i)))),
        _ => false,
    }
}

impl MatrixFiltration {
    /// Levels `𝔼_0, …, 𝔼_{d−1}`; `𝔼_d` is the identity and is appended.
    pub fn new(dim: usize, levels: Vec<ConditionalExpectation>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("filtration over M_0".into()));
        }
        let alg = TracialAlgebra::matrix(dim);
        for (k, e) in levels.iter().enumerate() {
            if !matches!(e, ConditionalExpectation::Scalar | ConditionalExpectation::Pinching(_) | ConditionalExpectation::Identity) {
                return Err(Error::InvalidParameter(format!("level {k}: filtration levels are scalars or pinchings, got {e}")));
            }
            e.validate(&alg)?;
        }
        let mut levels = levels;
        levels.push(ConditionalExpectation::Identity);
        for k in 1..levels.len() {
            if !nested(&levels[k - 1], &levels[k]) {
                return Err(Error::InvalidParameter(format!("level {} is not contained in level {k}", k - 1)));
            }
        }
        Ok(Self { dim, levels })
    }

    /// Pinchings by `partitions[0], partitions[1], …`, each a coarsening of
    /// the one before.
    pub fn from_partitions(dim: usize, partitions: Vec<Vec<Vec<usize>>>) -> Result<Self> {
        let levels = partitions.into_iter().map(ConditionalExpectation::pinching).collect::<Result<Vec<_>>>()?;
        Self::new(dim, levels)
    }

    /// Scalars, then the dyadic block diagonals of `M_{2^depth}` coarsening
    /// from the diagonal.
    pub fn dyadic(depth: usize) -> Result<Self> {
        let dim = 1usize << depth;
        let mut levels = vec![ConditionalExpectation::Scalar];
        for j in 0..depth {
            let size = 1usize << j;
            levels.push(ConditionalExpectation::Pinching((0..dim / size).map(|b| (b * size..(b + 1) * size).collect()).collect()));
        }
        Self::new(dim, levels)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `d`: the index of the top level.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, k: usize) -> Result<&ConditionalExpectation> {
        self.levels.get(k).ok_or(Error::OutOfRange { index: k, max: self.depth() })
    }

    pub fn levels(&self) -> &[ConditionalExpectation] {
        &self.levels
    }

    fn check(&self, x: &Operator) -> Result<()> {
        if x.algebra() != &TracialAlgebra::matrix(self.dim) {
            return Err(Error::ShapeMismatch(format!("operator is not in M_{} with normalized trace", self.dim)));
        }
        Ok(())
    }
}

/// `dx_0 = 𝔼_0x`, `dx_k = 𝔼_kx − 𝔼_{k−1}x`.
pub fn martingale_differences(f: &MatrixFiltration, x: &Operator) -> Result<Vec<Operator>> {
    f.check(x)?;
    let conditioned: Vec<Operator> = f.levels.iter().map(|e| e.apply(x)).collect::<Result<_>>()?;
    let mut out = vec![conditioned[0].clone()];
    for k in 1..conditioned.len() {
        out.push(&conditioned[k] - &conditioned[k - 1]);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BurkholderNorms {
    /// `‖(|𝔼_0x|² + Σ 𝔼_{k−1}|dx_k|²)^{1/2}‖_E`.
    pub column: f64,
    /// The same with `x*`.
    pub row: f64,
    /// `‖Σ dx_k ⊗ e_k‖_E`.
    pub diagonal: f64,
}

fn conditioned_square(f: &MatrixFiltration, diffs: &[Operator], adjoint: bool) -> Result<Operator> {
    let sq = |y: &Operator| if adjoint { y * &y.adjoint() } else { &y.adjoint() * y };
    let mut total = sq(&diffs[0]);
    for k in 1..diffs.len() {
        total = total + f.levels[k - 1].apply(&sq(&diffs[k]))?;
    }
    Ok(total)
}

pub fn burkholder_norms(f: &MatrixFiltration, x: &Operator, space: &SymmetricSpace) -> Result<BurkholderNorms> {
    let diffs = martingale_differences(f, x)?;
    let column = space.eval(&conditioned::sqrt_mu(&conditioned_square(f, &diffs, false)?)?);
    let row = space.eval(&conditioned::sqrt_mu(&conditioned_square(f, &diffs, true)?)?);
    let diagonal = space.eval(&conditioned::diagonal_mu(&diffs));
    Ok(BurkholderNorms { column, row, diagonal })
}
