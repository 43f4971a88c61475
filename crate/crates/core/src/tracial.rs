//! Finite direct sums of weighted matrix blocks and their elements.
//!
//! A [`TracialAlgebra`] is `⊕ᵢ M_{nᵢ}` with trace `τ(x) = Σᵢ wᵢ·tr(xᵢ)/nᵢ`, so
//! the unit has trace `Σᵢ wᵢ`. The same type covers a probability space
//! (total mass 1), its `ℓ∞`-amplification (one copy per summand) and the
//! unnormalized algebras used for flattenings.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::linalg::{self, c, Mat, C64};
use crate::step::StepFunction;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Block {
    pub dim: usize,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TracialAlgebra {
    blocks: Vec<Block>,
}

impl TracialAlgebra {
    pub fn new(blocks: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let blocks: Vec<Block> = blocks.into_iter().map(|(dim, mass)| Block { dim, mass }).collect();
        if blocks.is_empty() {
            return Err(Error::InvalidParameter("an algebra needs at least one block".into()));
        }
        for (i, b) in blocks.iter().enumerate() {
            if b.dim == 0 || !(b.mass > 0.0) || !b.mass.is_finite() {
                return Err(Error::InvalidParameter(format!("block {i} must have dim ≥ 1 and mass > 0, got {b:?}")));
            }
        }
        Ok(Self { blocks })
    }

    /// `M_n` with normalized trace.
    pub fn matrix(n: usize) -> Self {
        Self::new([(n, 1.0)]).expect("n ≥ 1")
    }

    /// `M_n` with trace of the unit equal to `mass`.
    pub fn matrix_with_mass(n: usize, mass: f64) -> Result<Self> {
        Self::new([(n, mass)])
    }

    /// The commutative algebra `ℂ^k` with atoms of the given masses.
    pub fn diagonal(masses: &[f64]) -> Result<Self> {
        Self::new(masses.iter().map(|&m| (1, m)))
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.blocks.iter().map(|b| b.mass).sum()
    }

    /// Direct sum keeping every block's mass.
    pub fn direct_sum(parts: &[&TracialAlgebra]) -> Result<Self> {
        Self::new(parts.iter().flat_map(|a| a.blocks.iter().map(|b| (b.dim, b.mass))))
    }

    /// `A ⊕ A` with every mass halved; the trace of the unit is unchanged.
    pub fn doubled(&self) -> Self {
        let half = self.blocks.iter().map(|b| (b.dim, b.mass / 2.0));
        Self::new(half.clone().chain(half)).expect("halved masses stay positive")
    }

    /// Inverse of [`TracialAlgebra::doubled`] when the algebra has that shape.
    pub fn undoubled(&self) -> Option<Self> {
        let k = self.blocks.len();
        if k % 2 != 0 {
            return None;
        }
        let (lo, hi) = self.blocks.split_at(k / 2);
        let same = lo.iter().zip(hi).all(|(a, b)| a.dim == b.dim && (a.mass - b.mass).abs() <= 1e-14 * a.mass);
        same.then(|| Self::new(lo.iter().map(|b| (b.dim, 2.0 * b.mass))).expect("valid"))
    }
}

/// An element of a [`TracialAlgebra`]: one complex matrix per block.
#[derive(Clone, Debug)]
pub struct Operator {
    algebra: TracialAlgebra,
    blocks: Vec<Mat>,
}

/// Relative self-adjointness tolerance: `‖x − x*‖ ≤ 1e-9·(1 + ‖x‖)`.
pub const SELF_ADJOINT_TOL: f64 = 1e-9;
/// Singular values below this fraction of the largest count as zero.
pub const SUPPORT_TOL: f64 = 1e-12;

impl Operator {
    pub fn new(algebra: TracialAlgebra, blocks: Vec<Mat>) -> Result<Self> {
        if blocks.len() != algebra.num_blocks() {
            return Err(Error::ShapeMismatch(format!(
                "{} matrices for {} blocks",
                blocks.len(),
                algebra.num_blocks()
            )));
        }
        for (i, (m, b)) in blocks.iter().zip(algebra.blocks()).enumerate() {
            if m.nrows() != b.dim || m.ncols() != b.dim {
                return Err(Error::ShapeMismatch(format!(
                    "block {i} is {}x{}, expected {}x{}",
                    m.nrows(),
                    m.ncols(),
                    b.dim,
                    b.dim
                )));
            }
        }
        Ok(Self { algebra, blocks })
    }

    /// A single matrix in `M_n` with normalized trace.
    pub fn from_matrix(m: Mat) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::ShapeMismatch(format!("expected a square matrix, got {:?}", m.shape())));
        }
        Self::new(TracialAlgebra::matrix(m.nrows()), vec![m])
    }

    /// A diagonal matrix in `M_n` with normalized trace.
    pub fn from_real_diagonal(values: &[f64]) -> Result<Self> {
        Self::from_matrix(linalg::diag(values))
    }

    pub fn zeros(algebra: &TracialAlgebra) -> Self {
        let blocks = algebra.blocks().iter().map(|b| linalg::zeros(b.dim, b.dim)).collect();
        Self { algebra: algebra.clone(), blocks }
    }

    pub fn identity(algebra: &TracialAlgebra) -> Self {
        let blocks = algebra.blocks().iter().map(|b| linalg::eye(b.dim)).collect();
        Self { algebra: algebra.clone(), blocks }
    }

    pub fn algebra(&self) -> &TracialAlgebra {
        &self.algebra
    }

    pub fn blocks(&self) -> &[Mat] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &Mat {
        &self.blocks[i]
    }

    pub fn into_blocks(self) -> Vec<Mat> {
        self.blocks
    }

    /// Applies `f` to every block, keeping the algebra.
    pub fn map_blocks(&self, f: impl Fn(usize, &Mat) -> Mat) -> Self {
        let blocks = self.blocks.iter().enumerate().map(|(i, m)| f(i, m)).collect();
        Self { algebra: self.algebra.clone(), blocks }
    }

    pub(crate) fn same_algebra(&self, other: &Operator) -> Result<()> {
        if self.algebra != other.algebra {
            return Err(Error::ShapeMismatch("operators live in different algebras".into()));
        }
        Ok(())
    }

    pub fn adjoint(&self) -> Self {
        self.map_blocks(|_, m| m.adjoint())
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map_blocks(|_, m| m.scale(s))
    }

    pub fn scale_complex(&self, s: C64) -> Self {
        self.map_blocks(|_, m| m * s)
    }

    /// `τ(x) = Σ wᵢ tr(xᵢ)/nᵢ`.
    pub fn trace(&self) -> C64 {
        self.blocks
            .iter()
            .zip(self.algebra.blocks())
            .map(|(m, b)| linalg::trace(m) * (b.mass / b.dim as f64))
            .sum()
    }

    /// `Re τ(x* y)`.
    pub fn real_inner(&self, other: &Operator) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .zip(self.algebra.blocks())
            .map(|((a, b), blk)| linalg::real_dot(a, b) * blk.mass / blk.dim as f64)
            .sum()
    }

    /// `τ(x* y)`.
    pub fn inner(&self, other: &Operator) -> C64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .zip(self.algebra.blocks())
            .map(|((a, b), blk)| linalg::trace(&(a.adjoint() * b)) * (blk.mass / blk.dim as f64))
            .sum()
    }

    /// `‖x‖₂ = τ(x*x)^{1/2}`.
    pub fn norm2(&self) -> f64 {
        self.real_inner(self).max(0.0).sqrt()
    }

    /// Operator norm: largest singular value over all blocks.
    pub fn op_norm(&self) -> f64 {
        self.blocks.iter().map(linalg::spectral_norm).fold(0.0, f64::max)
    }

    pub fn self_adjoint_deviation(&self) -> f64 {
        self.blocks.iter().map(|m| linalg::spectral_norm(&(m - m.adjoint()))).fold(0.0, f64::max)
    }

    pub fn check_self_adjoint(&self) -> Result<()> {
        let deviation = self.self_adjoint_deviation();
        let allowed = SELF_ADJOINT_TOL * (1.0 + self.op_norm());
        if deviation > allowed {
            return Err(Error::NotSelfAdjoint { deviation, allowed });
        }
        Ok(())
    }

    /// `Σ f(λ)P_λ` over the spectral decomposition of a self-adjoint operator.
    pub fn functional_calculus(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        self.check_self_adjoint()?;
        Ok(self.map_blocks(|_, m| linalg::herm_fn(m, &f)))
    }

    /// `1_{[lo, hi]}(x)` for self-adjoint `x`.
    pub fn spectral_projection(&self, lo: f64, hi: f64) -> Result<Self> {
        self.functional_calculus(|v| if v >= lo && v <= hi { 1.0 } else { 0.0 })
    }

    /// Eigenvalues of a self-adjoint operator with their trace widths.
    pub fn weighted_eigenvalues(&self) -> Result<Vec<(f64, f64)>> {
        self.check_self_adjoint()?;
        Ok(self
            .blocks
            .iter()
            .zip(self.algebra.blocks())
            .flat_map(|(m, b)| {
                let w = b.mass / b.dim as f64;
                linalg::eigvalsh(m).into_iter().map(move |v| (v, w))
            })
            .collect())
    }

    /// `(x*x)^{1/2}`.
    pub fn abs(&self) -> Self {
        self.map_blocks(|_, m| {
            let s = linalg::svd(m);
            linalg::from_eigen(&s.values, &s.right)
        })
    }

    /// Polar decomposition `x = u·a` with `a = |x|` and `u*u = s(a)`.
    pub fn polar_decompose(&self) -> (Self, Self) {
        let cutoff = SUPPORT_TOL * self.op_norm();
        let mut us = Vec::with_capacity(self.blocks.len());
        let mut abs = Vec::with_capacity(self.blocks.len());
        for m in &self.blocks {
            let s = linalg::svd(m);
            let support: Vec<f64> = s.values.iter().map(|&v| if v > cutoff && v > 0.0 { 1.0 } else { 0.0 }).collect();
            let mut left = s.left.clone();
            for (j, &keep) in support.iter().enumerate() {
                left.column_mut(j).scale_mut(keep);
            }
            us.push(left * s.right.adjoint());
            abs.push(linalg::from_eigen(&s.values, &s.right));
        }
        let alg = self.algebra.clone();
        (Self { algebra: alg.clone(), blocks: us }, Self { algebra: alg, blocks: abs })
    }

    /// Generalized singular value function `μ(x)` on `(0, τ(1))`.
    pub fn singular_value_function(&self) -> StepFunction {
        let pairs: Vec<(f64, f64)> = self
            .blocks
            .iter()
            .zip(self.algebra.blocks())
            .flat_map(|(m, b)| {
                let w = b.mass / b.dim as f64;
                linalg::singular_values(m).into_iter().map(move |s| (s, w))
            })
            .collect();
        StepFunction::from_pairs(pairs, self.algebra.total_mass()).expect("singular values form a valid step function")
    }

    /// Block-diagonal direct sum `⊕ xᵢ` in the direct sum of the algebras.
    pub fn direct_sum(parts: &[Operator]) -> Result<Self> {
        let algs: Vec<&TracialAlgebra> = parts.iter().map(|p| &p.algebra).collect();
        let algebra = TracialAlgebra::direct_sum(&algs)?;
        let blocks = parts.iter().flat_map(|p| p.blocks.iter().cloned()).collect();
        Self::new(algebra, blocks)
    }

    /// Moore–Penrose inverse of a positive operator on its numerical support.
    pub fn positive_pinv(&self, rel_threshold: f64) -> Result<Self> {
        let top = self.op_norm();
        let cutoff = rel_threshold * top;
        self.functional_calculus(|v| if v > cutoff && v > 0.0 { 1.0 / v } else { 0.0 })
    }

    /// Support projection of a positive operator.
    pub fn support_projection(&self, rel_threshold: f64) -> Result<Self> {
        let cutoff = rel_threshold * self.op_norm();
        self.functional_calculus(|v| if v > cutoff && v > 0.0 { 1.0 } else { 0.0 })
    }

    /// Smallest eigenvalue of a self-adjoint operator.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.weighted_eigenvalues()?.into_iter().map(|(v, _)| v).fold(f64::INFINITY, f64::min))
    }

    /// Largest eigenvalue of a self-adjoint operator.
    pub fn max_eigenvalue(&self) -> Result<f64> {
        Ok(self.weighted_eigenvalues()?.into_iter().map(|(v, _)| v).fold(f64::NEG_INFINITY, f64::max))
    }

    /// Element-wise access helper for real diagonal operators.
    pub fn real_diagonal(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|m| m.diagonal().iter().map(|z| z.re).collect::<Vec<_>>()).collect()
    }

    pub fn scalar(algebra: &TracialAlgebra, s: C64) -> Self {
        Self::identity(algebra).scale_complex(s)
    }

    pub fn real_scalar(algebra: &TracialAlgebra, s: f64) -> Self {
        Self::scalar(algebra, c(s))
    }
}

macro_rules! binop {
    ($tr:ident, $method:ident, $op:tt) => {
        impl<'a> $tr<&'a Operator> for &'a Operator {
            type Output = Operator;
            fn $method(self, rhs: &'a Operator) -> Operator {
                assert_eq!(self.algebra, rhs.algebra, "operators from different algebras");
                let blocks = self.blocks.iter().zip(&rhs.blocks).map(|(a, b)| a $op b).collect();
                Operator { algebra: self.algebra.clone(), blocks }
            }
        }
        impl $tr<Operator> for Operator {
            type Output = Operator;
            fn $method(self, rhs: Operator) -> Operator {
                (&self).$method(&rhs)
            }
        }
        impl<'a> $tr<&'a Operator> for Operator {
            type Output = Operator;
            fn $method(self, rhs: &'a Operator) -> Operator {
                (&self).$method(rhs)
            }
        }
        impl<'a> $tr<Operator> for &'a Operator {
            type Output = Operator;
            fn $method(self, rhs: Operator) -> Operator {
                self.$method(&rhs)
            }
        }
    };
}

binop!(Add, add, +);
binop!(Sub, sub, -);
binop!(Mul, mul, *);

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scale(-1.0)
    }
}

impl Neg for Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scale(-1.0)
    }
}

/// `Σ xᵢ`, or zero in `algebra` for an empty list.
pub fn sum_operators<'a>(algebra: &TracialAlgebra, items: impl IntoIterator<Item = &'a Operator>) -> Operator {
    items.into_iter().fold(Operator::zeros(algebra), |acc, x| acc + x)
}
