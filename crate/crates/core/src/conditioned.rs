//! Trace-preserving conditional expectations on [`TracialAlgebra`]s and the
//! conditioned column, row and diagonal norms built from them.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::spaces::{Exponent, SymmetricSpace};
use crate::step::StepFunction;
use crate::tracial::{Operator, TracialAlgebra, SUPPORT_TOL};

#[derive(Clone, Debug, PartialEq)]
pub enum ConditionalExpectation {
    Identity,
    /// `x ↦ τ(x)/τ(1) · 1`.
    Scalar,
    /// Per block `xᵢ ↦ tr(xᵢ)/nᵢ · 1`.
    ScalarBlock,
    /// Keeps the diagonal sub-blocks of a basis partition, in every block.
    Pinching(Vec<Vec<usize>>),
    /// On blocks `M_outer ⊗ M_inner`: `x ↦ (id ⊗ tr_inner/inner)(x) ⊗ 1`.
    PartialTrace { outer: usize, inner: usize },
    /// On `A ⊕ A`: `(y, z) ↦ (𝓔((y+z)/2), 𝓔((y+z)/2))`.
    Doubled(Box<ConditionalExpectation>),
    /// Applied left to right.
    Compose(Vec<ConditionalExpectation>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Column,
    Row,
    Diagonal,
}

impl Side {
    pub const ALL: [Side; 3] = [Side::Column, Side::Row, Side::Diagonal];

    pub fn name(self) -> &'static str {
        match self {
            Side::Column => "column",
            Side::Row => "row",
            Side::Diagonal => "diagonal",
        }
    }
}

impl ConditionalExpectation {
    pub fn pinching(partition: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen: Vec<usize> = partition.iter().flatten().copied().collect();
        seen.sort_unstable();
        if partition.iter().any(Vec::is_empty) || seen.iter().enumerate().any(|(i, &v)| i != v) {
            return Err(Error::InvalidParameter(format!("{partition:?} is not a partition of 0..n")));
        }
        Ok(ConditionalExpectation::Pinching(partition))
    }

    /// Pinching onto the diagonal of `M_n`.
    pub fn diagonal(n: usize) -> Self {
        ConditionalExpectation::Pinching((0..n).map(|i| vec![i]).collect())
    }

    /// Checks that this expectation can act on `algebra`.
    pub fn validate(&self, algebra: &TracialAlgebra) -> Result<()> {
        match self {
            ConditionalExpectation::Identity | ConditionalExpectation::Scalar | ConditionalExpectation::ScalarBlock => Ok(()),
            ConditionalExpectation::Pinching(parts) => {
                let n: usize = parts.iter().map(Vec::len).sum();
                for (i, b) in algebra.blocks().iter().enumerate() {
                    if b.dim != n {
                        return Err(Error::ShapeMismatch(format!(
                            "pinching partitions {n} indices but block {i} has dimension {}",
                            b.dim
                        )));
                    }
                }
                Ok(())
            }
            ConditionalExpectation::PartialTrace { outer, inner } => {
                for (i, b) in algebra.blocks().iter().enumerate() {
                    if b.dim != outer * inner {
                        return Err(Error::ShapeMismatch(format!(
                            "legs {outer}x{inner} do not split block {i} of dimension {}",
                            b.dim
                        )));
                    }
                }
                Ok(())
            }
            ConditionalExpectation::Doubled(inner) => {
                let base = algebra
                    .undoubled()
                    .ok_or_else(|| Error::ShapeMismatch("algebra is not of the form A ⊕ A".into()))?;
                inner.validate(&base)
            }
            ConditionalExpectation::Compose(list) => list.iter().try_for_each(|e| e.validate(algebra)),
        }
    }

    pub fn apply(&self, x: &Operator) -> Result<Operator> {
        self.validate(x.algebra())?;
        Ok(self.apply_unchecked(x))
    }

    fn apply_unchecked(&self, x: &Operator) -> Operator {
        match self {
            ConditionalExpectation::Identity => x.clone(),
            ConditionalExpectation::Scalar => {
                let s = x.trace() / x.algebra().total_mass();
                Operator::scalar(x.algebra(), s)
            }
            ConditionalExpectation::ScalarBlock => x.map_blocks(|_, m| {
                let n = m.nrows();
                linalg::eye(n) * (linalg::trace(m) / n as f64)
            }),
            ConditionalExpectation::Pinching(parts) => x.map_blocks(|_, m| {
                let mut out = linalg::zeros(m.nrows(), m.ncols());
                for part in parts {
                    for &r in part {
                        for &c in part {
                            out[(r, c)] = m[(r, c)];
                        }
                    }
                }
                out
            }),
            ConditionalExpectation::PartialTrace { outer, inner } => {
                let (o, k) = (*outer, *inner);
                x.map_blocks(|_, m| {
                    let mut reduced = linalg::zeros(o, o);
                    for a in 0..o {
                        for b in 0..o {
                            let mut s = linalg::c(0.0);
                            for j in 0..k {
                                s += m[(a * k + j, b * k + j)];
                            }
                            reduced[(a, b)] = s / k as f64;
                        }
                    }
                    linalg::kron(&reduced, &linalg::eye(k))
                })
            }
            ConditionalExpectation::Doubled(inner) => {
                let base = x.algebra().undoubled().expect("validated");
                let half = x.blocks().len() / 2;
                let avg: Vec<Mat> = (0..half).map(|i| (x.block(i) + x.block(half + i)).scale(0.5)).collect();
                let y = Operator::new(base, avg).expect("shapes match");
                let e = inner.apply_unchecked(&y).into_blocks();
                let blocks = e.iter().cloned().chain(e.iter().cloned()).collect();
                Operator::new(x.algebra().clone(), blocks).expect("shapes match")
            }
            ConditionalExpectation::Compose(list) => {
                list.iter().fold(x.clone(), |acc, e| e.apply_unchecked(&acc))
            }
        }
    }

    /// `x − 𝓔x`.
    pub fn center(&self, x: &Operator) -> Result<Operator> {
        Ok(x - self.apply(x)?)
    }

    /// `‖𝓔x − x‖_∞`: zero iff `x` lies in the range.
    pub fn range_distance(&self, x: &Operator) -> Result<f64> {
        Ok((self.apply(x)? - x).op_norm())
    }
}

impl fmt::Display for ConditionalExpectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConditionalExpectation::Identity => f.write_str("identity"),
            ConditionalExpectation::Scalar => f.write_str("scalar"),
            ConditionalExpectation::ScalarBlock => f.write_str("scalarblock"),
            ConditionalExpectation::Pinching(p) => {
                write!(f, "pinch:{}", serde_json::to_string(p).expect("plain integers"))
            }
            ConditionalExpectation::PartialTrace { outer, inner } => write!(f, "ptrace:legs={outer}x{inner}"),
            ConditionalExpectation::Doubled(e) => write!(f, "doubled({e})"),
            ConditionalExpectation::Compose(list) => {
                let parts: Vec<String> = list.iter().map(ToString::to_string).collect();
                write!(f, "compose({})", parts.join(";"))
            }
        }
    }
}

impl FromStr for ConditionalExpectation {
    type Err = Error;

    /// Accepts `identity`, `scalar`, `scalarblock`, `pinch:[[0,1],[2,3]]`,
    /// `ptrace:legs=2x3` (traces out the second leg) and `doubled(...)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "identity" => return Ok(ConditionalExpectation::Identity),
            "scalar" => return Ok(ConditionalExpectation::Scalar),
            "scalarblock" => return Ok(ConditionalExpectation::ScalarBlock),
            _ => {}
        }
        if let Some(json) = s.strip_prefix("pinch:") {
            let parts: Vec<Vec<usize>> =
                serde_json::from_str(json).map_err(|e| Error::Parse(format!("pinching partition {json:?}: {e}")))?;
            return ConditionalExpectation::pinching(parts);
        }
        if let Some(legs) = s.strip_prefix("ptrace:legs=") {
            let (a, b) = legs.split_once('x').ok_or_else(|| Error::Parse(format!("legs {legs:?}")))?;
            let outer = a.trim().parse().map_err(|_| Error::Parse(format!("legs {legs:?}")))?;
            let inner = b.trim().parse().map_err(|_| Error::Parse(format!("legs {legs:?}")))?;
            if outer == 0 || inner == 0 {
                return Err(Error::InvalidParameter("legs must be positive".into()));
            }
            return Ok(ConditionalExpectation::PartialTrace { outer, inner });
        }
        if let Some(inner) = s.strip_prefix("doubled(").and_then(|r| r.strip_suffix(')')) {
            return Ok(ConditionalExpectation::Doubled(Box::new(inner.parse()?)));
        }
        Err(Error::Parse(format!("unknown conditional expectation {s:?}")))
    }
}

fn common_algebra(family: &[Operator]) -> Result<&TracialAlgebra> {
    let first = family.first().ok_or_else(|| Error::InvalidParameter("empty family".into()))?;
    for x in &family[1..] {
        first.same_algebra(x)?;
    }
    Ok(first.algebra())
}

/// `𝓔 Σ xᵢ*xᵢ`.
pub fn column_square(e: &ConditionalExpectation, family: &[Operator]) -> Result<Operator> {
    let alg = common_algebra(family)?;
    let sum = family.iter().fold(Operator::zeros(alg), |acc, x| acc + x.adjoint() * x);
    e.apply(&sum)
}

/// `𝓔 Σ xᵢxᵢ*`.
pub fn row_square(e: &ConditionalExpectation, family: &[Operator]) -> Result<Operator> {
    let alg = common_algebra(family)?;
    let sum = family.iter().fold(Operator::zeros(alg), |acc, x| acc + x * x.adjoint());
    e.apply(&sum)
}

/// `μ(P^{1/2})` for a positive `P`. Eigenvalues below `1e-12` of the largest
/// are rounding noise and count as 0.
pub fn sqrt_mu(p: &Operator) -> Result<StepFunction> {
    let spectrum = p.weighted_eigenvalues()?;
    let floor = SUPPORT_TOL * spectrum.iter().map(|s| s.0).fold(0.0, f64::max);
    StepFunction::from_pairs(
        spectrum.into_iter().map(|(v, w)| (if v > floor { v.sqrt() } else { 0.0 }, w)).collect::<Vec<_>>(),
        p.algebra().total_mass(),
    )
}

/// `μ(Σ xᵢ ⊗ eᵢ)`: every summand keeps its own trace weights.
pub fn diagonal_mu(family: &[Operator]) -> StepFunction {
    let parts: Vec<StepFunction> = family.iter().map(Operator::singular_value_function).collect();
    StepFunction::merge(&parts)
}

/// Generalized singular values of the column, row or diagonal square function.
pub fn conditioned_mu(e: &ConditionalExpectation, family: &[Operator], side: Side) -> Result<StepFunction> {
    match side {
        Side::Column => sqrt_mu(&column_square(e, family)?),
        Side::Row => sqrt_mu(&row_square(e, family)?),
        Side::Diagonal => {
            common_algebra(family)?;
            Ok(diagonal_mu(family))
        }
    }
}

/// `‖(xᵢ)‖_{E,c}`, `‖(xᵢ)‖_{E,r}` or `‖(xᵢ)‖_{E,d}`.
pub fn conditioned_norm(
    e: &ConditionalExpectation,
    family: &[Operator],
    side: Side,
    space: &SymmetricSpace,
) -> Result<f64> {
    Ok(space.eval(&conditioned_mu(e, family, side)?))
}

/// `‖u‖_{∞,c} = ‖𝓔u*u‖_∞^{1/2}`.
pub fn column_sup(e: &ConditionalExpectation, u: &Operator) -> Result<f64> {
    Ok(e.apply(&(u.adjoint() * u))?.op_norm().sqrt())
}

/// `x = u·α` with `α = (𝓔x*x)^{1/2}`.
#[derive(Clone, Debug)]
pub struct EPolar {
    pub u: Operator,
    pub alpha: Operator,
}

impl EPolar {
    pub fn reconstruction_residual(&self, x: &Operator) -> f64 {
        (&self.u * &self.alpha - x).norm2()
    }

    /// Smallest eigenvalue of `𝓔u*u` compressed to the support of `α`
    /// (1 when `α = 0`).
    pub fn support_floor(&self, e: &ConditionalExpectation) -> Result<f64> {
        let s = self.alpha.support_projection(SUPPORT_TOL)?;
        let cuu = e.apply(&(self.u.adjoint() * &self.u))?;
        let compressed = &s * &cuu * &s;
        let mut floor = f64::INFINITY;
        for (sb, cb) in s.blocks().iter().zip(compressed.blocks()) {
            let (vals, vecs) = linalg::eigh(sb);
            for (j, &v) in vals.iter().enumerate() {
                if v > 0.5 {
                    let col = vecs.column(j);
                    let q = (col.adjoint() * cb * col)[(0, 0)].re;
                    floor = floor.min(q);
                }
            }
        }
        Ok(if floor.is_finite() { floor } else { 1.0 })
    }
}

/// The `𝓔`-polar decomposition: `u = x·α⁺` with the pseudo-inverse taken on the
/// support of `α`; `u` is not renormalized. Eigenvalues of `𝓔x*x` below
/// `1e-12` of the largest are rounding noise and set to 0 before the square
/// root, which would otherwise lift them to `1e-8`.
pub fn e_polar_decompose(e: &ConditionalExpectation, x: &Operator) -> Result<EPolar> {
    let square = column_square(e, std::slice::from_ref(x))?;
    let floor = SUPPORT_TOL * square.max_eigenvalue()?.max(0.0);
    let alpha = square.functional_calculus(|v| if v > floor { v.sqrt() } else { 0.0 })?;
    let pinv = alpha.positive_pinv(SUPPORT_TOL)?;
    Ok(EPolar { u: x * &pinv, alpha })
}

/// Norming element for `‖x‖_{p,c}`: `z` with `‖z‖_{p′,c} ≤ 1` and `τ(z*x) = ‖x‖_{p,c}`.
pub fn duality_extremizer(e: &ConditionalExpectation, x: &Operator, p: Exponent) -> Result<(Operator, f64)> {
    if x.op_norm() == 0.0 {
        return Err(Error::ZeroInput);
    }
    let EPolar { u, alpha } = e_polar_decompose(e, x)?;
    let z = match p {
        Exponent::Infinity => {
            let top = alpha.max_eigenvalue()?;
            let proj = alpha.functional_calculus(|v| if v >= top * (1.0 - 1e-12) { 1.0 } else { 0.0 })?;
            let mass = proj.trace().re;
            &u * proj.scale(1.0 / mass)
        }
        Exponent::Finite(p) => {
            let cutoff = SUPPORT_TOL * alpha.op_norm();
            let powered = alpha.functional_calculus(|v| if v > cutoff { v.powf(p - 1.0) } else { 0.0 })?;
            let norm = SymmetricSpace::Lp(Exponent::Finite(p)).norm(&alpha);
            &u * powered.scale(1.0 / norm.powf(p - 1.0))
        }
    };
    let value = z.inner(x).norm();
    Ok((z, value))
}

/// `‖𝓔(u*v)‖_∞`, bounded by `‖u‖_{∞,c}‖v‖_{∞,c}`.
pub fn kadison_value(e: &ConditionalExpectation, u: &Operator, v: &Operator) -> Result<f64> {
    Ok(e.apply(&(u.adjoint() * v))?.op_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, C64};

    fn mat(n: usize, seed: u64) -> Mat {
        let mut s = seed.wrapping_add(0x9E3779B97F4A7C15);
        let mut next = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        Mat::from_fn(n, n, |_, _| C64::new(next(), next()))
    }

    #[test]
    fn pinching_to_diagonal() {
        let x = Operator::from_matrix(Mat::from_row_slice(2, 2, &[c(1.0), c(2.0), c(3.0), c(4.0)])).unwrap();
        let e = ConditionalExpectation::diagonal(2);
        let y = e.apply(&x).unwrap();
        assert!((&y - &Operator::from_real_diagonal(&[1.0, 4.0]).unwrap()).op_norm() < 1e-15);
    }

    #[test]
    fn scalar_centers_traceless() {
        let x = Operator::from_real_diagonal(&[1.0, -1.0]).unwrap();
        assert!(ConditionalExpectation::ScalarBlock.apply(&x).unwrap().op_norm() < 1e-15);
        assert!(ConditionalExpectation::Scalar.apply(&x).unwrap().op_norm() < 1e-15);
    }

    #[test]
    fn expectations_preserve_trace_and_are_idempotent() {
        let x = Operator::from_matrix(mat(6, 3)).unwrap();
        for e in [
            ConditionalExpectation::Scalar,
            ConditionalExpectation::diagonal(6),
            ConditionalExpectation::pinching(vec![vec![0, 3], vec![1, 2, 4], vec![5]]).unwrap(),
            ConditionalExpectation::PartialTrace { outer: 2, inner: 3 },
            ConditionalExpectation::PartialTrace { outer: 3, inner: 2 },
        ] {
            let y = e.apply(&x).unwrap();
            assert!((y.trace() - x.trace()).norm() < 1e-12, "{e}");
            assert!((&e.apply(&y).unwrap() - &y).op_norm() < 1e-12, "{e}");
        }
    }

    #[test]
    fn doubled_expectation_averages() {
        let alg = TracialAlgebra::matrix(2).doubled();
        let x = Operator::new(alg, vec![mat(2, 1), mat(2, 2)]).unwrap();
        let e = ConditionalExpectation::Doubled(Box::new(ConditionalExpectation::Scalar));
        let y = e.apply(&x).unwrap();
        assert!((y.trace() - x.trace()).norm() < 1e-12);
        assert!((y.block(0) - y.block(1)).norm() < 1e-15);
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let x = Operator::from_matrix(mat(3, 1)).unwrap();
        assert!(ConditionalExpectation::diagonal(2).apply(&x).is_err());
        assert!(ConditionalExpectation::PartialTrace { outer: 2, inner: 2 }.apply(&x).is_err());
        assert!(ConditionalExpectation::Doubled(Box::new(ConditionalExpectation::Scalar)).apply(&x).is_err());
        assert!(ConditionalExpectation::pinching(vec![vec![0], vec![0, 1]]).is_err());
    }

    #[test]
    fn descriptor_round_trip() {
        for s in ["identity", "scalar", "scalarblock", "pinch:[[0,1],[2,3]]", "ptrace:legs=1x2", "doubled(scalar)"] {
            let e: ConditionalExpectation = s.parse().unwrap();
            assert_eq!(e.to_string().parse::<ConditionalExpectation>().unwrap(), e);
        }
        assert!("pinch:[[0],[2]]".parse::<ConditionalExpectation>().is_err());
    }

    #[test]
    fn conditioned_norm_examples() {
        let b = Operator::from_real_diagonal(&[1.0, -1.0]).unwrap();
        let fam = vec![b.clone(), b.clone()];
        let e = ConditionalExpectation::ScalarBlock;
        let linf = SymmetricSpace::linf();
        let col = conditioned_norm(&e, &fam, Side::Column, &linf).unwrap();
        let diag = conditioned_norm(&e, &fam, Side::Diagonal, &linf).unwrap();
        assert!((col - 2f64.sqrt()).abs() < 1e-12);
        assert!((diag - 1.0).abs() < 1e-12);

        let x = Operator::from_matrix(mat(3, 5)).unwrap();
        let l2 = SymmetricSpace::lp(2.0).unwrap();
        let col = conditioned_norm(&e, std::slice::from_ref(&x), Side::Column, &l2).unwrap();
        assert!((col - x.norm2()).abs() < 1e-12);
    }

    #[test]
    fn e_polar_examples() {
        let x = Operator::from_real_diagonal(&[2.0, 0.0]).unwrap();
        let p = e_polar_decompose(&ConditionalExpectation::Identity, &x).unwrap();
        assert!((&p.alpha - &x).op_norm() < 1e-12);
        assert!((&p.u - &Operator::from_real_diagonal(&[1.0, 0.0]).unwrap()).op_norm() < 1e-12);

        let (q, _) = Operator::from_matrix(mat(3, 9)).unwrap().polar_decompose();
        let p = e_polar_decompose(&ConditionalExpectation::Scalar, &q).unwrap();
        assert!((&p.alpha - &Operator::identity(q.algebra())).op_norm() < 1e-10);
        assert!((&p.u - &q).op_norm() < 1e-10);
    }

    #[test]
    fn e_polar_random_pinching() {
        let e = ConditionalExpectation::pinching(vec![vec![0, 1], vec![2, 3]]).unwrap();
        let x = Operator::from_matrix(mat(4, 17)).unwrap();
        let p = e_polar_decompose(&e, &x).unwrap();
        assert!(p.reconstruction_residual(&x) <= 1e-9 * x.norm2());
        assert!(column_sup(&e, &p.u).unwrap() <= 1.0 + 1e-9);
        assert!(p.support_floor(&e).unwrap() >= 1.0 - 1e-8);
    }

    #[test]
    fn duality_examples() {
        let x = Operator::from_matrix(mat(3, 4)).unwrap();
        let (z, v) = duality_extremizer(&ConditionalExpectation::ScalarBlock, &x, Exponent::Finite(2.0)).unwrap();
        assert!((v - x.norm2()).abs() < 1e-10);
        assert!((&z - &x.scale(1.0 / x.norm2())).op_norm() < 1e-10);

        let x = Operator::from_real_diagonal(&[2.0, 1.0]).unwrap();
        let (_, v) = duality_extremizer(&ConditionalExpectation::diagonal(2), &x, Exponent::Infinity).unwrap();
        assert!((v - 2.0).abs() < 1e-12);

        let zero = Operator::zeros(&TracialAlgebra::matrix(2));
        assert_eq!(duality_extremizer(&ConditionalExpectation::Scalar, &zero, Exponent::Infinity).unwrap_err(), Error::ZeroInput);
    }
}
