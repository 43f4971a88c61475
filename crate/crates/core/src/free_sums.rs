//! Families of free summands: the `∩` and `Σ` norms, the optimal
//! decomposition solver and the algebraic decomposition `xᵢ = uᵢα + βuᵢ + uᵢγᵢ`.
//!
//! Summands of a [`FreeFamily`] live in copies of one common algebra of mass 1
//! with one conditional expectation onto the shared subalgebra `𝓝`. Quantities
//! that only involve conditioned norms are exact; the norm of the free sum
//! itself comes from [`crate::rmt`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::check::CheckRow;
use crate::conditioned::{self, ConditionalExpectation, Side};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::optim::{self, LbfgsConfig};
use crate::rmt::{self, ModelConfig};
use crate::spaces::{Interpolation, SymmetricSpace};
use crate::step::StepFunction;
use crate::tracial::{Operator, TracialAlgebra};

/// Relative tolerance for `𝓔xᵢ = 0`.
pub const CENTERED_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct FreeFamily {
    ce: ConditionalExpectation,
    summands: Vec<Operator>,
    centered: bool,
}

impl FreeFamily {
    pub fn new(ce: ConditionalExpectation, summands: Vec<Operator>) -> Result<Self> {
        let first = summands.first().ok_or_else(|| Error::InvalidParameter("a family needs a summand".into()))?;
        let algebra = first.algebra().clone();
        if (algebra.total_mass() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "summand algebras must have mass 1, got {}",
                algebra.total_mass()
            )));
        }
        for x in &summands[1..] {
            first.same_algebra(x)?;
        }
        ce.validate(&algebra)?;
        let mut centered = true;
        for x in &summands {
            if ce.apply(x)?.op_norm() > CENTERED_TOL * (1.0 + x.op_norm()) {
                centered = false;
            }
        }
        Ok(Self { ce, summands, centered })
    }

    /// Like [`FreeFamily::new`] but rejects summands with `𝓔xᵢ ≠ 0`.
    pub fn centered(ce: ConditionalExpectation, summands: Vec<Operator>) -> Result<Self> {
        let f = Self::new(ce, summands)?;
        f.require_centered()?;
        Ok(f)
    }

    /// Replaces every summand by `xᵢ − 𝓔xᵢ`.
    pub fn centering(ce: ConditionalExpectation, summands: Vec<Operator>) -> Result<Self> {
        let centered = summands.iter().map(|x| ce.center(x)).collect::<Result<Vec<_>>>()?;
        Self::new(ce, centered)
    }

    pub fn require_centered(&self) -> Result<()> {
        if !self.centered {
            return Err(Error::InvalidParameter("family is not centered: 𝓔xᵢ ≠ 0".into()));
        }
        Ok(())
    }

    pub fn ce(&self) -> &ConditionalExpectation {
        &self.ce
    }

    pub fn summands(&self) -> &[Operator] {
        &self.summands
    }

    pub fn algebra(&self) -> &TracialAlgebra {
        self.summands[0].algebra()
    }

    pub fn len(&self) -> usize {
        self.summands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.summands.is_empty()
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn is_zero(&self) -> bool {
        self.summands.iter().all(|x| x.op_norm() == 0.0)
    }

    pub fn conditioned_norm(&self, side: Side, space: &SymmetricSpace) -> Result<f64> {
        conditioned::conditioned_norm(&self.ce, &self.summands, side, space)
    }

    /// `‖(xᵢ)‖_2 = (Σ‖xᵢ‖₂²)^{1/2}`, the L² norm of the free sum.
    pub fn l2_norm(&self) -> f64 {
        self.summands.iter().map(|x| x.norm2().powi(2)).sum::<f64>().sqrt()
    }

    /// `π(xᵢ) = (xᵢ, −xᵢ)` in `𝓜ᵢ ⊕ 𝓜ᵢ`, conditioned by `(y, z) ↦ 𝓔((y+z)/2)`.
    pub fn symmetrize(&self) -> FreeFamily {
        let summands = self.summands.iter().map(pi).collect();
        let ce = ConditionalExpectation::Doubled(Box::new(self.ce.clone()));
        FreeFamily::new(ce, summands).expect("doubling keeps mass and shapes")
    }
}

/// `z ↦ (z, −z)`.
pub fn pi(z: &Operator) -> Operator {
    let alg = z.algebra().doubled();
    let blocks = z.blocks().iter().cloned().chain(z.blocks().iter().map(|m| -m)).collect();
    Operator::new(alg, blocks).expect("doubled shapes")
}

/// `(y, z) ↦ (z, y)` on a doubled algebra.
pub fn swap(x: &Operator) -> Result<Operator> {
    x.algebra()
        .undoubled()
        .ok_or_else(|| Error::ShapeMismatch("swap needs an algebra of the form A ⊕ A".into()))?;
    let half = x.blocks().len() / 2;
    let blocks = x.blocks()[half..].iter().chain(&x.blocks()[..half]).cloned().collect();
    Operator::new(x.algebra().clone(), blocks)
}

/// `½(x − 𝒮x)`.
pub fn antisymmetrize(x: &Operator) -> Result<Operator> {
    Ok((x - swap(x)?).scale(0.5))
}

/// First half `y` of `(y, z)`.
pub fn first_half(x: &Operator) -> Result<Operator> {
    let base = x
        .algebra()
        .undoubled()
        .ok_or_else(|| Error::ShapeMismatch("not a doubled operator".into()))?;
    let half = x.blocks().len() / 2;
    Operator::new(base, x.blocks()[..half].to_vec())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CapNorm {
    pub value: f64,
    pub column: f64,
    pub row: f64,
    pub diagonal: f64,
}

/// `‖x‖_{E,∩} = max(‖x‖_{E,c}, ‖x‖_{E,r}, ‖x‖_{E,d})`.
pub fn cap_norm(f: &FreeFamily, space: &SymmetricSpace) -> Result<CapNorm> {
    f.require_centered()?;
    let column = f.conditioned_norm(Side::Column, space)?;
    let row = f.conditioned_norm(Side::Row, space)?;
    let diagonal = f.conditioned_norm(Side::Diagonal, space)?;
    Ok(CapNorm { value: column.max(row).max(diagonal), column, row, diagonal })
}

/// `xᵢ = aᵢ + bᵢ + dᵢ`, all centered.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub a: Vec<Operator>,
    pub b: Vec<Operator>,
    pub d: Vec<Operator>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitValue {
    pub column: f64,
    pub row: f64,
    pub diagonal: f64,
}

impl SplitValue {
    pub fn total(&self) -> f64 {
        self.column + self.row + self.diagonal
    }
}

impl Decomposition {
    pub fn zero(f: &FreeFamily) -> Self {
        let z = vec![Operator::zeros(f.algebra()); f.len()];
        Self { a: z.clone(), b: z.clone(), d: z }
    }

    /// `a`, `b` given; `d = x − a − b`.
    pub fn from_ab(f: &FreeFamily, a: Vec<Operator>, b: Vec<Operator>) -> Self {
        let d = f.summands().iter().zip(&a).zip(&b).map(|((x, a), b)| x - a - b).collect();
        Self { a, b, d }
    }

    pub fn all_column(f: &FreeFamily) -> Self {
        let z = vec![Operator::zeros(f.algebra()); f.len()];
        Self::from_ab(f, f.summands().to_vec(), z)
    }

    pub fn all_row(f: &FreeFamily) -> Self {
        let z = vec![Operator::zeros(f.algebra()); f.len()];
        Self::from_ab(f, z, f.summands().to_vec())
    }

    pub fn all_diagonal(f: &FreeFamily) -> Self {
        let z = vec![Operator::zeros(f.algebra()); f.len()];
        Self::from_ab(f, z.clone(), z)
    }

    /// `‖a‖_{E,c}`, `‖b‖_{E,r}`, `‖d‖_{E,d}`.
    pub fn split_value(&self, ce: &ConditionalExpectation, space: &SymmetricSpace) -> Result<SplitValue> {
        Ok(SplitValue {
            column: conditioned::conditioned_norm(ce, &self.a, Side::Column, space)?,
            row: conditioned::conditioned_norm(ce, &self.b, Side::Row, space)?,
            diagonal: conditioned::conditioned_norm(ce, &self.d, Side::Diagonal, space)?,
        })
    }

    pub fn objective(&self, ce: &ConditionalExpectation, space: &SymmetricSpace) -> Result<f64> {
        Ok(self.split_value(ce, space)?.total())
    }

    /// `maxᵢ ‖xᵢ − aᵢ − bᵢ − dᵢ‖₂`.
    pub fn residual(&self, f: &FreeFamily) -> f64 {
        f.summands()
            .iter()
            .enumerate()
            .map(|(i, x)| (x - &self.a[i] - &self.b[i] - &self.d[i]).norm2())
            .fold(0.0, f64::max)
    }

    /// Largest `‖𝓔·‖_∞` over all parts.
    pub fn centering_defect(&self, ce: &ConditionalExpectation) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for op in self.a.iter().chain(&self.b).chain(&self.d) {
            worst = worst.max(ce.apply(op)?.op_norm());
        }
        Ok(worst)
    }

    pub fn scale(&self, s: f64) -> Self {
        let sc = |v: &Vec<Operator>| v.iter().map(|x| x.scale(s)).collect();
        Self { a: sc(&self.a), b: sc(&self.b), d: sc(&self.d) }
    }

    /// `½(part − 𝒮 part)` for all three parts.
    pub fn antisymmetrized(&self) -> Result<Self> {
        let anti = |v: &Vec<Operator>| v.iter().map(antisymmetrize).collect::<Result<Vec<_>>>();
        Ok(Self { a: anti(&self.a)?, b: anti(&self.b)?, d: anti(&self.d)? })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub tol_rel: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { max_iter: 10_000, eps_start: 1e-2, eps_end: 1e-8, tol_rel: 1e-7, seed: 0 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be positive".into()));
        }
        if !(self.eps_start > 0.0 && self.eps_end > 0.0 && self.eps_end <= self.eps_start) {
            return Err(Error::InvalidParameter("need 0 < eps_end ≤ eps_start".into()));
        }
        if !(self.tol_rel > 0.0) {
            return Err(Error::InvalidParameter("tol_rel must be positive".into()));
        }
        Ok(())
    }

    /// `eps_start, eps_start/10, …` down to `eps_end`.
    pub fn schedule(&self) -> Vec<f64> {
        let mut out = vec![self.eps_start];
        let mut e = self.eps_start;
        while e > self.eps_end * (1.0 + 1e-9) {
            e = (e / 10.0).max(self.eps_end);
            out.push(e);
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct SigmaResult {
    pub value: f64,
    pub parts: SplitValue,
    pub witness: Decomposition,
    pub converged: bool,
    pub iterations: usize,
    /// Which starting point or method produced the witness.
    pub origin: &'static str,
}

/// Spectrum `(λ, width)` and eigenvectors of every block of a self-adjoint operator.
fn block_spectra(p: &Operator) -> Vec<(Vec<f64>, Mat, f64)> {
    p.blocks()
        .iter()
        .zip(p.algebra().blocks())
        .map(|(m, b)| {
            let (v, vecs) = linalg::eigh(m);
            (v, vecs, b.mass / b.dim as f64)
        })
        .collect()
}

/// Smoothed `‖(Q+ε)^{1/2}‖_E` for several positive `Q`s read as one direct
/// sum, with the derivative operators `G'` such that
/// `d value = Σₖ τ(G'ₖ dQₖ)`.
fn smoothed_term(qs: &[Operator], eps: f64, space: &SymmetricSpace) -> Result<(f64, Vec<Operator>)> {
    let spectra: Vec<Vec<(Vec<f64>, Mat, f64)>> = qs.iter().map(block_spectra).collect();
    let mut flat = Vec::new();
    for s in &spectra {
        for (vals, _, w) in s {
            flat.extend(vals.iter().map(|&q| ((q.max(0.0) + eps).sqrt(), *w)));
        }
    }
    let domain: f64 = qs.iter().map(|q| q.algebra().total_mass()).sum();
    let value = space.eval(&StepFunction::from_pairs(flat.iter().copied(), domain)?);
    let g = space.spectral_gradient(&flat)?;
    let mut k = 0;
    let mut grads = Vec::with_capacity(qs.len());
    for (q, s) in qs.iter().zip(&spectra) {
        let mut blocks = Vec::with_capacity(s.len());
        for (vals, vecs, _) in s {
            let weights: Vec<f64> = vals
                .iter()
                .map(|_| {
                    let (p, _) = flat[k];
                    let v = g[k] / (2.0 * p);
                    k += 1;
                    v
                })
                .collect();
            blocks.push(linalg::from_eigen(&weights, vecs));
        }
        grads.push(Operator::new(q.algebra().clone(), blocks)?);
    }
    Ok((value, grads))
}

struct SmoothProblem<'a> {
    ce: &'a ConditionalExpectation,
    x: &'a [Operator],
    algebra: &'a TracialAlgebra,
    space: &'a SymmetricSpace,
}

impl SmoothProblem<'_> {
    fn parts(&self, v: &[f64]) -> (Vec<Operator>, Vec<Operator>, Vec<Operator>) {
        let k = self.x.len();
        let (ra, rest) = optim::unpack(self.algebra, k, v);
        let (rb, _) = optim::unpack(self.algebra, k, rest);
        let center = |ops: Vec<Operator>| -> Vec<Operator> {
            ops.into_iter().map(|o| self.ce.center(&o).expect("validated")).collect()
        };
        let a = center(ra);
        let b = center(rb);
        let d = self.x.iter().zip(&a).zip(&b).map(|((x, a), b)| x - a - b).collect();
        (a, b, d)
    }

    fn eval(&self, v: &[f64], eps: f64) -> Result<(f64, Vec<f64>)> {
        let (a, b, d) = self.parts(v);
        let qc = conditioned::column_square(self.ce, &a)?;
        let qr = conditioned::row_square(self.ce, &b)?;
        let qd: Vec<Operator> = d.iter().map(|di| di.adjoint() * di).collect();
        let (vc, gc) = smoothed_term(std::slice::from_ref(&qc), eps, self.space)?;
        let (vr, gr) = smoothed_term(std::slice::from_ref(&qr), eps, self.space)?;
        let (vd, gd) = smoothed_term(&qd, eps, self.space)?;
        let mut ga = Vec::with_capacity(a.len());
        let mut gb = Vec::with_capacity(b.len());
        for i in 0..a.len() {
            let from_d = (&d[i] * &gd[i]).scale(2.0);
            let raw_a = (&a[i] * &gc[0]).scale(2.0) - &from_d;
            let raw_b = (&gr[0] * &b[i]).scale(2.0) - &from_d;
            ga.push(self.ce.center(&raw_a)?);
            gb.push(self.ce.center(&raw_b)?);
        }
        let mut grad = Vec::with_capacity(v.len());
        optim::pack_trace_gradient(&ga, &mut grad);
        optim::pack_trace_gradient(&gb, &mut grad);
        Ok((vc + vr + vd, grad))
    }
}

/// `‖x‖_{E,Σ}` by smoothing and continuation, started from the best of the
/// trivial splits and any `extra` candidates; returns the exact objective at
/// the best witness found.
pub fn sigma_norm_with_candidates(
    f: &FreeFamily,
    space: &SymmetricSpace,
    cfg: &SolverConfig,
    extra: &[Decomposition],
) -> Result<SigmaResult> {
    f.require_centered()?;
    cfg.validate()?;
    let ce = f.ce();
    if f.is_zero() {
        let witness = Decomposition::zero(f);
        let parts = witness.split_value(ce, space)?;
        return Ok(SigmaResult { value: 0.0, parts, witness, converged: true, iterations: 0, origin: "zero" });
    }

    let mut candidates: Vec<(&'static str, Decomposition)> = vec![
        ("column", Decomposition::all_column(f)),
        ("row", Decomposition::all_row(f)),
        ("diagonal", Decomposition::all_diagonal(f)),
    ];
    candidates.extend(extra.iter().cloned().map(|d| ("supplied", d)));
    let mut best: Option<(f64, SplitValue, Decomposition, &'static str)> = None;
    for (name, cand) in candidates {
        let parts = cand.split_value(ce, space)?;
        if best.as_ref().is_none_or(|b| parts.total() < b.0) {
            best = Some((parts.total(), parts, cand, name));
        }
    }
    let (mut best_value, mut best_parts, mut best_witness, mut origin) = best.expect("non-empty");

    let mut converged = true;
    let mut iterations = 0;
    if space.spectral_gradient(&[(1.0, 1.0)]).is_ok() {
        let scale = f.l2_norm();
        let scaled: Vec<Operator> = f.summands().iter().map(|x| x.scale(1.0 / scale)).collect();
        let problem = SmoothProblem { ce, x: &scaled, algebra: f.algebra(), space };
        let mut v = Vec::with_capacity(optim::packed_len(f.algebra(), 2 * f.len()));
        optim::pack(&best_witness.scale(1.0 / scale).a, &mut v);
        optim::pack(&best_witness.scale(1.0 / scale).b, &mut v);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        v.iter_mut().for_each(|t| *t += 1e-3 * (rng.random::<f64>() - 0.5));

        let lb = LbfgsConfig { max_iter: cfg.max_iter, tol_rel: cfg.tol_rel, ..LbfgsConfig::default() };
        for eps in cfg.schedule() {
            let mut failure = None;
            let out = optim::minimize(
                |p| match problem.eval(p, eps) {
                    Ok(r) => r,
                    Err(e) => {
                        failure = Some(e);
                        (f64::INFINITY, vec![0.0; p.len()])
                    }
                },
                v.clone(),
                &lb,
            );
            if let Some(e) = failure {
                return Err(e);
            }
            iterations += out.iterations;
            converged = out.converged;
            v = out.x;
        }
        let (a, b, d) = problem.parts(&v);
        let witness = Decomposition { a, b, d }.scale(scale);
        let parts = witness.split_value(ce, space)?;
        if parts.total() < best_value {
            best_value = parts.total();
            best_parts = parts;
            best_witness = witness;
            origin = "solver";
        }
    }
    Ok(SigmaResult { value: best_value, parts: best_parts, witness: best_witness, converged, iterations, origin })
}

pub fn sigma_norm(f: &FreeFamily, space: &SymmetricSpace, cfg: &SolverConfig) -> Result<SigmaResult> {
    sigma_norm_with_candidates(f, space, cfg, &[])
}

/// Truncation of a decomposition at level `m`: with `e = 1_{[0,m]}((𝓔Σa*a)^{1/2})`
/// and `f = 1_{[0,m]}((𝓔Σbb*)^{1/2})`, returns
/// `(f a e + x(1−e), f d e, f b e + (1−f) x e)`.
pub fn l2_truncate(fam: &FreeFamily, dec: &Decomposition, m: f64) -> Result<Decomposition> {
    let ce = fam.ce();
    let in_range = |v: f64| if v.max(0.0).sqrt() <= m { 1.0 } else { 0.0 };
    let e = conditioned::column_square(ce, &dec.a)?.functional_calculus(in_range)?;
    let f = conditioned::row_square(ce, &dec.b)?.functional_calculus(in_range)?;
    let one = Operator::identity(fam.algebra());
    let (ce_, cf) = (&one - &e, &one - &f);
    let mut a = Vec::with_capacity(fam.len());
    let mut b = Vec::with_capacity(fam.len());
    let mut d = Vec::with_capacity(fam.len());
    for (i, x) in fam.summands().iter().enumerate() {
        a.push(&f * &dec.a[i] * &e + x * &ce_);
        d.push(&f * &dec.d[i] * &e);
        b.push(&f * &dec.b[i] * &e + &cf * x * &e);
    }
    Ok(Decomposition { a, b, d })
}

/// Residuals of the algebraic decomposition; every entry should be close to 0
/// except the two diagnostics.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AlgebraicResiduals {
    /// `maxᵢ ‖xᵢ − uᵢα − βuᵢ − uᵢγᵢ‖₂`.
    pub reconstruction: f64,
    /// `maxᵢ ‖uᵢγᵢ − δᵢuᵢ‖₂`.
    pub intertwining: f64,
    /// `‖(𝓔Σuᵢ*uᵢ)^{1/2}‖_∞`, `‖(𝓔Σuᵢuᵢ*)^{1/2}‖_∞`, `supᵢ‖uᵢ‖_∞`: contractions.
    pub column_sup: f64,
    pub row_sup: f64,
    pub max_u: f64,
    /// `1 − λ_min(s(α)(𝓔Σ|uᵢ|²)s(α))` on the support, and likewise for β.
    pub alpha_support_deficit: f64,
    pub beta_support_deficit: f64,
    /// `maxᵢ ‖s(γᵢ) − s(γᵢ)|uᵢ|²s(γᵢ)‖_∞`, and for `δᵢ` with `|uᵢ*|²`.
    pub gamma_support_deficit: f64,
    pub delta_support_deficit: f64,
    /// `maxᵢ ‖s(γᵢ)|uᵢ| − s(γᵢ)‖_∞`.
    pub rela: f64,
    /// `‖u‖_{∞,d̊}` of the symmetrized certificate.
    pub centered_distance: f64,
    /// `maxᵢ‖dᵢ‖_∞ / maxᵢ‖xᵢ‖_∞`, reported but not asserted.
    pub d_ratio: f64,
}

impl AlgebraicResiduals {
    /// Largest violation of the identities and contraction conditions.
    pub fn worst(&self) -> f64 {
        [
            self.reconstruction,
            self.intertwining,
            (self.column_sup - 1.0).max(0.0),
            (self.row_sup - 1.0).max(0.0),
            (self.max_u - 1.0).max(0.0),
            self.alpha_support_deficit,
            self.beta_support_deficit,
            self.gamma_support_deficit,
            self.delta_support_deficit,
            self.rela,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct AlgebraicDecomposition {
    pub u: Vec<Operator>,
    pub alpha: Operator,
    pub beta: Operator,
    pub gamma: Vec<Operator>,
    pub delta: Vec<Operator>,
    /// `‖π(x)‖_{1,Σ}` from the solver.
    pub sigma_l1: f64,
    pub converged: bool,
    pub residuals: AlgebraicResiduals,
}

/// Singular values below this fraction of the largest define the numerical
/// supports of `α`, `β`, `γᵢ`.
pub const DECOMPOSITION_SUPPORT_TOL: f64 = 1e-7;

fn support(p: &Operator) -> Result<Operator> {
    p.support_projection(DECOMPOSITION_SUPPORT_TOL)
}

fn pinv(p: &Operator) -> Result<Operator> {
    p.positive_pinv(DECOMPOSITION_SUPPORT_TOL)
}

/// `sup_i inf_{e∈𝓝} ‖xᵢ + e‖_∞`. Exact (nested ternary search) for a scalar
/// subalgebra; cyclic coordinate search over `𝓔` of matrix units otherwise.
pub fn centered_distance(ce: &ConditionalExpectation, family: &[Operator]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for x in family {
        let radius = 2.0 * x.op_norm() + 1e-300;
        let alg = x.algebra();
        let scalar = match ce {
            ConditionalExpectation::Scalar => true,
            ConditionalExpectation::Doubled(inner) => **inner == ConditionalExpectation::Scalar,
            _ => false,
        };
        let value = match scalar {
            true => {
                let one = Operator::identity(alg);
                let f = |re: f64, im: f64| (x + one.scale_complex(linalg::C64::new(re, im))).op_norm();
                let inner = |re: f64| ternary(|im| f(re, im), -radius, radius).1;
                ternary(inner, -radius, radius).1
            }
            false => {
                let mut directions = Vec::new();
                for (bi, b) in alg.blocks().iter().enumerate() {
                    for r in 0..b.dim {
                        for c in 0..b.dim {
                            for z in [linalg::c(1.0), linalg::C64::new(0.0, 1.0)] {
                                let mut op = Operator::zeros(alg).into_blocks();
                                op[bi][(r, c)] = z;
                                let dir = ce.apply(&Operator::new(alg.clone(), op)?)?;
                                if dir.op_norm() > 1e-12 {
                                    directions.push(dir);
                                }
                            }
                        }
                    }
                }
                let mut current = x.clone();
                let mut value = current.op_norm();
                for _ in 0..20 {
                    let before = value;
                    for dir in &directions {
                        let (t, v) = ternary(|t| (&current + dir.scale(t)).op_norm(), -radius, radius);
                        if v < value {
                            current = &current + dir.scale(t);
                            value = v;
                        }
                    }
                    if before - value <= 1e-12 * before {
                        break;
                    }
                }
                value
            }
        };
        worst = worst.max(value);
    }
    Ok(worst)
}

/// Minimum of a convex function on `[lo, hi]`.
fn ternary(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    for _ in 0..80 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let t = 0.5 * (lo + hi);
    (t, f(t))
}

/// The algebraic decomposition `xᵢ = uᵢα + βuᵢ + uᵢγᵢ`.
///
/// Pipeline: symmetrize, solve the `L¹` split problem, antisymmetrize, take
/// `α = (𝓔̃Σa*a)^{1/2}`, `β = (𝓔̃Σbb*)^{1/2}`, `γᵢ = |dᵢ|`, `δᵢ = |dᵢ*|`, and
/// build `u` from the solver's stationarity certificate, adjusted by
/// alternating projections so that `uα = a`, `βu = b` and `uᵢγᵢ = dᵢ`.
pub fn algebraic_decomposition(f: &FreeFamily, cfg: &SolverConfig) -> Result<AlgebraicDecomposition> {
    f.require_centered()?;
    let sym = f.symmetrize();
    let ce = sym.ce();
    let l1 = SymmetricSpace::lp(1.0)?;
    let k = f.len();
    let base = f.algebra();

    if f.is_zero() {
        let z = Operator::zeros(base);
        return Ok(AlgebraicDecomposition {
            u: vec![z.clone(); k],
            alpha: z.clone(),
            beta: z.clone(),
            gamma: vec![z.clone(); k],
            delta: vec![z; k],
            sigma_l1: 0.0,
            converged: true,
            residuals: AlgebraicResiduals::default(),
        });
    }

    let solved = sigma_norm(&sym, &l1, cfg)?;
    let anti = solved.witness.antisymmetrized()?;
    let dec = if anti.objective(ce, &l1)? <= solved.value + 1e-12 { anti } else { solved.witness.clone() };

    let alpha_t = conditioned::column_square(ce, &dec.a)?.functional_calculus(|v| v.max(0.0).sqrt())?;
    let beta_t = conditioned::row_square(ce, &dec.b)?.functional_calculus(|v| v.max(0.0).sqrt())?;
    let gamma_t: Vec<Operator> = dec.d.iter().map(Operator::abs).collect();
    let (sa, pa) = (support(&alpha_t)?, pinv(&alpha_t)?);
    let (sb, pb) = (support(&beta_t)?, pinv(&beta_t)?);
    let sg: Vec<Operator> = gamma_t.iter().map(support).collect::<Result<_>>()?;
    let pg: Vec<Operator> = gamma_t.iter().map(pinv).collect::<Result<_>>()?;

    // Stationarity certificate: the three smoothed polar parts agree at an optimum.
    let eps = cfg.eps_end;
    let inv_sqrt = |q: &Operator| q.functional_calculus(|v| 1.0 / (v.max(0.0) + eps).sqrt());
    let ic = inv_sqrt(&conditioned::column_square(ce, &dec.a)?)?;
    let ir = inv_sqrt(&conditioned::row_square(ce, &dec.b)?)?;
    let mut u: Vec<Operator> = Vec::with_capacity(k);
    for i in 0..k {
        let id = inv_sqrt(&(dec.d[i].adjoint() * &dec.d[i]))?;
        let cert = (&dec.a[i] * &ic + &ir * &dec.b[i] + &dec.d[i] * &id).scale(1.0 / 3.0);
        u.push(antisymmetrize(&ce.center(&cert)?)?);
    }

    let one = Operator::identity(sym.algebra());
    let ta: Vec<Operator> = dec.a.iter().map(|a| a * &pa).collect();
    let tb: Vec<Operator> = dec.b.iter().map(|b| &pb * b).collect();
    let td: Vec<Operator> = dec.d.iter().zip(&pg).map(|(d, p)| d * p).collect();
    for _ in 0..500 {
        let mut change: f64 = 0.0;
        for i in 0..k {
            let mut ui = &u[i] * (&one - &sa) + &ta[i];
            ui = (&one - &sb) * &ui + &tb[i];
            ui = &ui * (&one - &sg[i]) + &td[i];
            change = change.max((&ui - &u[i]).norm2());
            u[i] = ui;
        }
        if change <= 1e-15 {
            break;
        }
    }
    let centered_dist = centered_distance(ce, &u)?;
    let d_ratio = dec.d.iter().map(Operator::op_norm).fold(0.0, f64::max)
        / f.summands().iter().map(Operator::op_norm).fold(0.0, f64::max);

    let r: Vec<Operator> = u.iter().map(first_half).collect::<Result<_>>()?;
    let alpha = first_half(&alpha_t)?;
    let beta = first_half(&beta_t)?;
    let gamma: Vec<Operator> = gamma_t.iter().map(first_half).collect::<Result<_>>()?;
    let delta: Vec<Operator> = dec.d.iter().map(|d| first_half(&d.adjoint().abs())).collect::<Result<_>>()?;

    let mut residuals = decomposition_residuals(f, &r, &alpha, &beta, &gamma, &delta)?;
    residuals.centered_distance = centered_dist;
    residuals.d_ratio = d_ratio;
    Ok(AlgebraicDecomposition {
        u: r,
        alpha,
        beta,
        gamma,
        delta,
        sigma_l1: solved.value,
        converged: solved.converged,
        residuals,
    })
}

/// Evaluates the identities and support conditions of an algebraic decomposition.
pub fn decomposition_residuals(
    f: &FreeFamily,
    u: &[Operator],
    alpha: &Operator,
    beta: &Operator,
    gamma: &[Operator],
    delta: &[Operator],
) -> Result<AlgebraicResiduals> {
    let ce = f.ce();
    let mut res = AlgebraicResiduals::default();
    for (i, x) in f.summands().iter().enumerate() {
        let rebuilt = &u[i] * alpha + beta * &u[i] + &u[i] * &gamma[i];
        res.reconstruction = res.reconstruction.max((x - rebuilt).norm2());
        res.intertwining = res.intertwining.max((&u[i] * &gamma[i] - &delta[i] * &u[i]).norm2());
        res.max_u = res.max_u.max(u[i].op_norm());

        let uu = u[i].adjoint() * &u[i];
        let vv = &u[i] * u[i].adjoint();
        let sg = support(&gamma[i])?;
        let sd = support(&delta[i])?;
        res.gamma_support_deficit = res.gamma_support_deficit.max((&sg - &sg * &uu * &sg).op_norm());
        res.delta_support_deficit = res.delta_support_deficit.max((&sd - &sd * &vv * &sd).op_norm());
        let abs_u = uu.functional_calculus(|v| v.max(0.0).sqrt())?;
        res.rela = res.rela.max((&sg * &abs_u - &sg).op_norm());
    }
    let col = conditioned::column_square(ce, u)?;
    let row = conditioned::row_square(ce, u)?;
    res.column_sup = col.op_norm().sqrt();
    res.row_sup = row.op_norm().sqrt();
    res.alpha_support_deficit = support_deficit(alpha, &col)?;
    res.beta_support_deficit = support_deficit(beta, &row)?;
    Ok(res)
}

/// `max(0, 1 − λ_min)` of `q` compressed to the support of `p`.
fn support_deficit(p: &Operator, q: &Operator) -> Result<f64> {
    let s = support(p)?;
    let mut floor = f64::INFINITY;
    for (sb, qb) in s.blocks().iter().zip(q.blocks()) {
        let (vals, vecs) = linalg::eigh(sb);
        let cols: Vec<usize> = vals.iter().enumerate().filter(|(_, &v)| v > 0.5).map(|(j, _)| j).collect();
        if cols.is_empty() {
            continue;
        }
        let basis = Mat::from_fn(vecs.nrows(), cols.len(), |r, c| vecs[(r, cols[c])]);
        let compressed = basis.adjoint() * qb * &basis;
        floor = floor.min(linalg::eigvalsh(&compressed)[0]);
    }
    Ok(if floor.is_finite() { (1.0 - floor).max(0.0) } else { 0.0 })
}

/// `‖Σ γᵢ ⊗ eᵢ‖_E`.
pub fn diagonal_norm(gamma: &[Operator], space: &SymmetricSpace) -> f64 {
    space.eval(&conditioned::diagonal_mu(gamma))
}

/// The split used in the lower bound of the Rosenthal-type corollary:
/// `a = Σ ůᵢα`, `b = Σ βůᵢ`, `d = x − a − b`.
pub fn proof_decomposition(f: &FreeFamily, alg: &AlgebraicDecomposition) -> Result<Decomposition> {
    let ce = f.ce();
    let mut a = Vec::with_capacity(f.len());
    let mut b = Vec::with_capacity(f.len());
    for u in &alg.u {
        let centered = ce.center(u)?;
        a.push(&centered * &alg.alpha);
        b.push(&alg.beta * &centered);
    }
    Ok(Decomposition::from_ab(f, a, b))
}

/// Exact quantities entering the Rosenthal-type inequalities in one space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactNorms {
    pub cap: CapNorm,
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// Conditioned norms, `‖x‖_{E,Σ}` (seeded with the split read off `alg`) and
/// the norms of `α`, `β` and `Σγᵢ⊗eᵢ`.
pub fn exact_norms(
    f: &FreeFamily,
    alg: &AlgebraicDecomposition,
    space: &SymmetricSpace,
    cfg: &SolverConfig,
) -> Result<ExactNorms> {
    let candidate = proof_decomposition(f, alg)?;
    Ok(ExactNorms {
        cap: cap_norm(f, space)?,
        sigma: sigma_norm_with_candidates(f, space, cfg, std::slice::from_ref(&candidate))?.value,
        alpha: space.norm(&alg.alpha),
        beta: space.norm(&alg.beta),
        gamma: diagonal_norm(&alg.gamma, space),
    })
}

fn model_samples(f: &FreeFamily, model: &ModelConfig) -> Result<Vec<(u64, StepFunction)>> {
    model.validate()?;
    (0..model.trials)
        .map(|trial| {
            let mut rng = model.trial_rng(trial);
            let mu = rmt::matrix_mu(&rmt::free_model_embed(f, model.n, &mut rng)?)?;
            Ok((rmt::trial_seed(model.seed, trial as u64), mu))
        })
        .collect()
}

fn voiculescu_sample_rows(f: &FreeFamily, cap: &CapNorm, seed: u64, mu: &StepFunction, model: &ModelConfig) -> Result<Vec<CheckRow>> {
    let linf = SymmetricSpace::linf();
    let (slack, l2_tol) = (model.slack, model.l2_tolerance());
    let model = linf.eval(mu);
    let exact2 = f.l2_norm().powi(2);
    let model2 = SymmetricSpace::lp(2.0)?.eval(mu).powi(2);
    Ok(vec![
        CheckRow::new("voiculescu_lower", cap.value, model, 1.0, slack),
        CheckRow::new("voiculescu_upper", model, cap.column + cap.row + cap.diagonal, 1.0, slack),
        // Relative deviation of the model L² norm from Σ‖xᵢ‖₂².
        CheckRow::new("model_l2", (model2 - exact2).abs(), exact2, l2_tol, 0.0),
    ]
    .into_iter()
    .map(|r| r.in_space(&linf).with_seed(seed))
    .collect())
}

/// The operator-norm sandwich `max(c, r, d) ≤ ‖Σxᵢ‖_∞ ≤ c + r + d` against
/// each model sample, plus the L² identity `‖Σxᵢ‖₂² = Σ‖xᵢ‖₂²`.
pub fn voiculescu_rows(f: &FreeFamily, model: &ModelConfig) -> Result<Vec<CheckRow>> {
    f.require_centered()?;
    let cap = cap_norm(f, &SymmetricSpace::linf())?;
    let mut rows = Vec::new();
    for (seed, mu) in model_samples(f, model)? {
        rows.extend(voiculescu_sample_rows(f, &cap, seed, &mu, model)?);
    }
    Ok(rows)
}

fn space_rows(space: &SymmetricSpace, ex: &ExactNorms, seed: u64, model: f64, slack: f64) -> Vec<CheckRow> {
    let mut rows = vec![
        CheckRow::new("mainineq_upper", model, ex.alpha + ex.beta + ex.gamma, 4.0, slack),
        CheckRow::new("mainineq_alpha", ex.alpha, model, 4.0, slack),
        CheckRow::new("mainineq_beta", ex.beta, model, 4.0, slack),
        CheckRow::new("mainineq_gamma", ex.gamma, model, 4.0, slack),
        CheckRow::new("maincor_lower", ex.sigma, model, 16.0, slack),
        CheckRow::new("maincor_upper", model, ex.cap.value, 12.0, slack),
    ];
    match space.interpolation() {
        Some(Interpolation::L1L2) => rows.push(CheckRow::new("maincor_l1l2", model, ex.sigma, 2.0, slack)),
        Some(Interpolation::L2Linf) => rows.push(CheckRow::new("maincor_l2linf", ex.cap.value, model, 2.0, slack)),
        None => {}
    }
    rows.into_iter().map(|r| r.in_space(space).with_seed(seed)).collect()
}

fn majsum_rows(space: &SymmetricSpace, ex: &ExactNorms) -> Vec<CheckRow> {
    let tol = 1e-5;
    [
        ("majsum_alpha", ex.alpha, ex.cap.column),
        ("majsum_beta", ex.beta, ex.cap.row),
        ("majsum_gamma", ex.gamma, ex.cap.diagonal),
    ]
    .into_iter()
    .map(|(q, lhs, rhs)| CheckRow::new(q, lhs, rhs, 1.0, tol / rhs.max(tol)).in_space(space))
    .collect()
}

/// Every inequality relating the free sum to its algebraic decomposition and
/// to the `Σ` and `∩` norms, for each space and model sample. The bounds for
/// `α`, `β`, `γ` against the conditioned norms need no model and appear once
/// per space.
pub fn verify_inequalities(
    f: &FreeFamily,
    spaces: &[SymmetricSpace],
    model: &ModelConfig,
    solver: &SolverConfig,
) -> Result<Vec<CheckRow>> {
    f.require_centered()?;
    if spaces.is_empty() {
        return Err(Error::InvalidParameter("no spaces to check".into()));
    }
    let alg = algebraic_decomposition(f, solver)?;
    let exact: Vec<ExactNorms> = spaces.iter().map(|s| exact_norms(f, &alg, s, solver)).collect::<Result<_>>()?;
    let cap_inf = cap_norm(f, &SymmetricSpace::linf())?;

    let mut rows: Vec<CheckRow> = spaces.iter().zip(&exact).flat_map(|(s, ex)| majsum_rows(s, ex)).collect();
    for (seed, mu) in model_samples(f, model)? {
        rows.extend(voiculescu_sample_rows(f, &cap_inf, seed, &mu, model)?);
        for (space, ex) in spaces.iter().zip(&exact) {
            rows.extend(space_rows(space, ex, seed, space.eval(&mu), model.slack));
        }
    }
    Ok(rows)
}
