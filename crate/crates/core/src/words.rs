//! Coefficients on positive words of length `d` in `n` free generators.
//!
//! A table `x : [n]^d → M_m` gives `G(x) = Σ x(i) ⊗ λ(g_{i₁}⋯g_{i_d})`. The
//! flattening `[x]_k` is the block matrix `(x(αβ))` with `α` running over
//! prefixes of length `d−k` and `β` over suffixes of length `k`. It lives in
//! `𝓐 = M_m ⊗ M_n^{⊗d}` with trace `τ_𝓜 ⊗ Tr^{⊗d}` (normalized on `M_m`,
//! unnormalized on every leg), so `τ_𝓐(1) = n^d`.
//!
//! Matrix conventions: an element of `M_m ⊗ M_n^{⊗k}` is an `(m n^k)`-square
//! matrix with row index `r·n^k + lex(l)`; the flattening is the
//! `(m n^{d−k}) × (m n^k)` matrix with rows `r·n^{d−k} + lex(α)` and columns
//! `s·n^k + lex(β)`.

use std::collections::{HashMap, VecDeque};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::check::CheckRow;
use crate::error::{Error, Result};
use crate::free_sums::SolverConfig;
use crate::linalg::{self, Mat, C64};
use crate::optim::{self, LbfgsConfig};
use crate::rmt::{self, ModelConfig, ModelEstimate, ModelMatrix};
use crate::spaces::{Interpolation, SymmetricSpace};
use crate::step::StepFunction;

/// Rows allowed in a compression before [`compression_lower_bound`] refuses.
pub const COMPRESSION_BUDGET: usize = 20_000;

/// Above this size compressions are handled by Lanczos instead of a dense SVD.
const DENSE_LIMIT: usize = 1_200;

#[derive(Clone, Debug, PartialEq)]
pub struct WordCoefficients {
    n: usize,
    d: usize,
    m: usize,
    /// `x(i)` in lexicographic order of `i = (i₁, …, i_d)`, `i₁` most significant.
    data: Vec<Mat>,
}

fn pow(n: usize, e: usize) -> usize {
    n.pow(e as u32)
}

impl WordCoefficients {
    pub fn new(n: usize, d: usize, m: usize, data: Vec<Mat>) -> Result<Self> {
        if n == 0 || d == 0 || m == 0 {
            return Err(Error::InvalidParameter(format!("need n, d, m ≥ 1, got n={n} d={d} m={m}")));
        }
        if data.len() != pow(n, d) {
            return Err(Error::ShapeMismatch(format!("expected {} coefficients, got {}", pow(n, d), data.len())));
        }
        if let Some(bad) = data.iter().find(|c| c.shape() != (m, m)) {
            return Err(Error::ShapeMismatch(format!("coefficient of shape {:?}, expected {m}×{m}", bad.shape())));
        }
        Ok(Self { n, d, m, data })
    }

    pub fn zeros(n: usize, d: usize, m: usize) -> Result<Self> {
        Self::from_fn(n, d, m, |_| linalg::zeros(m, m))
    }

    pub fn from_fn(n: usize, d: usize, m: usize, mut f: impl FnMut(&[usize]) -> Mat) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidParameter(format!("need n, d ≥ 1, got n={n} d={d}")));
        }
        let data = (0..pow(n, d)).map(|idx| f(&Self::digits(n, d, idx))).collect();
        Self::new(n, d, m, data)
    }

    /// Scalar coefficients (`m = 1`).
    pub fn scalar(n: usize, d: usize, mut f: impl FnMut(&[usize]) -> C64) -> Result<Self> {
        Self::from_fn(n, d, 1, |w| Mat::from_element(1, 1, f(w)))
    }

    /// `c` on the single word `word`, zero elsewhere.
    pub fn single_word(n: usize, word: &[usize], c: Mat) -> Result<Self> {
        let m = c.nrows();
        if word.iter().any(|&i| i >= n) {
            return Err(Error::OutOfRange { index: *word.iter().max().unwrap_or(&0), max: n.saturating_sub(1) });
        }
        Self::from_fn(n, word.len(), m, |w| if w == word { c.clone() } else { linalg::zeros(m, m) })
    }

    /// Independent standard complex Gaussian entries.
    pub fn random(n: usize, d: usize, m: usize, rng: &mut impl Rng) -> Result<Self> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_fn(n, d, m, |_| {
            Mat::from_fn(m, m, |_, _| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                C64::new(s * re, s * im)
            })
        })
    }

    /// Independent standard real Gaussian entries.
    pub fn random_real(n: usize, d: usize, m: usize, rng: &mut impl Rng) -> Result<Self> {
        Self::from_fn(n, d, m, |_| {
            Mat::from_fn(m, m, |_, _| {
                let re: f64 = StandardNormal.sample(rng);
                linalg::c(re)
            })
        })
    }

    fn digits(n: usize, len: usize, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; len];
        for slot in out.iter_mut().rev() {
            *slot = idx % n;
            idx /= n;
        }
        out
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn coefficients(&self) -> &[Mat] {
        &self.data
    }

    pub fn word_index(&self, word: &[usize]) -> Result<usize> {
        if word.len() != self.d {
            return Err(Error::ShapeMismatch(format!("word of length {} for d = {}", word.len(), self.d)));
        }
        word.iter().try_fold(0, |acc, &i| {
            if i >= self.n {
                Err(Error::OutOfRange { index: i, max: self.n - 1 })
            } else {
                Ok(acc * self.n + i)
            }
        })
    }

    pub fn word(&self, idx: usize) -> Vec<usize> {
        Self::digits(self.n, self.d, idx)
    }

    pub fn get(&self, word: &[usize]) -> Result<&Mat> {
        Ok(&self.data[self.word_index(word)?])
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if (self.n, self.d, self.m) != (other.n, other.d, other.m) {
            return Err(Error::ShapeMismatch(format!(
                "word tables (n,d,m) = {:?} and {:?}",
                (self.n, self.d, self.m),
                (other.n, other.d, other.m)
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    fn zip_map(&self, other: &Self, f: impl Fn(&Mat, &Mat) -> Mat) -> Self {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(a, b)).collect();
        Self { data, ..*self }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { data: self.data.iter().map(|c| c * linalg::c(s)).collect(), ..*self }
    }

    /// `(Σᵢ ‖x(i)‖²_F)^{1/2}`.
    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|c| linalg::fro(c).powi(2)).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|c| c.iter().all(|z| z.norm() == 0.0))
    }

    /// `Σᵢ τ_𝓜(a(i)* b(i))`, which is `τ(G(a)*G(b))` since distinct words are
    /// orthogonal.
    pub fn pairing(&self, other: &Self) -> Result<C64> {
        self.same_shape(other)?;
        let total: C64 = self.data.iter().zip(&other.data).map(|(a, b)| linalg::trace(&(a.adjoint() * b))).sum();
        Ok(total / self.m as f64)
    }

    fn check_level(&self, k: usize) -> Result<()> {
        if k > self.d {
            return Err(Error::OutOfRange { index: k, max: self.d });
        }
        Ok(())
    }

    /// The flattening `[x]_k` as an `(m n^{d−k}) × (m n^k)` matrix.
    pub fn flatten(&self, k: usize) -> Result<Mat> {
        self.check_level(k)?;
        let (m, rows, cols) = (self.m, pow(self.n, self.d - k), pow(self.n, k));
        let mut out = linalg::zeros(m * rows, m * cols);
        for (idx, c) in self.data.iter().enumerate() {
            let (alpha, beta) = (idx / cols, idx % cols);
            for r in 0..m {
                for s in 0..m {
                    out[(r * rows + alpha, s * cols + beta)] = c[(r, s)];
                }
            }
        }
        Ok(out)
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn unflatten(n: usize, d: usize, m: usize, k: usize, mat: &Mat) -> Result<Self> {
        if k > d {
            return Err(Error::OutOfRange { index: k, max: d });
        }
        let (rows, cols) = (pow(n, d - k), pow(n, k));
        if mat.shape() != (m * rows, m * cols) {
            return Err(Error::ShapeMismatch(format!("flattening of shape {:?}, expected {:?}", mat.shape(), (m * rows, m * cols))));
        }
        let data = (0..pow(n, d))
            .map(|idx| {
                let (alpha, beta) = (idx / cols, idx % cols);
                Mat::from_fn(m, m, |r, s| mat[(r * rows + alpha, s * cols + beta)])
            })
            .collect();
        Self::new(n, d, m, data)
    }

    /// Side of the square matrices representing `𝓐`.
    pub fn algebra_dim(&self) -> usize {
        self.m * pow(self.n, self.d)
    }

    /// `[x]_k` as an element of `𝓐`:
    /// `Σᵢ x(i) ⊗ e_{i₁,1} ⊗ ⋯ ⊗ e_{i_{d−k},1} ⊗ e_{1,i_{d−k+1}} ⊗ ⋯ ⊗ e_{1,i_d}`.
    pub fn embed(&self, k: usize) -> Result<Mat> {
        self.check_level(k)?;
        let nd = pow(self.n, self.d);
        let cols = pow(self.n, k);
        let mut out = linalg::zeros(self.algebra_dim(), self.algebra_dim());
        for (idx, c) in self.data.iter().enumerate() {
            // Row legs are (α, 1, …, 1), column legs (1, …, 1, β).
            let (row, col) = ((idx / cols) * cols, idx % cols);
            for r in 0..self.m {
                for s in 0..self.m {
                    out[(r * nd + row, s * nd + col)] = c[(r, s)];
                }
            }
        }
        Ok(out)
    }

    /// Reads a table back from an element of `𝓐` assumed to lie in `𝓐_k`;
    /// the second value is the Frobenius norm of whatever lies outside.
    pub fn from_algebra(n: usize, d: usize, m: usize, k: usize, a: &Mat) -> Result<(Self, f64)> {
        if k > d {
            return Err(Error::OutOfRange { index: k, max: d });
        }
        let nd = pow(n, d);
        if a.shape() != (m * nd, m * nd) {
            return Err(Error::ShapeMismatch(format!("element of 𝓐 of shape {:?}, expected {}-square", a.shape(), m * nd)));
        }
        let cols = pow(n, k);
        let mut rest = a.clone();
        let data = (0..nd)
            .map(|idx| {
                let (row, col) = ((idx / cols) * cols, idx % cols);
                Mat::from_fn(m, m, |r, s| {
                    let pos = (r * nd + row, s * nd + col);
                    std::mem::replace(&mut rest[pos], C64::new(0.0, 0.0))
                })
            })
            .collect();
        Ok((Self::new(n, d, m, data)?, linalg::fro(&rest)))
    }

    /// `μ([x]_k)` against `τ_𝓐`: singular values of the flattening, each of
    /// width `1/m`, on `(0, n^d)`.
    pub fn flattening_mu(&self, k: usize) -> Result<StepFunction> {
        let values = linalg::singular_values(&self.flatten(k)?);
        let w = 1.0 / self.m as f64;
        StepFunction::from_pairs(values.into_iter().map(|v| (v, w)), pow(self.n, self.d) as f64)
    }

    /// `‖[x]_k‖_{E(𝓐)}`.
    pub fn flattening_norm(&self, k: usize, space: &SymmetricSpace) -> Result<f64> {
        Ok(space.eval(&self.flattening_mu(k)?))
    }

    /// `‖[x]_k‖_{L₁(𝓐)}`: the nuclear norm of the flattening over `m`.
    pub fn nuclear(&self, k: usize) -> Result<f64> {
        Ok(linalg::singular_values(&self.flatten(k)?).iter().sum::<f64>() / self.m as f64)
    }
}

/// Geometry of `𝓐 = M_m ⊗ M_n^{⊗d}` and its corners.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WordAlgebra {
    pub n: usize,
    pub d: usize,
    pub m: usize,
}

impl WordAlgebra {
    pub fn of(x: &WordCoefficients) -> Self {
        Self { n: x.n, d: x.d, m: x.m }
    }

    pub fn dim(&self) -> usize {
        self.m * pow(self.n, self.d)
    }

    /// Side of `M_m ⊗ M_n^{⊗k}`.
    pub fn level_dim(&self, k: usize) -> usize {
        self.m * pow(self.n, k)
    }

    /// `τ_𝓐(a) = Tr(a)/m`.
    pub fn trace(&self, a: &Mat) -> C64 {
        linalg::trace(a) / self.m as f64
    }

    /// `μ(a)` for a square element of `M_m ⊗ M_n^{⊗k}` under `τ_𝓜 ⊗ Tr^{⊗k}`.
    pub fn mu(&self, a: &Mat) -> Result<StepFunction> {
        let w = 1.0 / self.m as f64;
        StepFunction::from_pairs(linalg::singular_values(a).into_iter().map(|v| (v, w)), pow(self.n, self.d) as f64)
    }

    fn check_level(&self, k: usize, a: &Mat) -> Result<()> {
        if k > self.d {
            return Err(Error::OutOfRange { index: k, max: self.d });
        }
        let s = self.level_dim(k);
        if a.shape() != (s, s) {
            return Err(Error::ShapeMismatch(format!("level-{k} element of shape {:?}, expected {s}-square", a.shape())));
        }
        Ok(())
    }

    /// Places `α ∈ M_m ⊗ M_n^{⊗k}` in the corner `M_m ⊗ e₁₁^{⊗(d−k)} ⊗ M_n^{⊗k}`.
    pub fn corner(&self, k: usize, alpha: &Mat) -> Result<Mat> {
        self.check_level(k, alpha)?;
        let (nd, nk) = (pow(self.n, self.d), pow(self.n, k));
        let mut out = linalg::zeros(self.dim(), self.dim());
        for r in 0..self.m {
            for s in 0..self.m {
                for l in 0..nk {
                    for lp in 0..nk {
                        out[(r * nd + l, s * nd + lp)] = alpha[(r * nk + l, s * nk + lp)];
                    }
                }
            }
        }
        Ok(out)
    }

    /// `tr_k = Id ⊗ Tr^{⊗(d−k)} ⊗ Id^{⊗k}` with unnormalized leg traces.
    pub fn partial_trace(&self, k: usize, a: &Mat) -> Result<Mat> {
        if k > self.d {
            return Err(Error::OutOfRange { index: k, max: self.d });
        }
        if a.shape() != (self.dim(), self.dim()) {
            return Err(Error::ShapeMismatch(format!("element of 𝓐 of shape {:?}", a.shape())));
        }
        let (nd, nk, traced) = (pow(self.n, self.d), pow(self.n, k), pow(self.n, self.d - k));
        let s = self.level_dim(k);
        Ok(Mat::from_fn(s, s, |i, j| {
            let (r, l, sc, lp) = (i / nk, i % nk, j / nk, j % nk);
            (0..traced).map(|t| a[(r * nd + t * nk + l, sc * nd + t * nk + lp)]).sum()
        }))
    }

    /// `1^{⊗j} ⊗ α`: `j` identity legs inserted between `M_m` and `α`'s legs.
    pub fn amplify(&self, k: usize, j: usize, alpha: &Mat) -> Result<Mat> {
        self.check_level(k, alpha)?;
        if k + j > self.d {
            return Err(Error::OutOfRange { index: k + j, max: self.d });
        }
        let (nk, nj) = (pow(self.n, k), pow(self.n, j));
        let s = self.level_dim(k + j);
        Ok(Mat::from_fn(s, s, |row, col| {
            let (r, rest) = (row / (nj * nk), row % (nj * nk));
            let (sc, restc) = (col / (nj * nk), col % (nj * nk));
            let (p, l) = (rest / nk, rest % nk);
            let (pc, lc) = (restc / nk, restc % nk);
            if p == pc {
                alpha[(r * nk + l, sc * nk + lc)]
            } else {
                C64::new(0.0, 0.0)
            }
        }))
    }

    /// Reads `α` back from the level-`k` corner.
    pub fn uncorner(&self, k: usize, a: &Mat) -> Result<Mat> {
        if k > self.d {
            return Err(Error::OutOfRange { index: k, max: self.d });
        }
        let (nd, nk) = (pow(self.n, self.d), pow(self.n, k));
        let s = self.level_dim(k);
        Ok(Mat::from_fn(s, s, |i, j| a[((i / nk) * nd + i % nk, (j / nk) * nd + j % nk)]))
    }
}

/// Residuals of the four algebraic identities relating flattenings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdentityResiduals {
    /// `|Σᵢ τ(a(i)*b(i)) − τ_𝓐([a]_k*[b]_k)|`.
    pub trace: f64,
    /// `‖[a]_k*[b]_k − tr_k([a]_{k'}*[b]_{k'})‖_F`.
    pub partial_trace: f64,
    /// `‖[a]_kα − ⌊[a]_{k'}(1⊗α)⌋_k‖_F`, including the membership defect.
    pub down: f64,
    /// `‖[a]_{k'}(1⊗α) − [[a]_kα]_{k'}‖_F`, including the membership defect.
    pub up: f64,
}

impl IdentityResiduals {
    pub fn worst(&self) -> f64 {
        self.trace.max(self.partial_trace).max(self.down).max(self.up)
    }
}

/// Evaluates both sides of each identity directly in `𝓐`.
pub fn check_word_identities(
    a: &WordCoefficients,
    b: &WordCoefficients,
    alpha: &Mat,
    k: usize,
    kp: usize,
) -> Result<IdentityResiduals> {
    a.same_shape(b)?;
    if k > kp || kp > a.d {
        return Err(Error::InvalidParameter(format!("need k ≤ k' ≤ d, got k={k} k'={kp} d={}", a.d)));
    }
    let alg = WordAlgebra::of(a);
    let (ak, bk) = (a.embed(k)?, b.embed(k)?);
    let (akp, bkp) = (a.embed(kp)?, b.embed(kp)?);

    let trace = (a.pairing(b)? - alg.trace(&(ak.adjoint() * &bk))).norm();

    let lhs = alg.uncorner(k, &(ak.adjoint() * &bk))?;
    let rhs = alg.partial_trace(k, &(akp.adjoint() * &bkp))?;
    let partial_trace = linalg::fro(&(lhs - rhs));

    let alpha_k = alg.corner(k, alpha)?;
    let alpha_kp = alg.corner(kp, &alg.amplify(k, kp - k, alpha)?)?;
    let left_k = &ak * &alpha_k;
    let left_kp = &akp * &alpha_kp;

    let (from_kp, miss_kp) = WordCoefficients::from_algebra(a.n, a.d, a.m, kp, &left_kp)?;
    let down = linalg::fro(&(&left_k - from_kp.embed(k)?)) + miss_kp;

    let (from_k, miss_k) = WordCoefficients::from_algebra(a.n, a.d, a.m, k, &left_k)?;
    let up = linalg::fro(&(&left_kp - from_k.embed(kp)?)) + miss_k;

    Ok(IdentityResiduals { trace, partial_trace, down, up })
}

/// Reduced words over `g₁…g_n, g₁⁻¹…g_n⁻¹` of length at most `radius`.
/// Letter `i < n` is `g_{i+1}`, letter `n + i` its inverse.
#[derive(Clone, Debug)]
pub struct WordBall {
    n: usize,
    radius: usize,
    words: Vec<Vec<u16>>,
    index: HashMap<Vec<u16>, usize>,
}

impl WordBall {
    /// `1 + 2n((2n−1)^L − 1)/(2n−2)`, or `1 + 2L` when `n = 1`.
    pub fn size(n: usize, radius: usize) -> usize {
        if n == 1 {
            return 1 + 2 * radius;
        }
        let q = 2 * n - 1;
        1 + 2 * n * (q.pow(radius as u32) - 1) / (q - 1)
    }

    pub fn new(n: usize, radius: usize) -> Self {
        let inverse = |a: u16| if (a as usize) < n { a + n as u16 } else { a - n as u16 };
        let mut words: Vec<Vec<u16>> = vec![Vec::new()];
        let mut frontier = 0..1;
        for _ in 0..radius {
            let start = words.len();
            for w in frontier.clone() {
                for a in 0..(2 * n) as u16 {
                    if words[w].last().is_some_and(|&l| l == inverse(a)) {
                        continue;
                    }
                    let mut next = words[w].clone();
                    next.push(a);
                    words.push(next);
                }
            }
            frontier = start..words.len();
        }
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { n, radius, words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Position of the reduced form of `prefix · words[w]`, if it stays in the ball.
    fn left_multiply(&self, prefix: &[usize], w: usize) -> Option<usize> {
        let n = self.n as u16;
        let mut out: VecDeque<u16> = self.words[w].iter().copied().collect();
        for &g in prefix.iter().rev() {
            let g = g as u16;
            if out.front() == Some(&(g + n)) {
                out.pop_front();
            } else {
                out.push_front(g);
            }
        }
        if out.len() > self.radius {
            return None;
        }
        self.index.get(&Vec::from(out)).copied()
    }
}

/// `P G(x) P` on `ℂ^m ⊗ ℓ²(ball)` as a sparse block operator.
struct Compression {
    m: usize,
    size: usize,
    /// `(target word, source word, coefficient index)`.
    entries: Vec<(usize, usize, usize)>,
    coefficients: Vec<Mat>,
}

impl Compression {
    fn new(x: &WordCoefficients, ball: &WordBall) -> Self {
        let mut entries = Vec::new();
        for (idx, c) in x.data.iter().enumerate() {
            if c.iter().all(|z| z.norm() == 0.0) {
                continue;
            }
            let word = x.word(idx);
            for v in 0..ball.len() {
                if let Some(u) = ball.left_multiply(&word, v) {
                    entries.push((u, v, idx));
                }
            }
        }
        Self { m: x.m, size: ball.len(), entries, coefficients: x.data.clone() }
    }

    fn dim(&self) -> usize {
        self.m * self.size
    }

    fn apply(&self, v: &[C64], out: &mut [C64], adjoint: bool) {
        out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        let m = self.m;
        for &(u, w, idx) in &self.entries {
            let c = &self.coefficients[idx];
            let (src, dst) = if adjoint { (u, w) } else { (w, u) };
            for r in 0..m {
                let mut acc = C64::new(0.0, 0.0);
                for s in 0..m {
                    let coef = if adjoint { c[(s, r)].conj() } else { c[(r, s)] };
                    acc += coef * v[src * m + s];
                }
                out[dst * m + r] += acc;
            }
        }
    }

    fn dense(&self) -> ModelMatrix {
        let m = self.m;
        let mut out = ModelMatrix::zeros(self.dim(), self.dim());
        for &(u, w, idx) in &self.entries {
            let c = &self.coefficients[idx];
            for r in 0..m {
                for s in 0..m {
                    out[(u * m + r, w * m + s)] += c[(r, s)];
                }
            }
        }
        out
    }
}

fn cdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Largest eigenvalue of the positive operator `T*T` by Lanczos with full
/// reorthogonalization.
fn lanczos_top(op: &Compression) -> f64 {
    let dim = op.dim();
    let max_steps = dim.min(600);
    let mut start: Vec<C64> = (0..dim).map(|j| linalg::c(1.0 + 0.25 * ((j as f64) * 0.7).sin())).collect();
    let norm = cdot(&start, &start).re.sqrt();
    start.iter_mut().for_each(|z| *z /= norm);

    let mut basis: Vec<Vec<C64>> = vec![start];
    let (mut alphas, mut betas) = (Vec::new(), Vec::new());
    let mut tmp = vec![C64::new(0.0, 0.0); dim];
    let mut w = vec![C64::new(0.0, 0.0); dim];
    let mut estimate = 0.0;
    for step in 0..max_steps {
        let v = &basis[step];
        op.apply(v, &mut tmp, false);
        op.apply(&tmp, &mut w, true);
        let a = cdot(v, &w).re;
        alphas.push(a);
        for _ in 0..2 {
            for q in &basis {
                let proj = cdot(q, &w);
                w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= proj * qi);
            }
        }
        let b = cdot(&w, &w).re.sqrt();
        let check = step % 5 == 4 || b <= 1e-13 * a.abs().max(1e-300) || step + 1 == max_steps;
        if check {
            let k = alphas.len();
            let t = DMatrix::<f64>::from_fn(k, k, |i, j| {
                if i == j {
                    alphas[i]
                } else if i + 1 == j {
                    betas[i]
                } else if j + 1 == i {
                    betas[j]
                } else {
                    0.0
                }
            });
            let top = t.symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let settled = (top - estimate).abs() <= 1e-15 * top.abs().max(1e-300);
            estimate = estimate.max(top);
            if settled || b <= 1e-13 * a.abs().max(1e-300) {
                break;
            }
        }
        if b == 0.0 {
            break;
        }
        betas.push(b);
        basis.push(w.iter().map(|z| z / b).collect());
    }
    estimate.max(0.0)
}

/// `‖P G(x) P‖_∞` where `P` projects onto `ℂ^m ⊗ ℓ²(B_L)`. Nested balls give
/// a non-decreasing sequence of lower bounds for `‖G(x)‖_∞`.
pub fn compression_lower_bound(x: &WordCoefficients, radius: usize) -> Result<f64> {
    let size = WordBall::size(x.n, radius);
    let rows = size.saturating_mul(x.m);
    if rows > COMPRESSION_BUDGET {
        return Err(Error::BudgetExceeded { requested: rows, limit: COMPRESSION_BUDGET });
    }
    if x.is_zero() {
        return Ok(0.0);
    }
    let ball = WordBall::new(x.n, radius);
    let op = Compression::new(x, &ball);
    if op.dim() <= DENSE_LIMIT {
        let s = op
            .dense()
            .singular_values()
            .map_err(|e| Error::InvalidParameter(format!("singular values failed: {e:?}")))?;
        return Ok(s.into_iter().fold(0.0, f64::max));
    }
    Ok(lanczos_top(&op).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct BuchholzBounds {
    /// `‖[x]_k‖_{E(𝓐)}` for `k = 0..=d`.
    pub levels: Vec<f64>,
    /// `max_k`.
    pub lower: f64,
    /// `Σ_k`.
    pub upper: f64,
    /// `min_k`, the upper bound for `L₁`.
    pub l1_upper: f64,
}

pub fn buchholz_bounds(x: &WordCoefficients, space: &SymmetricSpace) -> Result<BuchholzBounds> {
    let levels = (0..=x.d).map(|k| x.flattening_norm(k, space)).collect::<Result<Vec<_>>>()?;
    let lower = levels.iter().copied().fold(0.0, f64::max);
    let upper = levels.iter().sum();
    let l1_upper = levels.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(BuchholzBounds { levels, lower, upper, l1_upper })
}

/// One sample of `G_N(x) = Σ x(i) ⊗ U_{i₁}⋯U_{i_d}` with independent Haar
/// unitaries `U₁, …, U_n` of size `N`.
pub fn word_model_sample(x: &WordCoefficients, big_n: usize, rng: &mut impl Rng) -> ModelMatrix {
    let unitaries: Vec<ModelMatrix> = (0..x.n).map(|_| rmt::sample_haar_unitary(big_n, rng)).collect();
    // Products over all prefixes, one tree level at a time.
    let mut level: Vec<ModelMatrix> = unitaries.clone();
    for _ in 1..x.d {
        let mut next = Vec::with_capacity(level.len() * x.n);
        for p in &level {
            for u in &unitaries {
                next.push(p * u);
            }
        }
        level = next;
    }
    let m = x.m;
    let mut out = ModelMatrix::zeros(m * big_n, m * big_n);
    for (c, w) in x.data.iter().zip(&level) {
        for r in 0..m {
            for s in 0..m {
                let z = c[(r, s)];
                if z == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..big_n {
                    for i in 0..big_n {
                        out[(r * big_n + i, s * big_n + j)] += z * w[(i, j)];
                    }
                }
            }
        }
    }
    out
}

/// Model estimates of `‖G(x)‖_E` for each space.
pub fn word_model_norms(x: &WordCoefficients, spaces: &[SymmetricSpace], cfg: &ModelConfig) -> Result<Vec<ModelEstimate>> {
    rmt::estimate_spaces(cfg, spaces, |rng| rmt::matrix_mu(&word_model_sample(x, cfg.n, rng)))
}

pub fn word_model_norm(x: &WordCoefficients, space: &SymmetricSpace, cfg: &ModelConfig) -> Result<ModelEstimate> {
    Ok(word_model_norms(x, std::slice::from_ref(space), cfg)?.remove(0))
}

/// `(Σᵢ ‖x(i)‖₂²)^{1/2} = ‖G(x)‖₂`, exact.
pub fn word_l2_norm(x: &WordCoefficients) -> f64 {
    x.pairing(x).map(|z| z.re.max(0.0).sqrt()).unwrap_or(0.0)
}

#[derive(Clone, Debug)]
pub struct WordDecomposition {
    /// `y_0, …, y_d` with `Σ y_k = x`.
    pub y: Vec<WordCoefficients>,
    /// `Σ_k ‖[y_k]_k‖_{L₁(𝓐)}` at the returned point.
    pub value: f64,
    /// `Re⟨z, x⟩ / max_k ‖[z]_k‖_∞` for the certificate `z`: a lower bound
    /// for the infimum.
    pub dual_bound: f64,
    pub certificate: WordCoefficients,
    pub converged: bool,
    pub iterations: usize,
    pub origin: &'static str,
}

impl WordDecomposition {
    pub fn level_norms(&self, space: &SymmetricSpace) -> Result<Vec<f64>> {
        self.y.iter().enumerate().map(|(k, y)| y.flattening_norm(k, space)).collect()
    }

    pub fn reconstruction_residual(&self, x: &WordCoefficients) -> Result<f64> {
        let mut sum = WordCoefficients::zeros(x.n, x.d, x.m)?;
        for y in &self.y {
            sum = sum.add(y)?;
        }
        Ok(sum.sub(x)?.frobenius())
    }
}

fn pack_words(tables: &[WordCoefficients], out: &mut Vec<f64>) {
    for t in tables {
        for c in &t.data {
            for z in c.iter() {
                out.push(z.re);
                out.push(z.im);
            }
        }
    }
}

fn unpack_words(shape: WordAlgebra, count: usize, data: &[f64]) -> Vec<WordCoefficients> {
    let m = shape.m;
    let per = pow(shape.n, shape.d);
    let mut chunks = data.chunks_exact(2 * m * m);
    (0..count)
        .map(|_| {
            let coeffs = (0..per)
                .map(|_| {
                    let c = chunks.next().expect("packed length");
                    Mat::from_iterator(m, m, c.chunks_exact(2).map(|p| C64::new(p[0], p[1])))
                })
                .collect();
            WordCoefficients { n: shape.n, d: shape.d, m, data: coeffs }
        })
        .collect()
}

struct NuclearProblem<'a> {
    x: &'a WordCoefficients,
}

impl NuclearProblem<'_> {
    fn levels(&self, v: &[f64]) -> Vec<WordCoefficients> {
        let d = self.x.d;
        let mut ys = unpack_words(WordAlgebra::of(self.x), d, v);
        let mut last = self.x.clone();
        for y in &ys {
            last = last.zip_map(y, |a, b| a - b);
        }
        ys.push(last);
        ys
    }

    /// Smoothed objective and, per level, the gradient table against
    /// `Re Σᵢ tr(·* ·)`.
    fn smoothed(&self, ys: &[WordCoefficients], eps: f64) -> (f64, Vec<WordCoefficients>) {
        let (n, d, m) = (self.x.n, self.x.d, self.x.m);
        let mut value = 0.0;
        let mut grads = Vec::with_capacity(ys.len());
        for (k, y) in ys.iter().enumerate() {
            let f = y.flatten(k).expect("level in range");
            let svd = linalg::svd(&f);
            let mut scaled = svd.left.clone();
            for (j, &s) in svd.values.iter().enumerate() {
                let root = (s * s + eps).sqrt();
                value += root / m as f64;
                let mut col = scaled.column_mut(j);
                col *= linalg::c(s / root / m as f64);
            }
            let g = scaled * svd.right.adjoint();
            grads.push(WordCoefficients::unflatten(n, d, m, k, &g).expect("shape from flatten"));
        }
        (value, grads)
    }

    fn eval(&self, v: &[f64], eps: f64) -> (f64, Vec<f64>) {
        let ys = self.levels(v);
        let (value, grads) = self.smoothed(&ys, eps);
        let last = &grads[self.x.d];
        let reduced: Vec<WordCoefficients> = grads[..self.x.d].iter().map(|g| g.zip_map(last, |a, b| a - b)).collect();
        let mut out = Vec::with_capacity(v.len());
        pack_words(&reduced, &mut out);
        (value, out)
    }
}

fn exact_value(ys: &[WordCoefficients]) -> Result<f64> {
    ys.iter().enumerate().map(|(k, y)| y.nuclear(k)).sum()
}

/// Dual lower bound from a certificate `z`.
pub fn dual_bound(x: &WordCoefficients, z: &WordCoefficients) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in 0..=x.d {
        worst = worst.max(linalg::spectral_norm(&z.flatten(k)?));
    }
    if worst == 0.0 {
        return Ok(0.0);
    }
    Ok(z.pairing(x)?.re / worst)
}

/// Minimizes `Σ_k ‖[y_k]_k‖_{L₁(𝓐)}` over `y_0 + ⋯ + y_d = x`, with `y_d`
/// taken as the residual so the constraint holds exactly.
pub fn word_optimal_decomposition(x: &WordCoefficients, cfg: &SolverConfig) -> Result<WordDecomposition> {
    cfg.validate()?;
    let (n, d, m) = (x.n, x.d, x.m);
    let zero = WordCoefficients::zeros(n, d, m)?;
    let trivial = |level: usize| -> Vec<WordCoefficients> {
        (0..=d).map(|k| if k == level { x.clone() } else { zero.clone() }).collect()
    };
    if x.is_zero() {
        return Ok(WordDecomposition {
            y: trivial(0),
            value: 0.0,
            dual_bound: 0.0,
            certificate: zero,
            converged: true,
            iterations: 0,
            origin: "zero",
        });
    }

    let mut best: Option<(f64, usize)> = None;
    for level in 0..=d {
        let v = x.nuclear(level)?;
        if best.is_none_or(|(b, _)| v < b) {
            best = Some((v, level));
        }
    }
    let (mut best_value, level) = best.expect("d ≥ 1");
    let mut best_y = trivial(level);
    let mut origin = "trivial";

    let scale = x.frobenius();
    let xs = x.scale(1.0 / scale);
    let problem = NuclearProblem { x: &xs };
    let mut v = Vec::new();
    pack_words(&trivial(level).iter().take(d).map(|y| y.scale(1.0 / scale)).collect::<Vec<_>>(), &mut v);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    v.iter_mut().for_each(|t| *t += 1e-3 * (rng.random::<f64>() - 0.5));

    let lb = LbfgsConfig { max_iter: cfg.max_iter, tol_rel: cfg.tol_rel, ..LbfgsConfig::default() };
    let mut converged = true;
    let mut iterations = 0;
    let schedule = cfg.schedule();
    for &eps in &schedule {
        let out = optim::minimize(|p| problem.eval(p, eps), v.clone(), &lb);
        iterations += out.iterations;
        converged = out.converged;
        v = out.x;
    }
    let ys = problem.levels(&v);
    let (_, grads) = problem.smoothed(&ys, *schedule.last().expect("non-empty schedule"));
    let mut certificate = zero.clone();
    for g in &grads {
        certificate = certificate.add(g)?;
    }
    let certificate = certificate.scale(m as f64 / (d + 1) as f64);
    let lower = dual_bound(x, &certificate)?;

    let ys: Vec<WordCoefficients> = ys.into_iter().map(|y| y.scale(scale)).collect();
    let value = exact_value(&ys)?;
    if value < best_value {
        best_value = value;
        best_y = ys;
        origin = "solver";
    }
    Ok(WordDecomposition {
        y: best_y,
        value: best_value,
        dual_bound: lower,
        certificate,
        converged,
        iterations,
        origin,
    })
}

fn word_model_samples(x: &WordCoefficients, model: &ModelConfig) -> Result<Vec<(u64, StepFunction)>> {
    model.validate()?;
    (0..model.trials)
        .map(|trial| {
            let mut rng = model.trial_rng(trial);
            let mu = rmt::matrix_mu(&word_model_sample(x, model.n, &mut rng))?;
            Ok((rmt::trial_seed(model.seed, trial as u64), mu))
        })
        .collect()
}

/// `max_k‖[x]_k‖_∞ ≤ ‖G(x)‖_∞ ≤ Σ_k‖[x]_k‖_∞` against each model sample, and
/// the compression bound against the upper side.
pub fn buchholz_rows(x: &WordCoefficients, radius: usize, model: &ModelConfig) -> Result<Vec<CheckRow>> {
    let linf = SymmetricSpace::linf();
    let bounds = buchholz_bounds(x, &linf)?;
    let mut rows = vec![CheckRow::new("buchholz_compression", compression_lower_bound(x, radius)?, bounds.upper, 1.0, 1e-9).in_space(&linf)];
    for (seed, mu) in word_model_samples(x, model)? {
        let value = linf.eval(&mu);
        rows.push(CheckRow::new("buchholz_lower", bounds.lower, value, 1.0, model.slack).in_space(&linf).with_seed(seed));
        rows.push(CheckRow::new("buchholz_upper", value, bounds.upper, 1.0, model.slack).in_space(&linf).with_seed(seed));
    }
    Ok(rows)
}

/// The two-sided estimate of `‖G(x)‖_E` through an `L₁`-optimal
/// decomposition `dec`, its corollary with constants `(d+1)²`, the
/// constant-free bounds for interpolation spaces, and `‖[y_k]_k‖_E ≤ ‖[x]_k‖_E`.
pub fn verify_lengthd(
    x: &WordCoefficients,
    dec: &WordDecomposition,
    spaces: &[SymmetricSpace],
    model: &ModelConfig,
) -> Result<Vec<CheckRow>> {
    if spaces.is_empty() {
        return Err(Error::InvalidParameter("no spaces to check".into()));
    }
    let c = (x.d + 1) as f64;
    let mut exact = Vec::with_capacity(spaces.len());
    let mut rows = Vec::new();
    for space in spaces {
        let ys = dec.level_norms(space)?;
        let xs = buchholz_bounds(x, space)?;
        for (k, (&y, &xk)) in ys.iter().zip(&xs.levels).enumerate() {
            rows.push(CheckRow::new(format!("lengthd_y{k}_le_x{k}"), y, xk, 1.0, 1e-5 / xk.max(1e-5)).in_space(space));
        }
        exact.push((ys, xs));
    }
    for (seed, mu) in word_model_samples(x, model)? {
        for (space, (ys, xs)) in spaces.iter().zip(&exact) {
            let g = space.eval(&mu);
            let total: f64 = ys.iter().sum();
            let s = model.slack;
            let mut here: Vec<CheckRow> = ys
                .iter()
                .enumerate()
                .map(|(k, &y)| CheckRow::new(format!("lengthd_lower_{k}"), y, g, c, s))
                .collect();
            here.push(CheckRow::new("lengthd_upper", g, total, c, s));
            here.push(CheckRow::new("lengthd_cor_lower", total, g, c * c, s));
            here.push(CheckRow::new("lengthd_cor_upper", g, xs.lower, c * c, s));
            match space.interpolation() {
                Some(Interpolation::L1L2) => {
                    here.push(CheckRow::new("lengthd_l1l2", g, total, 1.0, s));
                    here.push(CheckRow::new("lengthd_l1l2_level", g, xs.l1_upper, 1.0, s));
                }
                Some(Interpolation::L2Linf) => here.push(CheckRow::new("lengthd_l2linf", xs.lower, g, c, s)),
                None => {}
            }
            rows.extend(here.into_iter().map(|r| r.in_space(space).with_seed(seed)));
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(n: usize, d: usize) -> WordCoefficients {
        WordCoefficients::scalar(n, d, |_| linalg::c(1.0)).unwrap()
    }

    #[test]
    fn flatten_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = WordCoefficients::random(2, 3, 2, &mut rng).unwrap();
        for k in 0..=3 {
            let f = x.flatten(k).unwrap();
            assert_eq!(WordCoefficients::unflatten(2, 3, 2, k, &f).unwrap(), x);
            let (back, miss) = WordCoefficients::from_algebra(2, 3, 2, k, &x.embed(k).unwrap()).unwrap();
            assert_eq!(back, x);
            assert_eq!(miss, 0.0);
        }
        assert!(x.flatten(4).is_err());
    }

    #[test]
    fn all_ones_flattenings() {
        let x = ones(2, 2);
        for k in 0..=2 {
            assert!((linalg::spectral_norm(&x.flatten(k).unwrap()) - 2.0).abs() < 1e-12);
        }
        let b = buchholz_bounds(&x, &SymmetricSpace::linf()).unwrap();
        assert!((b.lower - 2.0).abs() < 1e-12 && (b.upper - 6.0).abs() < 1e-12);
    }

    #[test]
    fn d1_trace_normalization() {
        // [a]_0*[b]_0 = Σ a(i)*b(i) in the corner, and tr_0([a]_1*[b]_1) must agree.
        let a = WordCoefficients::scalar(2, 1, |w| linalg::c([1.0, 2.0][w[0]])).unwrap();
        let b = WordCoefficients::scalar(2, 1, |w| linalg::c([3.0, -1.0][w[0]])).unwrap();
        let r = check_word_identities(&a, &b, &Mat::from_element(1, 1, linalg::c(1.0)), 0, 1).unwrap();
        assert!(r.worst() < 1e-14, "{r:?}");
        let alg = WordAlgebra::of(&a);
        let p = a.embed(0).unwrap().adjoint() * b.embed(0).unwrap();
        assert_eq!(alg.uncorner(0, &p).unwrap()[(0, 0)], linalg::c(1.0));
    }

    #[test]
    fn ball_sizes() {
        assert_eq!(WordBall::new(2, 4).len(), WordBall::size(2, 4));
        assert_eq!(WordBall::size(2, 4), 161);
        assert_eq!(WordBall::new(1, 3).len(), 7);
    }

    #[test]
    fn single_generator_compression() {
        let x = WordCoefficients::single_word(2, &[0], Mat::from_element(1, 1, linalg::c(1.0))).unwrap();
        for l in 1..4 {
            assert!((compression_lower_bound(&x, l).unwrap() - 1.0).abs() < 1e-12);
        }
        assert_eq!(compression_lower_bound(&WordCoefficients::zeros(2, 1, 1).unwrap(), 3).unwrap(), 0.0);
    }

    #[test]
    fn lanczos_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = WordCoefficients::random(2, 2, 1, &mut rng).unwrap();
        let ball = WordBall::new(2, 4);
        let op = Compression::new(&x, &ball);
        let dense = op.dense().singular_values().unwrap()[0];
        assert!((lanczos_top(&op).sqrt() - dense).abs() < 1e-9 * dense);
    }

    #[test]
    fn budget_guard() {
        let x = ones(3, 1);
        assert!(matches!(compression_lower_bound(&x, 9), Err(Error::BudgetExceeded { .. })));
    }
}
