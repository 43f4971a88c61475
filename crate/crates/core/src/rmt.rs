//! Haar-unitary matrix models standing in for free products.
//!
//! A centered family `(xᵢ)` with scalar `𝓝` is modeled by
//! `Σᵢ Uᵢ (xᵢ ⊗ 1_N) Uᵢ*` with independent Haar unitaries `Uᵢ`; its norms
//! approach those of the free sum as `N` grows.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::conditioned::ConditionalExpectation;
use crate::error::{Error, Result};
use crate::free_sums::FreeFamily;
use crate::linalg::{self, Mat, C64};
use crate::spaces::SymmetricSpace;
use crate::step::StepFunction;
use crate::tracial::{Operator, TracialAlgebra};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    /// Amplification `N`.
    pub n: usize,
    pub seed: u64,
    pub trials: usize,
    /// Multiplicative slack for inequality checks against model values.
    pub slack: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { n: 256, seed: 0, trials: 20, slack: 0.05 }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!("model N must be ≥ 2, got {}", self.n)));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("model trials must be ≥ 1".into()));
        }
        if !(self.slack >= 0.0) {
            return Err(Error::InvalidParameter("model slack must be ≥ 0".into()));
        }
        Ok(())
    }

    /// Generator for one trial; streams for different trials are unrelated.
    pub fn trial_rng(&self, trial: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(trial_seed(self.seed, trial as u64))
    }

    /// Relative tolerance on the model L² identity; the deviation of the
    /// normalized trace shrinks like `1/N`.
    pub fn l2_tolerance(&self) -> f64 {
        (4.0 / self.n as f64).max(2e-2)
    }
}

/// The splitmix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    splitmix64(seed.wrapping_add(trial))
}

/// Dense matrices used for model samples.
pub type ModelMatrix = faer::Mat<C64>;

/// Standard complex Gaussian matrix, `𝔼|gᵢⱼ|² = 1`.
pub fn ginibre(rows: usize, cols: usize, rng: &mut impl rand::Rng) -> ModelMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    // Column-major fill so the stream order does not depend on the backend.
    let mut out = ModelMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            out[(i, j)] = C64::new(s * re, s * im);
        }
    }
    out
}

/// Haar unitary: `Q·diag(r_jj/|r_jj|)` from the QR factorization of a Ginibre matrix.
pub fn sample_haar_unitary(n: usize, rng: &mut impl rand::Rng) -> ModelMatrix {
    let qr = ginibre(n, n, rng).qr();
    let r = qr.R();
    let mut q = qr.compute_Q();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { linalg::c(1.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

pub fn to_model(m: &Mat) -> ModelMatrix {
    ModelMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn from_model(m: &ModelMatrix) -> Mat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Size `D₀` and multiplicities `rⱼ` with `rⱼnⱼ/D₀ = wⱼ`, so that
/// `x ↦ ⊕ xⱼ ⊗ 1_{rⱼ}` is trace preserving into `M_{D₀}`.
pub fn representation(algebra: &TracialAlgebra) -> Result<(usize, Vec<usize>)> {
    const LIMIT: usize = 4096;
    if (algebra.total_mass() - 1.0).abs() > 1e-12 {
        return Err(Error::Unrepresentable(format!("total mass {} is not 1", algebra.total_mass())));
    }
    let min_dim: usize = algebra.blocks().iter().map(|b| b.dim).max().unwrap_or(1);
    for d0 in min_dim..=LIMIT {
        let reps: Vec<f64> = algebra.blocks().iter().map(|b| b.mass * d0 as f64 / b.dim as f64).collect();
        if reps.iter().all(|r| (r - r.round()).abs() <= 1e-9 * r.max(1.0) && r.round() >= 1.0) {
            let reps: Vec<usize> = reps.iter().map(|r| r.round() as usize).collect();
            let total: usize = reps.iter().zip(algebra.blocks()).map(|(r, b)| r * b.dim).sum();
            if total == d0 {
                return Ok((d0, reps));
            }
        }
    }
    Err(Error::Unrepresentable(format!("no matrix size up to {LIMIT} realizes the masses")))
}

/// `⊕ xⱼ ⊗ 1_{rⱼ}` as one `D₀ × D₀` matrix.
pub fn embed(x: &Operator, reps: &[usize]) -> Mat {
    let d0: usize = reps.iter().zip(x.blocks()).map(|(r, m)| r * m.nrows()).sum();
    let mut out = linalg::zeros(d0, d0);
    let mut offset = 0;
    for (m, &r) in x.blocks().iter().zip(reps) {
        let amplified = linalg::kron(m, &linalg::eye(r));
        out.view_mut((offset, offset), (amplified.nrows(), amplified.ncols())).copy_from(&amplified);
        offset += amplified.nrows();
    }
    out
}

/// `m ⊗ 1_n`.
pub fn amplify(m: &Mat, n: usize) -> ModelMatrix {
    let d = m.nrows();
    let mut out = ModelMatrix::zeros(d * n, d * n);
    for i in 0..d {
        for j in 0..d {
            let z = m[(i, j)];
            if z != C64::new(0.0, 0.0) {
                for k in 0..n {
                    out[(i * n + k, j * n + k)] = z;
                }
            }
        }
    }
    out
}

/// `μ` of a square matrix under the normalized trace.
pub fn matrix_mu(m: &ModelMatrix) -> Result<StepFunction> {
    let dim = m.nrows();
    let w = 1.0 / dim as f64;
    let mut scale: f64 = 0.0;
    let mut skew: f64 = 0.0;
    for j in 0..dim {
        for i in 0..dim {
            scale = scale.max(m[(i, j)].norm());
            skew = skew.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    let values: Vec<f64> = if skew <= 1e-13 * (1.0 + scale) {
        m.self_adjoint_eigenvalues(faer::Side::Lower)
            .map_err(|e| Error::InvalidParameter(format!("eigendecomposition failed: {e:?}")))?
            .into_iter()
            .map(f64::abs)
            .collect()
    } else {
        m.singular_values().map_err(|e| Error::InvalidParameter(format!("singular values failed: {e:?}")))?
    };
    StepFunction::from_pairs(values.into_iter().map(|v| (v, w)).collect::<Vec<_>>(), 1.0)
}

fn require_scalar(ce: &ConditionalExpectation, algebra: &TracialAlgebra) -> Result<()> {
    let ok = match ce {
        ConditionalExpectation::Scalar => true,
        ConditionalExpectation::ScalarBlock => algebra.num_blocks() == 1,
        _ => false,
    };
    if !ok {
        return Err(Error::InvalidParameter(format!("matrix models need a scalar subalgebra, got {ce}")));
    }
    Ok(())
}

/// One sample of `Σ Uᵢ(xᵢ ⊗ 1_N)Uᵢ*`. The first summand is left unconjugated,
/// which does not change the distribution of the sum.
pub fn free_model_embed(f: &FreeFamily, n: usize, rng: &mut impl rand::Rng) -> Result<ModelMatrix> {
    require_scalar(f.ce(), f.algebra())?;
    let (d0, reps) = representation(f.algebra())?;
    let dim = d0 * n;
    let mut sum = ModelMatrix::zeros(dim, dim);
    for (i, x) in f.summands().iter().enumerate() {
        let xn = amplify(&embed(x, &reps), n);
        if i == 0 {
            sum += xn;
        } else {
            let u = sample_haar_unitary(dim, rng);
            let ux = &u * &xn;
            sum += &ux * u.adjoint();
        }
    }
    Ok(sum)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelEstimate {
    pub mean: f64,
    /// `max − min` over trials.
    pub spread: f64,
    pub samples: Vec<f64>,
}

impl ModelEstimate {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let mean = samples.iter().sum::<f64>() / samples.len().max(1) as f64;
        let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let spread = if samples.is_empty() { 0.0 } else { max - min };
        Self { mean, spread, samples }
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Runs `sample` once per trial and evaluates every space on the result.
pub fn estimate_spaces(
    cfg: &ModelConfig,
    spaces: &[SymmetricSpace],
    mut sample: impl FnMut(&mut ChaCha8Rng) -> Result<StepFunction>,
) -> Result<Vec<ModelEstimate>> {
    cfg.validate()?;
    let mut values = vec![Vec::with_capacity(cfg.trials); spaces.len()];
    for trial in 0..cfg.trials {
        let mut rng = cfg.trial_rng(trial);
        let mu = sample(&mut rng)?;
        for (v, space) in values.iter_mut().zip(spaces) {
            v.push(space.eval(&mu));
        }
    }
    Ok(values.into_iter().map(ModelEstimate::from_samples).collect())
}

/// Model estimates of `‖Σxᵢ‖_E` for each space.
pub fn model_symmetric_norms(f: &FreeFamily, spaces: &[SymmetricSpace], cfg: &ModelConfig) -> Result<Vec<ModelEstimate>> {
    f.require_centered()?;
    estimate_spaces(cfg, spaces, |rng| matrix_mu(&free_model_embed(f, cfg.n, rng)?))
}

pub fn model_symmetric_norm(f: &FreeFamily, space: &SymmetricSpace, cfg: &ModelConfig) -> Result<ModelEstimate> {
    Ok(model_symmetric_norms(f, std::slice::from_ref(space), cfg)?.remove(0))
}

/// The same estimate for a fixed operator: every trial agrees.
pub fn deterministic_estimate(x: &Operator, space: &SymmetricSpace, cfg: &ModelConfig) -> Result<ModelEstimate> {
    let mu = x.singular_value_function();
    Ok(estimate_spaces(cfg, std::slice::from_ref(space), |_| Ok(mu.clone()))?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haar_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1, 2, 7] {
            let u = from_model(&sample_haar_unitary(n, &mut rng));
            assert!(linalg::fro(&(u.adjoint() * &u - linalg::eye(n))) < 1e-10);
        }
    }

    #[test]
    fn representation_of_masses() {
        assert_eq!(representation(&TracialAlgebra::matrix(3)).unwrap(), (3, vec![1]));
        let alg = TracialAlgebra::new([(1, 0.25), (1, 0.75)]).unwrap();
        assert_eq!(representation(&alg).unwrap(), (4, vec![1, 3]));
        let alg = TracialAlgebra::new([(2, 0.5), (2, 0.5)]).unwrap();
        assert_eq!(representation(&alg).unwrap(), (4, vec![1, 1]));
        let alg = TracialAlgebra::new([(1, 1.0 / std::f64::consts::PI), (1, 1.0 - 1.0 / std::f64::consts::PI)]).unwrap();
        assert!(matches!(representation(&alg), Err(Error::Unrepresentable(_))));
    }

    #[test]
    fn embedding_preserves_moments() {
        let alg = TracialAlgebra::new([(2, 0.5), (1, 0.5)]).unwrap();
        let x = Operator::new(
            alg.clone(),
            vec![Mat::from_fn(2, 2, |i, j| C64::new(i as f64 + 1.0, j as f64)), Mat::from_element(1, 1, linalg::c(3.0))],
        )
        .unwrap();
        let (d0, reps) = representation(&alg).unwrap();
        let m = embed(&x, &reps);
        for word in [x.clone(), &x * &x.adjoint(), &x * &x * &x.adjoint()] {
            let w = embed(&word, &reps);
            assert!((linalg::trace(&w) / d0 as f64 - word.trace()).norm() < 1e-12);
        }
        assert_eq!(m.nrows(), d0);
    }

    #[test]
    fn splitting_is_deterministic() {
        assert_eq!(trial_seed(5, 3), trial_seed(5, 3));
        assert_ne!(trial_seed(5, 3), trial_seed(5, 4));
        assert_ne!(trial_seed(5, 3), trial_seed(6, 3));
    }

    #[test]
    fn deterministic_spread_is_zero() {
        let x = Operator::from_real_diagonal(&[2.0, -1.0]).unwrap();
        let e = deterministic_estimate(&x, &SymmetricSpace::linf(), &ModelConfig { trials: 3, ..Default::default() }).unwrap();
        assert_eq!(e.spread, 0.0);
        assert_eq!(e.mean, 2.0);
    }
}
