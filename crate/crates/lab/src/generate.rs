//! Random instances for each suite, drawn from one seeded stream per instance.

use anyhow::Result;
use freesym::conditioned::ConditionalExpectation;
use freesym::free_sums::FreeFamily;
use freesym::js::SymmetricDiagonalFamily;
use freesym::linalg::{self, Mat, C64};
use freesym::martingale::MatrixFiltration;
use freesym::words::WordCoefficients;
use freesym::Operator;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::{Distribution, InstanceSpec};

fn gaussian(rng: &mut impl Rng, n: usize) -> Mat {
    let s = 1.0 / (2.0 * n as f64).sqrt();
    Mat::from_fn(n, n, |_, _| C64::new(rng.sample::<f64, _>(StandardNormal) * s, rng.sample::<f64, _>(StandardNormal) * s))
}

fn sign(rng: &mut impl Rng) -> f64 {
    if rng.random_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

/// `k` summands over the scalars, centered.
pub fn free_family(inst: &InstanceSpec, rng: &mut impl Rng) -> Result<FreeFamily> {
    let xs: Vec<Operator> = (0..inst.k)
        .map(|_| match inst.distribution {
            Distribution::Bernoulli => Operator::from_real_diagonal(&[1.0, -1.0]),
            Distribution::Diagonal => {
                let v: Vec<f64> = (0..inst.size).map(|_| rng.sample(StandardNormal)).collect();
                Operator::from_real_diagonal(&v)
            }
            _ => Operator::from_matrix(gaussian(rng, inst.size)),
        })
        .collect::<freesym::Result<_>>()?;
    Ok(FreeFamily::centering(ConditionalExpectation::Scalar, xs)?)
}

pub fn words(inst: &InstanceSpec, rng: &mut impl Rng) -> Result<WordCoefficients> {
    let unit = linalg::eye(inst.m);
    Ok(match inst.distribution {
        Distribution::Ones => WordCoefficients::from_fn(inst.n, inst.d, inst.m, |_| unit.clone())?,
        Distribution::Bernoulli => WordCoefficients::from_fn(inst.n, inst.d, inst.m, |_| unit.scale(sign(rng)))?,
        _ => WordCoefficients::random(inst.n, inst.d, inst.m, rng)?,
    })
}

/// `k` summands `diag(a₁, −a₁, …)` with `atoms` pairs of equal width,
/// aligned at the level `μ(1)`.
pub fn symmetric_family(inst: &InstanceSpec, rng: &mut impl Rng) -> Result<SymmetricDiagonalFamily> {
    let xs: Vec<Operator> = (0..inst.k)
        .map(|_| {
            let v: Vec<f64> = (0..inst.atoms)
                .flat_map(|_| {
                    let a = match inst.distribution {
                        Distribution::Bernoulli => 1.0,
                        _ => rng.sample::<f64, _>(StandardNormal).abs(),
                    };
                    [a, -a]
                })
                .collect();
            Operator::from_real_diagonal(&v)
        })
        .collect::<freesym::Result<_>>()?;
    Ok(SymmetricDiagonalFamily::new(xs)?.aligned()?)
}

/// Scalars, then pinchings by successively merged blocks of a random
/// partition of `0..size` into singletons.
pub fn filtration(inst: &InstanceSpec, rng: &mut impl Rng) -> Result<MatrixFiltration> {
    let mut idx: Vec<usize> = (0..inst.size).collect();
    idx.shuffle(rng);
    let mut blocks: Vec<Vec<usize>> = idx.into_iter().map(|i| vec![i]).collect();
    let mut levels = vec![ConditionalExpectation::Scalar];
    for _ in 1..inst.depth {
        levels.push(ConditionalExpectation::pinching(blocks.clone())?);
        if blocks.len() > 1 {
            let merged = blocks.swap_remove(rng.random_range(0..blocks.len()));
            let j = rng.random_range(0..blocks.len());
            blocks[j].extend(merged);
        }
    }
    Ok(MatrixFiltration::new(inst.size, levels)?)
}

pub fn matrix(size: usize, rng: &mut impl Rng) -> Result<Operator> {
    Ok(Operator::from_matrix(gaussian(rng, size))?)
}
