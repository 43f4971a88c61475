#![allow(dead_code)]

use freesym::conditioned::ConditionalExpectation;
use freesym::free_sums::FreeFamily;
use freesym::linalg::{Mat, C64};
use freesym::martingale::MatrixFiltration;
use freesym::Operator;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

pub fn hermitian(rng: &mut impl Rng, n: usize) -> Mat {
    let g = gaussian(rng, n, n);
    (&g + g.adjoint()).scale(0.5)
}

/// A matrix of rank at most `rank`.
pub fn low_rank(rng: &mut impl Rng, n: usize, rank: usize) -> Mat {
    gaussian(rng, n, rank) * gaussian(rng, rank, n)
}

pub fn bernoulli() -> Operator {
    Operator::from_real_diagonal(&[1.0, -1.0]).unwrap()
}

pub fn bernoulli_family(k: usize) -> FreeFamily {
    FreeFamily::new(ConditionalExpectation::Scalar, vec![bernoulli(); k]).unwrap()
}

/// `k` Gaussian summands in `M_n`, traceless.
pub fn random_family(rng: &mut impl Rng, k: usize, n: usize) -> FreeFamily {
    let xs = (0..k).map(|_| Operator::from_matrix(gaussian(rng, n, n).scale(1.0 / (n as f64).sqrt())).unwrap()).collect();
    FreeFamily::centering(ConditionalExpectation::Scalar, xs).unwrap()
}

/// A uniformly shuffled partition of `0..n` into at most `parts` nonempty blocks.
pub fn random_partition(rng: &mut impl Rng, n: usize, parts: usize) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let parts = parts.clamp(1, n);
    let mut blocks = vec![Vec::new(); parts];
    for (j, &i) in idx.iter().enumerate() {
        let b = if j < parts { j } else { rng.random_range(0..parts) };
        blocks[b].push(i);
    }
    blocks
}

pub fn random_pinching(rng: &mut impl Rng, n: usize) -> ConditionalExpectation {
    let parts = rng.random_range(1..=n);
    ConditionalExpectation::pinching(random_partition(rng, n, parts)).unwrap()
}

/// Scalars, then `depth − 1` pinchings by partitions obtained from a random
/// fine one by merging blocks.
pub fn random_filtration(rng: &mut impl Rng, dim: usize, depth: usize) -> MatrixFiltration {
    let mut levels = vec![ConditionalExpectation::Scalar];
    let mut blocks = random_partition(rng, dim, dim);
    for _ in 1..depth {
        levels.push(ConditionalExpectation::pinching(blocks.clone()).unwrap());
        if blocks.len() > 1 {
            let i = rng.random_range(0..blocks.len());
            let merged = blocks.swap_remove(i);
            let j = rng.random_range(0..blocks.len());
            blocks[j].extend(merged);
        }
    }
    MatrixFiltration::new(dim, levels).unwrap()
}

/// Singular values straight from nalgebra.
pub fn svals(m: &Mat) -> Vec<f64> {
    m.clone().singular_values().iter().copied().collect()
}

/// `inf_s τ((|x| − s)₊) + t·s` over the breakpoints `s ∈ {0} ∪ σ(|x|)` of the
/// piecewise linear objective, for `x ∈ M_n` with normalized trace.
pub fn k_functional_oracle(m: &Mat, t: f64) -> f64 {
    let s = svals(m);
    let w = 1.0 / m.nrows() as f64;
    std::iter::once(0.0)
        .chain(s.iter().copied())
        .map(|cut| s.iter().map(|&v| w * (v - cut).max(0.0)).sum::<f64>() + t * cut)
        .fold(f64::INFINITY, f64::min)
}

/// `‖x‖_{1,Σ}` for `xᵢ = diag(sᵢ, −sᵢ)` in `M_2` over the scalars, by a
/// refining grid over the column and row coefficients `(p₁, p₂, q₁, q₂)`.
pub fn sigma_grid_oracle(s: [f64; 2]) -> f64 {
    let f = |v: [f64; 4]| {
        v[0].hypot(v[1]) + v[2].hypot(v[3]) + (s[0] - v[0] - v[2]).abs() + (s[1] - v[1] - v[3]).abs()
    };
    let pts = 21usize;
    let mut center = [0.0; 4];
    let mut half = 2.0 * s[0].abs().max(s[1].abs()).max(1e-3);
    let mut best = f(center);
    for _ in 0..14 {
        let h = 2.0 * half / (pts - 1) as f64;
        let axis = |c: f64, i: usize| c - half + h * i as f64;
        let mut arg = center;
        for a in 0..pts {
            for b in 0..pts {
                for c in 0..pts {
                    for d in 0..pts {
                        let v = [axis(center[0], a), axis(center[1], b), axis(center[2], c), axis(center[3], d)];
                        let val = f(v);
                        if val < best {
                            best = val;
                            arg = v;
                        }
                    }
                }
            }
        }
        center = arg;
        half = 3.0 * h;
    }
    best
}

