//! Limited-memory BFGS with Armijo backtracking, plus packing of operator
//! lists into real parameter vectors.

use std::collections::VecDeque;

use crate::linalg::{Mat, C64};
use crate::tracial::{Operator, TracialAlgebra};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LbfgsConfig {
    pub max_iter: usize,
    /// Stop once `|f_prev − f| ≤ tol_rel·max(1, |f|)` twice in a row.
    pub tol_rel: f64,
    pub memory: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self { max_iter: 10_000, tol_rel: 1e-7, memory: 12 }
    }
}

#[derive(Clone, Debug)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`, which returns the value and gradient at a point.
pub fn minimize(mut f: impl FnMut(&[f64]) -> (f64, Vec<f64>), x0: Vec<f64>, cfg: &LbfgsConfig) -> LbfgsOutcome {
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut quiet = 0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iter {
        iterations += 1;
        let gnorm = dot(&g, &g).sqrt();
        if gnorm <= 1e-14 * (1.0 + fx.abs()) {
            converged = true;
            break;
        }

        // Two-loop recursion.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        } else {
            q.iter_mut().for_each(|v| *v /= gnorm.max(1e-300));
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            history.clear();
            dir = g.iter().map(|v| -v / gnorm).collect();
            slope = -gnorm;
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = f(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            if history.is_empty() {
                // No progress even along the steepest descent direction.
                converged = true;
                break;
            }
            history.clear();
            continue;
        };

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-16 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            history.push_back((s, y, 1.0 / sy));
            if history.len() > cfg.memory {
                history.pop_front();
            }
        }
        let change = (fx - fn_).abs();
        x = xn;
        fx = fn_;
        g = gn;
        if change <= cfg.tol_rel * fx.abs().max(1.0) {
            quiet += 1;
            if quiet >= 2 {
                converged = true;
                break;
            }
        } else {
            quiet = 0;
        }
    }
    LbfgsOutcome { x, value: fx, iterations, converged }
}

/// Number of real parameters for `count` operators in `algebra`.
pub fn packed_len(algebra: &TracialAlgebra, count: usize) -> usize {
    count * algebra.blocks().iter().map(|b| 2 * b.dim * b.dim).sum::<usize>()
}

pub fn pack(ops: &[Operator], out: &mut Vec<f64>) {
    for op in ops {
        for m in op.blocks() {
            for z in m.iter() {
                out.push(z.re);
                out.push(z.im);
            }
        }
    }
}

/// Reads `count` operators from `data`, returning them and the unread rest.
pub fn unpack<'a>(algebra: &TracialAlgebra, count: usize, data: &'a [f64]) -> (Vec<Operator>, &'a [f64]) {
    let mut rest = data;
    let mut ops = Vec::with_capacity(count);
    for _ in 0..count {
        let mut blocks = Vec::with_capacity(algebra.num_blocks());
        for b in algebra.blocks() {
            let len = b.dim * b.dim;
            let (head, tail) = rest.split_at(2 * len);
            blocks.push(Mat::from_iterator(b.dim, b.dim, head.chunks_exact(2).map(|p| C64::new(p[0], p[1]))));
            rest = tail;
        }
        ops.push(Operator::new(algebra.clone(), blocks).expect("shapes from algebra"));
    }
    (ops, rest)
}

/// Converts gradients taken against `Re τ(·* ·)` into gradients against the
/// raw coordinates of [`pack`].
pub fn pack_trace_gradient(grads: &[Operator], out: &mut Vec<f64>) {
    for op in grads {
        for (m, b) in op.blocks().iter().zip(op.algebra().blocks()) {
            let w = b.mass / b.dim as f64;
            for z in m.iter() {
                out.push(w * z.re);
                out.push(w * z.im);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            (v, g)
        };
        let out = minimize(f, vec![-1.2, 1.0], &LbfgsConfig { tol_rel: 1e-14, ..Default::default() });
        assert!((out.x[0] - 1.0).abs() < 1e-5 && (out.x[1] - 1.0).abs() < 1e-5, "{:?}", out.x);
    }

    #[test]
    fn pack_round_trip() {
        let alg = TracialAlgebra::new([(2, 0.5), (1, 0.5)]).unwrap();
        let x = Operator::new(
            alg.clone(),
            vec![Mat::from_fn(2, 2, |i, j| C64::new(i as f64, j as f64)), Mat::from_element(1, 1, C64::new(3.0, -1.0))],
        )
        .unwrap();
        let mut v = Vec::new();
        pack(&[x.clone(), x.scale(2.0)], &mut v);
        assert_eq!(v.len(), packed_len(&alg, 2));
        let (ops, rest) = unpack(&alg, 2, &v);
        assert!(rest.is_empty());
        assert!((&ops[1] - &x.scale(2.0)).op_norm() < 1e-15);
    }
}
