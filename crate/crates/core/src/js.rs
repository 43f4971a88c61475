//! Symmetric diagonal families and the explicit decomposition behind the
//! Johnson–Schechtman type sandwich
//! `⅓‖Σxᵢ⊗eᵢ‖_{Z_E²} ≤ ‖Σxᵢ‖_E ≤ 3‖Σxᵢ⊗eᵢ‖_{Z_E²}`.
//!
//! Summands are real diagonal operators whose spectral distribution is
//! invariant under `λ ↦ −λ`. A spectral value `λ` is paired with `−λ` at equal
//! width; a projection is even when it takes the same width from both.

use crate::check::CheckRow;
use crate::conditioned::{self, ConditionalExpectation};
use crate::error::{Error, Result};
use crate::free_sums::FreeFamily;
use crate::linalg::{self, Mat};
use crate::rmt::{self, ModelConfig};
use crate::spaces::SymmetricSpace;
use crate::step::StepFunction;
use crate::tracial::{Operator, TracialAlgebra};

const LEVEL_TOL: f64 = 1e-12;

/// Diagonal entries with their trace widths, in block then basis order.
fn atoms(x: &Operator) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for (m, b) in x.blocks().iter().zip(x.algebra().blocks()) {
        let w = b.mass / b.dim as f64;
        for j in 0..b.dim {
            out.push((m[(j, j)].re, w));
        }
    }
    out
}

fn side_distribution(atoms: &[(f64, f64)], sign: f64) -> Result<StepFunction> {
    StepFunction::from_pairs(atoms.iter().filter(|a| a.0 * sign > 0.0).map(|&(v, w)| (v.abs(), w)), 1.0)
}

/// Operator in `x`'s algebra whose diagonal is `f(value, width)` entrywise.
fn map_diagonal(x: &Operator, f: impl Fn(usize, f64) -> f64) -> Operator {
    let mut k = 0;
    let blocks = x
        .blocks()
        .iter()
        .map(|m| {
            let vals: Vec<f64> = (0..m.nrows())
                .map(|j| {
                    let v = f(k, m[(j, j)].re);
                    k += 1;
                    v
                })
                .collect();
            linalg::diag(&vals)
        })
        .collect();
    Operator::new(x.algebra().clone(), blocks).expect("same shapes")
}

fn same_level(a: f64, t: f64) -> bool {
    (a - t).abs() <= LEVEL_TOL * t.max(1.0)
}

#[derive(Clone, Debug)]
pub struct SymmetricDiagonalFamily {
    summands: Vec<Operator>,
}

impl SymmetricDiagonalFamily {
    pub fn new(summands: Vec<Operator>) -> Result<Self> {
        if summands.is_empty() {
            return Err(Error::InvalidParameter("a family needs a summand".into()));
        }
        for (i, x) in summands.iter().enumerate() {
            if (x.algebra().total_mass() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!("summand {i} has mass {}", x.algebra().total_mass())));
            }
            let scale = x.op_norm().max(1.0);
            for m in x.blocks() {
                for (r, c) in (0..m.nrows()).flat_map(|r| (0..m.ncols()).map(move |c| (r, c))) {
                    let z = m[(r, c)];
                    let off = if r == c { z.im.abs() } else { z.norm() };
                    if off > 1e-12 * scale {
                        return Err(Error::InvalidParameter(format!("summand {i} is not a real diagonal operator")));
                    }
                }
            }
            let a = atoms(x);
            let gap = side_distribution(&a, 1.0)?.max_value_distance(&side_distribution(&a, -1.0)?);
            if gap > 1e-12 * scale {
                return Err(Error::InvalidParameter(format!(
                    "summand {i} is not symmetrically distributed (gap {gap:e})"
                )));
            }
        }
        Ok(Self { summands })
    }

    pub fn summands(&self) -> &[Operator] {
        &self.summands
    }

    pub fn len(&self) -> usize {
        self.summands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.summands.is_empty()
    }

    /// `μ(Σxᵢ⊗eᵢ)`.
    pub fn joint_mu(&self) -> StepFunction {
        conditioned::diagonal_mu(&self.summands)
    }

    /// `t = μ(f)(1)`.
    pub fn level(&self) -> f64 {
        self.joint_mu().value_at(1.0)
    }

    /// The same family as free summands over the scalars.
    pub fn free_family(&self) -> Result<FreeFamily> {
        FreeFamily::new(ConditionalExpectation::Scalar, self.summands.clone())
    }

    /// Width to take from each summand at level `±t`, split evenly between
    /// the two signs; lower summand indices are served first.
    fn tie_shares(&self, t: f64) -> Vec<f64> {
        let all: Vec<Vec<(f64, f64)>> = self.summands.iter().map(atoms).collect();
        let above: f64 = all.iter().flatten().filter(|a| a.0.abs() > t && !same_level(a.0.abs(), t)).map(|a| a.1).sum();
        let mut need = (1.0 - above).max(0.0);
        all.iter()
            .map(|a| {
                let avail: f64 = a.iter().filter(|x| same_level(x.0.abs(), t)).map(|x| x.1).sum();
                let take = need.min(avail);
                need -= take;
                take
            })
            .collect()
    }

    /// For one summand, which atoms at level `±t` the cut takes whole, and
    /// the leftover width per sign that would need a split atom.
    fn cut_atoms(x: &Operator, t: f64, share: f64) -> (Vec<bool>, [f64; 2], [Option<usize>; 2]) {
        let a = atoms(x);
        let mut take = vec![false; a.len()];
        let mut left = [share / 2.0, share / 2.0];
        let mut split = [None, None];
        for (s, sign) in [1.0, -1.0].into_iter().enumerate() {
            for (j, &(v, w)) in a.iter().enumerate() {
                if v * sign <= 0.0 || !same_level(v.abs(), t) || left[s] <= LEVEL_TOL {
                    continue;
                }
                if w <= left[s] + LEVEL_TOL {
                    take[j] = true;
                    left[s] -= w;
                } else if split[s].is_none() {
                    split[s] = Some(j);
                }
            }
        }
        (take, left, split)
    }

    /// Splits atoms at level `±t` so that the cut of total width 1 falls on
    /// atom boundaries. Summands come back over diagonal algebras.
    pub fn aligned(&self) -> Result<Self> {
        let t = self.level();
        if t == 0.0 {
            return Ok(self.clone());
        }
        let shares = self.tie_shares(t);
        let mut out = Vec::with_capacity(self.len());
        for (x, &share) in self.summands.iter().zip(&shares) {
            let (_, left, split) = Self::cut_atoms(x, t, share);
            let mut pieces: Vec<(f64, f64)> = Vec::new();
            for (j, &(v, w)) in atoms(x).iter().enumerate() {
                let sign = if v > 0.0 { 0 } else { 1 };
                if split[sign] == Some(j) && left[sign] > LEVEL_TOL {
                    pieces.push((v, left[sign]));
                    pieces.push((v, w - left[sign]));
                } else {
                    pieces.push((v, w));
                }
            }
            let alg = TracialAlgebra::diagonal(&pieces.iter().map(|p| p.1).collect::<Vec<_>>())?;
            let blocks = pieces.iter().map(|p| Mat::from_element(1, 1, linalg::c(p.0))).collect();
            out.push(Operator::new(alg, blocks)?);
        }
        Self::new(out)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct JsDiagnostics {
    /// `maxᵢ ‖xᵢ − (t·uᵢ + vᵢγᵢ)‖_∞`.
    pub reconstruction: f64,
    pub max_u: f64,
    pub max_v: f64,
    pub max_w: f64,
    /// `maxᵢ ‖vᵢ*wᵢ‖_∞`.
    pub overlap: f64,
    /// Trace of `Σqᵢ⊗eᵢ`.
    pub head_mass: f64,
    /// Largest gap between `μ(Σqᵢ|xᵢ|⊗eᵢ)` and `μ(f)1_{(0,1]}`.
    pub head_distance: f64,
}

#[derive(Clone, Debug)]
pub struct JsDecomposition {
    pub t: f64,
    /// `‖min(t, μ(f))‖₂`.
    pub alpha: f64,
    pub q: Vec<Operator>,
    pub u: Vec<Operator>,
    pub v: Vec<Operator>,
    pub w: Vec<Operator>,
    pub gamma: Vec<Operator>,
    pub diagnostics: JsDiagnostics,
}

/// `xᵢ = t·uᵢ + vᵢγᵢ` with `uᵢ = vᵢ + wᵢ`, `vᵢ = sign(xᵢ)qᵢ`,
/// `wᵢ = xᵢ(1 − qᵢ)/t`, `γᵢ = (|xᵢ| − t)₊qᵢ`, where `1_{|xᵢ|>t} ≤ qᵢ ≤ 1_{|xᵢ|≥t}`
/// and `Σqᵢ` has trace 1 (or covers the support when that is smaller).
pub fn js_decomposition(f: &SymmetricDiagonalFamily) -> Result<JsDecomposition> {
    let mu = f.joint_mu();
    let t = mu.value_at(1.0);
    let alpha = mu.map_monotone(|v| v.min(t)).power_integral(2.0).sqrt();
    let shares = if t > 0.0 { f.tie_shares(t) } else { vec![0.0; f.len()] };

    let mut q = Vec::with_capacity(f.len());
    let mut achieved = 0.0;
    let mut missing: f64 = 0.0;
    for (x, &share) in f.summands.iter().zip(&shares) {
        let a = atoms(x);
        let (take, left, _) = if t > 0.0 {
            SymmetricDiagonalFamily::cut_atoms(x, t, share)
        } else {
            (vec![false; a.len()], [0.0; 2], [None; 2])
        };
        missing += left[0] + left[1];
        let qi = map_diagonal(x, |j, v| {
            let head = if t > 0.0 { v.abs() > t && !same_level(v.abs(), t) } else { v != 0.0 };
            if head || take[j] {
                1.0
            } else {
                0.0
            }
        });
        achieved += qi.trace().re;
        q.push(qi);
    }
    if missing > 1e-10 {
        return Err(Error::CutNotAlignable { achievable: achieved, residual: missing });
    }

    let mut diagnostics = JsDiagnostics { head_mass: achieved, ..Default::default() };
    let (mut u, mut v, mut w, mut gamma) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut heads = Vec::with_capacity(f.len());
    for (x, qi) in f.summands.iter().zip(&q) {
        let qd: Vec<f64> = atoms(qi).into_iter().map(|a| a.0).collect();
        let vi = map_diagonal(x, |j, val| val.signum() * qd[j]);
        let wi = map_diagonal(x, |j, val| if t > 0.0 { val * (1.0 - qd[j]) / t } else { 0.0 });
        let gi = map_diagonal(x, |j, val| (val.abs() - t).max(0.0) * qd[j]);
        let ui = &vi + &wi;
        let rebuilt = ui.scale(t) + &vi * &gi;
        diagnostics.reconstruction = diagnostics.reconstruction.max((x - &rebuilt).op_norm());
        diagnostics.max_u = diagnostics.max_u.max(ui.op_norm());
        diagnostics.max_v = diagnostics.max_v.max(vi.op_norm());
        diagnostics.max_w = diagnostics.max_w.max(wi.op_norm());
        diagnostics.overlap = diagnostics.overlap.max((vi.adjoint() * &wi).op_norm());
        heads.push(map_diagonal(x, |j, val| val.abs() * qd[j]));
        u.push(ui);
        v.push(vi);
        w.push(wi);
        gamma.push(gi);
    }
    diagnostics.head_distance = conditioned::diagonal_mu(&heads).max_value_distance(&mu.truncate(1.0));
    Ok(JsDecomposition { t, alpha, q, u, v, w, gamma, diagnostics })
}

/// `‖Σxᵢ⊗eᵢ‖_{Z_E²}`.
pub fn ze2_norm(f: &SymmetricDiagonalFamily, base: &SymmetricSpace) -> Result<f64> {
    Ok(SymmetricSpace::ze2(base.clone())?.eval(&f.joint_mu()))
}

/// Both sides of the constant-3 sandwich against each model sample, and the
/// bound `‖Σuᵢ‖_∞ ≤ 2‖Σuᵢ‖₂ + 1` used to prove it.
pub fn verify_js(f: &SymmetricDiagonalFamily, base: &SymmetricSpace, model: &ModelConfig) -> Result<Vec<CheckRow>> {
    model.validate()?;
    let z = ze2_norm(f, base)?;
    let fam = f.free_family()?;
    let dec = js_decomposition(&f.aligned()?)?;
    let u_fam = FreeFamily::new(ConditionalExpectation::Scalar, dec.u.clone())?;
    let u_l2 = u_fam.l2_norm();
    let linf = SymmetricSpace::linf();
    let mut rows = Vec::new();
    for trial in 0..model.trials {
        let seed = rmt::trial_seed(model.seed, trial as u64);
        let mut rng = model.trial_rng(trial);
        let value = base.eval(&rmt::matrix_mu(&rmt::free_model_embed(&fam, model.n, &mut rng)?)?);
        rows.push(CheckRow::new("js_lower", z, value, 3.0, model.slack).in_space(base).with_seed(seed));
        rows.push(CheckRow::new("js_upper", value, z, 3.0, model.slack).in_space(base).with_seed(seed));
        if !u_fam.is_zero() {
            let mut rng = model.trial_rng(trial);
            let u_norm = linf.eval(&rmt::matrix_mu(&rmt::free_model_embed(&u_fam, model.n, &mut rng)?)?);
            rows.push(CheckRow::new("js_u_voiculescu", u_norm, 2.0 * u_l2 + 1.0, 1.0, model.slack).in_space(&linf).with_seed(seed));
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_op(values: &[f64], widths: &[f64]) -> Operator {
        let alg = TracialAlgebra::diagonal(widths).unwrap();
        Operator::new(alg, values.iter().map(|&v| Mat::from_element(1, 1, linalg::c(v))).collect()).unwrap()
    }

    #[test]
    fn rejects_asymmetric() {
        let x = Operator::from_real_diagonal(&[2.0, -1.0]).unwrap();
        assert!(SymmetricDiagonalFamily::new(vec![x]).is_err());
    }

    #[test]
    fn head_only_case() {
        let x = Operator::from_real_diagonal(&[2.0, -2.0, 1.0, -1.0]).unwrap();
        let f = SymmetricDiagonalFamily::new(vec![x.clone()]).unwrap();
        let d = js_decomposition(&f).unwrap();
        assert_eq!(d.t, 0.0);
        assert!((&d.gamma[0] - &x.abs()).op_norm() < 1e-15);
        assert!(d.w[0].op_norm() == 0.0);
        assert!(d.diagnostics.reconstruction < 1e-15);
    }

    #[test]
    fn constant_tie_case() {
        let x = Operator::from_real_diagonal(&[3.0, -3.0]).unwrap();
        let f = SymmetricDiagonalFamily::new(vec![x.clone(), x]).unwrap();
        let d = js_decomposition(&f).unwrap();
        assert_eq!(d.t, 3.0);
        assert!((d.q[0].trace().re - 1.0).abs() < 1e-15);
        assert_eq!(d.q[1].trace().re, 0.0);
        assert!((d.diagnostics.head_mass - 1.0).abs() < 1e-15);
    }

    #[test]
    fn alignment_splits_the_tie() {
        let x = diag_op(&[3.0, -3.0, 1.0, -1.0], &[0.375, 0.375, 0.125, 0.125]);
        let f = SymmetricDiagonalFamily::new(vec![x.clone(), x.clone(), x]).unwrap();
        assert!((f.level() - 3.0).abs() < 1e-15);
        match js_decomposition(&f) {
            Err(Error::CutNotAlignable { .. }) => {}
            other => panic!("expected a cut error, got {other:?}"),
        }
        let g = f.aligned().unwrap();
        let d = js_decomposition(&g).unwrap();
        assert!((d.diagnostics.head_mass - 1.0).abs() < 1e-12);
        assert!(d.diagnostics.reconstruction < 1e-14);
        assert!(d.diagnostics.head_distance < 1e-12);
    }
}
