//! Norms of fully symmetric function spaces, evaluated on step functions.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::step::StepFunction;
use crate::tracial::Operator;

/// An exponent in `[1, ∞]` with `∞` kept symbolic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn finite(p: f64) -> Result<Self> {
        if p.is_infinite() && p > 0.0 {
            return Ok(Exponent::Infinity);
        }
        if !(p >= 1.0) {
            return Err(Error::InvalidParameter(format!("exponent must be ≥ 1, got {p}")));
        }
        Ok(Exponent::Finite(p))
    }

    /// `p′ = p/(p−1)`, with `1 ↔ ∞` exact.
    pub fn conjugate(self) -> Exponent {
        match self {
            Exponent::Infinity => Exponent::Finite(1.0),
            Exponent::Finite(p) if p == 1.0 => Exponent::Infinity,
            Exponent::Finite(p) => Exponent::Finite(p / (p - 1.0)),
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Exponent::Finite(p) => p,
            Exponent::Infinity => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Exponent::Infinity)
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinity => f.write_str("inf"),
        }
    }
}

/// Which pair of spaces a norm is known to interpolate between.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interpolation {
    L1L2,
    L2Linf,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SymmetricSpace {
    Lp(Exponent),
    /// `‖f‖ = K(t, f) = ∫_0^t μ(f)`.
    L1PlusTLinf(f64),
    /// `‖f‖ = max(‖f‖_∞, s‖f‖_1)`.
    LinfCapSL1(f64),
    /// `‖μ 1_{(0,1]}‖_base / scale + ‖min(μ(1), μ)‖_2`; `scale` is 1 for a normalized base.
    Ze2 { base: Box<SymmetricSpace>, scale: f64 },
}

impl SymmetricSpace {
    pub fn lp(p: f64) -> Result<Self> {
        Ok(SymmetricSpace::Lp(Exponent::finite(p)?))
    }

    pub fn linf() -> Self {
        SymmetricSpace::Lp(Exponent::Infinity)
    }

    pub fn l1_plus_t_linf(t: f64) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidParameter(format!("L1+tL∞ needs 0 < t < ∞, got {t}")));
        }
        Ok(SymmetricSpace::L1PlusTLinf(t))
    }

    pub fn linf_cap_s_l1(s: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidParameter(format!("L∞∩sL1 needs 0 < s < ∞, got {s}")));
        }
        Ok(SymmetricSpace::LinfCapSL1(s))
    }

    /// `Z_E²` over a base with `‖1_{[0,1]}‖_base = 1`; other bases are rejected.
    pub fn ze2(base: SymmetricSpace) -> Result<Self> {
        if matches!(base, SymmetricSpace::Ze2 { .. }) {
            return Err(Error::InvalidParameter("Z_E² cannot be nested".into()));
        }
        let unit = base.unit_interval_norm();
        if (unit - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "Z_E² base must satisfy ‖1_[0,1]‖ = 1, got {unit}; use ze2_rescaled"
            )));
        }
        Ok(SymmetricSpace::Ze2 { base: Box::new(base), scale: 1.0 })
    }

    /// `Z_E²` over `base / ‖1_{[0,1]}‖_base`.
    pub fn ze2_rescaled(base: SymmetricSpace) -> Result<Self> {
        if matches!(base, SymmetricSpace::Ze2 { .. }) {
            return Err(Error::InvalidParameter("Z_E² cannot be nested".into()));
        }
        let scale = base.unit_interval_norm();
        Ok(SymmetricSpace::Ze2 { base: Box::new(base), scale })
    }

    /// `‖1_{[0,1]}‖`.
    pub fn unit_interval_norm(&self) -> f64 {
        let one = StepFunction::constant(1.0, 1.0, 1.0).expect("valid");
        self.eval(&one)
    }

    /// `‖μ‖_E`.
    pub fn eval(&self, mu: &StepFunction) -> f64 {
        match self {
            SymmetricSpace::Lp(Exponent::Infinity) => mu.sup(),
            SymmetricSpace::Lp(Exponent::Finite(p)) => {
                if *p == 1.0 {
                    mu.integral()
                } else {
                    mu.power_integral(*p).powf(1.0 / p)
                }
            }
            SymmetricSpace::L1PlusTLinf(t) => mu.k_unchecked(*t),
            SymmetricSpace::LinfCapSL1(s) => mu.sup().max(s * mu.integral()),
            SymmetricSpace::Ze2 { base, scale } => {
                let head = base.eval(&mu.truncate(1.0)) / scale;
                let level = mu.value_at(1.0);
                let tail = mu.map_monotone(|v| v.min(level)).power_integral(2.0).sqrt();
                head + tail
            }
        }
    }

    /// `‖x‖_{E(𝓜)} = ‖μ(x)‖_E`.
    pub fn norm(&self, x: &Operator) -> f64 {
        self.eval(&x.singular_value_function())
    }

    pub fn interpolation(&self) -> Option<Interpolation> {
        match self {
            SymmetricSpace::Lp(Exponent::Finite(p)) if *p <= 2.0 => Some(Interpolation::L1L2),
            SymmetricSpace::Lp(_) => Some(Interpolation::L2Linf),
            _ => None,
        }
    }

    /// Per-unit-width derivative of `‖·‖_E` at a positive spectrum.
    ///
    /// `spectrum` holds `(λ, width)` pairs of a positive operator `P`; the
    /// returned `g` satisfies `d‖P‖_E = Σ g_j width_j dλ_j`, i.e. the gradient is
    /// `Σ g_j P_j` against the trace. At a kink some subgradient is returned.
    pub fn spectral_gradient(&self, spectrum: &[(f64, f64)]) -> Result<Vec<f64>> {
        let mut order: Vec<usize> = (0..spectrum.len()).collect();
        order.sort_by(|&a, &b| spectrum[b].0.total_cmp(&spectrum[a].0));
        let mut g = vec![0.0; spectrum.len()];
        let top = order.first().map_or(0.0, |&i| spectrum[i].0.max(0.0));
        if top <= 0.0 {
            return Ok(g);
        }
        let tie = |v: f64| (top - v).abs() <= 1e-12 * top;
        let linf = |g: &mut Vec<f64>| {
            let w_top: f64 = order.iter().filter(|&&i| tie(spectrum[i].0)).map(|&i| spectrum[i].1).sum();
            for &i in &order {
                if tie(spectrum[i].0) {
                    g[i] = 1.0 / w_top;
                }
            }
        };
        match self {
            SymmetricSpace::Lp(Exponent::Infinity) => linf(&mut g),
            SymmetricSpace::Lp(Exponent::Finite(p)) => {
                let norm = spectrum.iter().map(|&(l, w)| l.max(0.0).powf(*p) * w).sum::<f64>().powf(1.0 / p);
                for (i, &(l, _)) in spectrum.iter().enumerate() {
                    g[i] = (l.max(0.0) / norm).powf(p - 1.0);
                }
            }
            SymmetricSpace::L1PlusTLinf(t) => {
                let mut remaining = *t;
                let mut k = 0;
                while k < order.len() && remaining > 0.0 {
                    let v = spectrum[order[k]].0;
                    let mut group = vec![];
                    while k < order.len() && (spectrum[order[k]].0 - v).abs() <= 1e-12 * top {
                        group.push(order[k]);
                        k += 1;
                    }
                    let width: f64 = group.iter().map(|&i| spectrum[i].1).sum();
                    let frac = (remaining / width).min(1.0);
                    for i in group {
                        g[i] = frac;
                    }
                    remaining -= width;
                }
            }
            SymmetricSpace::LinfCapSL1(s) => {
                let integral: f64 = spectrum.iter().map(|&(l, w)| l.max(0.0) * w).sum();
                if top >= s * integral {
                    linf(&mut g);
                } else {
                    g.iter_mut().for_each(|v| *v = *s);
                }
            }
            SymmetricSpace::Ze2 { .. } => {
                return Err(Error::InvalidParameter("no spectral gradient for Z_E² norms".into()));
            }
        }
        Ok(g)
    }
}

impl fmt::Display for SymmetricSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymmetricSpace::Lp(p) => write!(f, "lp:{p}"),
            SymmetricSpace::L1PlusTLinf(t) => write!(f, "l1+tlinf:{t}"),
            SymmetricSpace::LinfCapSL1(s) => write!(f, "linf^sl1:{s}"),
            SymmetricSpace::Ze2 { base, scale } if *scale == 1.0 => write!(f, "ze2({base})"),
            SymmetricSpace::Ze2 { base, .. } => write!(f, "ze2~({base})"),
        }
    }
}

fn parse_number(s: &str, what: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad {what} parameter {s:?}")))
}

impl FromStr for SymmetricSpace {
    type Err = Error;

    /// Accepts `lp:2`, `lp:inf`, `l1+tlinf:0.5`, `linf^sl1:2.0`, `ze2(lp:inf)` and
    /// `ze2~(...)` for a rescaled base.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(inner) = s.strip_prefix("ze2~(").and_then(|r| r.strip_suffix(')')) {
            return SymmetricSpace::ze2_rescaled(inner.parse()?);
        }
        if let Some(inner) = s.strip_prefix("ze2(").and_then(|r| r.strip_suffix(')')) {
            return SymmetricSpace::ze2(inner.parse()?);
        }
        let (kind, param) = s.split_once(':').ok_or_else(|| Error::Parse(format!("unknown space {s:?}")))?;
        match kind.trim() {
            "lp" => match param.trim() {
                "inf" | "∞" => Ok(SymmetricSpace::linf()),
                p => SymmetricSpace::lp(parse_number(p, "lp")?),
            },
            "l1+tlinf" => SymmetricSpace::l1_plus_t_linf(parse_number(param, "l1+tlinf")?),
            "linf^sl1" => SymmetricSpace::linf_cap_s_l1(parse_number(param, "linf^sl1")?),
            other => Err(Error::Parse(format!("unknown space kind {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mu(pairs: &[(f64, f64)], domain: f64) -> StepFunction {
        StepFunction::from_pairs(pairs.iter().copied(), domain).unwrap()
    }

    #[test]
    fn basic_values() {
        let one = mu(&[(1.0, 1.0)], 1.0);
        assert!((SymmetricSpace::lp(2.0).unwrap().eval(&one) - 1.0).abs() < 1e-15);
        let m31 = mu(&[(3.0, 0.5), (1.0, 0.5)], 1.0);
        assert!((SymmetricSpace::l1_plus_t_linf(0.5).unwrap().eval(&m31) - 1.5).abs() < 1e-15);
        assert!((SymmetricSpace::linf_cap_s_l1(2.0).unwrap().eval(&m31) - 4.0).abs() < 1e-15);
        assert!((SymmetricSpace::linf().eval(&m31) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn ze2_examples() {
        let e = SymmetricSpace::ze2(SymmetricSpace::linf()).unwrap();
        assert!((e.eval(&mu(&[(1.0, 1.0)], 1.0)) - 1.0).abs() < 1e-15);
        let v = e.eval(&mu(&[(2.0, 2.0)], 2.0));
        assert!((v - (2.0 + 2.0 * 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn ze2_rejects_unnormalized_base() {
        assert!(SymmetricSpace::ze2(SymmetricSpace::l1_plus_t_linf(0.5).unwrap()).is_err());
        assert!(SymmetricSpace::ze2(SymmetricSpace::linf_cap_s_l1(2.0).unwrap()).is_err());
        assert!(SymmetricSpace::ze2(SymmetricSpace::l1_plus_t_linf(1.0).unwrap()).is_ok());
        let r = SymmetricSpace::ze2_rescaled(SymmetricSpace::linf_cap_s_l1(2.0).unwrap()).unwrap();
        assert!((r.eval(&mu(&[(1.0, 1.0)], 1.0)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn parse_round_trip() {
        for s in ["lp:2", "lp:inf", "lp:1.5", "l1+tlinf:0.5", "linf^sl1:2", "ze2(lp:inf)", "ze2(l1+tlinf:1)"] {
            let space: SymmetricSpace = s.parse().unwrap();
            let again: SymmetricSpace = space.to_string().parse().unwrap();
            assert_eq!(space, again, "{s}");
        }
        assert!("lp:0.5".parse::<SymmetricSpace>().is_err());
        assert!("l1+tlinf:-1".parse::<SymmetricSpace>().is_err());
        assert!("foo:1".parse::<SymmetricSpace>().is_err());
    }

    #[test]
    fn conjugate_exponents() {
        assert_eq!(Exponent::Finite(1.0).conjugate(), Exponent::Infinity);
        assert_eq!(Exponent::Infinity.conjugate(), Exponent::Finite(1.0));
        assert_eq!(Exponent::Finite(2.0).conjugate(), Exponent::Finite(2.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spectrum = vec![(2.0, 0.25), (1.0, 0.5), (0.5, 0.25)];
        for space in [
            SymmetricSpace::lp(1.5).unwrap(),
            SymmetricSpace::lp(3.0).unwrap(),
            SymmetricSpace::l1_plus_t_linf(0.5).unwrap(),
        ] {
            let g = space.spectral_gradient(&spectrum).unwrap();
            let f = |s: &[(f64, f64)]| space.eval(&StepFunction::from_pairs(s.iter().copied(), 1.0).unwrap());
            for j in 0..spectrum.len() {
                let h = 1e-6;
                let mut up = spectrum.clone();
                up[j].0 += h;
                let mut dn = spectrum.clone();
                dn[j].0 -= h;
                let fd = (f(&up) - f(&dn)) / (2.0 * h);
                assert!((fd - g[j] * spectrum[j].1).abs() < 1e-6, "{space} j={j}");
            }
        }
    }
}
