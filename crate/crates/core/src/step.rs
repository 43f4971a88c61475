//! Non-increasing step functions on `(0, T)`: the home of generalized singular
//! values and of K-functionals.

use crate::error::{Error, Result};

/// One constant piece: `value` on an interval of length `width`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub value: f64,
    pub width: f64,
}

/// Non-increasing, right-continuous step function on `(0, domain)`.
///
/// The k-th step occupies `[c_{k-1}, c_k)` where `c_k` is the cumulative
/// width. Beyond the last step the function is zero. Zero-valued steps are
/// dropped on construction; they never change a norm.
#[derive(Clone, Debug, PartialEq)]
pub struct StepFunction {
    steps: Vec<Step>,
    domain: f64,
}

const WIDTH_SLACK: f64 = 1e-12;

impl StepFunction {
    /// Builds a step function from steps that are already sorted.
    pub fn new(steps: Vec<Step>, domain: f64) -> Result<Self> {
        if !(domain > 0.0) {
            return Err(Error::InvalidParameter(format!("domain must be positive, got {domain}")));
        }
        let mut total = 0.0;
        for (k, s) in steps.iter().enumerate() {
            if !(s.width > 0.0) || !s.value.is_finite() || s.value < 0.0 {
                return Err(Error::InvalidParameter(format!("bad step {k}: {s:?}")));
            }
            if k > 0 && s.value > steps[k - 1].value {
                return Err(Error::InvalidParameter("step values must be non-increasing".into()));
            }
            total += s.width;
        }
        if total > domain * (1.0 + WIDTH_SLACK) {
            return Err(Error::InvalidParameter(format!(
                "steps cover {total}, more than the domain {domain}"
            )));
        }
        let steps = steps.into_iter().filter(|s| s.value > 0.0).collect();
        Ok(Self { steps, domain })
    }

    /// Sorts arbitrary `(value, width)` pairs into a decreasing rearrangement.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>, domain: f64) -> Result<Self> {
        let mut steps: Vec<Step> = pairs
            .into_iter()
            .filter(|&(v, w)| w > 0.0 && v > 0.0)
            .map(|(value, width)| Step { value, width })
            .collect();
        steps.sort_by(|a, b| b.value.total_cmp(&a.value));
        let mut merged: Vec<Step> = Vec::with_capacity(steps.len());
        for s in steps {
            match merged.last_mut() {
                Some(last) if last.value == s.value => last.width += s.width,
                _ => merged.push(s),
            }
        }
        Self::new(merged, domain)
    }

    /// The constant `value` on `(0, width)`.
    pub fn constant(value: f64, width: f64, domain: f64) -> Result<Self> {
        Self::from_pairs([(value, width)], domain)
    }

    pub fn zero(domain: f64) -> Self {
        Self { steps: Vec::new(), domain }
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn domain(&self) -> f64 {
        self.domain
    }

    /// Total width of the support.
    pub fn support(&self) -> f64 {
        self.steps.iter().map(|s| s.width).sum()
    }

    pub fn sup(&self) -> f64 {
        self.steps.first().map_or(0.0, |s| s.value)
    }

    /// Right-continuous evaluation at `t`.
    pub fn value_at(&self, t: f64) -> f64 {
        if t < 0.0 {
            return self.sup();
        }
        let mut cum = 0.0;
        for s in &self.steps {
            cum += s.width;
            if t < cum {
                return s.value;
            }
        }
        0.0
    }

    /// Cumulative widths: the interior breakpoints.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut cum = 0.0;
        self.steps
            .iter()
            .map(|s| {
                cum += s.width;
                cum
            })
            .collect()
    }

    pub fn integral(&self) -> f64 {
        self.steps.iter().map(|s| s.value * s.width).sum()
    }

    /// `∫ μ^p` exactly on the steps.
    pub fn power_integral(&self, p: f64) -> f64 {
        self.steps.iter().map(|s| s.value.powf(p) * s.width).sum()
    }

    /// `K(t, μ) = ∫_0^t μ`, exact and piecewise linear in `t`.
    pub fn k_functional(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::InvalidParameter(format!("K-functional needs t > 0, got {t}")));
        }
        Ok(self.k_unchecked(t))
    }

    pub(crate) fn k_unchecked(&self, t: f64) -> f64 {
        let mut remaining = t;
        let mut acc = 0.0;
        for s in &self.steps {
            if remaining <= 0.0 {
                break;
            }
            let w = s.width.min(remaining);
            acc += s.value * w;
            remaining -= w;
        }
        acc
    }

    /// Decreasing rearrangement of a direct sum: widths add up, domains add up.
    pub fn merge(parts: &[StepFunction]) -> StepFunction {
        let domain = parts.iter().map(|p| p.domain).sum::<f64>().max(f64::MIN_POSITIVE);
        let pairs = parts.iter().flat_map(|p| p.steps.iter().map(|s| (s.value, s.width)));
        Self::from_pairs(pairs.collect::<Vec<_>>(), domain).expect("merged steps stay valid")
    }

    /// `μ · 1_{(0, t)}`.
    pub fn truncate(&self, t: f64) -> StepFunction {
        let mut remaining = t.max(0.0);
        let mut out = Vec::new();
        for s in &self.steps {
            if remaining <= 0.0 {
                break;
            }
            let w = s.width.min(remaining);
            out.push(Step { value: s.value, width: w });
            remaining -= w;
        }
        Self { steps: out, domain: self.domain }
    }

    /// Applies a non-decreasing map to the values (order is preserved).
    pub fn map_monotone(&self, f: impl Fn(f64) -> f64) -> StepFunction {
        Self::from_pairs(self.steps.iter().map(|s| (f(s.value), s.width)).collect::<Vec<_>>(), self.domain)
            .expect("monotone map keeps a valid rearrangement")
    }

    pub fn scale(&self, factor: f64) -> StepFunction {
        self.map_monotone(|v| v * factor.abs())
    }

    /// Whether `self` submajorizes `other`: `K(t, other) ≤ K(t, self)` for all t.
    ///
    /// Both sides are concave and piecewise linear, so checking the union of
    /// breakpoints suffices.
    pub fn submajorizes(&self, other: &StepFunction) -> bool {
        let mut points = self.breakpoints();
        points.extend(other.breakpoints());
        points.iter().all(|&t| {
            let big = self.k_unchecked(t);
            other.k_unchecked(t) <= big + 1e-12 * (1.0 + big.abs())
        })
    }

    /// Largest pointwise distance between two rearrangements, sampled at the
    /// union of breakpoints.
    pub fn max_value_distance(&self, other: &StepFunction) -> f64 {
        let mut points = self.breakpoints();
        points.extend(other.breakpoints());
        points.push(0.0);
        let mut worst: f64 = 0.0;
        for &t in &points {
            for probe in [t, (t - 1e-13).max(0.0)] {
                worst = worst.max((self.value_at(probe) - other.value_at(probe)).abs());
            }
        }
        worst
    }
}

/// `∫_0^t g` for every breakpoint of `f` and `g`: `true` iff `f ≻ g`.
pub fn submajorizes(f: &StepFunction, g: &StepFunction) -> bool {
    f.submajorizes(g)
}
