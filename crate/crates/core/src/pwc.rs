//! Piecewise-constant real functions on a compact interval.
//!
//! Every signal, boundary state and coefficient profile in the crate is one of
//! these. The class is closed under shifting, scaling and finite sums, which is
//! all the difference-equation operators ever do, so every evaluation below is
//! exact up to floating-point rounding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative distance under which two breakpoints are considered identical.
pub const MERGE_RTOL: f64 = 1e-12;

/// A right-continuous step function on `[breakpoints[0], breakpoints[last]]`.
///
/// Piece `k` covers `[breakpoints[k], breakpoints[k + 1])`; the right end point
/// of the domain takes the value of the last piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPiecewise", into = "RawPiecewise")]
pub struct PiecewiseConstantFn {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawPiecewise {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<RawPiecewise> for PiecewiseConstantFn {
    type Error = Error;

    fn try_from(raw: RawPiecewise) -> Result<Self> {
        Self::new(raw.breakpoints, raw.values)
    }
}

impl From<PiecewiseConstantFn> for RawPiecewise {
    fn from(f: PiecewiseConstantFn) -> Self {
        RawPiecewise {
            breakpoints: f.breakpoints,
            values: f.values,
        }
    }
}

pub(crate) fn merge_tol(lower: f64, upper: f64) -> f64 {
    MERGE_RTOL
        * (upper - lower)
            .abs()
            .max(lower.abs())
            .max(upper.abs())
            .max(1.0)
}

/// Sorts `points`, keeps those strictly inside `(lower, upper)` and collapses
/// clusters closer than the merge tolerance. The domain end points are added.
pub(crate) fn partition(lower: f64, upper: f64, points: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let tol = merge_tol(lower, upper);
    let mut inner: Vec<f64> = points
        .into_iter()
        .filter(|&x| x.is_finite() && x > lower + tol && x < upper - tol)
        .collect();
    inner.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(inner.len() + 2);
    out.push(lower);
    for x in inner {
        if x - out[out.len() - 1] > tol {
            out.push(x);
        }
    }
    if upper - out[out.len() - 1] <= tol && out.len() > 1 {
        out.pop();
    }
    out.push(upper);
    out
}

impl PiecewiseConstantFn {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidFunction(
                "need at least two breakpoints".into(),
            ));
        }
        if values.len() + 1 != breakpoints.len() {
            return Err(Error::InvalidFunction(format!(
                "{} breakpoints require {} values, got {}",
                breakpoints.len(),
                breakpoints.len() - 1,
                values.len()
            )));
        }
        if breakpoints
            .iter()
            .chain(values.iter())
            .any(|x| !x.is_finite())
        {
            return Err(Error::InvalidFunction(
                "non-finite breakpoint or value".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidFunction(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            breakpoints,
            values,
        })
    }

    pub fn constant(lower: f64, upper: f64, value: f64) -> Result<Self> {
        Self::new(vec![lower, upper], vec![value])
    }

    pub fn zero(lower: f64, upper: f64) -> Result<Self> {
        Self::constant(lower, upper, 0.0)
    }

    /// Builds the step function on `[lower, upper]` whose discontinuities lie in
    /// `breaks`, taking on each piece the value `f` has at the piece midpoint.
    ///
    /// `f` must be constant between consecutive breakpoints; this is how every
    /// shift-and-sum operator in the crate materialises its output.
    pub fn from_breaks<F>(
        lower: f64,
        upper: f64,
        breaks: impl IntoIterator<Item = f64>,
        f: F,
    ) -> Result<Self>
    where
        F: Fn(f64) -> f64,
    {
        if !(upper > lower) {
            return Err(Error::InvalidFunction(format!(
                "empty domain [{lower}, {upper}]"
            )));
        }
        let points = partition(lower, upper, breaks);
        let values = points.windows(2).map(|w| f(0.5 * (w[0] + w[1]))).collect();
        Ok(Self::new(points, values)?.simplified())
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pieces(&self) -> usize {
        self.values.len()
    }

    pub fn lower(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn upper(&self) -> f64 {
        self.breakpoints[self.breakpoints.len() - 1]
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lower(), self.upper())
    }

    pub fn width(&self) -> f64 {
        self.upper() - self.lower()
    }

    /// Index of the piece containing `x`; points outside the domain are clamped.
    pub fn piece_index(&self, x: f64) -> usize {
        let k = self.breakpoints.partition_point(|&b| b <= x);
        k.saturating_sub(1).min(self.values.len() - 1)
    }

    /// Right-continuous evaluation, clamped to the domain.
    pub fn eval(&self, x: f64) -> f64 {
        self.values[self.piece_index(x)]
    }

    /// Evaluation that refuses points outside the domain (beyond merge tolerance).
    pub fn try_eval(&self, x: f64) -> Option<f64> {
        let tol = merge_tol(self.lower(), self.upper());
        (x >= self.lower() - tol && x <= self.upper() + tol).then(|| self.eval(x))
    }

    pub fn contains(&self, x: f64) -> bool {
        self.try_eval(x).is_some()
    }

    pub fn integral(&self) -> f64 {
        self.values
            .iter()
            .zip(self.breakpoints.windows(2))
            .map(|(v, w)| v * (w[1] - w[0]))
            .sum()
    }

    /// Exact integral over `[a, b] ∩ domain`.
    pub fn integral_over(&self, a: f64, b: f64) -> f64 {
        let (a, b, sign) = if a <= b { (a, b, 1.0) } else { (b, a, -1.0) };
        let mut acc = 0.0;
        for (v, w) in self.values.iter().zip(self.breakpoints.windows(2)) {
            let lo = w[0].max(a);
            let hi = w[1].min(b);
            if hi > lo {
                acc += v * (hi - lo);
            }
        }
        sign * acc
    }

    /// `(∫ |f|^q)^(1/q)` for `q ≥ 1`.
    pub fn lq_norm(&self, q: f64) -> f64 {
        self.lq_power(q).powf(1.0 / q)
    }

    pub(crate) fn lq_power(&self, q: f64) -> f64 {
        self.values
            .iter()
            .zip(self.breakpoints.windows(2))
            .map(|(v, w)| v.abs().powf(q) * (w[1] - w[0]))
            .sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `x ↦ f(x - shift)` on the translated domain.
    pub fn shifted(&self, shift: f64) -> Self {
        Self {
            breakpoints: self.breakpoints.iter().map(|b| b + shift).collect(),
            values: self.values.clone(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            breakpoints: self.breakpoints.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Restriction to `[a, b]`, which must lie inside the domain.
    pub fn restricted(&self, a: f64, b: f64) -> Result<Self> {
        let tol = merge_tol(self.lower(), self.upper());
        if a < self.lower() - tol || b > self.upper() + tol || !(b > a) {
            return Err(Error::DomainMismatch(format!(
                "[{a}, {b}] is not inside [{}, {}]",
                self.lower(),
                self.upper()
            )));
        }
        Self::from_breaks(a, b, self.breakpoints.iter().copied(), |x| self.eval(x))
    }

    /// Pointwise sum; both functions must share the same domain.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_domain(other)?;
        Self::from_breaks(
            self.lower(),
            self.upper(),
            self.breakpoints
                .iter()
                .chain(other.breakpoints.iter())
                .copied(),
            |x| self.eval(x) + other.eval(x),
        )
    }

    /// `∫ f g` over the intersection of the two domains.
    pub fn inner(&self, other: &Self) -> f64 {
        let lo = self.lower().max(other.lower());
        let hi = self.upper().min(other.upper());
        if !(hi > lo) {
            return 0.0;
        }
        let points = partition(
            lo,
            hi,
            self.breakpoints
                .iter()
                .chain(other.breakpoints.iter())
                .copied(),
        );
        points
            .windows(2)
            .map(|w| {
                let m = 0.5 * (w[0] + w[1]);
                self.eval(m) * other.eval(m) * (w[1] - w[0])
            })
            .sum()
    }

    pub fn same_domain(&self, other: &Self) -> Result<()> {
        let tol = merge_tol(self.lower(), self.upper());
        if (self.lower() - other.lower()).abs() > tol || (self.upper() - other.upper()).abs() > tol
        {
            return Err(Error::DomainMismatch(format!(
                "[{}, {}] vs [{}, {}]",
                self.lower(),
                self.upper(),
                other.lower(),
                other.upper()
            )));
        }
        Ok(())
    }

    /// Merges adjacent pieces carrying bit-identical values.
    pub fn simplified(mut self) -> Self {
        let mut bps = Vec::with_capacity(self.breakpoints.len());
        let mut vals: Vec<f64> = Vec::with_capacity(self.values.len());
        bps.push(self.breakpoints[0]);
        for (k, &v) in self.values.iter().enumerate() {
            if vals.last() == Some(&v) {
                *bps.last_mut().unwrap() = self.breakpoints[k + 1];
            } else {
                vals.push(v);
                bps.push(self.breakpoints[k + 1]);
            }
        }
        self.breakpoints = bps;
        self.values = vals;
        self
    }

    /// Maximum absolute difference at the midpoints of the common refinement.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let lo = self.lower().max(other.lower());
        let hi = self.upper().min(other.upper());
        if !(hi > lo) {
            return 0.0;
        }
        partition(
            lo,
            hi,
            self.breakpoints
                .iter()
                .chain(other.breakpoints.iter())
                .copied(),
        )
        .windows(2)
        .map(|w| {
            let m = 0.5 * (w[0] + w[1]);
            (self.eval(m) - other.eval(m)).abs()
        })
        .fold(0.0, f64::max)
    }
}
