//! Piecewise exponential functions `c_k · exp(a_k (x − b_k))`.
//!
//! Spatial profiles of damped systems leave the piecewise-constant class: the
//! damping weight `exp(−∫ d/λ)` is exponential on each coefficient piece. This
//! type is closed under the state-space maps between boundary histories and
//! spatial profiles, and reduces to a step function when all rates vanish.

use crate::error::{Error, Result};
use crate::pwc::{merge_tol, PiecewiseConstantFn};

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseExpFn {
    breakpoints: Vec<f64>,
    coefs: Vec<f64>,
    rates: Vec<f64>,
}

impl PiecewiseExpFn {
    pub fn new(breakpoints: Vec<f64>, coefs: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2
            || coefs.len() + 1 != breakpoints.len()
            || rates.len() != coefs.len()
        {
            return Err(Error::InvalidFunction("inconsistent piece counts".into()));
        }
        if breakpoints
            .iter()
            .chain(&coefs)
            .chain(&rates)
            .any(|x| !x.is_finite())
        {
            return Err(Error::InvalidFunction("non-finite data".into()));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidFunction(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            breakpoints,
            coefs,
            rates,
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn coefs(&self) -> &[f64] {
        &self.coefs
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn lower(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn upper(&self) -> f64 {
        self.breakpoints[self.breakpoints.len() - 1]
    }

    pub fn piece_index(&self, x: f64) -> usize {
        let k = self.breakpoints.partition_point(|&b| b <= x);
        k.saturating_sub(1).min(self.coefs.len() - 1)
    }

    /// `(coef, rate, left end)` of the piece containing `x`.
    pub fn piece_at(&self, x: f64) -> (f64, f64, f64) {
        let k = self.piece_index(x);
        (self.coefs[k], self.rates[k], self.breakpoints[k])
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (c, a, b) = self.piece_at(x);
        c * (a * (x - b)).exp()
    }

    pub fn try_eval(&self, x: f64) -> Option<f64> {
        let tol = merge_tol(self.lower(), self.upper());
        (x >= self.lower() - tol && x <= self.upper() + tol).then(|| self.eval(x))
    }

    pub fn integral(&self) -> f64 {
        (0..self.coefs.len())
            .map(|k| {
                let len = self.breakpoints[k + 1] - self.breakpoints[k];
                self.coefs[k] * exp_integral(self.rates[k], len)
            })
            .sum()
    }

    pub fn lq_norm(&self, q: f64) -> f64 {
        let total: f64 = (0..self.coefs.len())
            .map(|k| {
                let len = self.breakpoints[k + 1] - self.breakpoints[k];
                self.coefs[k].abs().powf(q) * exp_integral(q * self.rates[k], len)
            })
            .sum();
        total.powf(1.0 / q)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            breakpoints: self.breakpoints.clone(),
            coefs: self.coefs.iter().map(|c| c * factor).collect(),
            rates: self.rates.clone(),
        }
    }

    pub fn is_piecewise_constant(&self, rate_tol: f64) -> bool {
        self.rates.iter().all(|a| a.abs() <= rate_tol)
    }

    /// Step-function view; fails unless every `|rate| · width` is below `tol`.
    pub fn to_constant(&self, tol: f64) -> Result<PiecewiseConstantFn> {
        let width = self.upper() - self.lower();
        if !self.is_piecewise_constant(tol / width.max(f64::MIN_POSITIVE)) {
            return Err(Error::NotPiecewiseConstant);
        }
        Ok(PiecewiseConstantFn::new(self.breakpoints.clone(), self.coefs.clone())?.simplified())
    }
}

impl From<&PiecewiseConstantFn> for PiecewiseExpFn {
    fn from(f: &PiecewiseConstantFn) -> Self {
        Self {
            breakpoints: f.breakpoints().to_vec(),
            coefs: f.values().to_vec(),
            rates: vec![0.0; f.pieces()],
        }
    }
}

/// `∫_0^len exp(a s) ds` without cancellation for small `a · len`.
fn exp_integral(a: f64, len: f64) -> f64 {
    let z = a * len;
    if z.abs() < 1e-8 {
        len * (1.0 + 0.5 * z)
    } else {
        z.exp_m1() / a
    }
}
