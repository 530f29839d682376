//! Hyperbolic systems with piecewise-constant coefficients and their exact
//! reduction to delay difference equations.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::pwc::{merge_tol, partition, PiecewiseConstantFn};
use crate::pwexp::PiecewiseExpFn;

/// Domain tolerance for "is this function defined on [0, 1]".
const DOMAIN_TOL: f64 = 1e-12;

/// `R_t + Λ(x) R_x + D(x) R = 0` on `(0, 1)` with boundary coupling
/// `(R⁺(t,0), R⁻(t,1)) = M (R⁺(t,1), R⁻(t,0)) + B u(t)`.
#[derive(Debug, Clone)]
pub struct HyperbolicSystem {
    speeds: Vec<PiecewiseConstantFn>,
    dampings: Vec<PiecewiseConstantFn>,
    boundary: DMatrix<f64>,
    control: DMatrix<f64>,
    n_plus: usize,
    characteristics: Vec<Characteristic>,
}

/// Travel-time map `ψ` and damping exponent `g` of one component.
///
/// Both are piecewise affine on the merged coefficient breakpoints with slopes
/// `1/λ` and `d/λ`. Rightward components are anchored at `x = 0`, leftward
/// ones at `x = 1`.
#[derive(Debug, Clone)]
pub struct Characteristic {
    knots: Vec<f64>,
    psi: Vec<f64>,
    g: Vec<f64>,
    inv_speed: Vec<f64>,
    damping_rate: Vec<f64>,
    speed: Vec<f64>,
    damping: Vec<f64>,
}

impl Characteristic {
    fn new(speed: &PiecewiseConstantFn, damping: &PiecewiseConstantFn, rightward: bool) -> Self {
        let knots = partition(
            0.0,
            1.0,
            speed
                .breakpoints()
                .iter()
                .chain(damping.breakpoints())
                .copied(),
        );
        let mids: Vec<f64> = knots.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let speed_vals: Vec<f64> = mids.iter().map(|&m| speed.eval(m)).collect();
        let damp_vals: Vec<f64> = mids.iter().map(|&m| damping.eval(m)).collect();
        let inv_speed: Vec<f64> = speed_vals.iter().map(|l| 1.0 / l).collect();
        let damping_rate: Vec<f64> = damp_vals
            .iter()
            .zip(&speed_vals)
            .map(|(d, l)| d / l)
            .collect();

        let cumulative = |slopes: &[f64]| {
            let mut acc = vec![0.0; knots.len()];
            for k in 0..slopes.len() {
                acc[k + 1] = acc[k] + slopes[k] * (knots[k + 1] - knots[k]);
            }
            if !rightward {
                let end = acc[acc.len() - 1];
                acc.iter_mut().for_each(|v| *v -= end);
            }
            acc
        };
        let psi = cumulative(&inv_speed);
        let g = cumulative(&damping_rate);
        Self {
            knots,
            psi,
            g,
            inv_speed,
            damping_rate,
            speed: speed_vals,
            damping: damp_vals,
        }
    }

    fn piece(&self, x: f64) -> usize {
        let k = self.knots.partition_point(|&b| b <= x);
        k.saturating_sub(1).min(self.inv_speed.len() - 1)
    }

    /// Travel time `ψ(x)`; lies in `[0, τ]`.
    pub fn psi(&self, x: f64) -> f64 {
        let k = self.piece(x);
        self.psi[k] + self.inv_speed[k] * (x - self.knots[k])
    }

    /// Damping exponent `g(x)` (`∫₀ˣ d/λ` or `∫ₓ¹ d/|λ|`).
    pub fn damping_exponent(&self, x: f64) -> f64 {
        let k = self.piece(x);
        self.g[k] + self.damping_rate[k] * (x - self.knots[k])
    }

    /// Inverse of `ψ` on `[0, τ]`.
    pub fn psi_inverse(&self, s: f64) -> f64 {
        let increasing = self.psi[self.psi.len() - 1] > self.psi[0];
        let k = if increasing {
            self.psi.partition_point(|&p| p <= s)
        } else {
            self.psi.partition_point(|&p| p > s)
        };
        let k = k.saturating_sub(1).min(self.inv_speed.len() - 1);
        let x = self.knots[k] + (s - self.psi[k]) / self.inv_speed[k];
        x.clamp(0.0, 1.0)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn delay(&self) -> f64 {
        (self.psi[self.psi.len() - 1] - self.psi[0]).abs()
    }

    /// Per-piece `(λ, d)` at the piece containing `x`.
    pub fn coefficients_at(&self, x: f64) -> (f64, f64) {
        let k = self.piece(x);
        (self.speed[k], self.damping[k])
    }
}

/// `τᵢ = ∫₀¹ dx / |λᵢ(x)|`, exact on each piece.
pub fn compute_delays(speeds: &[PiecewiseConstantFn]) -> Result<Vec<f64>> {
    speeds
        .iter()
        .enumerate()
        .map(|(i, l)| {
            check_unit_domain(l, i)?;
            if l.values().contains(&0.0) {
                return Err(Error::InvalidSpeed {
                    component: i,
                    reason: "zero speed".into(),
                });
            }
            Ok(l.map(|v| 1.0 / v.abs()).integral())
        })
        .collect()
}

/// `ζᵢ = ∫₀¹ dᵢ / |λᵢ|`, exact on the merged pieces.
pub fn compute_damping_integrals(
    speeds: &[PiecewiseConstantFn],
    dampings: &[PiecewiseConstantFn],
) -> Result<Vec<f64>> {
    if speeds.len() != dampings.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} speeds, {} dampings",
            speeds.len(),
            dampings.len()
        )));
    }
    compute_delays(speeds)?;
    speeds
        .iter()
        .zip(dampings)
        .enumerate()
        .map(|(i, (l, d))| {
            check_unit_domain(d, i)?;
            let f = PiecewiseConstantFn::from_breaks(
                0.0,
                1.0,
                l.breakpoints().iter().chain(d.breakpoints()).copied(),
                |x| d.eval(x) / l.eval(x).abs(),
            )?;
            Ok(f.integral())
        })
        .collect()
}

fn check_unit_domain(f: &PiecewiseConstantFn, i: usize) -> Result<()> {
    if f.lower().abs() > DOMAIN_TOL || (f.upper() - 1.0).abs() > DOMAIN_TOL {
        return Err(Error::DomainMismatch(format!(
            "coefficient {i} is defined on [{}, {}], expected [0, 1]",
            f.lower(),
            f.upper()
        )));
    }
    Ok(())
}

impl HyperbolicSystem {
    pub fn new(
        speeds: Vec<PiecewiseConstantFn>,
        dampings: Vec<PiecewiseConstantFn>,
        boundary: DMatrix<f64>,
        control: DMatrix<f64>,
        n_plus: usize,
    ) -> Result<Self> {
        let n = speeds.len();
        if n == 0 {
            return Err(Error::DimensionMismatch(
                "system needs at least one component".into(),
            ));
        }
        if dampings.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} speeds but {} dampings",
                dampings.len()
            )));
        }
        if boundary.nrows() != n || boundary.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "M is {}x{}, expected {n}x{n}",
                boundary.nrows(),
                boundary.ncols()
            )));
        }
        if control.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "B has {} rows, expected {n}",
                control.nrows()
            )));
        }
        if n_plus > n {
            return Err(Error::DimensionMismatch(format!(
                "n_plus = {n_plus} exceeds n = {n}"
            )));
        }
        for (i, l) in speeds.iter().enumerate() {
            check_unit_domain(l, i)?;
            check_unit_domain(&dampings[i], i)?;
            let rightward = i < n_plus;
            if let Some(v) = l
                .values()
                .iter()
                .find(|&&v| if rightward { v <= 0.0 } else { v >= 0.0 })
            {
                return Err(Error::InvalidSpeed {
                    component: i,
                    reason: format!(
                        "value {v} but component must be {}",
                        if rightward { "positive" } else { "negative" }
                    ),
                });
            }
        }
        let characteristics = speeds
            .iter()
            .zip(&dampings)
            .enumerate()
            .map(|(i, (l, d))| Characteristic::new(l, d, i < n_plus))
            .collect();
        Ok(Self {
            speeds,
            dampings,
            boundary,
            control,
            n_plus,
            characteristics,
        })
    }

    pub fn dim(&self) -> usize {
        self.speeds.len()
    }

    pub fn inputs(&self) -> usize {
        self.control.ncols()
    }

    pub fn n_plus(&self) -> usize {
        self.n_plus
    }

    pub fn speeds(&self) -> &[PiecewiseConstantFn] {
        &self.speeds
    }

    pub fn dampings(&self) -> &[PiecewiseConstantFn] {
        &self.dampings
    }

    pub fn boundary_matrix(&self) -> &DMatrix<f64> {
        &self.boundary
    }

    pub fn control_matrix(&self) -> &DMatrix<f64> {
        &self.control
    }

    pub fn characteristic(&self, i: usize) -> &Characteristic {
        &self.characteristics[i]
    }

    pub fn delays(&self) -> Vec<f64> {
        compute_delays(&self.speeds).expect("validated at construction")
    }

    pub fn damping_integrals(&self) -> Vec<f64> {
        compute_damping_integrals(&self.speeds, &self.dampings).expect("validated at construction")
    }

    /// `K = M · diag(e^{−ζ})`, `B` unchanged, delays from the speeds.
    pub fn to_difference_system(&self) -> DifferenceSystem {
        let zeta = self.damping_integrals();
        let mut k = self.boundary.clone();
        for (j, z) in zeta.iter().enumerate() {
            if *z != 0.0 {
                let f = (-z).exp();
                k.column_mut(j).iter_mut().for_each(|v| *v *= f);
            }
        }
        DifferenceSystem {
            k,
            b: self.control.clone(),
            delays: self.delays(),
            damping_integrals: zeta,
        }
    }

    /// `𝒯_q`: boundary history `y ∈ Σ^q` to spatial profile on `[0, 1]`.
    pub fn boundary_to_state(&self, y: &BoundaryState) -> Result<Vec<PiecewiseExpFn>> {
        let profiles: Vec<PiecewiseExpFn> =
            y.components().iter().map(PiecewiseExpFn::from).collect();
        self.boundary_profiles_to_state(&profiles)
    }

    /// `𝒯_q` on piecewise exponential histories.
    pub fn boundary_profiles_to_state(&self, y: &[PiecewiseExpFn]) -> Result<Vec<PiecewiseExpFn>> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} components, expected {}",
                y.len(),
                self.dim()
            )));
        }
        let delays = self.delays();
        y.iter()
            .enumerate()
            .map(|(i, yi)| {
                let tau = delays[i];
                check_history_domain(yi.lower(), yi.upper(), tau, i)?;
                let ch = &self.characteristics[i];
                let breaks = ch
                    .knots
                    .iter()
                    .copied()
                    .chain(yi.breakpoints().iter().map(|&b| ch.psi_inverse(-b)));
                let points = partition(0.0, 1.0, breaks);
                let mut coefs = Vec::with_capacity(points.len() - 1);
                let mut rates = Vec::with_capacity(points.len() - 1);
                for w in points.windows(2) {
                    let m = 0.5 * (w[0] + w[1]);
                    let k = ch.piece(m);
                    let t = -ch.psi(m);
                    let (_, rho, _) = yi.piece_at(t);
                    let rate = -ch.damping_rate[k] - rho * ch.inv_speed[k];
                    let value = (-ch.damping_exponent(m)).exp() * yi.eval(t);
                    coefs.push(value * (-rate * (m - w[0])).exp());
                    rates.push(rate);
                }
                PiecewiseExpFn::new(points, coefs, rates)
            })
            .collect()
    }

    /// `𝒯_q⁻¹`: spatial profile on `[0, 1]` to boundary history.
    pub fn state_to_boundary(&self, r: &[PiecewiseExpFn]) -> Result<Vec<PiecewiseExpFn>> {
        if r.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} components, expected {}",
                r.len(),
                self.dim()
            )));
        }
        let delays = self.delays();
        r.iter()
            .enumerate()
            .map(|(i, ri)| {
                if ri.lower().abs() > DOMAIN_TOL || (ri.upper() - 1.0).abs() > DOMAIN_TOL {
                    return Err(Error::DomainMismatch(format!(
                        "profile {i} is defined on [{}, {}], expected [0, 1]",
                        ri.lower(),
                        ri.upper()
                    )));
                }
                let tau = delays[i];
                let ch = &self.characteristics[i];
                let breaks = ch.knots.iter().chain(ri.breakpoints()).map(|&x| -ch.psi(x));
                let points = partition(-tau, 0.0, breaks);
                let mut coefs = Vec::with_capacity(points.len() - 1);
                let mut rates = Vec::with_capacity(points.len() - 1);
                for w in points.windows(2) {
                    let m = 0.5 * (w[0] + w[1]);
                    let x = ch.psi_inverse(-m);
                    let k = ch.piece(x);
                    let (_, rho, _) = ri.piece_at(x);
                    let lambda = ch.speed[k];
                    let rate = -(ch.damping[k] + rho * lambda);
                    let value = ch.damping_exponent(x).exp() * ri.eval(x);
                    coefs.push(value * (-rate * (m - w[0])).exp());
                    rates.push(rate);
                }
                PiecewiseExpFn::new(points, coefs, rates)
            })
            .collect()
    }

    /// `𝒯_q⁻¹` for step-function profiles, when the history is again a step
    /// function (always the case without damping).
    pub fn state_to_boundary_state(&self, r: &[PiecewiseConstantFn]) -> Result<BoundaryState> {
        let profiles: Vec<PiecewiseExpFn> = r.iter().map(PiecewiseExpFn::from).collect();
        let hist = self.state_to_boundary(&profiles)?;
        let comps = hist
            .iter()
            .map(|h| h.to_constant(1e-12))
            .collect::<Result<Vec<_>>>()?;
        BoundaryState::new(&self.delays(), comps)
    }
}

fn check_history_domain(lower: f64, upper: f64, tau: f64, i: usize) -> Result<()> {
    let tol = merge_tol(-tau, 0.0);
    if (lower + tau).abs() > tol || upper.abs() > tol {
        return Err(Error::DomainMismatch(format!(
            "component {i} is defined on [{lower}, {upper}], expected [{}, 0]",
            -tau
        )));
    }
    Ok(())
}

/// `y(t) = K (y₁(t−τ₁), …, yₙ(t−τₙ))ᵀ + B u(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceSystem {
    k: DMatrix<f64>,
    b: DMatrix<f64>,
    delays: Vec<f64>,
    damping_integrals: Vec<f64>,
}

impl DifferenceSystem {
    pub fn new(k: DMatrix<f64>, b: DMatrix<f64>, delays: Vec<f64>) -> Result<Self> {
        let n = delays.len();
        Self::with_damping_integrals(k, b, delays, vec![0.0; n])
    }

    pub fn with_damping_integrals(
        k: DMatrix<f64>,
        b: DMatrix<f64>,
        delays: Vec<f64>,
        damping_integrals: Vec<f64>,
    ) -> Result<Self> {
        let n = delays.len();
        if n == 0 {
            return Err(Error::DimensionMismatch("empty system".into()));
        }
        if k.nrows() != n || k.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "K is {}x{}, expected {n}x{n}",
                k.nrows(),
                k.ncols()
            )));
        }
        if b.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "B has {} rows, expected {n}",
                b.nrows()
            )));
        }
        if damping_integrals.len() != n {
            return Err(Error::DimensionMismatch("damping integrals length".into()));
        }
        if let Some((i, t)) = delays
            .iter()
            .enumerate()
            .find(|(_, t)| !(t.is_finite() && **t > 0.0))
        {
            return Err(Error::InvalidSpeed {
                component: i,
                reason: format!("delay {t} is not positive"),
            });
        }
        if k.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidFunction("non-finite matrix entry".into()));
        }
        Ok(Self {
            k,
            b,
            delays,
            damping_integrals,
        })
    }

    pub fn dim(&self) -> usize {
        self.delays.len()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn damping_integrals(&self) -> &[f64] {
        &self.damping_integrals
    }

    /// `T* = τ₁ + ⋯ + τₙ`.
    pub fn critical_time(&self) -> f64 {
        self.delays.iter().sum()
    }

    pub fn tau_min(&self) -> f64 {
        self.delays.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn tau_max(&self) -> f64 {
        self.delays.iter().copied().fold(0.0, f64::max)
    }

    pub fn with_control_matrix(&self, b: DMatrix<f64>) -> Result<Self> {
        Self::with_damping_integrals(
            self.k.clone(),
            b,
            self.delays.clone(),
            self.damping_integrals.clone(),
        )
    }

    /// `τ · ℓ` accumulated in a fixed order so equal multi-indices give
    /// bit-identical times.
    pub fn delay_dot(&self, index: &[i64]) -> f64 {
        index
            .iter()
            .zip(&self.delays)
            .map(|(&l, t)| l as f64 * t)
            .sum()
    }
}

/// An element of `Σ^q = Π L^q(−τᵢ, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryState {
    components: Vec<PiecewiseConstantFn>,
}

impl BoundaryState {
    pub fn new(delays: &[f64], components: Vec<PiecewiseConstantFn>) -> Result<Self> {
        if delays.len() != components.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} components for {} delays",
                components.len(),
                delays.len()
            )));
        }
        for (i, (c, &tau)) in components.iter().zip(delays).enumerate() {
            check_history_domain(c.lower(), c.upper(), tau, i)?;
        }
        // Snap domains exactly onto [−τᵢ, 0].
        let components = components
            .into_iter()
            .zip(delays)
            .map(|(c, &tau)| {
                let mut bps = c.breakpoints().to_vec();
                let last = bps.len() - 1;
                bps[0] = -tau;
                bps[last] = 0.0;
                PiecewiseConstantFn::new(bps, c.values().to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { components })
    }

    pub fn zero(delays: &[f64]) -> Self {
        Self {
            components: delays
                .iter()
                .map(|&t| PiecewiseConstantFn::zero(-t, 0.0).unwrap())
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[PiecewiseConstantFn] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &PiecewiseConstantFn {
        &self.components[i]
    }

    pub fn delays(&self) -> Vec<f64> {
        self.components.iter().map(|c| -c.lower()).collect()
    }

    pub fn eval(&self, i: usize, s: f64) -> f64 {
        self.components[i].eval(s)
    }

    /// Product norm `(Σᵢ ‖yᵢ‖_q^q)^{1/q}`.
    pub fn lq_norm(&self, q: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.lq_power(q))
            .sum::<f64>()
            .powf(1.0 / q)
    }

    /// `Σᵢ ∫ yᵢ zᵢ`.
    pub fn pairing(&self, other: &Self) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.inner(b))
            .sum()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch("state dimensions differ".into()));
        }
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.add(b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { components })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            components: self.components.iter().map(|c| c.scaled(factor)).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }
}
