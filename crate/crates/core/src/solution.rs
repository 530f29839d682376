//! Exact solutions of the difference equation and the flow, endpoint and
//! dual endpoint operators on step-function data.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::pwc::{merge_tol, partition, PiecewiseConstantFn};
use crate::system::{BoundaryState, DifferenceSystem};
use crate::xi::{char_coefficients, indices_within, XiTable};

/// `u ∈ L^q([0, T], ℝ^m)` with step-function components.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    inputs: usize,
    horizon: f64,
    // Empty when the horizon is zero.
    components: Vec<PiecewiseConstantFn>,
}

impl ControlSignal {
    pub fn new(components: Vec<PiecewiseConstantFn>) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(Error::DimensionMismatch(
                "control needs at least one component".into(),
            ));
        };
        let horizon = first.upper();
        let tol = merge_tol(0.0, horizon);
        for (r, c) in components.iter().enumerate() {
            if c.lower().abs() > tol || (c.upper() - horizon).abs() > tol {
                return Err(Error::DomainMismatch(format!(
                    "control component {r} is defined on [{}, {}], expected [0, {horizon}]",
                    c.lower(),
                    c.upper()
                )));
            }
        }
        let components = components
            .into_iter()
            .map(|c| {
                let mut b = c.breakpoints().to_vec();
                let last = b.len() - 1;
                b[0] = 0.0;
                b[last] = horizon;
                PiecewiseConstantFn::new(b, c.values().to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            inputs: components.len(),
            horizon,
            components,
        })
    }

    pub fn zero(inputs: usize, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(Error::InvalidFunction(format!(
                "horizon {horizon} must be non-negative"
            )));
        }
        if horizon == 0.0 {
            return Ok(Self {
                inputs,
                horizon,
                components: Vec::new(),
            });
        }
        let components = (0..inputs)
            .map(|_| PiecewiseConstantFn::zero(0.0, horizon))
            .collect::<Result<_>>()?;
        Ok(Self {
            inputs,
            horizon,
            components,
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn components(&self) -> &[PiecewiseConstantFn] {
        &self.components
    }

    pub fn component(&self, r: usize) -> Option<&PiecewiseConstantFn> {
        self.components.get(r)
    }

    pub fn eval(&self, r: usize, t: f64) -> f64 {
        self.components.get(r).map_or(0.0, |c| c.eval(t))
    }

    /// `(Σ_r ‖u_r‖_q^q)^{1/q}`.
    pub fn lq_norm(&self, q: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.lq_power(q))
            .sum::<f64>()
            .powf(1.0 / q)
    }

    /// `Σ_r ∫ u_r v_r`.
    pub fn pairing(&self, other: &Self) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.inner(b))
            .sum()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.inputs != other.inputs {
            return Err(Error::DimensionMismatch("control widths differ".into()));
        }
        if self.components.is_empty() {
            return Ok(other.clone());
        }
        if other.components.is_empty() {
            return Ok(self.clone());
        }
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.add(b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            components,
            ..self.clone()
        })
    }

    /// Zero-padded on the left by `delay`: `v(t) = u(t − delay)`, `v = 0` on `[0, delay)`.
    pub fn delayed(&self, delay: f64) -> Result<Self> {
        if delay == 0.0 {
            return Ok(self.clone());
        }
        let horizon = self.horizon + delay;
        let components = (0..self.inputs)
            .map(|r| {
                let Some(c) = self.components.get(r) else {
                    return PiecewiseConstantFn::zero(0.0, horizon);
                };
                let mut b = vec![0.0];
                b.extend(c.breakpoints().iter().map(|x| x + delay));
                let mut v = vec![0.0];
                v.extend_from_slice(c.values());
                let last = b.len() - 1;
                b[last] = horizon;
                Ok(PiecewiseConstantFn::new(b, v)?.simplified())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            inputs: self.inputs,
            horizon,
            components,
        })
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }
}

/// `coef · src(x + shift)` for `x ∈ [lo, hi)`.
struct Term<'a> {
    coef: f64,
    src: &'a PiecewiseConstantFn,
    shift: f64,
    lo: f64,
    hi: f64,
}

/// Sum of shifted, windowed step functions on `[lower, upper]`, evaluated
/// exactly on the union of all shifted breakpoints.
fn assemble(lower: f64, upper: f64, terms: &[Term<'_>]) -> Result<PiecewiseConstantFn> {
    let terms: Vec<&Term<'_>> = terms
        .iter()
        .filter(|t| t.coef != 0.0 && t.lo < upper && t.hi > lower)
        .collect();
    let mut points = Vec::new();
    for t in &terms {
        points.push(t.lo);
        points.push(t.hi);
        points.extend(t.src.breakpoints().iter().map(|b| b - t.shift));
    }
    let grid = partition(lower, upper, points);
    let values = grid
        .windows(2)
        .map(|w| {
            let m = 0.5 * (w[0] + w[1]);
            terms
                .iter()
                .filter(|t| t.lo <= m && m < t.hi)
                .map(|t| t.coef * t.src.eval(m + t.shift))
                .sum()
        })
        .collect();
    Ok(PiecewiseConstantFn::new(grid, values)?.simplified())
}

fn check_time(t: f64) -> Result<()> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::OutOfHorizon {
            time: t,
            lower: 0.0,
            upper: f64::INFINITY,
        });
    }
    Ok(())
}

/// `Υ(T)φ`: state at time `T` under zero control.
pub fn flow_apply(
    sys: &DifferenceSystem,
    t_final: f64,
    phi: &BoundaryState,
) -> Result<BoundaryState> {
    check_time(t_final)?;
    let n = sys.dim();
    check_state(sys, phi)?;
    let tau = sys.delays();
    let mut table = XiTable::new(sys.k().clone());
    let indices = indices_within(tau, t_final + sys.tau_max());
    let mut comps = Vec::with_capacity(n);
    for i in 0..n {
        let mut terms = vec![Term {
            coef: 1.0,
            src: phi.component(i),
            shift: t_final,
            lo: -tau[i],
            hi: -t_final,
        }];
        for l in &indices {
            let dot = sys.delay_dot(l);
            for j in 0..n {
                if l[j] == 0 {
                    continue;
                }
                let mut p = l.clone();
                p[j] -= 1;
                // (Ξ_{ℓ−eⱼ} K eⱼ)ᵢ
                let coef = table.xi(&p).row(i).dot(&sys.k().column(j).transpose());
                if coef == 0.0 {
                    continue;
                }
                terms.push(Term {
                    coef,
                    src: phi.component(j),
                    shift: t_final - dot,
                    lo: dot - t_final - tau[j],
                    hi: dot - t_final,
                });
            }
        }
        comps.push(assemble(-tau[i], 0.0, &terms)?);
    }
    BoundaryState::new(tau, comps)
}

/// `E(T)u`: state at time `T` from zero initial data.
pub fn endpoint_apply(
    sys: &DifferenceSystem,
    t_final: f64,
    u: &ControlSignal,
) -> Result<BoundaryState> {
    check_time(t_final)?;
    check_control(sys, u)?;
    if u.horizon() < t_final - merge_tol(0.0, t_final) {
        return Err(Error::HorizonMismatch {
            control: u.horizon(),
            requested: t_final,
        });
    }
    let n = sys.dim();
    let tau = sys.delays();
    if u.components().is_empty() {
        return Ok(BoundaryState::zero(tau));
    }
    let mut table = XiTable::new(sys.k().clone());
    let indices = indices_within(tau, t_final);
    let xb: Vec<_> = indices.iter().map(|l| table.xi(l) * sys.b()).collect();
    let mut comps = Vec::with_capacity(n);
    for i in 0..n {
        let mut terms = Vec::new();
        for (l, m) in indices.iter().zip(&xb) {
            let dot = sys.delay_dot(l);
            for (r, src) in u.components().iter().enumerate() {
                terms.push(Term {
                    coef: m[(i, r)],
                    src,
                    shift: t_final - dot,
                    lo: dot - t_final,
                    hi: f64::INFINITY,
                });
            }
        }
        comps.push(assemble(-tau[i], 0.0, &terms)?);
    }
    BoundaryState::new(tau, comps)
}

/// `E(T)* y`: the dual endpoint operator, a control on `[0, T]`.
pub fn endpoint_dual_apply(
    sys: &DifferenceSystem,
    t_final: f64,
    y: &BoundaryState,
) -> Result<ControlSignal> {
    check_time(t_final)?;
    check_state(sys, y)?;
    let m = sys.inputs();
    if t_final == 0.0 {
        return ControlSignal::zero(m, 0.0);
    }
    let n = sys.dim();
    let tau = sys.delays();
    let mut table = XiTable::new(sys.k().clone());
    let indices = indices_within(tau, t_final);
    let xb: Vec<_> = indices.iter().map(|l| table.xi(l) * sys.b()).collect();
    let comps = (0..m)
        .map(|r| {
            let mut terms = Vec::new();
            for (l, mat) in indices.iter().zip(&xb) {
                let dot = sys.delay_dot(l);
                for j in 0..n {
                    terms.push(Term {
                        coef: mat[(j, r)],
                        src: y.component(j),
                        shift: dot - t_final,
                        lo: t_final - dot - tau[j],
                        hi: t_final - dot,
                    });
                }
            }
            assemble(0.0, t_final, &terms)
        })
        .collect::<Result<Vec<_>>>()?;
    ControlSignal::new(comps)
}

/// Split a control on `[0, T]`, `T ∈ [T*, T* + τ_min]`, into `u₁ + u₂` on
/// `[0, T*]` with `E(T)u = E(T*)(u₁ + u₂)`.
pub fn reduce_control_time(
    sys: &DifferenceSystem,
    u: &ControlSignal,
    t_final: f64,
) -> Result<(ControlSignal, ControlSignal)> {
    check_control(sys, u)?;
    let t_star = sys.critical_time();
    let upper = t_star + sys.tau_min();
    let tol = merge_tol(0.0, upper);
    if !(t_final >= t_star - tol && t_final <= upper + tol) {
        return Err(Error::OutOfReductionWindow {
            time: t_final,
            lower: t_star,
            upper,
        });
    }
    if u.horizon() < t_final - tol {
        return Err(Error::HorizonMismatch {
            control: u.horizon(),
            requested: t_final,
        });
    }
    let delta = (t_final - t_star).max(0.0);
    let alpha = char_coefficients(sys.k())?;
    let mut u1 = Vec::with_capacity(u.inputs());
    let mut u2 = Vec::with_capacity(u.inputs());
    for r in 0..u.inputs() {
        let src = match u.component(r) {
            Some(c) => c.clone(),
            None => PiecewiseConstantFn::zero(0.0, t_final.max(t_star))?,
        };
        u1.push(assemble(
            0.0,
            t_star,
            &[Term {
                coef: 1.0,
                src: &src,
                shift: delta,
                lo: 0.0,
                hi: f64::INFINITY,
            }],
        )?);
        let terms: Vec<Term<'_>> = alpha
            .nonzero_indices()
            .map(|(mask, a)| {
                let dot = sys.delay_dot(&alpha.index(mask));
                Term {
                    coef: -a,
                    src: &src,
                    shift: delta - dot,
                    lo: dot - delta,
                    hi: dot,
                }
            })
            .collect();
        u2.push(assemble(0.0, t_star, &terms)?);
    }
    Ok((ControlSignal::new(u1)?, ControlSignal::new(u2)?))
}

fn check_state(sys: &DifferenceSystem, y: &BoundaryState) -> Result<()> {
    if y.dim() != sys.dim() {
        return Err(Error::DimensionMismatch(format!(
            "state has {} components, system has {}",
            y.dim(),
            sys.dim()
        )));
    }
    for (i, (c, tau)) in y.components().iter().zip(sys.delays()).enumerate() {
        let tol = merge_tol(-tau, 0.0);
        if (c.lower() + tau).abs() > tol || c.upper().abs() > tol {
            return Err(Error::DomainMismatch(format!(
                "state component {i} does not live on [-{tau}, 0]"
            )));
        }
    }
    Ok(())
}

fn check_control(sys: &DifferenceSystem, u: &ControlSignal) -> Result<()> {
    if u.inputs() != sys.inputs() {
        return Err(Error::DimensionMismatch(format!(
            "control has {} components, B has {} columns",
            u.inputs(),
            sys.inputs()
        )));
    }
    Ok(())
}

/// A solved initial-value problem on `[0, T]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    sys: DifferenceSystem,
    initial: BoundaryState,
    control: ControlSignal,
    horizon: f64,
}

impl Trajectory {
    pub fn new(
        sys: DifferenceSystem,
        initial: BoundaryState,
        control: ControlSignal,
    ) -> Result<Self> {
        check_state(&sys, &initial)?;
        check_control(&sys, &control)?;
        let horizon = control.horizon();
        Ok(Self {
            sys,
            initial,
            control,
            horizon,
        })
    }

    pub fn system(&self) -> &DifferenceSystem {
        &self.sys
    }

    pub fn initial(&self) -> &BoundaryState {
        &self.initial
    }

    pub fn control(&self) -> &ControlSignal {
        &self.control
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `yᵢ(t)` by recursive descent on the delay equation.
    pub fn eval_solution(&self, i: usize, t: f64) -> Result<f64> {
        let n = self.sys.dim();
        if i >= n {
            return Err(Error::DimensionMismatch(format!(
                "component {i} out of range for n = {n}"
            )));
        }
        let lower = -self.sys.delays()[i];
        let tol = merge_tol(lower, self.horizon);
        if !(t >= lower && t <= self.horizon + tol) {
            return Err(Error::OutOfHorizon {
                time: t,
                lower,
                upper: self.horizon,
            });
        }
        let mut memo = HashMap::new();
        Ok(self.descend(i, t, &mut vec![0; n], &mut memo))
    }

    // Nodes are keyed by (component, ℓ); the time is t − τ·ℓ in a fixed
    // summation order so shared nodes are reused exactly.
    fn descend(
        &self,
        i: usize,
        t0: f64,
        l: &mut Vec<i64>,
        memo: &mut HashMap<(usize, Vec<i64>), f64>,
    ) -> f64 {
        let t = t0 - self.sys.delay_dot(l);
        if t < 0.0 {
            return self.initial.eval(i, t);
        }
        if let Some(v) = memo.get(&(i, l.clone())) {
            return *v;
        }
        let mut v = 0.0;
        for j in 0..self.sys.dim() {
            let kij = self.sys.k()[(i, j)];
            if kij != 0.0 {
                l[j] += 1;
                v += kij * self.descend(j, t0, l, memo);
                l[j] -= 1;
            }
        }
        for r in 0..self.sys.inputs() {
            v += self.sys.b()[(i, r)] * self.control.eval(r, t);
        }
        memo.insert((i, l.clone()), v);
        v
    }

    /// `y_{[t]}` through the representation formula `Υ(t)φ + E(t)u`.
    pub fn state_at(&self, t: f64) -> Result<BoundaryState> {
        if t > self.horizon + merge_tol(0.0, self.horizon) {
            return Err(Error::OutOfHorizon {
                time: t,
                lower: 0.0,
                upper: self.horizon,
            });
        }
        let free = flow_apply(&self.sys, t, &self.initial)?;
        let forced = endpoint_apply(&self.sys, t, &self.control)?;
        free.add(&forced)
    }

    /// `(component, t, value)` rows on a uniform grid of `resolution` steps
    /// per component over `[−τᵢ, T]`.
    pub fn sample(&self, resolution: usize) -> Result<Vec<(usize, f64, f64)>> {
        if resolution == 0 {
            return Err(Error::InvalidFunction("resolution must be positive".into()));
        }
        let mut rows = Vec::new();
        for i in 0..self.sys.dim() {
            let a = -self.sys.delays()[i];
            let b = self.horizon;
            for k in 0..=resolution {
                let t = a + (b - a) * k as f64 / resolution as f64;
                rows.push((i, t, self.eval_solution(i, t)?));
            }
        }
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;

    use super::*;

    fn pwc(b: &[f64], v: &[f64]) -> PiecewiseConstantFn {
        PiecewiseConstantFn::new(b.to_vec(), v.to_vec()).unwrap()
    }

    fn scalar(k: f64, b: f64) -> DifferenceSystem {
        DifferenceSystem::new(
            DMatrix::from_element(1, 1, k),
            DMatrix::from_element(1, 1, b),
            vec![1.0],
        )
        .unwrap()
    }

    #[test]
    fn scalar_powers() {
        let sys = scalar(0.7, 0.0);
        let phi = BoundaryState::new(&[1.0], vec![pwc(&[-1.0, 0.0], &[1.0])]).unwrap();
        let traj = Trajectory::new(sys, phi, ControlSignal::zero(1, 5.0).unwrap()).unwrap();
        for &t in &[0.0f64, 0.3, 1.0, 2.5, 4.99] {
            let want = 0.7f64.powi(t.floor() as i32 + 1);
            assert!((traj.eval_solution(0, t).unwrap() - want).abs() < 1e-15);
        }
        assert!(matches!(
            traj.eval_solution(0, 5.5),
            Err(Error::OutOfHorizon { .. })
        ));
    }

    #[test]
    fn flow_at_zero_is_identity() {
        let sys = DifferenceSystem::new(
            DMatrix::from_row_slice(2, 2, &[0.3, 1.0, -2.0, 0.5]),
            DMatrix::zeros(2, 1),
            vec![1.0, 0.7],
        )
        .unwrap();
        let phi = BoundaryState::new(
            sys.delays(),
            vec![
                pwc(&[-1.0, -0.4, 0.0], &[1.0, 2.0]),
                pwc(&[-0.7, -0.1, 0.0], &[-3.0, 0.5]),
            ],
        )
        .unwrap();
        let out = flow_apply(&sys, 0.0, &phi).unwrap();
        assert_eq!(out.max_abs_diff(&phi), 0.0);
    }

    #[test]
    fn scalar_endpoint_enumeration() {
        let k = 0.5;
        let sys = scalar(k, 1.0);
        let u = ControlSignal::new(vec![pwc(&[0.0, 0.8, 2.1, 3.0], &[1.0, -2.0, 4.0])]).unwrap();
        let t = 2.6;
        let e = endpoint_apply(&sys, t, &u).unwrap();
        for s in [-0.95, -0.55, -0.2, -0.01] {
            let mut want = 0.0;
            let mut l = 0;
            while l as f64 <= t + s {
                want += k.powi(l) * u.eval(0, t + s - l as f64);
                l += 1;
            }
            assert!((e.eval(0, s) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn scalar_dual() {
        let sys = scalar(0.9, 1.0);
        let y = BoundaryState::new(&[1.0], vec![pwc(&[-1.0, -0.5, 0.0], &[2.0, 3.0])]).unwrap();
        let d = endpoint_dual_apply(&sys, 1.0, &y).unwrap();
        assert_eq!(d.eval(0, 0.25), 2.0);
        assert_eq!(d.eval(0, 0.75), 3.0);
    }

    #[test]
    fn reduction_at_critical_time_is_trivial() {
        let sys = scalar(0.4, 1.0);
        let u = ControlSignal::new(vec![pwc(&[0.0, 0.3, 1.0], &[1.0, 5.0])]).unwrap();
        let (u1, u2) = reduce_control_time(&sys, &u, 1.0).unwrap();
        assert_eq!(u1.max_abs_diff(&u), 0.0);
        assert_eq!(u2.components()[0].sup_norm(), 0.0);
        assert!(matches!(
            reduce_control_time(&sys, &u, 2.5),
            Err(Error::OutOfReductionWindow { .. })
        ));
    }

    #[test]
    fn scalar_reduction_formula() {
        let k = 0.4;
        let sys = scalar(k, 1.0);
        let u = ControlSignal::new(vec![pwc(&[0.0, 0.3, 1.1, 1.5], &[1.0, 5.0, -2.0])]).unwrap();
        let t = 1.5;
        let (u1, u2) = reduce_control_time(&sys, &u, t).unwrap();
        for s in [0.1, 0.35, 0.65, 0.95] {
            assert_eq!(u1.eval(0, s), u.eval(0, s + 0.5));
            let want = if s >= 0.5 {
                k * u.eval(0, s - 1.0 + 0.5)
            } else {
                0.0
            };
            assert!((u2.eval(0, s) - want).abs() < 1e-15);
        }
        let lhs = endpoint_apply(&sys, t, &u).unwrap();
        let rhs = endpoint_apply(&sys, 1.0, &u1.add(&u2).unwrap()).unwrap();
        assert!(lhs.max_abs_diff(&rhs) < 1e-14);
    }

    #[test]
    fn delayed_padding() {
        let u = ControlSignal::new(vec![pwc(&[0.0, 1.0], &[2.0])]).unwrap();
        let v = u.delayed(0.5).unwrap();
        assert_eq!(v.horizon(), 1.5);
        assert_eq!(v.eval(0, 0.2), 0.0);
        assert_eq!(v.eval(0, 0.7), 2.0);
    }
}
