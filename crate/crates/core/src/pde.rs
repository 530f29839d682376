//! PDE solutions rebuilt from difference-equation trajectories, and residual
//! checks against the characteristic and boundary relations.

use crate::error::{Error, Result};
use crate::pwexp::PiecewiseExpFn;
use crate::solution::Trajectory;
use crate::system::HyperbolicSystem;

/// Spatial profile `R(t, ·)` as `𝒯_q(y_{[t]})`.
pub fn reconstruct_pde(
    sys: &HyperbolicSystem,
    traj: &Trajectory,
    t: f64,
) -> Result<Vec<PiecewiseExpFn>> {
    check_pair(sys, traj)?;
    if !(t >= 0.0 && t <= traj.horizon()) {
        return Err(Error::OutOfHorizon {
            time: t,
            lower: 0.0,
            upper: traj.horizon(),
        });
    }
    let state = traj.state_at(t)?;
    sys.boundary_to_state(&state)
}

/// `Rᵢ(t, x) = e^{−gᵢ(x)} yᵢ(t − ψᵢ(x))`, evaluated pointwise through the
/// recursive solution.
pub fn pde_value(
    sys: &HyperbolicSystem,
    traj: &Trajectory,
    i: usize,
    t: f64,
    x: f64,
) -> Result<f64> {
    if i >= sys.dim() {
        return Err(Error::DimensionMismatch(format!(
            "component {i} out of range"
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::DomainMismatch(format!("x = {x} outside [0, 1]")));
    }
    let ch = sys.characteristic(i);
    Ok((-ch.damping_exponent(x)).exp() * traj.eval_solution(i, t - ch.psi(x))?)
}

fn check_pair(sys: &HyperbolicSystem, traj: &Trajectory) -> Result<()> {
    if sys.dim() != traj.system().dim() {
        return Err(Error::DimensionMismatch(
            "trajectory does not belong to this system".into(),
        ));
    }
    Ok(())
}

/// One characteristic sample `(i, t, x, h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicSample {
    pub component: usize,
    pub t: f64,
    pub x: f64,
    pub h: f64,
}

/// `max |Rᵢ(t + ∫ₓ^{x+h} 1/λᵢ, x + h) − e^{−∫ₓ^{x+h} dᵢ/λᵢ} Rᵢ(t, x)|` over the
/// samples, for any candidate solution `r(i, t, x)` valid on `[0, horizon]`.
pub fn check_characteristics<F>(
    sys: &HyperbolicSystem,
    horizon: f64,
    samples: &[CharacteristicSample],
    mut r: F,
) -> Result<f64>
where
    F: FnMut(usize, f64, f64) -> Result<f64>,
{
    let mut worst: f64 = 0.0;
    for s in samples {
        if s.component >= sys.dim() {
            return Err(Error::DimensionMismatch(format!(
                "component {} out of range",
                s.component
            )));
        }
        let (a, b) = (s.x, s.x + s.h);
        if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
            return Err(Error::DomainMismatch(format!(
                "sample x = {a}, x + h = {b} leaves [0, 1]"
            )));
        }
        let speed = &sys.speeds()[s.component];
        let damping = &sys.dampings()[s.component];
        let travel = speed.map(|v| 1.0 / v).integral_over(a, b);
        let decay = crate::pwc::PiecewiseConstantFn::from_breaks(
            0.0,
            1.0,
            speed
                .breakpoints()
                .iter()
                .chain(damping.breakpoints())
                .copied(),
            |x| damping.eval(x) / speed.eval(x),
        )?
        .integral_over(a, b);
        let t2 = s.t + travel;
        for t in [s.t, t2] {
            if !(t >= 0.0 && t <= horizon) {
                return Err(Error::OutOfHorizon {
                    time: t,
                    lower: 0.0,
                    upper: horizon,
                });
            }
        }
        let lhs = r(s.component, t2, b)?;
        let rhs = (-decay).exp() * r(s.component, s.t, a)?;
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// `max |(R⁺(t,0), R⁻(t,1)) − M (R⁺(t,1), R⁻(t,0)) − B u(t)|` over `times`.
pub fn boundary_residual<F>(
    sys: &HyperbolicSystem,
    traj: &Trajectory,
    times: &[f64],
    mut r: F,
) -> Result<f64>
where
    F: FnMut(usize, f64, f64) -> Result<f64>,
{
    let n = sys.dim();
    let np = sys.n_plus();
    let mut worst: f64 = 0.0;
    for &t in times {
        let mut incoming = vec![0.0; n];
        let mut outgoing = vec![0.0; n];
        for i in 0..n {
            let (enter, leave) = if i < np { (0.0, 1.0) } else { (1.0, 0.0) };
            incoming[i] = r(i, t, enter)?;
            outgoing[i] = r(i, t, leave)?;
        }
        for i in 0..n {
            let mut v = incoming[i];
            for j in 0..n {
                v -= sys.boundary_matrix()[(i, j)] * outgoing[j];
            }
            for k in 0..sys.inputs() {
                v -= sys.control_matrix()[(i, k)] * traj.control().eval(k, t);
            }
            worst = worst.max(v.abs());
        }
    }
    Ok(worst)
}
