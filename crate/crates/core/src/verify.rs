//! Randomized self-checks of the library identities, run by `hypctl verify`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::controllability::rank_kb;
use crate::error::Result;
use crate::fixtures::{
    random_control, random_cycle_graph, random_difference_system, random_hyperbolic_system,
    random_matrix, random_obstructed_graph, random_state,
};
use crate::linalg::{complex_det, complex_rank_above, spectral_norm};
use crate::network::{
    build_network_system, cycle_block, cycle_decomposition, kernel_vector, spectral_set,
    CycleOutcome,
};
use crate::pde::{check_characteristics, pde_value, CharacteristicSample};
use crate::pwexp::PiecewiseExpFn;
use crate::solution::{endpoint_apply, endpoint_dual_apply, reduce_control_time, Trajectory};
use crate::xi::{indices_of_order, power_sum_check, verify_xi_recurrence, XiTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Fault {
    None,
    /// Flip the sign of one term in the `Ξ` recursion.
    XiSign,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub checks: usize,
    /// Worst residual divided by its tolerance.
    pub worst_ratio: f64,
}

fn table(k: DMatrix<f64>, fault: Fault) -> XiTable {
    match fault {
        Fault::None => XiTable::new(k),
        Fault::XiSign => XiTable::with_sign_fault(k),
    }
}

struct Acc {
    name: &'static str,
    checks: usize,
    worst: f64,
}

impl Acc {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            checks: 0,
            worst: 0.0,
        }
    }

    fn record(&mut self, residual: f64, tol: f64) {
        self.checks += 1;
        let r = if residual.is_nan() {
            f64::INFINITY
        } else {
            residual / tol
        };
        self.worst = self.worst.max(r);
    }

    fn finish(self) -> SuiteResult {
        SuiteResult {
            name: self.name,
            passed: self.worst < 1.0,
            checks: self.checks,
            worst_ratio: self.worst,
        }
    }
}

fn xi_suite(rng: &mut ChaCha8Rng, fault: Fault) -> Result<SuiteResult> {
    let mut acc = Acc::new("xi recurrence");
    for _ in 0..10 {
        let n = rng.gen_range(2..=3);
        let k = random_matrix(rng, n, n, 1.0);
        let bound = n as f64 * spectral_norm(&k);
        let mut t = table(k, fault);
        for order in 1..=5 {
            for l in indices_of_order(n, order) {
                for j in 0..n {
                    let eligible = l.iter().copied().max().unwrap_or(0) >= 2 || l[j] == 1;
                    if eligible {
                        let r = verify_xi_recurrence(&mut t, &l, j)?;
                        acc.record(r, 1e-9 * bound.max(1.0).powi(order as i32));
                    }
                }
            }
        }
    }
    Ok(acc.finish())
}

fn power_suite(rng: &mut ChaCha8Rng, fault: Fault) -> SuiteResult {
    let mut acc = Acc::new("power sums");
    for _ in 0..10 {
        let n = rng.gen_range(2..=3);
        let k = random_matrix(rng, n, n, 1.0);
        let t: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let kt = &k * DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&t));
        let mut tab = table(k, fault);
        for j in 0..=6 {
            let scale = kt.norm().powi(j as i32).max(1.0);
            acc.record(power_sum_check(&mut tab, &t, j), 1e-10 * scale);
        }
    }
    acc.finish()
}

fn reduction_suite(rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut acc = Acc::new("time reduction");
    for _ in 0..5 {
        let n = rng.gen_range(1..=3);
        let sys = random_difference_system(rng, n, 1);
        let t_star = sys.critical_time();
        let t = t_star + rng.gen_range(0.0..=1.0) * sys.tau_min();
        let u = random_control(rng, 1, t, 6);
        let (u1, u2) = reduce_control_time(&sys, &u, t)?;
        let lhs = endpoint_apply(&sys, t, &u)?;
        let rhs = endpoint_apply(&sys, t_star, &u1.add(&u2)?)?;
        let scale = lhs
            .components()
            .iter()
            .map(|c| c.sup_norm())
            .fold(1.0, f64::max);
        acc.record(sampled_diff(rng, &lhs, &rhs, 50), 1e-10 * scale);
    }
    Ok(acc.finish())
}

fn sampled_diff(
    rng: &mut ChaCha8Rng,
    a: &crate::system::BoundaryState,
    b: &crate::system::BoundaryState,
    k: usize,
) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..a.dim() {
        let tau = -a.component(i).lower();
        for _ in 0..k {
            let s = -rng.gen_range(0.0..tau);
            worst = worst.max((a.eval(i, s) - b.eval(i, s)).abs());
        }
    }
    worst
}

fn adjoint_suite(rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut acc = Acc::new("adjoint pairing");
    for _ in 0..10 {
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=2);
        let sys = random_difference_system(rng, n, m);
        let t = rng.gen_range(0.2..2.5) * sys.critical_time();
        let u = random_control(rng, m, t, 5);
        let y = random_state(rng, sys.delays(), 5);
        let lhs = endpoint_apply(&sys, t, &u)?.pairing(&y);
        let rhs = u.pairing(&endpoint_dual_apply(&sys, t, &y)?);
        acc.record((lhs - rhs).abs(), 1e-9 * lhs.abs().max(rhs.abs()).max(1.0));
    }
    Ok(acc.finish())
}

fn representation_suite(rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut acc = Acc::new("representation formula");
    for _ in 0..5 {
        let n = rng.gen_range(1..=3);
        let sys = random_difference_system(rng, n, 1);
        let horizon = 2.0 * sys.critical_time();
        let phi = random_state(rng, sys.delays(), 4);
        let u = random_control(rng, 1, horizon, 6);
        let traj = Trajectory::new(sys.clone(), phi, u)?;
        for _ in 0..5 {
            let t = rng.gen_range(0.0..horizon);
            let state = traj.state_at(t)?;
            for i in 0..n {
                let s = -rng.gen_range(0.0..sys.delays()[i]);
                let want = traj.eval_solution(i, t + s)?;
                acc.record((state.eval(i, s) - want).abs(), 1e-10 * want.abs().max(1.0));
            }
        }
    }
    Ok(acc.finish())
}

fn pde_suite(rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut acc = Acc::new("pde round trip");
    for _ in 0..4 {
        let n = rng.gen_range(1..=3);
        let hyp = random_hyperbolic_system(rng, n, 1);
        let diff = hyp.to_difference_system();
        let r: Vec<PiecewiseExpFn> = (0..n)
            .map(|_| PiecewiseExpFn::from(&crate::fixtures::random_pwc(rng, 0.0, 1.0, 5)))
            .collect();
        let back = hyp.boundary_profiles_to_state(&hyp.state_to_boundary(&r)?)?;
        for i in 0..n {
            for _ in 0..20 {
                let x = rng.gen_range(0.0..1.0);
                acc.record(
                    (back[i].eval(x) - r[i].eval(x)).abs(),
                    1e-12 * r[i].eval(x).abs().max(1.0),
                );
            }
        }
        let horizon = 3.0 * diff.critical_time();
        let traj = Trajectory::new(
            diff.clone(),
            random_state(rng, diff.delays(), 4),
            random_control(rng, 1, horizon, 5),
        )?;
        let samples: Vec<CharacteristicSample> = (0..50)
            .map(|_| {
                let i = rng.gen_range(0..n);
                let x = rng.gen_range(0.0..1.0);
                let h = rng.gen_range(-x..1.0 - x);
                let t = rng.gen_range(diff.tau_max()..horizon - diff.tau_max());
                CharacteristicSample {
                    component: i,
                    t,
                    x,
                    h,
                }
            })
            .collect();
        let res = check_characteristics(&hyp, horizon, &samples, |i, t, x| {
            pde_value(&hyp, &traj, i, t, x)
        })?;
        acc.record(res, 1e-8);
    }
    Ok(acc.finish())
}

fn spectral_suite(rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut acc = Acc::new("network spectra");
    for _ in 0..5 {
        let g = random_cycle_graph(rng, 3, 3, false, 1.0, 1);
        let CycleOutcome::Decomposition(dec) = cycle_decomposition(&g)? else {
            acc.record(f64::INFINITY, 1.0);
            continue;
        };
        for l in 0..dec.count() {
            let h = dec.cycles[l].len();
            for pt in spectral_set(&g, &dec, l, -3..3)? {
                let m = cycle_block(&g, &dec, l, pt.p())?;
                let scale: f64 = (0..h).map(|t| m[(t, t)].norm() + 1.0).product();
                acc.record(complex_det(&m).norm() / scale, 1e-9);
                acc.record(
                    if complex_rank_above(&m, 1e-9 * scale) == h - 1 {
                        0.0
                    } else {
                        f64::INFINITY
                    },
                    1.0,
                );
                let y = kernel_vector(&g, &dec, l, pt.p())?;
                let row = nalgebra::RowDVector::from_row_slice(&y) * &m;
                let ynorm = y.iter().map(|c| c.norm()).fold(1.0, f64::max);
                acc.record(row.norm() / ynorm, 1e-10 * scale);
                let spacing = 0.5 * spectral_set(&g, &dec, l, 1..2)?[0].im;
                let mid = cycle_block(&g, &dec, l, Complex64::new(pt.re, pt.im + spacing))?;
                let mid_scale: f64 = (0..h).map(|t| mid[(t, t)].norm() + 1.0).product();
                acc.record(1e-3 * mid_scale / complex_det(&mid).norm(), 1.0);
            }
        }
    }
    for _ in 0..5 {
        let g = random_obstructed_graph(rng);
        let (_, diff) = build_network_system(&g)?;
        let ok = matches!(cycle_decomposition(&g)?, CycleOutcome::Obstruction(_))
            && rank_kb(&diff) < diff.dim();
        acc.record(if ok { 0.0 } else { f64::INFINITY }, 1.0);
    }
    Ok(acc.finish())
}

/// Run every suite with a fixed seed.
pub fn run_all(seed: u64, fault: Fault) -> Result<Vec<SuiteResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(vec![
        xi_suite(&mut rng, fault)?,
        power_suite(&mut rng, fault),
        reduction_suite(&mut rng)?,
        adjoint_suite(&mut rng)?,
        representation_suite(&mut rng)?,
        pde_suite(&mut rng)?,
        spectral_suite(&mut rng)?,
    ])
}
