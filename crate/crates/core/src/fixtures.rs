//! Reference systems and seeded random generators shared by tests, the
//! verification suite and the benchmarks.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Result;
use crate::network::{Edge, FlowGraph};
use crate::pwc::PiecewiseConstantFn;
use crate::solution::ControlSignal;
use crate::system::{BoundaryState, DifferenceSystem, HyperbolicSystem};

/// Crossed pair `y₁(t) = y₂(t − τ)`, `y₂(t) = y₁(t − 1) + u(t)`.
pub fn intro_system(tau: f64) -> DifferenceSystem {
    DifferenceSystem::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        vec![1.0, tau],
    )
    .expect("valid fixture")
}

/// The same system as two rightward transport equations with speeds `1` and `1/τ`.
pub fn intro_hyperbolic(tau: f64) -> HyperbolicSystem {
    HyperbolicSystem::new(
        vec![
            PiecewiseConstantFn::constant(0.0, 1.0, 1.0).unwrap(),
            PiecewiseConstantFn::constant(0.0, 1.0, 1.0 / tau).unwrap(),
        ],
        vec![
            PiecewiseConstantFn::zero(0.0, 1.0).unwrap(),
            PiecewiseConstantFn::zero(0.0, 1.0).unwrap(),
        ],
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        2,
    )
    .expect("valid fixture")
}

/// Control on `[0, 1 + τ]` steering `initial` to `target` for [`intro_system`]:
/// `φ₁(t−1) − φ₀(t−1)` on `[0, 1)`, then `ψ₁(t−1−τ) − ψ₀(t−1−τ)`.
pub fn intro_steering_control(
    tau: f64,
    initial: &BoundaryState,
    target: &BoundaryState,
) -> Result<ControlSignal> {
    let (phi0, psi0) = (initial.component(0), initial.component(1));
    let (phi1, psi1) = (target.component(0), target.component(1));
    let horizon = 1.0 + tau;
    let breaks = phi0
        .breakpoints()
        .iter()
        .chain(phi1.breakpoints())
        .map(|b| b + 1.0)
        .chain(
            psi0.breakpoints()
                .iter()
                .chain(psi1.breakpoints())
                .map(|b| b + horizon),
        );
    let u = PiecewiseConstantFn::from_breaks(0.0, horizon, breaks, |t| {
        if t < 1.0 {
            phi1.eval(t - 1.0) - phi0.eval(t - 1.0)
        } else {
            psi1.eval(t - horizon) - psi0.eval(t - horizon)
        }
    })?;
    ControlSignal::new(vec![u])
}

/// Step function with up to `max_pieces` pieces and values in `[-2, 2]`.
pub fn random_pwc<R: Rng>(
    rng: &mut R,
    lower: f64,
    upper: f64,
    max_pieces: usize,
) -> PiecewiseConstantFn {
    let pieces = rng.gen_range(1..=max_pieces.max(1));
    let mut inner: Vec<f64> = (1..pieces).map(|_| rng.gen_range(lower..upper)).collect();
    inner.sort_by(f64::total_cmp);
    let mut b = vec![lower];
    for x in inner {
        if x - b[b.len() - 1] > 1e-6 * (upper - lower) && upper - x > 1e-6 * (upper - lower) {
            b.push(x);
        }
    }
    b.push(upper);
    let v = (0..b.len() - 1).map(|_| rng.gen_range(-2.0..2.0)).collect();
    PiecewiseConstantFn::new(b, v).expect("valid random function")
}

pub fn random_state<R: Rng>(rng: &mut R, delays: &[f64], max_pieces: usize) -> BoundaryState {
    let comps = delays
        .iter()
        .map(|&t| random_pwc(rng, -t, 0.0, max_pieces))
        .collect();
    BoundaryState::new(delays, comps).expect("valid random state")
}

pub fn random_control<R: Rng>(
    rng: &mut R,
    inputs: usize,
    horizon: f64,
    max_pieces: usize,
) -> ControlSignal {
    ControlSignal::new(
        (0..inputs)
            .map(|_| random_pwc(rng, 0.0, horizon, max_pieces))
            .collect(),
    )
    .expect("valid random control")
}

/// Pairwise incommensurable delays in `[0.5, 1.5]`: distinct irrational
/// multiples built from square roots of primes.
pub fn random_incommensurable_delays<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut roots = [2.0f64, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0]
        .map(f64::sqrt)
        .to_vec();
    roots.shuffle(rng);
    roots[..n].iter().map(|r| 0.5 + r.fract()).collect()
}

/// Dense `K` with entries in `[-scale, scale]`.
pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
}

/// Matrix with entries in `{-1, 0, 1}`.
pub fn random_small_integer_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1i32..=1) as f64)
}

/// Random system with incommensurable delays and a contracting-ish `K`.
pub fn random_difference_system<R: Rng>(rng: &mut R, n: usize, m: usize) -> DifferenceSystem {
    let delays = random_incommensurable_delays(rng, n);
    DifferenceSystem::new(
        random_matrix(rng, n, n, 1.0),
        random_matrix(rng, n, m, 1.0),
        delays,
    )
    .expect("valid random system")
}

/// Random hyperbolic system with piecewise speeds and dampings.
pub fn random_hyperbolic_system<R: Rng>(rng: &mut R, n: usize, m: usize) -> HyperbolicSystem {
    let n_plus = rng.gen_range(0..=n);
    let speeds = (0..n)
        .map(|i| {
            let f = random_pwc(rng, 0.0, 1.0, 3);
            let sign = if i < n_plus { 1.0 } else { -1.0 };
            f.map(|v| sign * (0.5 + 0.5 * v.abs()))
        })
        .collect();
    let dampings = (0..n)
        .map(|_| random_pwc(rng, 0.0, 1.0, 3).map(|v| 0.4 * v))
        .collect();
    HyperbolicSystem::new(
        speeds,
        dampings,
        random_matrix(rng, n, n, 1.0),
        random_matrix(rng, n, m, 1.0),
        n_plus,
    )
    .expect("valid random hyperbolic system")
}

fn constant_edge(tail: usize, head: usize, tau: f64, zeta: f64) -> Edge {
    Edge {
        tail,
        head,
        speed: PiecewiseConstantFn::constant(0.0, 1.0, -1.0 / tau).unwrap(),
        damping: PiecewiseConstantFn::constant(0.0, 1.0, zeta / tau).unwrap(),
    }
}

/// Disjoint cycles with `sizes[l]` edges each; delays from `delay_of`, damping
/// integrals uniform in `[0, max_zeta]`.
pub fn cycle_graph<R: Rng>(
    rng: &mut R,
    sizes: &[usize],
    mut delay_of: impl FnMut(&mut R) -> f64,
    max_zeta: f64,
    gamma: DMatrix<f64>,
) -> FlowGraph {
    let mut edges = Vec::new();
    let mut v0 = 0;
    for &h in sizes {
        for t in 0..h {
            let tau = delay_of(rng);
            let zeta = if max_zeta > 0.0 {
                rng.gen_range(0.0..max_zeta)
            } else {
                0.0
            };
            edges.push(constant_edge(v0 + t, v0 + (t + 1) % h, tau, zeta));
        }
        v0 += h;
    }
    // Shuffle edge labels so the decomposition has to find the cycles.
    edges.shuffle(rng);
    FlowGraph::with_uniform_weights(v0, edges, gamma)
}

/// Random union of cycles with `L ≤ max_cycles` and lengths `≤ max_len`.
pub fn random_cycle_graph<R: Rng>(
    rng: &mut R,
    max_cycles: usize,
    max_len: usize,
    commensurable: bool,
    max_zeta: f64,
    inputs: usize,
) -> FlowGraph {
    let l = rng.gen_range(1..=max_cycles);
    let sizes: Vec<usize> = (0..l).map(|_| rng.gen_range(1..=max_len)).collect();
    let k: usize = sizes.iter().sum();
    let gamma = random_small_integer_matrix(rng, k, inputs);
    if commensurable {
        cycle_graph(rng, &sizes, |r| r.gen_range(1..=3) as f64, max_zeta, gamma)
    } else {
        cycle_graph(rng, &sizes, |r| r.gen_range(0.5..1.5), max_zeta, gamma)
    }
}

/// A union of cycles plus one extra edge into an existing vertex, so that
/// vertex has two incoming edges.
pub fn random_obstructed_graph<R: Rng>(rng: &mut R) -> FlowGraph {
    let g = random_cycle_graph(rng, 3, 3, false, 0.5, 1);
    let k = g.vertices();
    let mut edges = g.edges().to_vec();
    let tail = rng.gen_range(0..k);
    let head = rng.gen_range(0..k);
    edges.push(constant_edge(
        tail,
        head,
        rng.gen_range(0.5..1.5),
        rng.gen_range(0.0..0.5),
    ));
    edges.shuffle(rng);
    FlowGraph::with_uniform_weights(k, edges, g.gamma().clone())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::network::validate_graph;
    use crate::solution::Trajectory;

    #[test]
    fn steering_hits_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let tau = 0.5f64.sqrt();
        let sys = intro_system(tau);
        let a = random_state(&mut rng, sys.delays(), 5);
        let b = random_state(&mut rng, sys.delays(), 5);
        let u = intro_steering_control(tau, &a, &b).unwrap();
        let traj = Trajectory::new(sys, a, u).unwrap();
        let end = traj.state_at(1.0 + tau).unwrap();
        assert!(end.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn random_graphs_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            assert!(validate_graph(&random_cycle_graph(&mut rng, 3, 4, true, 0.5, 2)).is_ok());
            assert!(validate_graph(&random_obstructed_graph(&mut rng)).is_ok());
        }
    }
}
