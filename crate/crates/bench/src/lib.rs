//! Shared inputs for the benchmarks.

use hypctl_core::fixtures::{random_control, random_difference_system, random_state};
use hypctl_core::{BoundaryState, ControlSignal, DifferenceSystem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A fixed random system with matching state and control on `[0, horizon_factor · T*]`.
pub fn instance(
    n: usize,
    m: usize,
    horizon_factor: f64,
    seed: u64,
) -> (DifferenceSystem, BoundaryState, ControlSignal) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let sys = random_difference_system(&mut r, n, m);
    let phi = random_state(&mut r, sys.delays(), 8);
    let u = random_control(&mut r, m, horizon_factor * sys.critical_time(), 12);
    (sys, phi, u)
}
