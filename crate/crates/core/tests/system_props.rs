use hypctl_core::fixtures::{random_hyperbolic_system, random_pwc};
use hypctl_core::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn delays_lie_between_speed_bounds(seed in any::<u64>(), n in 1usize..4) {
        let mut r = rng(seed);
        let sys = random_hyperbolic_system(&mut r, n, 1);
        for (i, tau) in sys.delays().iter().enumerate() {
            let speeds = sys.speeds()[i].values().iter().map(|v| v.abs()).collect::<Vec<_>>();
            let (lo, hi) = speeds.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
            prop_assert!(*tau > 0.0);
            prop_assert!(*tau >= 1.0 / hi - 1e-12 && *tau <= 1.0 / lo + 1e-12);
        }
    }

    #[test]
    fn travel_time_endpoints_and_monotonicity(seed in any::<u64>(), n in 1usize..4) {
        let mut r = rng(seed);
        let sys = random_hyperbolic_system(&mut r, n, 1);
        let delays = sys.delays();
        for i in 0..n {
            let ch = sys.characteristic(i);
            let rightward = i < sys.n_plus();
            let (at0, at1) = (ch.psi(0.0), ch.psi(1.0));
            if rightward {
                prop_assert!(at0.abs() < 1e-14 && (at1 - delays[i]).abs() < 1e-12);
            } else {
                prop_assert!(at1.abs() < 1e-14 && (at0 - delays[i]).abs() < 1e-12);
            }
            let mut xs: Vec<f64> = (0..30).map(|_| r.gen_range(0.0..1.0)).collect();
            xs.sort_by(f64::total_cmp);
            for w in xs.windows(2) {
                if w[1] > w[0] {
                    let d = ch.psi(w[1]) - ch.psi(w[0]);
                    let ok = if rightward { d > 0.0 } else { d < 0.0 };
                    prop_assert!(ok);
                }
            }
            for &x in &xs {
                prop_assert!((ch.psi_inverse(ch.psi(x)) - x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn state_maps_are_mutually_inverse(seed in any::<u64>(), n in 1usize..4) {
        let mut r = rng(seed);
        let sys = random_hyperbolic_system(&mut r, n, 1);
        let profiles: Vec<PiecewiseExpFn> =
            (0..n).map(|_| PiecewiseExpFn::from(&random_pwc(&mut r, 0.0, 1.0, 6))).collect();
        let y = sys.state_to_boundary(&profiles).unwrap();
        let back = sys.boundary_profiles_to_state(&y).unwrap();
        for i in 0..n {
            for _ in 0..20 {
                let x = r.gen_range(0.0..1.0);
                let want = profiles[i].eval(x);
                prop_assert!((back[i].eval(x) - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
        // the other direction, through a boundary state
        let delays = sys.delays();
        let comps: Vec<_> = delays.iter().map(|&t| random_pwc(&mut r, -t, 0.0, 5)).collect();
        let state = BoundaryState::new(&delays, comps).unwrap();
        let prof = sys.boundary_to_state(&state).unwrap();
        let again = sys.state_to_boundary(&prof).unwrap();
        for i in 0..n {
            for _ in 0..20 {
                let s = -r.gen_range(0.0..delays[i]);
                prop_assert!((again[i].eval(s) - state.eval(i, s)).abs() < 1e-12 * state.eval(i, s).abs().max(1.0));
            }
        }
    }

    #[test]
    fn undamped_reduction_keeps_boundary_matrix(seed in any::<u64>(), n in 1usize..4) {
        let mut r = rng(seed);
        let damped = random_hyperbolic_system(&mut r, n, 2);
        let zero = (0..n).map(|_| PiecewiseConstantFn::zero(0.0, 1.0).unwrap()).collect();
        let sys = HyperbolicSystem::new(
            damped.speeds().to_vec(),
            zero,
            damped.boundary_matrix().clone(),
            damped.control_matrix().clone(),
            damped.n_plus(),
        )
        .unwrap();
        let diff = sys.to_difference_system();
        prop_assert_eq!(diff.k(), sys.boundary_matrix());
        prop_assert_eq!(diff.b(), sys.control_matrix());
    }
}

#[test]
fn damping_scales_columns_of_k() {
    let mut r = rng(5);
    let sys = random_hyperbolic_system(&mut r, 3, 1);
    let diff = sys.to_difference_system();
    let zeta = compute_damping_integrals(sys.speeds(), sys.dampings()).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let want = sys.boundary_matrix()[(i, j)] * (-zeta[j]).exp();
            assert!((diff.k()[(i, j)] - want).abs() < 1e-14);
        }
    }
}
