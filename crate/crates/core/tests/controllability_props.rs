use hypctl_core::fixtures::{random_difference_system, random_matrix, random_small_integer_matrix};
use hypctl_core::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn commensurable_system(r: &mut ChaCha8Rng) -> DifferenceSystem {
    let n = r.gen_range(1..=3);
    let m = r.gen_range(1..=2);
    let delays = (0..n).map(|_| r.gen_range(1..=3) as f64).collect();
    DifferenceSystem::new(
        random_small_integer_matrix(r, n, n),
        random_small_integer_matrix(r, n, m),
        delays,
    )
    .unwrap()
}

/// `K = diag(e^{p τ}) − N` with `N` singular, and `B` orthogonal to the left
/// kernel of `N`, so `[H(p), B]` loses rank at the real point `p`.
fn singular_at(r: &mut ChaCha8Rng, n: usize, p: f64) -> DifferenceSystem {
    let delays: Vec<f64> = (0..n).map(|_| r.gen_range(0.5..1.5)).collect();
    let a = random_matrix(r, n, n - 1, 1.0);
    let c = random_matrix(r, n - 1, n, 1.0);
    let nmat = &a * &c;
    let k = DMatrix::from_fn(
        n,
        n,
        |i, j| if i == j { (p * delays[i]).exp() } else { 0.0 },
    ) - &nmat;
    // columns of B in the range of A are annihilated by the left kernel of N
    let b = &a * random_matrix(r, n - 1, 1, 1.0);
    DifferenceSystem::new(k, b, delays).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn equal_delays_give_periodic_criterion(seed in any::<u64>(), re in -1.0f64..1.0, im in 0.0f64..6.0) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n = r.gen_range(1..=3);
        let tau = r.gen_range(0.5..2.0);
        let sys = DifferenceSystem::new(random_matrix(&mut r, n, n, 1.0), random_matrix(&mut r, n, 1, 1.0), vec![tau; n]).unwrap();
        let a = hautus_value(&sys, Complex64::new(re, im)).unwrap();
        let b = hautus_value(&sys, Complex64::new(re, im + 2.0 * std::f64::consts::PI / tau)).unwrap();
        prop_assert!((a.det_criterion - b.det_criterion).abs() < 1e-9 * a.det_criterion.abs().max(1.0));
    }

    #[test]
    fn rank_and_determinant_agree(seed in any::<u64>(), re in -1.0f64..1.0, im in 0.0f64..6.0) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n = r.gen_range(1..=3);
        let generic = random_difference_system(&mut r, n, 1);
        let v = hautus_value(&generic, Complex64::new(re, im)).unwrap();
        prop_assert_eq!(v.rank == n, v.det_criterion > v.det_threshold(n));

        let n = r.gen_range(2..=3);
        let p = r.gen_range(-0.5..0.5);
        let singular = singular_at(&mut r, n, p);
        let v = hautus_value(&singular, Complex64::new(p, 0.0)).unwrap();
        prop_assert!(v.rank < n);
        prop_assert!(v.min_sv < 1e-12 * v.max_sv.max(1.0));
        // the Gram determinant only resolves down to about eps * max_sv^(2n)
        prop_assert!(v.det_criterion <= 1e-12 * v.max_sv.powi(2 * n as i32));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn strip_agrees_with_kalman_when_commensurable(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let sys = commensurable_system(&mut r);
        let kalman = commensurable_reduce(&sys, 1e-9).unwrap().kalman();
        let report = approx_controllability_report(&sys, &StripOptions::default());
        let want = if kalman.controllable { Verdict::Controllable } else { Verdict::NotControllable };
        prop_assert_eq!(report.verdict, want);
    }

    #[test]
    fn exact_controllable_implies_approximate(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n = r.gen_range(1..=3);
        let m = r.gen_range(1..=2);
        let sys = random_difference_system(&mut r, n, m);
        let opts = StripOptions { max_im_points: 512, max_re_points: 128, ..StripOptions::default() };
        let exact = exact_controllability_report(&sys, &opts);
        let approx = approx_controllability_report(&sys, &opts);
        if exact.verdict == Verdict::Controllable {
            prop_assert_eq!(approx.verdict, Verdict::Controllable);
        }
        prop_assert!(exact.min_criterion <= approx.min_criterion);
    }

    #[test]
    fn widening_the_strip_keeps_failures(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let sys = commensurable_system(&mut r);
        let narrow = approx_controllability_report(&sys, &StripOptions::default());
        let boxed = narrow.search_box.clone();
        if let Some(b) = boxed {
            let wide = StripOptions {
                sigma_min: Some(b.sigma_min - 1.0),
                sigma_max: Some(b.sigma_max + 1.0),
                im_max: Some(b.im_max * 1.5),
                ..StripOptions::default()
            };
            let wider = approx_controllability_report(&sys, &wide);
            if narrow.verdict == Verdict::NotControllable {
                prop_assert_eq!(wider.verdict, Verdict::NotControllable);
            }
            if wider.verdict == Verdict::Controllable {
                prop_assert_ne!(narrow.verdict, Verdict::NotControllable);
            }
        }
    }
}

#[test]
fn intro_system_is_controllable_and_zero_input_is_not() {
    let tau = 0.5f64.sqrt();
    let sys = hypctl_core::fixtures::intro_system(tau);
    let report = approx_controllability_report(&sys, &StripOptions::default());
    assert_eq!(report.verdict, Verdict::Controllable);
    assert_eq!(report.summary_line(), "approximate: Controllable");

    let blocked = sys.with_control_matrix(DMatrix::zeros(2, 1)).unwrap();
    let report = approx_controllability_report(&blocked, &StripOptions::default());
    assert_eq!(report.verdict, Verdict::NotControllable);
    match report.witness {
        Some(Witness::Frequency { p, .. }) => assert!(p[0].abs() < 1e-6, "witness {p:?}"),
        other => panic!("unexpected witness {other:?}"),
    }
}

#[test]
fn rank_deficient_pair_fails_both_criteria() {
    let sys = DifferenceSystem::new(
        DMatrix::zeros(2, 2),
        DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
        vec![1.0, 2.0],
    )
    .unwrap();
    let opts = StripOptions::default();
    assert!(matches!(
        approx_controllability_report(&sys, &opts).witness,
        Some(Witness::RankKb { rank: 1, n: 2 })
    ));
    assert_eq!(
        exact_controllability_report(&sys, &opts).verdict,
        Verdict::NotControllable
    );
}
