use hypctl_core::fixtures::random_matrix;
use hypctl_core::linalg::spectral_norm;
use hypctl_core::xi::indices_of_order;
use hypctl_core::*;
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup(seed: u64, n: usize) -> (ChaCha8Rng, DMatrix<f64>) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let k = random_matrix(&mut r, n, n, 1.5);
    (r, k)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn negative_indices_give_zero(seed in any::<u64>(), n in 1usize..4, neg in 1i64..4) {
        let (mut r, k) = setup(seed, n);
        let mut t = XiTable::new(k);
        let mut l: Vec<i64> = (0..n).map(|_| r.gen_range(0..4)).collect();
        let pos = r.gen_range(0..n);
        l[pos] = -neg;
        prop_assert!(t.xi(&l).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn norm_bound(seed in any::<u64>(), n in 1usize..4) {
        let (_, k) = setup(seed, n);
        let bound = n as f64 * spectral_norm(&k);
        let mut t = XiTable::new(k);
        for j in 0..=6 {
            for l in indices_of_order(n, j) {
                prop_assert!(spectral_norm(t.xi(&l)) <= bound.powi(j as i32) * (1.0 + 1e-12) + 1e-15);
            }
        }
    }

    #[test]
    fn power_sums_hold(seed in any::<u64>(), n in 1usize..4) {
        let (mut r, k) = setup(seed, n);
        let t: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let kt = &k * DMatrix::from_diagonal(&DVector::from_column_slice(&t));
        let mut table = XiTable::new(k);
        for j in 0..=8 {
            let scale = kt.norm().powi(j as i32).max(1.0);
            prop_assert!(power_sum_check(&mut table, &t, j) < 1e-10 * scale);
        }
    }

    #[test]
    fn recurrence_up_to_order_eight(seed in any::<u64>()) {
        let (_, k) = setup(seed, 2);
        let bound = (2.0 * spectral_norm(&k)).max(1.0);
        let mut t = XiTable::new(k);
        for order in 1..=8 {
            for l in indices_of_order(2, order) {
                for j in 0..2 {
                    match verify_xi_recurrence(&mut t, &l, j) {
                        Ok(res) => prop_assert!(res < 1e-9 * bound.powi(order as i32)),
                        Err(Error::IneligibleIndex { .. }) => {}
                        Err(e) => return Err(TestCaseError::fail(e.to_string())),
                    }
                }
            }
        }
    }

    #[test]
    fn nonzero_count_bounded(seed in any::<u64>(), n in 1usize..4) {
        let (_, k) = setup(seed, n);
        let mut t = XiTable::new(k);
        for j in 0..=6usize {
            let nonzero = indices_of_order(n, j).into_iter().filter(|l| t.xi(l).iter().any(|&v| v != 0.0)).count();
            prop_assert!(nonzero <= n.pow(j as u32));
        }
    }

    #[test]
    fn alpha_matches_char_polynomial(seed in any::<u64>(), n in 1usize..5) {
        let (mut r, k) = setup(seed, n);
        let alpha = char_coefficients(&k).unwrap();
        let t: Vec<f64> = (0..n).map(|_| r.gen_range(-2.0..2.0)).collect();
        let m = DMatrix::identity(n, n) - &k * DMatrix::from_diagonal(&DVector::from_column_slice(&t));
        let det = m.determinant();
        prop_assert!((alpha.eval(&t) - det).abs() < 1e-10 * det.abs().max(1.0));
    }
}

#[test]
fn ineligible_index_rejected() {
    let mut t = XiTable::new(DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]));
    assert!(matches!(
        verify_xi_recurrence(&mut t, &[1, 0], 1),
        Err(Error::IneligibleIndex { .. })
    ));
}

#[test]
fn sign_fault_is_visible() {
    let k = DMatrix::from_row_slice(2, 2, &[0.3, -0.7, 0.5, 0.2]);
    let mut bad = XiTable::with_sign_fault(k);
    assert!(power_sum_check(&mut bad, &[0.6, -0.4], 3) > 1e-3);
}
