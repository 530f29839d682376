use hypctl_core::fixtures::{
    random_cycle_graph, random_obstructed_graph, random_small_integer_matrix,
};
use hypctl_core::linalg::{complex_det, complex_rank_above, hstack, rank};
use hypctl_core::network::{cycle_block, cycle_companion, Edge};
use hypctl_core::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn edge(r: &mut ChaCha8Rng, tail: usize, head: usize) -> Edge {
    let tau = r.gen_range(0.5..1.5);
    let zeta = r.gen_range(0.0..0.5);
    Edge {
        tail,
        head,
        speed: PiecewiseConstantFn::constant(0.0, 1.0, -1.0 / tau).unwrap(),
        damping: PiecewiseConstantFn::constant(0.0, 1.0, zeta / tau).unwrap(),
    }
}

/// A Hamiltonian cycle plus random extra edges, with random outgoing weights.
fn random_dense_graph(r: &mut ChaCha8Rng) -> FlowGraph {
    let k = r.gen_range(2..=5);
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(r);
    let mut edges: Vec<Edge> = (0..k)
        .map(|t| edge(r, order[t], order[(t + 1) % k]))
        .collect();
    for _ in 0..r.gen_range(0..=4) {
        let (a, b) = (r.gen_range(0..k), r.gen_range(0..k));
        edges.push(edge(r, a, b));
    }
    let mut w = DMatrix::zeros(k, edges.len());
    for v in 0..k {
        let out: Vec<usize> = (0..edges.len()).filter(|&j| edges[j].tail == v).collect();
        let raw: Vec<f64> = out.iter().map(|_| r.gen_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        for (&j, x) in out.iter().zip(&raw) {
            w[(v, j)] = x / total;
        }
        // exact normalization on the last edge
        let last = *out.last().unwrap();
        let rest: f64 = out[..out.len() - 1].iter().map(|&j| w[(v, j)]).sum();
        w[(v, last)] = 1.0 - rest;
    }
    let m = r.gen_range(1..=2);
    FlowGraph::new(k, edges, w, random_small_integer_matrix(r, k, m))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn incidence_columns_have_one_entry(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let g = random_dense_graph(&mut r);
        prop_assert!(validate_graph(&g).is_ok());
        for m in [g.tail_incidence(), g.head_incidence()] {
            for c in m.column_iter() {
                prop_assert_eq!(c.iter().filter(|&&v| v != 0.0).count(), 1);
            }
        }
    }

    #[test]
    fn control_columns_lie_in_range_of_k(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let g = random_dense_graph(&mut r);
        let (_, diff) = build_network_system(&g).unwrap();
        prop_assert_eq!(rank(&hstack(diff.k(), diff.b())), rank(diff.k()));
    }

    #[test]
    fn obstruction_implies_rank_loss(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let g = if r.gen_bool(0.5) { random_dense_graph(&mut r) } else { random_obstructed_graph(&mut r) };
        let (_, diff) = build_network_system(&g).unwrap();
        if let CycleOutcome::Obstruction(ob) = cycle_decomposition(&g).unwrap() {
            prop_assert!(rank_kb(&diff) < diff.dim());
            prop_assert!(ob.angle < 1e-10);
            prop_assert!(g.incoming(ob.vertex).len() >= 2);
        }
    }

    #[test]
    fn spectral_points_are_exactly_the_zeros(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let commensurable = r.gen_bool(0.5);
        let g = random_cycle_graph(&mut r, 3, 4, commensurable, 1.0, 1);
        let CycleOutcome::Decomposition(dec) = cycle_decomposition(&g).unwrap() else {
            return Err(TestCaseError::fail("cycle graph reported an obstruction"));
        };
        for l in 0..dec.count() {
            let h = dec.cycles[l].len();
            let comp = cycle_companion(&g, &dec, l).unwrap();
            let pts = spectral_set(&g, &dec, l, -4..4).unwrap();
            let half = 0.5 * (pts[1].im - pts[0].im);
            for pt in pts {
                let m = cycle_block(&g, &dec, l, pt.p()).unwrap();
                let scale: f64 = (0..h).map(|t| (m[(t, t)] + comp[(t, t)]).norm() + comp[(t, (t + h - 1) % h)]).product();
                prop_assert!(complex_det(&m).norm() < 1e-10 * scale);
                prop_assert_eq!(complex_rank_above(&m, 1e-9 * scale), h - 1);
                let y = kernel_vector(&g, &dec, l, pt.p()).unwrap();
                prop_assert_eq!(y[0], Complex64::new(1.0, 0.0));
                for c in 0..h {
                    let v: Complex64 = (0..h).map(|i| y[i] * m[(i, c)]).sum();
                    prop_assert!(v.norm() < 1e-10 * y.iter().map(|z| z.norm()).fold(1.0, f64::max));
                }
                let mid = cycle_block(&g, &dec, l, Complex64::new(pt.re, pt.im + half)).unwrap();
                prop_assert!(complex_det(&mid).norm() > 1e-3);
                prop_assert!(kernel_vector(&g, &dec, l, Complex64::new(pt.re, pt.im + half)).is_err());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn network_test_agrees_with_generic_when_commensurable(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let inputs = r.gen_range(1..=2);
        let g = random_cycle_graph(&mut r, 3, 3, true, 0.5, inputs);
        let net = network_approx_test(&g, 1e-6, 1e-10).unwrap();
        let (_, diff) = build_network_system(&g).unwrap();
        let generic = approx_controllability_report(&diff, &StripOptions::default());
        prop_assert_eq!(net.verdict(), generic.verdict);
        prop_assert_ne!(net.verdict(), Verdict::Inconclusive);
    }
}

#[test]
fn documented_network_examples() {
    // the crossed pair as a 2-cycle with the control entering one vertex
    let edges = vec![
        Edge {
            tail: 0,
            head: 1,
            speed: PiecewiseConstantFn::constant(0.0, 1.0, -1.0).unwrap(),
            damping: PiecewiseConstantFn::zero(0.0, 1.0).unwrap(),
        },
        Edge {
            tail: 1,
            head: 0,
            speed: PiecewiseConstantFn::constant(0.0, 1.0, -(2.0f64.sqrt())).unwrap(),
            damping: PiecewiseConstantFn::zero(0.0, 1.0).unwrap(),
        },
    ];
    let g = FlowGraph::with_uniform_weights(2, edges, DMatrix::from_row_slice(2, 1, &[0.0, 1.0]));
    assert_eq!(
        network_approx_test(&g, 1e-6, 1e-10).unwrap().verdict(),
        Verdict::Controllable
    );
    let blocked = g.with_gamma(DMatrix::zeros(2, 1));
    assert_eq!(
        network_approx_test(&blocked, 1e-6, 1e-10)
            .unwrap()
            .verdict(),
        Verdict::NotControllable
    );

    // two identical self-loops, one input hitting only the first
    let e = |v| Edge {
        tail: v,
        head: v,
        speed: PiecewiseConstantFn::constant(0.0, 1.0, -1.0).unwrap(),
        damping: PiecewiseConstantFn::constant(0.0, 1.0, 0.3).unwrap(),
    };
    let twin = FlowGraph::with_uniform_weights(
        2,
        vec![e(0), e(1)],
        DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
    );
    assert_eq!(
        network_approx_test(&twin, 1e-6, 1e-10).unwrap().verdict(),
        Verdict::NotControllable
    );
}

#[test]
fn validation_reports_violations() {
    let e = |t, h| Edge {
        tail: t,
        head: h,
        speed: PiecewiseConstantFn::constant(0.0, 1.0, -1.0).unwrap(),
        damping: PiecewiseConstantFn::zero(0.0, 1.0).unwrap(),
    };
    let lone = FlowGraph::with_uniform_weights(1, vec![e(0, 0)], DMatrix::zeros(1, 1));
    assert!(validate_graph(&lone).is_ok());

    let dangling = FlowGraph::with_uniform_weights(2, vec![e(0, 0), e(1, 0)], DMatrix::zeros(2, 1));
    let v = validate_graph(&dangling).unwrap_err();
    assert!(v.contains(&Violation::NoIncoming { vertex: 1 }));

    let half = FlowGraph::new(
        1,
        vec![e(0, 0)],
        DMatrix::from_element(1, 1, 0.5),
        DMatrix::zeros(1, 1),
    );
    let v = validate_graph(&half).unwrap_err();
    assert!(v
        .iter()
        .any(|x| matches!(x, Violation::WeightSum { vertex: 0, .. })));
}
