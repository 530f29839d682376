use hypctl_core::fixtures::{random_control, random_difference_system, random_state};
use hypctl_core::io::{parse_text, read_state_csv, signal_json, write_state_csv, SignalSpec};
use hypctl_core::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn state_csv_round_trip_is_exact(seed in any::<u64>(), n in 1usize..4) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_difference_system(&mut r, n, 1);
        let phi = random_state(&mut r, sys.delays(), 7);
        let mut buf = Vec::new();
        write_state_csv(&mut buf, phi.components()).unwrap();
        let back = read_state_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.as_slice(), phi.components());
    }

    #[test]
    fn signal_json_round_trip_is_exact(seed in any::<u64>(), m in 1usize..3) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let horizon = r.gen_range(0.5..5.0);
        let u = random_control(&mut r, m, horizon, 9);
        let text = signal_json(u.components());
        let back = parse_text::<SignalSpec>(&text, false).unwrap().components();
        prop_assert_eq!(back.as_slice(), u.components());
    }

    #[test]
    fn exported_state_reproduces_continuation(seed in any::<u64>(), n in 1usize..4) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_difference_system(&mut r, n, 1);
        let t1 = r.gen_range(0.2..1.5) * sys.critical_time();
        let traj = Trajectory::new(
            sys.clone(),
            random_state(&mut r, sys.delays(), 5),
            ControlSignal::zero(1, t1 + sys.critical_time()).unwrap(),
        )
        .unwrap();
        let at = traj.state_at(t1).unwrap();
        let mut buf = Vec::new();
        write_state_csv(&mut buf, at.components()).unwrap();
        let reread = BoundaryState::new(sys.delays(), read_state_csv(buf.as_slice()).unwrap()).unwrap();
        prop_assert_eq!(&reread, &at);

        let t2 = r.gen_range(0.1..1.0) * sys.critical_time();
        let a = flow_apply(&sys, t2, &reread).unwrap();
        let b = flow_apply(&sys, t2, &at).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn bare_and_wrapped_signals_agree() {
    let wrapped = r#"{"components": [{"breakpoints": [0, 1, 2], "values": [1, -1]}]}"#;
    let bare = r#"[{"breakpoints": [0, 1, 2], "values": [1, -1]}]"#;
    let a = parse_text::<SignalSpec>(wrapped, false)
        .unwrap()
        .components();
    let b = parse_text::<SignalSpec>(bare, false).unwrap().components();
    assert_eq!(a, b);
}

#[test]
fn malformed_csv_rejected() {
    assert!(read_state_csv("component,s,value\n".as_bytes()).is_err());
    assert!(read_state_csv("component,s,value\n1,-1,0\n1,0,0\n".as_bytes()).is_err());
    assert!(read_state_csv("component,s,value\n0,-1,x\n".as_bytes()).is_err());
}
