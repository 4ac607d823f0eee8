use num_complex::Complex64;
use proptest::prelude::*;
use qsim::{Bits, RegisterLayout, SparseState};

fn arb_bits(len: usize) -> impl Strategy<Value = Bits> {
    proptest::collection::vec(any::<bool>(), len).prop_map(Bits::from_bools)
}

proptest! {
    #[test]
    fn bits_display_parse_roundtrip(b in arb_bits(12)) {
        let s = b.to_string();
        prop_assert_eq!(Bits::parse(&s).unwrap(), b);
    }

    #[test]
    fn bits_index_roundtrip(idx in 0usize..4096) {
        prop_assert_eq!(Bits::from_index(idx, 12).to_index(), idx);
    }

    #[test]
    fn xor_is_involutive(a in arb_bits(16), b in arb_bits(16)) {
        prop_assert_eq!(a.xor(&b).xor(&b), a);
    }

    #[test]
    fn projection_is_idempotent(
        support in proptest::collection::vec((0usize..32, -10i32..10, -10i32..10), 1..5)
    ) {
        let layout = RegisterLayout::new(vec![("a".into(), 2), ("b".into(), 3)]).unwrap();
        let entries: Vec<(Bits, Complex64)> = support
            .into_iter()
            .map(|(i, re, im)| (Bits::from_index(i, 5), Complex64::new(re as f64, im as f64 + 0.1)))
            .collect();
        let state = SparseState::from_amplitudes(layout, entries).unwrap();
        for v in 0..4usize {
            let outcome = Bits::from_index(v, 2);
            if let (p, Some(post)) = qsim::project_computational(&state, "a", &outcome).unwrap() {
                prop_assert!(p > 0.0);
                // Projecting again must be certain and leave the state fixed.
                let (p2, post2) = qsim::project_computational(&post, "a", &outcome).unwrap();
                prop_assert!((p2 - 1.0).abs() < 1e-9);
                prop_assert!(post2.unwrap().approx_eq_global_phase(&post, 1e-9));
            }
        }
    }

    #[test]
    fn unitary_ops_preserve_norm(ops in proptest::collection::vec((0u8..3, 1usize..5), 1..15)) {
        let layout = RegisterLayout::single("q", 4).unwrap();
        let mut state = SparseState::zero(layout);
        for (op, bit) in ops {
            let bit = ((bit - 1) % 4) + 1;
            state = match op {
                0 => state.apply_h("q", bit).unwrap(),
                1 => state.apply_x("q", bit).unwrap(),
                _ => state.apply_z("q", bit, true).unwrap(),
            };
        }
        prop_assert!(state.check_normalized().is_ok());
    }
}
