//! Property tests over randomly drawn mechanism families.

use csbp_backbone::{Atom, BranchingMechanism, ImmigrationMechanism, JumpMeasure};
use proptest::prelude::*;

fn jump_measure() -> impl Strategy<Value = JumpMeasure> {
    prop_oneof![
        Just(JumpMeasure::Zero),
        (0.1..2.0f64, 0.3..3.0f64)
            .prop_map(|(rate, decay)| JumpMeasure::CompoundExponential { rate, decay }),
        proptest::collection::vec((0.05..3.0f64, 0.05..2.0f64), 1..4).prop_map(|mut pairs| {
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            pairs.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-9);
            JumpMeasure::FiniteAtoms {
                atoms: pairs
                    .into_iter()
                    .map(|(size, mass)| Atom { size, mass })
                    .collect(),
            }
        }),
    ]
}

fn mechanism() -> impl Strategy<Value = BranchingMechanism> {
    (-3.0..-0.1f64, 0.05..2.0f64, jump_measure()).prop_map(|(alpha, beta, jumps)| {
        // alpha < 0 and beta > 0 guarantee supercriticality and a root for
        // every family here.
        BranchingMechanism::new(alpha, beta, jumps).expect("constructed valid")
    })
}

fn immigration() -> impl Strategy<Value = ImmigrationMechanism> {
    (0.0..2.0f64, jump_measure())
        .prop_map(|(delta, jumps)| ImmigrationMechanism::new(delta, jumps).expect("valid"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn psi_vanishes_at_origin(mech in mechanism()) {
        prop_assert_eq!(mech.psi(0.0).unwrap(), 0.0);
        prop_assert!(mech.psi_prime(0.0).unwrap() < 0.0);
    }

    #[test]
    fn phi_vanishes_at_origin(imm in immigration()) {
        prop_assert_eq!(imm.phi(0.0).unwrap(), 0.0);
    }

    #[test]
    fn root_residual_is_tiny(mech in mechanism()) {
        let ls = mech.lambda_star().unwrap();
        prop_assert!(ls > 0.0);
        let scale = (mech.alpha.abs() * ls + mech.beta * ls * ls).max(1.0);
        prop_assert!(mech.psi(ls).unwrap().abs() < 1e-12 * scale);
    }

    #[test]
    fn psi_chord_convexity(mech in mechanism(), picks in [0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64]) {
        // For any l1 < l2 < l3 in [0, 3 lambda_star] the graph lies below
        // the chord.
        let ls = mech.lambda_star().unwrap();
        let mut ps = [picks[0], picks[1], picks[2]].map(|u| 3.0 * ls * u);
        ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let [l1, l2, l3] = ps;
        prop_assume!(l3 - l1 > 1e-9);
        let (f1, f2, f3) = (
            mech.psi(l1).unwrap(),
            mech.psi(l2).unwrap(),
            mech.psi(l3).unwrap(),
        );
        let chord = f1 + (f3 - f1) * (l2 - l1) / (l3 - l1);
        let scale = f1.abs().max(f3.abs()).max(1.0);
        prop_assert!(f2 <= chord + 1e-10 * scale, "psi({l2}) = {f2} above chord {chord}");
    }

    #[test]
    fn tilt_matches_difference_of_phi(imm in immigration(), ls in 0.2..2.5f64, lam in 0.0..4.0f64) {
        let direct = imm.phi_star(ls, lam).unwrap();
        let diff = imm.phi(lam + ls).unwrap() - imm.phi(ls).unwrap();
        prop_assert!((direct - diff).abs() < 1e-13 * (1.0 + direct.abs()));
    }

    #[test]
    fn shifted_tilt_reduces_at_zero(imm in immigration(), ls in 0.2..2.5f64, lam in 0.0..4.0f64) {
        let a = imm.phi_star_shifted(ls, 0.0, lam).unwrap();
        let b = imm.phi_star(ls, lam).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn conditioned_mechanism_is_subcritical(mech in mechanism()) {
        let t = mech.conditioned().unwrap();
        prop_assert!(t.psi_star(0.0).abs() < 1e-10 * (1.0 + t.shift()));
        prop_assert!(t.rate() > 0.0);
    }
}
