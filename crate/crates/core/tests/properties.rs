//! Property tests for the algebraic invariants.

use proptest::prelude::*;

use cfrecon::attack::HalfspaceModel;
use cfrecon::loss::{bce, binary_entropy, cca_loss, clip_prob};
use cfrecon::nn::{BinaryClassifier, DenseNetwork, NetworkArchitecture};

proptest! {
    // Nonnegative everywhere; zero at and above the clamp threshold.
    #[test]
    fn cca_loss_nonnegative_and_clamped(
        p in 0.0f64..=1.0,
        k in 0.01f64..=1.0,
        y_idx in 0usize..3,
    ) {
        let y = [0.0, 0.5, 1.0][y_idx];
        let loss = cca_loss(p, y, k).unwrap();
        prop_assert!(loss >= 0.0, "negative loss {loss}");
        if y == 0.5 && clip_prob(p) >= k {
            prop_assert_eq!(loss, 0.0);
        }
    }

    // Nonincreasing in p on (0, k] for the counterfactual label.
    #[test]
    fn cca_loss_monotone_below_threshold(
        a in 0.001f64..=0.5,
        b in 0.001f64..=0.5,
        k in 0.5f64..=1.0,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let loss_lo = cca_loss(lo, 0.5, k).unwrap();
        let loss_hi = cca_loss(hi, 0.5, k).unwrap();
        prop_assert!(loss_lo >= loss_hi - 1e-12,
            "loss increased from p={lo} ({loss_lo}) to p={hi} ({loss_hi})");
    }

    // k = 1 reduces to the baseline treatment: bce against label 1 for
    // counterfactuals, plain bce otherwise. The single point p = 1 is the
    // exception: the exact identity cca_loss(k, 0.5, k) = 0 takes
    // precedence there over the clipped bce value of ~1e-7.
    #[test]
    fn cca_loss_at_k1_is_baseline(p in 0.0f64..=1.0, y_idx in 0usize..3) {
        let y = [0.0, 0.5, 1.0][y_idx];
        let clamped = cca_loss(p, y, 1.0).unwrap();
        if y == 0.5 && p >= 1.0 {
            prop_assert_eq!(clamped, 0.0);
        } else {
            let baseline = if y == 0.5 { bce(p, 1.0) } else { bce(p, y) };
            prop_assert_eq!(clamped.to_bits(), baseline.to_bits());
        }
    }

    // bce(p, p) is the binary entropy.
    #[test]
    fn bce_self_is_entropy(p in 0.0f64..=1.0) {
        let pc = clip_prob(p);
        prop_assert!((bce(pc, pc) - binary_entropy(pc)).abs() < 1e-12);
    }

    // Forward output stays strictly inside (0, 1) for finite weights.
    #[test]
    fn forward_is_a_probability(
        seed in 0u64..1000,
        x0 in 0.0f64..=1.0,
        x1 in 0.0f64..=1.0,
        x2 in 0.0f64..=1.0,
    ) {
        let net = DenseNetwork::init(
            &NetworkArchitecture::new(3, vec![5, 4], seed).unwrap(),
        );
        let p = net.forward(&[x0, x1, x2]).unwrap();
        prop_assert!(p > 0.0 && p < 1.0, "p = {p}");
    }

    // Serialization round-trips bit-exactly.
    #[test]
    fn model_serde_round_trip(seed in 0u64..500) {
        let net = DenseNetwork::init(
            &NetworkArchitecture::new(4, vec![6, 3], seed).unwrap(),
        );
        let back = DenseNetwork::deserialize(&net.serialize()).unwrap();
        prop_assert_eq!(net, back);
    }

    // Adding a halfspace can only shrink the accepted set.
    #[test]
    fn polytope_acceptance_shrinks(
        normals in prop::collection::vec((-1.0f64..=1.0, -1.0f64..=1.0), 1..6),
        anchors in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 6),
        point in (0.0f64..=1.0, 0.0f64..=1.0),
    ) {
        let x = [point.0, point.1];
        let mut model = HalfspaceModel::new();
        let mut previous = model.predict(&x);
        for (normal, anchor) in normals.iter().zip(&anchors) {
            if model
                .push(vec![normal.0, normal.1], vec![anchor.0, anchor.1])
                .is_err()
            {
                continue; // zero normal rejected
            }
            let current = model.predict(&x);
            prop_assert!(current <= previous);
            previous = current;
        }
    }

    // Thresholded prediction agrees with the sign of the logit.
    #[test]
    fn predict_matches_logit_sign(
        seed in 0u64..200,
        x0 in 0.0f64..=1.0,
        x1 in 0.0f64..=1.0,
    ) {
        let net = DenseNetwork::init(
            &NetworkArchitecture::new(2, vec![4], seed).unwrap(),
        );
        let x = [x0, x1];
        let class = net.predict_class(&x).unwrap();
        let logit = net.logit(&x).unwrap();
        prop_assert_eq!(class == 1, logit >= 0.0);
    }
}
