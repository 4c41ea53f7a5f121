use depthforge::acw::{self, ConfidenceHead};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scores(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

proptest! {
    #[test]
    fn confidence_stays_inside_the_open_interval(
        seed in any::<u64>(),
        x in prop::collection::vec(-50.0f64..50.0, 12),
    ) {
        prop_assume!(x.iter().any(|v| v.abs() > 1e-6));
        let head = ConfidenceHead::init(12, 8, &mut ChaCha8Rng::seed_from_u64(seed));
        let c = head.confidence(&x).unwrap();
        prop_assert!(c > 0.0 && c < 1.0);
        let scaled: Vec<f64> = x.iter().map(|v| v * 7.5).collect();
        prop_assert!((head.confidence(&scaled).unwrap() - c).abs() < 1e-12);
    }

    #[test]
    fn one_hot_weights_select_a_modality(a in scores(9), b in scores(9), pick in 0usize..2) {
        let w = if pick == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
        let fused = acw::fuse(&[&a, &b], &w).unwrap();
        prop_assert_eq!(fused, if pick == 0 { a } else { b });
    }

    #[test]
    fn fusion_is_linear_in_the_weights(a in scores(6), b in scores(6), wa in 0.0f64..1.0, wb in 0.0f64..1.0) {
        let fused = acw::fuse(&[&a, &b], &[wa, wb]).unwrap();
        for i in 0..6 {
            prop_assert!((fused[i] - (wa * a[i] + wb * b[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_is_first_maximum(s in prop::collection::vec(-3i32..3, 1..20)) {
        let f: Vec<f64> = s.iter().map(|&v| v as f64).collect();
        let best = acw::argmax(&f).unwrap();
        let max = *s.iter().max().unwrap();
        prop_assert_eq!(best, s.iter().position(|&v| v == max).unwrap());
    }

    #[test]
    fn interpolation_stays_between_logit_and_target(
        z in scores(7), y in 0usize..7, c in 0.0f64..=1.0,
    ) {
        let zi = acw::interpolate_logits(&z, y, c);
        for i in 0..7 {
            let t = if i == y { 1.0 } else { 0.0 };
            let (lo, hi) = (z[i].min(t), z[i].max(t));
            prop_assert!(zi[i] >= lo - 1e-15 && zi[i] <= hi + 1e-15);
        }
    }
}
