use std::collections::BTreeSet;

use ngcl_core::data::synth_blobs;
use ngcl_core::fisher::FisherDiagonal;
use ngcl_core::harness::{build_task_stream, partition_classes};
use ngcl_core::nn::{softmax, softmax_cross_entropy};
use ngcl_core::optimizer::natural_gradient;
use ngcl_core::regularizer::{penalty, regularized_loss, RegStrength, TaskAnchor};
use proptest::prelude::*;

fn anchor(theta: Vec<f64>, fisher: Vec<f64>) -> TaskAnchor {
    let n = fisher.len();
    TaskAnchor::new(theta.into(), FisherDiagonal::new(fisher, n).unwrap(), 0).unwrap()
}

fn triple(len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-5.0f64..5.0, len),
        prop::collection::vec(-5.0f64..5.0, len),
        prop::collection::vec(0.0f64..3.0, len),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn partition_is_a_disjoint_cover(total in 1usize..300, per_task in 1usize..60, seed in any::<u64>()) {
        prop_assume!(per_task <= total);
        let chunks = partition_classes(total, per_task, seed).unwrap();
        let mut seen = BTreeSet::new();
        for chunk in &chunks {
            for &c in chunk {
                prop_assert!(c < total);
                prop_assert!(seen.insert(c), "class {} appears twice", c);
            }
        }
        prop_assert_eq!(seen.len(), total);
        prop_assert_eq!(chunks.len(), total.div_ceil(per_task));
        for chunk in &chunks[..chunks.len() - 1] {
            prop_assert_eq!(chunk.len(), per_task);
        }
        let last = chunks.last().unwrap().len();
        let rem = total % per_task;
        prop_assert_eq!(last, if rem == 0 { per_task } else { rem });
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-700.0f64..700.0, 1..12)) {
        let p = softmax(&logits);
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12, "sum {}", sum);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
        for (label, &pl) in p.iter().enumerate() {
            let ce = softmax_cross_entropy(&logits, label).unwrap();
            prop_assert!(ce >= 0.0 && ce.is_finite());
            if pl > 1e-300 {
                prop_assert!((ce + pl.ln()).abs() <= 1e-9 * ce.max(1.0));
            }
        }
    }

    #[test]
    fn softmax_shift_invariant(logits in prop::collection::vec(-50.0f64..50.0, 1..8), shift in -100.0f64..100.0) {
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        for (a, b) in softmax(&logits).iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn penalty_scales_quadratically((theta, star, fisher) in triple(6), c in -4.0f64..4.0) {
        let a = anchor(star.clone(), fisher.clone());
        let base = penalty(&theta, &a).unwrap();
        let scaled: Vec<f64> = theta.iter().zip(&star).map(|(t, s)| s + c * (t - s)).collect();
        let got = penalty(&scaled, &a).unwrap();
        prop_assert!((got - c * c * base).abs() <= 1e-9 * (c * c * base).max(1.0));
        prop_assert!(base >= 0.0);
    }

    #[test]
    fn penalty_additive_over_importances((theta, star, f1) in triple(5), f2 in prop::collection::vec(0.0f64..3.0, 5)) {
        let sum: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| a + b).collect();
        let p1 = penalty(&theta, &anchor(star.clone(), f1)).unwrap();
        let p2 = penalty(&theta, &anchor(star.clone(), f2)).unwrap();
        let p12 = penalty(&theta, &anchor(star, sum)).unwrap();
        prop_assert!((p12 - (p1 + p2)).abs() <= 1e-9 * p12.max(1.0));
    }

    #[test]
    fn regularized_loss_sums_anchors((theta, star, fisher) in triple(4), eps in 0.0f64..50.0, base in -3.0f64..3.0) {
        let a = anchor(star.clone(), fisher.clone());
        let b = anchor(theta.iter().map(|t| t * 0.5).collect(), fisher);
        let eps = RegStrength::new(eps).unwrap();
        let got = regularized_loss(base, &theta, &[a.clone(), b.clone()], eps).unwrap();
        let want = base + eps.value() * (penalty(&theta, &a).unwrap() + penalty(&theta, &b).unwrap());
        prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0));
        prop_assert!(got >= base - 1e-12);
    }

    #[test]
    fn natural_gradient_is_homogeneous(
        grad in prop::collection::vec(-10.0f64..10.0, 1..10),
        scale in 0.1f64..10.0,
        damping in 1e-3f64..1.0,
    ) {
        let n = grad.len();
        let fisher: Vec<f64> = (0..n).map(|i| 0.1 * i as f64).collect();
        let base = natural_gradient(&grad, &FisherDiagonal::new(fisher.clone(), n).unwrap(), damping).unwrap();
        let scaled_f: Vec<f64> = fisher.iter().map(|f| f * scale).collect();
        let out = natural_gradient(&grad, &FisherDiagonal::new(scaled_f, n).unwrap(), damping * scale).unwrap();
        for (b, o) in base.iter().zip(out.iter()) {
            prop_assert!((o * scale - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn streams_own_disjoint_contiguous_label_blocks(classes in 2usize..12, per_task in 1usize..6, seed in any::<u64>()) {
        prop_assume!(per_task <= classes);
        let d = synth_blobs(classes, 5, 2, 0.3, seed).unwrap();
        let (train, test) = d.split_train_test();
        let stream = build_task_stream(&train, &test, per_task, seed, None).unwrap();
        let mut next = 0;
        for task in &stream.tasks {
            let block: Vec<usize> = (next..next + task.class_ids.len()).collect();
            prop_assert_eq!(&task.class_ids, &block);
            for ex in task.train_set.iter().chain(&task.test_set) {
                prop_assert!(block.contains(&ex.label));
            }
            next += task.class_ids.len();
        }
        prop_assert_eq!(next, classes);
        let sources: BTreeSet<usize> = stream.tasks.iter().flat_map(|t| t.source_classes.clone()).collect();
        prop_assert_eq!(sources.len(), classes);
    }
}
