use std::collections::BTreeSet;

use mixnet::blend::{blend_weights, BlendConfig, BlendCurves, BlendState};
use mixnet::losses::sq_dist;
use mixnet::metrics::{accuracy, auc, f1, F1Kind};
use mixnet::model::{mine_semi_hard_triplets, MiningBranch};
use mixnet::nn::{softmax, Tensor4};
use mixnet::trialdata::{generate_synthetic, make_splits, SplitKind, SynthSpec};
use proptest::prelude::*;

fn curves_from(series: &[Vec<(f64, f64)>]) -> Vec<BlendCurves> {
    // prefix snapshots are not needed; a single growing object is enough
    let mut c = BlendCurves::default();
    let mut out = Vec::new();
    for n in 0..series[0].len() {
        for (m, s) in series.iter().enumerate() {
            c.record_checkpoint(m, n + 1, s[n].0, s[n].1).unwrap();
        }
        out.push(c.clone());
    }
    out
}

fn loss_walk(start: f64, steps: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let (mut tr, mut va) = (start, start);
    steps
        .iter()
        .map(|&(a, b)| {
            tr = (tr + a).max(0.0);
            va = (va + b).max(0.0);
            (tr, va)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn blend_weights_are_a_distribution(
        steps in prop::collection::vec(prop::collection::vec((-1.0f64..0.5, -1.0f64..0.8), 30), 3),
        starts in prop::collection::vec(1.0f64..100.0, 3),
        warm in 2usize..6,
    ) {
        let series: Vec<Vec<(f64, f64)>> = steps.iter().zip(&starts).map(|(s, &x)| loss_walk(x, s)).collect();
        let cfg = BlendConfig { warmup_epochs: warm, window: 3, exponent: 2.0 };
        let mut state = BlendState::new(cfg);
        for (n, curves) in curves_from(&series).iter().enumerate() {
            let w = state.update_weights(curves, n + 1).unwrap();
            if n + 1 < cfg.warmup_checkpoints() {
                prop_assert_eq!(w, [1.0 / 3.0; 3]);
            } else {
                prop_assert!(w.iter().all(|&v| v >= 0.0));
                prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        let post: Vec<_> = state.history.iter().filter(|r| !r.warmup).collect();
        for pair in post.windows(2) {
            for m in 0..3 {
                prop_assert!(pair[1].ref_tan_val[m] <= pair[0].ref_tan_val[m]);
            }
        }
    }

    #[test]
    fn larger_overfitting_means_smaller_weight(
        g in prop::collection::vec(0.01f64..2.0, 3),
        o in prop::collection::vec(0.01f64..2.0, 3),
        task in 0usize..3,
        factor in 1.01f64..10.0,
    ) {
        let before = blend_weights(&g, &o, 2.0).unwrap();
        let mut o2 = o.clone();
        o2[task] *= factor;
        let after = blend_weights(&g, &o2, 2.0).unwrap();
        prop_assert!(after[task] < before[task]);
        prop_assert!(g[task] / o2[task].powi(2) < g[task] / o[task].powi(2));
    }

    #[test]
    fn softmax_is_a_distribution(v in prop::collection::vec(-50.0f64..50.0, 1..8)) {
        let p = softmax(&v);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn mined_triplets_respect_labels(
        z in prop::collection::vec(-3.0f64..3.0, 24),
        labels in prop::collection::vec(0usize..2, 8),
        margin in 0.1f64..10.0,
    ) {
        let t = Tensor4::from_vec(8, 1, 3, z).unwrap();
        let mined = mine_semi_hard_triplets(&t, &labels, margin);
        let n_pos = |c: usize| labels.iter().filter(|&&l| l == c).count();
        let expected: usize = if n_pos(0) == 0 || n_pos(1) == 0 {
            0
        } else {
            (0..2).map(|c| n_pos(c) * n_pos(c).saturating_sub(1)).sum()
        };
        prop_assert_eq!(mined.len(), expected);
        for (tr, br) in mined.triplets.iter().zip(&mined.branches) {
            prop_assert!(tr.anchor != tr.positive);
            prop_assert_eq!(labels[tr.anchor], labels[tr.positive]);
            prop_assert_ne!(labels[tr.anchor], labels[tr.negative]);
            let dap = sq_dist(t.sample(tr.anchor), t.sample(tr.positive));
            let dan = sq_dist(t.sample(tr.anchor), t.sample(tr.negative));
            match br {
                MiningBranch::SemiHard => prop_assert!(dap < dan && dan < dap + margin),
                MiningBranch::Easy => prop_assert!(dan >= dap + margin),
                MiningBranch::Hardest => prop_assert!(dan <= dap),
            }
        }
    }

    #[test]
    fn auc_ignores_monotone_transforms(
        scores in prop::collection::vec(0.0f64..1.0, 4..30),
        seed in 0u64..1000,
    ) {
        let y: Vec<usize> = (0..scores.len()).map(|i| (i as u64 * 7 + seed).is_multiple_of(3) as usize).collect();
        prop_assume!(y.contains(&0) && y.contains(&1));
        let a = auc(&y, &scores).unwrap();
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 2.0).collect();
        prop_assert!((a - auc(&y, &warped).unwrap()).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((a + auc(&y, &flipped).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn classification_metrics_in_unit_range(
        y in prop::collection::vec(0usize..2, 1..40),
        flips in prop::collection::vec(any::<bool>(), 40),
    ) {
        let y_hat: Vec<usize> = y.iter().zip(&flips).map(|(&v, &f)| if f { 1 - v } else { v }).collect();
        let acc = accuracy(&y, &y_hat).unwrap();
        let wrong = flips.iter().take(y.len()).filter(|&&f| f).count();
        prop_assert!((acc - (1.0 - wrong as f64 / y.len() as f64)).abs() < 1e-12);
        for kind in [F1Kind::Binary, F1Kind::Macro] {
            let v = f1(&y, &y_hat, kind).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn splits_partition_each_subject(
        subjects in 1usize..4,
        per_class in 5usize..12,
        k in 2usize..6,
        seed in 0u64..100,
    ) {
        let spec = SynthSpec {
            n_subjects: subjects,
            n_sessions: 2,
            trials_per_class_per_session: per_class,
            n_channels: 4,
            mixing: mixnet::trialdata::default_mixing(4),
            duration: 1.0,
            ..SynthSpec::default()
        };
        let set = generate_synthetic(&spec).unwrap();
        let plan = make_splits(&set, SplitKind::SubjectDependent, k, seed).unwrap();
        prop_assert_eq!(plan.folds.len(), k * subjects);
        for fold in &plan.folds {
            let tr: BTreeSet<usize> = fold.train.iter().copied().collect();
            let va: BTreeSet<usize> = fold.val.iter().copied().collect();
            let te: BTreeSet<usize> = fold.test.iter().copied().collect();
            prop_assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));
            prop_assert_eq!(tr.len() + va.len(), 2 * per_class);
            prop_assert_eq!(te.len(), 2 * per_class);
            for &i in tr.iter().chain(&va) {
                prop_assert_eq!(set.subject_ids()[i], fold.subject);
                prop_assert_eq!(set.session_ids()[i], 0);
            }
            for &i in &te {
                prop_assert_eq!(set.session_ids()[i], 1);
            }
            for c in 0..2 {
                let count = fold.val.iter().filter(|&&i| set.labels()[i] == c).count();
                prop_assert!(count >= per_class / k && count <= per_class.div_ceil(k));
            }
        }
        // validation folds of a subject tile its pool exactly once
        for s in 0..subjects as u32 {
            let mut seen: Vec<usize> = plan.folds.iter().filter(|f| f.subject == s).flat_map(|f| f.val.clone()).collect();
            let n = seen.len();
            seen.sort_unstable();
            seen.dedup();
            prop_assert_eq!(seen.len(), n);
            prop_assert_eq!(n, 2 * per_class);
        }

        if subjects >= 2 {
            let loso = make_splits(&set, SplitKind::SubjectIndependent, k, seed).unwrap();
            for fold in &loso.folds {
                prop_assert!(fold.test.iter().all(|&i| set.subject_ids()[i] == fold.subject));
                prop_assert!(fold.train.iter().chain(&fold.val).all(|&i| set.subject_ids()[i] != fold.subject));
            }
        }
    }
}

#[test]
fn scaling_a_task_scales_its_weight_inversely() {
    let c = 4.0;
    let mut state = BlendState::new(BlendConfig {
        warmup_epochs: 2,
        window: 3,
        exponent: 2.0,
    });
    let mut curves = BlendCurves::default();
    for n in 1..=16usize {
        let x = n as f64;
        let train = 10.0 / x;
        let val = 10.0 / x + 0.05 * x * x;
        let other_val = 10.0 / x + 0.02 * x * x;
        curves.record_checkpoint(0, n, train, val).unwrap();
        curves.record_checkpoint(1, n, c * train, c * val).unwrap();
        curves.record_checkpoint(2, n, train, other_val).unwrap();
        state.update_weights(&curves, n).unwrap();
    }
    let mut checked = 0;
    for r in state.history.iter().filter(|r| !r.warmup) {
        if r.g[0] > 0.0 && r.o[0] > 1e-6 {
            assert!((r.g[1] - c * r.g[0]).abs() < 1e-9 * c * r.g[0]);
            assert!((r.o[1] - c * r.o[0]).abs() < 1e-9 * c * r.o[0]);
            assert!((r.weights[1] * c - r.weights[0]).abs() < 1e-9);
            checked += 1;
        }
    }
    assert!(checked > 0);
}
