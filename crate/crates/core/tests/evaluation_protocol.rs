mod common;

use std::collections::HashSet;

use dualspace::cohort::{holdout_count, split_holdout, subset_pair, Comparison, Diagnosis, FeatureTable, Hemisphere};
use dualspace::dual::{fit_dual, fuse};
use dualspace::evaluation::{
    cross_validate, cross_validate_with, evaluate_holdout, metrics_from_confusion, ConfusionMatrix,
    CvResult, DualRecipe, FoldAssignment, RowPrediction,
};
use dualspace::gda::{fit_rows, Decision, GdaConfig};
use dualspace::synth::{generate, CohortSpec};
use dualspace::Error;
use proptest::prelude::*;

fn cohort(seed: u64) -> FeatureTable {
    common::planted(
        seed,
        60,
        10,
        &[
            (Hemisphere::Left, 0, 1.2),
            (Hemisphere::Left, 4, 0.8),
            (Hemisphere::Right, 2, 1.0),
            (Hemisphere::Right, 7, 0.6),
        ],
    )
}

fn recipe() -> DualRecipe {
    DualRecipe {
        left_subset: vec![0, 4, 5],
        right_subset: vec![2, 7],
        gda: GdaConfig::default(),
    }
}

/// Subject-level OR containment plus the rate inequalities it implies.
fn assert_or_monotone(predictions: &[RowPrediction], cv: &CvResult) {
    for p in predictions {
        for side in [p.left, p.right].into_iter().flatten() {
            if side {
                assert!(p.predicted_positive);
            }
        }
        if p.predicted_positive {
            assert!(p.left == Some(true) || p.right == Some(true));
        }
    }
    for side in [&cv.per_space.left, &cv.per_space.right].into_iter().flatten() {
        assert!(cv.metrics.sensitivity >= side.sensitivity);
        assert!(cv.metrics.specificity <= side.specificity);
    }
}

#[test]
fn fixture_confusion_metrics_are_exact() {
    let m = metrics_from_confusion(&ConfusionMatrix { tp: 9, fn_: 1, tn: 5, fp: 5 });
    assert_eq!((m.f1, m.accuracy, m.sensitivity, m.specificity), (0.75, 0.7, 0.9, 0.5));
    assert!(m.undefined.is_empty());
    let json = serde_json::to_value(ConfusionMatrix { tp: 9, fn_: 1, tn: 5, fp: 5 }).unwrap();
    assert_eq!(json, serde_json::json!({"tp": 9, "fp": 5, "tn": 5, "fn": 1}));
}

#[test]
fn cached_cv_matches_refitting_every_fold() {
    for seed in 0..5 {
        let t = cohort(seed);
        let folds = FoldAssignment::stratified(&t, 10, seed).unwrap();
        let r = recipe();
        let fast = cross_validate(&t, &r, &folds).unwrap();
        let (neg, pos) = t.binary_classes().unwrap();
        let slow = cross_validate_with(&t, &folds, |train, test| {
            let left = fit_rows(&t, train, Hemisphere::Left, &r.left_subset, &r.gda)?;
            let right = fit_rows(&t, train, Hemisphere::Right, &r.right_subset, &r.gda)?;
            test.iter()
                .map(|&i| {
                    let s = &t.subjects()[i];
                    let (l, rr) = (left.classify_subject(s)?, right.classify_subject(s)?);
                    let fused = fuse([neg, pos], Some(l), Some(rr));
                    Ok(RowPrediction {
                        truth_positive: s.diagnosis == pos,
                        predicted_positive: fused.label == pos,
                        log_odds: fused.log_odds,
                        left: Some(l.label == pos),
                        right: Some(rr.label == pos),
                    })
                })
                .collect()
        })
        .unwrap();
        assert_eq!(fast.confusion, slow.confusion);
        assert_eq!(fast.per_fold.len(), 10);
        for (a, b) in fast.predictions.iter().zip(&slow.predictions) {
            assert_eq!(
                (a.predicted_positive, a.left, a.right),
                (b.predicted_positive, b.left, b.right)
            );
            assert!((a.log_odds - b.log_odds).abs() <= 1e-8 * (1.0 + a.log_odds.abs()));
        }
        assert_or_monotone(&fast.predictions, &fast);
    }
}

#[test]
fn pooled_matrix_is_the_sum_of_folds() {
    let t = cohort(3);
    let folds = FoldAssignment::stratified(&t, 7, 1).unwrap();
    let cv = cross_validate(&t, &recipe(), &folds).unwrap();
    let mut sum = ConfusionMatrix::default();
    for f in &cv.per_fold {
        sum.merge(&f.confusion);
    }
    assert_eq!(sum, cv.confusion);
    assert_eq!(cv.confusion.total() as usize, t.len());
    let mean_f1 = cv.per_fold.iter().map(|f| f.metrics.f1).sum::<f64>() / 7.0;
    assert!((cv.macro_metrics.f1 - mean_f1).abs() < 1e-15);
}

#[test]
fn stratified_folds_are_balanced_and_seeded() {
    let t = generate(&CohortSpec {
        n_per_class: [23, 31, 0],
        schema: common::schema(1, 2),
        seed: 2,
        ..CohortSpec::default()
    })
    .unwrap();
    let folds = FoldAssignment::stratified(&t, 10, 4).unwrap();
    let mut sizes = Vec::new();
    for f in 0..10 {
        let test = folds.test_rows(f);
        let train = folds.train_rows(f);
        assert_eq!(test.len() + train.len(), t.len());
        for class in [Diagnosis::CN, Diagnosis::MCI] {
            let n = test.iter().filter(|&&i| t.subjects()[i].diagnosis == class).count();
            assert!(n == 2 || n == 3 || n == 4, "{class} has {n} in fold {f}");
        }
        sizes.push(test.len());
    }
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    assert_eq!(FoldAssignment::stratified(&t, 10, 4).unwrap(), folds);
    assert_ne!(FoldAssignment::stratified(&t, 10, 5).unwrap().fold_of, folds.fold_of);
}

#[test]
fn tiny_class_cannot_fill_every_fold() {
    let t = common::planted(0, 5, 3, &[]);
    let folds = FoldAssignment::stratified(&t, 10, 0).unwrap();
    let r = DualRecipe {
        left_subset: vec![0],
        right_subset: vec![],
        gda: GdaConfig::default(),
    };
    assert!(matches!(cross_validate(&t, &r, &folds), Err(Error::FoldMissingClass(_))));
}

#[test]
fn holdout_rejects_training_subjects() {
    let t = cohort(9);
    let (train, test) = split_holdout(&t, 0.2, 9).unwrap();
    let model = fit_dual(&train, &[0, 4], &[2], &GdaConfig::default()).unwrap();
    let h = evaluate_holdout(&model, &test).unwrap();
    assert_eq!(h.confusion.total() as usize, test.len());
    for p in &h.predictions {
        assert_eq!(p.predicted_positive, p.left == Some(true) || p.right == Some(true));
    }
    assert!(matches!(evaluate_holdout(&model, &t), Err(Error::TrainTestOverlap(n)) if n == train.len()));
}

#[test]
fn single_space_recipe_is_that_space() {
    let t = cohort(4);
    let folds = FoldAssignment::stratified(&t, 5, 4).unwrap();
    let r = DualRecipe {
        left_subset: vec![],
        right_subset: vec![2, 7],
        gda: GdaConfig::default(),
    };
    let cv = cross_validate(&t, &r, &folds).unwrap();
    assert!(cv.per_space.left.is_none());
    assert_eq!(cv.per_space.right.as_ref().unwrap().f1, cv.metrics.f1);
    let empty = DualRecipe {
        right_subset: vec![],
        ..r
    };
    assert!(matches!(cross_validate(&t, &empty, &folds), Err(Error::BothSubsetsEmpty)));
}

#[test]
fn fused_score_follows_the_or_label() {
    let d = |pos: bool, lo: f64| Decision {
        label: if pos { Diagnosis::AD } else { Diagnosis::CN },
        log_odds: lo,
    };
    let classes = [Diagnosis::CN, Diagnosis::AD];
    assert_eq!(fuse(classes, Some(d(false, -1.0)), Some(d(true, 0.5))), d(true, 0.5));
    assert_eq!(fuse(classes, Some(d(false, -1.0)), Some(d(false, -3.0))), d(false, -1.0));
    assert_eq!(fuse(classes, None, Some(d(true, 2.0))), d(true, 2.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn holdout_split_partitions_each_class(seed in 0u64..10_000, frac in 0.05f64..0.95, n in prop::array::uniform3(2usize..40)) {
        let t = generate(&CohortSpec {
            n_per_class: n,
            schema: common::schema(1, 1),
            seed,
            ..CohortSpec::default()
        })
        .unwrap();
        let (train, test) = split_holdout(&t, frac, seed).unwrap();
        let ids = |x: &FeatureTable| x.subject_ids().map(str::to_string).collect::<HashSet<_>>();
        let (a, b) = (ids(&train), ids(&test));
        prop_assert!(a.is_disjoint(&b));
        prop_assert_eq!(a.len() + b.len(), t.len());
        for (class, size) in t.class_counts() {
            prop_assert_eq!(test.class_counts().get(&class).copied().unwrap_or(0), holdout_count(frac, size));
        }
        // splitting commutes with restricting to a pair
        let pair = subset_pair(&t, Comparison::CnVsAd).unwrap();
        let (ptrain, ptest) = split_holdout(&pair, frac, seed).unwrap();
        prop_assert_eq!(ids(&ptest), ids(&subset_pair(&test, Comparison::CnVsAd).unwrap()));
        prop_assert_eq!(ids(&ptrain), ids(&subset_pair(&train, Comparison::CnVsAd).unwrap()));
    }

    #[test]
    fn or_fusion_is_monotone_on_every_run(seed in 0u64..10_000, k in 2usize..8) {
        let t = cohort(seed);
        let folds = FoldAssignment::stratified(&t, k, seed).unwrap();
        let cv = cross_validate(&t, &recipe(), &folds).unwrap();
        assert_or_monotone(&cv.predictions, &cv);
    }
}
