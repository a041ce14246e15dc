use super::*;
use alloc::vec;
use proptest::prelude::*;
use rand::Rng as _;

use crate::evaluate::roc_auc;
use crate::rng;

fn one_dimensional(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut r = rng::seeded(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random_range(-1.0..1.0)]).collect();
    let y = x.iter().map(|v| v[0] > 0.0).collect();
    (x, y)
}

fn noisy(n: usize, p: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut r = rng::seeded(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| r.random::<f64>()).collect()).collect();
    let y = (0..n).map(|i| i % 3 == 0).collect();
    (x, y)
}

fn forest(n_trees: usize) -> TrainerConfig {
    TrainerConfig::RandomForest(ForestConfig {
        n_trees,
        ..ForestConfig::default()
    })
}

#[test]
fn separable_forest_fits_training_data() {
    let (x, y) = one_dimensional(200, 1);
    let model = forest(50).train(&x, &y, 7).unwrap();
    let correct = x
        .iter()
        .zip(&y)
        .filter(|(v, &l)| (model.predict_proba(v).unwrap() > 0.5) == l)
        .count();
    assert!(correct as f64 / 200.0 >= 0.99);
}

#[test]
fn conflicting_duplicates_sit_near_half() {
    let x = vec![vec![1.0]; 40];
    let y: Vec<bool> = (0..40).map(|i| i % 2 == 0).collect();
    for seed in 0..5 {
        let p = forest(100).train(&x, &y, seed).unwrap().predict_proba(&[1.0]).unwrap();
        assert!((p - 0.5).abs() <= 0.15, "seed {seed}: {p}");
    }
}

#[test]
fn depth_zero_stump_predicts_majority() {
    let (x, _) = noisy(90, 3, 2);
    let y: Vec<bool> = (0..90).map(|i| i % 10 == 0).collect();
    let cfg = TrainerConfig::RandomForest(ForestConfig {
        n_trees: 1,
        max_depth: Some(0),
        ..ForestConfig::default()
    });
    let model = cfg.train(&x, &y, 3).unwrap();
    assert!(x.iter().all(|v| model.predict_proba(v).unwrap() == 0.0));
}

#[test]
fn forest_is_deterministic_and_bounded() {
    let (x, y) = noisy(120, 5, 4);
    let a = forest(20).train(&x, &y, 11).unwrap();
    let b = forest(20).train(&x, &y, 11).unwrap();
    assert_eq!(a, b);
    for v in &x {
        let p = a.predict_proba(v).unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
}

#[test]
fn trees_use_offset_seeds() {
    let (x, y) = noisy(60, 4, 5);
    let cfg = ForestConfig {
        n_trees: 3,
        ..ForestConfig::default()
    };
    let three = train_forest(&x, &y, &cfg, 100).unwrap();
    let one = ForestConfig {
        n_trees: 1,
        ..ForestConfig::default()
    };
    for t in 0..3 {
        assert_eq!(
            train_forest(&x, &y, &one, 100 + t as u64).unwrap().trees[0],
            three.trees[t]
        );
    }
}

#[test]
fn feature_contract_enforced() {
    let (x, y) = one_dimensional(20, 1);
    let model = forest(2).train(&x, &y, 0).unwrap();
    assert_eq!(
        model.predict_proba(&[0.1, 0.2]),
        Err(Error::FeatureContract { expected: 1, got: 2 })
    );
}

#[test]
fn training_errors() {
    let x = vec![vec![0.0], vec![1.0]];
    assert_eq!(forest(1).train(&x, &[true, true], 0), Err(Error::SingleClass));
    assert!(forest(1).train(&[], &[], 0).is_err());
    assert!(forest(1)
        .train(&[vec![f64::NAN], vec![1.0]], &[true, false], 0)
        .is_err());
    let bad = TrainerConfig::RandomForest(ForestConfig {
        features_per_split: Some(2),
        ..ForestConfig::default()
    });
    assert!(bad.train(&x, &[true, false], 0).is_err());
}

#[test]
fn mtry_defaults_to_rounded_root() {
    let c = ForestConfig::default();
    assert_eq!(resolve_mtry(&c, 26).unwrap(), 5);
    assert_eq!(resolve_mtry(&c, 2).unwrap(), 1);
    assert_eq!(resolve_mtry(&c, 0).unwrap(), 0);
}

#[test]
fn logistic_separable_auc_one() {
    let (x, y) = one_dimensional(100, 2);
    let model = TrainerConfig::Logistic(LogisticConfig::default())
        .train(&x, &y, 0)
        .unwrap();
    let scores = model.predict_all(&x).unwrap();
    assert_eq!(roc_auc(&scores, &y).unwrap(), 1.0);
}

#[test]
fn logistic_constant_column_gets_zero_weight() {
    let (mut x, y) = one_dimensional(50, 3);
    for row in &mut x {
        row.push(4.0);
    }
    let model = train_logistic(&x, &y, &LogisticConfig::default()).unwrap();
    assert_eq!(model.weights[1], 0.0);
}

#[test]
fn logistic_intercept_only_predicts_base_rate() {
    let x = vec![vec![2.0, 2.0]; 40];
    let y: Vec<bool> = (0..40).map(|i| i % 4 == 0).collect();
    let model = TrainerConfig::Logistic(LogisticConfig::default())
        .train(&x, &y, 0)
        .unwrap();
    assert!((model.predict_proba(&[2.0, 2.0]).unwrap() - 0.25).abs() < 1e-9);
}

#[test]
fn folds_of_twenty_into_ten() {
    let y: Vec<bool> = (0..20).map(|i| i % 3 == 0).collect();
    let folds = stratified_folds(&y, 10, 5).unwrap();
    for f in 0..10 {
        assert_eq!(folds.iter().filter(|&&g| g == f).count(), 2);
    }
    assert!(stratified_folds(&y, 1, 5).is_err());
    assert!(stratified_folds(&y[..5], 10, 5).is_err());
}

#[test]
fn perfect_signal_cross_validates() {
    let (x, y) = one_dimensional(300, 9);
    let cv = cross_validate(&x, &y, 10, &forest(30), 1).unwrap();
    assert!(cv.mean.roc_auc.value().unwrap() >= 0.99);
    assert_eq!(cv.folds.len(), 10);
    assert_eq!(cv.oof_scores.len(), 300);
}

#[test]
fn shuffled_labels_cross_validate_to_chance() {
    let mut aucs = Vec::new();
    for seed in 0..3 {
        let (x, _) = one_dimensional(600, 20 + seed);
        let mut r = rng::seeded(seed);
        let y: Vec<bool> = (0..600).map(|_| r.random::<bool>()).collect();
        let cv = cross_validate(&x, &y, 10, &forest(30), seed).unwrap();
        aucs.push(cv.mean.roc_auc.value().unwrap());
    }
    let mean = crate::math::mean(&aucs);
    assert!((0.45..=0.55).contains(&mean), "{aucs:?}");
}

#[test]
fn cross_validation_is_deterministic() {
    let (x, y) = noisy(80, 3, 1);
    let a = cross_validate(&x, &y, 5, &forest(10), 3).unwrap();
    let b = cross_validate(&x, &y, 5, &forest(10), 3).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #[test]
    fn folds_partition_and_stratify(
        labels in prop::collection::vec(any::<bool>(), 10..200),
        folds in 2usize..11,
        seed in any::<u64>(),
    ) {
        let a = stratified_folds(&labels, folds, seed).unwrap();
        prop_assert_eq!(a.len(), labels.len());
        prop_assert!(a.iter().all(|&f| f < folds));
        let n = labels.len() as f64;
        let pos = labels.iter().filter(|&&l| l).count() as f64;
        for f in 0..folds {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| a[i] == f).collect();
            let fp = members.iter().filter(|&&i| labels[i]).count() as f64;
            let expected = pos * members.len() as f64 / n;
            prop_assert!((fp - expected).abs() <= 1.0 + 1e-9);
        }
    }
}
