use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::TrainerConfig;
use crate::evaluate::{default_fractions, evaluate, mean_metric, EvalReport, LiftPoint, Metric};
use crate::{rng, Error, Result};

/// Fold id for every instance. Each class is shuffled and dealt round-robin;
/// negatives continue from the fold after the last positive, so fold sizes
/// differ by at most one.
pub fn stratified_folds(labels: &[bool], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::invalid("need at least two folds"));
    }
    if labels.len() < folds {
        return Err(Error::invalid(format!(
            "{} instances cannot fill {folds} folds",
            labels.len()
        )));
    }
    let mut r = rng::seeded(seed);
    let mut assignment = alloc::vec![0; labels.len()];
    let mut next = 0;
    for class in [true, false] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut r);
        for i in members {
            assignment[i] = next;
            next = (next + 1) % folds;
        }
    }
    Ok(assignment)
}

/// Fold-averaged metrics; undefined fold values are skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanReport {
    pub tp_rate: Metric,
    pub fp_rate: Metric,
    pub precision: Metric,
    pub recall: Metric,
    pub f_measure: Metric,
    pub roc_auc: Metric,
    pub lift: Vec<LiftPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<EvalReport>,
    pub mean: MeanReport,
    /// Out-of-fold score per instance.
    pub oof_scores: Vec<f64>,
    /// Metrics over all out-of-fold scores together.
    pub pooled: EvalReport,
}

fn mean_report(folds: &[EvalReport], fractions: &[f64]) -> MeanReport {
    let lift = fractions
        .iter()
        .enumerate()
        .filter_map(|(i, &fraction)| {
            let values: Vec<Metric> = folds
                .iter()
                .filter_map(|f| f.lift.get(i).map(|p| Metric::Value(p.lift)))
                .collect();
            mean_metric(&values).value().map(|lift| LiftPoint { fraction, lift })
        })
        .collect();
    MeanReport {
        tp_rate: mean_metric(folds.iter().map(|f| &f.tp_rate)),
        fp_rate: mean_metric(folds.iter().map(|f| &f.fp_rate)),
        precision: mean_metric(folds.iter().map(|f| &f.precision)),
        recall: mean_metric(folds.iter().map(|f| &f.recall)),
        f_measure: mean_metric(folds.iter().map(|f| &f.f_measure)),
        roc_auc: mean_metric(folds.iter().map(|f| &f.roc_auc)),
        lift,
    }
}

/// Stratified k-fold cross-validation at threshold 0.5 with the default
/// lift fractions. Fold `f` trains with seed `derive(seed, f)`.
pub fn cross_validate(
    x: &[Vec<f64>],
    y: &[bool],
    folds: usize,
    trainer: &TrainerConfig,
    seed: u64,
) -> Result<CvReport> {
    cross_validate_at(x, y, folds, trainer, seed, 0.5, &default_fractions())
}

/// [`cross_validate`] with an explicit decision threshold and lift fractions.
pub fn cross_validate_at(
    x: &[Vec<f64>],
    y: &[bool],
    folds: usize,
    trainer: &TrainerConfig,
    seed: u64,
    threshold: f64,
    fractions: &[f64],
) -> Result<CvReport> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("{} rows but {} labels", x.len(), y.len())));
    }
    let assignment = stratified_folds(y, folds, seed)?;
    let mut oof = alloc::vec![0.0; x.len()];
    let mut reports = Vec::with_capacity(folds);
    for f in 0..folds {
        let (mut train_x, mut train_y) = (Vec::new(), Vec::new());
        let mut test = Vec::new();
        for i in 0..x.len() {
            if assignment[i] == f {
                test.push(i);
            } else {
                train_x.push(x[i].clone());
                train_y.push(y[i]);
            }
        }
        let model = trainer.train(&train_x, &train_y, rng::derive(seed, f as u64))?;
        let mut scores = Vec::with_capacity(test.len());
        for &i in &test {
            let s = model.predict_proba(&x[i])?;
            oof[i] = s;
            scores.push(s);
        }
        let labels: Vec<bool> = test.iter().map(|&i| y[i]).collect();
        reports.push(evaluate(&scores, &labels, threshold, fractions)?);
    }
    Ok(CvReport {
        mean: mean_report(&reports, fractions),
        pooled: evaluate(&oof, y, threshold, fractions)?,
        folds: reports,
        oof_scores: oof,
    })
}
