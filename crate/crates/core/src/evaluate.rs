//! Confusion metrics, rank AUC, lift curves and feature-group ablation.
//! The positive class is "departed" throughout.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::churn::FeatureGroup;
use crate::classify::{cross_validate, CvReport, TrainerConfig};
use crate::{math, Error, Result};

/// A metric value, or the reason it has none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Metric {
    Value(f64),
    Undefined { undefined: String },
}

impl Metric {
    pub fn undefined(reason: impl Into<String>) -> Self {
        Metric::Undefined {
            undefined: reason.into(),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(*v),
            Metric::Undefined { .. } => None,
        }
    }

    fn ratio(num: u64, den: u64, reason: &str) -> Self {
        if den == 0 {
            Metric::undefined(reason)
        } else {
            Metric::Value(num as f64 / den as f64)
        }
    }

    fn from_result(r: Result<f64>) -> Self {
        match r {
            Ok(v) => Metric::Value(v),
            Err(e) => Metric::undefined(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftPoint {
    pub fraction: f64,
    pub lift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tp_rate: Metric,
    pub fp_rate: Metric,
    pub precision: Metric,
    pub recall: Metric,
    pub f_measure: Metric,
    pub roc_auc: Metric,
    pub lift: Vec<LiftPoint>,
    pub counts: Counts,
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    Ok(())
}

fn both_classes(labels: &[bool]) -> Result<(u64, u64)> {
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Undefined(
            if pos == 0 {
                "no departed instances"
            } else {
                "no staying instances"
            }
            .into(),
        ));
    }
    Ok((pos, neg))
}

/// Threshold metrics; a score at or above `threshold` predicts departure.
/// `roc_auc` and `lift` are left undefined and empty.
pub fn confusion_metrics(scores: &[f64], labels: &[bool], threshold: f64) -> Result<EvalReport> {
    check_inputs(scores, labels)?;
    let mut c = Counts::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    let recall = Metric::ratio(c.tp, c.tp + c.fn_, "no departed instances");
    let precision = Metric::ratio(c.tp, c.tp + c.fp, "no departure predictions");
    let f_measure = match (precision.value(), recall.value()) {
        (Some(p), Some(r)) if p + r > 0.0 => Metric::Value(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Metric::Value(0.0),
        _ => Metric::undefined("precision or recall undefined"),
    };
    Ok(EvalReport {
        tp_rate: recall.clone(),
        fp_rate: Metric::ratio(c.fp, c.fp + c.tn, "no staying instances"),
        precision,
        recall,
        f_measure,
        roc_auc: Metric::undefined("not computed"),
        lift: Vec::new(),
        counts: c,
    })
}

/// Mann-Whitney AUC with average ranks for ties. Computed on doubled
/// integer ranks, so it is exact.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let (pos, neg) = both_classes(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum over positives of twice their (average) 1-based rank.
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let doubled = (i + 1 + j) as u128;
        let tied_pos = order[i..j].iter().filter(|&&k| labels[k]).count() as u128;
        doubled_rank_sum += doubled * tied_pos;
        i = j;
    }
    let p = u128::from(pos);
    let doubled_u = doubled_rank_sum - p * (p + 1);
    Ok(doubled_u as f64 / (2 * p * u128::from(neg)) as f64)
}

/// Selected fractions 0.05, 0.10, ..., 1.0.
pub fn default_fractions() -> Vec<f64> {
    (1..=20).map(|i| f64::from(i) / 20.0).collect()
}

/// Instances selected at fraction `s` of `n`: `ceil(s * n)`, ignoring
/// rounding noise just above an integer.
pub fn selected_count(s: f64, n: usize) -> usize {
    let x = s * n as f64;
    let r = math::round(x);
    let k = if math::abs(x - r) <= 1e-9 * r.max(1.0) {
        r
    } else {
        math::ceil(x)
    };
    (k as usize).clamp(1, n)
}

/// Lift at each fraction: share of departed instances in the top
/// `ceil(s N)` scores over the share of instances selected. Ties keep input
/// order.
pub fn lift_curve(scores: &[f64], labels: &[bool], fractions: &[f64]) -> Result<Vec<LiftPoint>> {
    check_inputs(scores, labels)?;
    let (pos, _) = both_classes(labels)?;
    if let Some(s) = fractions.iter().find(|s| !(**s > 0.0 && **s <= 1.0)) {
        return Err(Error::invalid(format!("fraction {s} outside (0, 1]")));
    }
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut captured = vec![0u64; n + 1];
    for (i, &k) in order.iter().enumerate() {
        captured[i + 1] = captured[i] + u64::from(labels[k]);
    }
    Ok(fractions
        .iter()
        .map(|&s| {
            let k = selected_count(s, n);
            let lift = (captured[k] as f64 * n as f64) / (pos as f64 * k as f64);
            LiftPoint { fraction: s, lift }
        })
        .collect())
}

/// Threshold metrics, AUC and lift in one report.
pub fn evaluate(scores: &[f64], labels: &[bool], threshold: f64, fractions: &[f64]) -> Result<EvalReport> {
    let mut report = confusion_metrics(scores, labels, threshold)?;
    report.roc_auc = Metric::from_result(roc_auc(scores, labels));
    report.lift = match lift_curve(scores, labels, fractions) {
        Ok(l) => l,
        Err(Error::Undefined(_)) => Vec::new(),
        Err(e) => return Err(e),
    };
    Ok(report)
}

/// Mean of the defined values.
pub fn mean_metric<'a>(values: impl IntoIterator<Item = &'a Metric>) -> Metric {
    let defined: Vec<f64> = values.into_iter().filter_map(Metric::value).collect();
    if defined.is_empty() {
        Metric::undefined("undefined in every fold")
    } else {
        Metric::Value(math::mean(&defined))
    }
}

fn delta(a: &Metric, b: &Metric) -> Metric {
    match (a.value(), b.value()) {
        (Some(a), Some(b)) => Metric::Value(a - b),
        _ => Metric::undefined("metric undefined for one of the models"),
    }
}

/// A named set of feature columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnGroup {
    pub name: String,
    pub columns: Vec<usize>,
}

/// The seven churn feature groups for `roles` roles.
pub fn churn_groups(roles: usize) -> Vec<ColumnGroup> {
    FeatureGroup::ALL
        .iter()
        .map(|g| ColumnGroup {
            name: g.name().into(),
            columns: g.columns(roles).collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub group: String,
    pub columns: Vec<usize>,
    pub roc_auc: Metric,
    pub f_measure: Metric,
    /// Ablated minus full; negative means the group helped.
    pub roc_auc_delta: Metric,
    pub f_measure_delta: Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub full_roc_auc: Metric,
    pub full_f_measure: Metric,
    pub groups: Vec<AblationEntry>,
}

impl AblationResult {
    /// Group whose removal lowers mean AUC the most.
    pub fn largest_drop(&self) -> Option<&AblationEntry> {
        self.groups
            .iter()
            .filter(|g| g.roc_auc_delta.value().is_some())
            .min_by(|a, b| {
                let (a, b) = (a.roc_auc_delta.value().unwrap(), b.roc_auc_delta.value().unwrap());
                a.total_cmp(&b)
            })
    }
}

/// Retrains without each group in turn under the same folds and seed and
/// reports mean-over-folds metric changes against the full model.
pub fn ablate(
    features: &[Vec<f64>],
    labels: &[bool],
    groups: &[ColumnGroup],
    trainer: &TrainerConfig,
    folds: usize,
    seed: u64,
) -> Result<AblationResult> {
    let p = features.first().map_or(0, Vec::len);
    for g in groups {
        if let Some(c) = g.columns.iter().find(|&&c| c >= p) {
            return Err(Error::invalid(format!("group {} references column {c} of {p}", g.name)));
        }
    }
    let full: CvReport = cross_validate(features, labels, folds, trainer, seed)?;
    let mut entries = Vec::with_capacity(groups.len());
    for g in groups {
        let keep: Vec<usize> = (0..p).filter(|c| !g.columns.contains(c)).collect();
        let reduced: Vec<Vec<f64>> = features
            .iter()
            .map(|row| keep.iter().map(|&c| row[c]).collect())
            .collect();
        let cv = cross_validate(&reduced, labels, folds, trainer, seed)?;
        log::debug!("ablation without {}: auc {:?}", g.name, cv.mean.roc_auc.value());
        entries.push(AblationEntry {
            group: g.name.clone(),
            columns: g.columns.clone(),
            roc_auc_delta: delta(&cv.mean.roc_auc, &full.mean.roc_auc),
            f_measure_delta: delta(&cv.mean.f_measure, &full.mean.f_measure),
            roc_auc: cv.mean.roc_auc,
            f_measure: cv.mean.f_measure,
        });
    }
    Ok(AblationResult {
        full_roc_auc: full.mean.roc_auc,
        full_f_measure: full.mean.f_measure,
        groups: entries,
    })
}
