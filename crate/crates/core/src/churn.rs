//! Sliding-window churn examples built from role-mixture trajectories.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::dtm::RoleMixture;
use crate::ingest::ActivityRecord;
use crate::{math, rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChurnConfig {
    /// Window length in quarters.
    pub window: u32,
    pub departed_horizon: u32,
    pub staying_horizon: u32,
    /// Stabiliser in the relative POAP change.
    pub delta: f64,
    /// Churners to non-churners, e.g. `(1, 2)`.
    pub class_ratio: (usize, usize),
    /// Users with fewer active quarters overall are left out.
    pub min_active_quarters: usize,
}

impl Default for ChurnConfig {
    fn default() -> Self {
        Self {
            window: 4,
            departed_horizon: 1,
            staying_horizon: 3,
            delta: 0.001,
            class_ratio: (1, 2),
            min_active_quarters: 4,
        }
    }
}

impl ChurnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 1 {
            return Err(Error::invalid("window must be at least one quarter"));
        }
        if self.departed_horizon < 1 || self.departed_horizon >= self.staying_horizon {
            return Err(Error::invalid("horizons must satisfy 1 <= m < n"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid("delta must be positive"));
        }
        if self.class_ratio.0 == 0 || self.class_ratio.1 == 0 {
            return Err(Error::invalid("class ratio parts must be positive"));
        }
        Ok(())
    }
}

/// Window `index` covering quarters `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub index: usize,
    pub start: u32,
    pub end: u32,
}

impl Window {
    pub fn quarters(&self) -> core::ops::RangeInclusive<u32> {
        self.start..=self.end
    }
}

/// All labelable windows for `quarters` quarters of data.
pub fn enumerate_windows(quarters: u32, config: &ChurnConfig) -> Vec<Window> {
    let w = config.window;
    let need = w + config.staying_horizon;
    if quarters < need {
        log::warn!("{quarters} quarters cannot hold a window of {w} plus a staying horizon");
        return Vec::new();
    }
    (0..=quarters - need)
        .map(|j| Window {
            index: j as usize,
            start: j,
            end: j + w - 1,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Departed,
    Staying,
    Excluded,
}

pub fn label_user(active: &BTreeSet<u32>, window: &Window, config: &ChurnConfig) -> Result<Label> {
    if active.range(window.quarters()).next().is_none() {
        return Err(Error::invalid(format!(
            "user inactive throughout window {}..={}",
            window.start, window.end
        )));
    }
    let e = window.end;
    Ok(match active.range(e + 1..).next() {
        None => Label::Departed,
        Some(_) if active.range(e + config.staying_horizon..).next().is_some() => Label::Staying,
        Some(_) => Label::Excluded,
    })
}

/// One user's activity and per-quarter role mixtures.
#[derive(Debug, Clone, PartialEq)]
pub struct UserHistory {
    pub user: String,
    pub active: BTreeSet<u32>,
    pub poap: BTreeMap<u32, Vec<f64>>,
}

/// Groups records and mixtures by user, sorted by user id.
pub fn user_histories(records: &[ActivityRecord], mixtures: &[RoleMixture]) -> Vec<UserHistory> {
    let mut by_user: BTreeMap<String, UserHistory> = BTreeMap::new();
    fn entry<'a>(map: &'a mut BTreeMap<String, UserHistory>, user: &str) -> &'a mut UserHistory {
        map.entry(user.into()).or_insert_with(|| UserHistory {
            user: user.into(),
            active: BTreeSet::new(),
            poap: BTreeMap::new(),
        })
    }
    for r in records {
        entry(&mut by_user, &r.user).active.insert(r.quarter);
    }
    for m in mixtures {
        entry(&mut by_user, &m.user).poap.insert(m.quarter, m.theta.clone());
    }
    by_user.into_values().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    FirstActiveQuarter,
    CumulativeActiveQuarters,
    FracActiveLifespan,
    FracActiveWindow,
    DiversityEntropy,
    MeanPoap,
    DeltaPoap,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 7] = [
        FeatureGroup::FirstActiveQuarter,
        FeatureGroup::CumulativeActiveQuarters,
        FeatureGroup::FracActiveLifespan,
        FeatureGroup::FracActiveWindow,
        FeatureGroup::DiversityEntropy,
        FeatureGroup::MeanPoap,
        FeatureGroup::DeltaPoap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureGroup::FirstActiveQuarter => "first_active_quarter",
            FeatureGroup::CumulativeActiveQuarters => "cumulative_active_quarters",
            FeatureGroup::FracActiveLifespan => "frac_active_lifespan",
            FeatureGroup::FracActiveWindow => "frac_active_window",
            FeatureGroup::DiversityEntropy => "diversity_entropy",
            FeatureGroup::MeanPoap => "mean_poap",
            FeatureGroup::DeltaPoap => "delta_poap",
        }
    }

    /// Columns of this group in a feature vector over `roles` roles.
    pub fn columns(self, roles: usize) -> Range<usize> {
        match self {
            FeatureGroup::FirstActiveQuarter => 0..1,
            FeatureGroup::CumulativeActiveQuarters => 1..2,
            FeatureGroup::FracActiveLifespan => 2..3,
            FeatureGroup::FracActiveWindow => 3..4,
            FeatureGroup::DiversityEntropy => 4..5,
            FeatureGroup::MeanPoap => 5..5 + roles,
            FeatureGroup::DeltaPoap => 5 + roles..5 + 3 * roles,
        }
    }
}

pub fn num_features(roles: usize) -> usize {
    5 + 3 * roles
}

pub fn feature_names(roles: usize) -> Vec<String> {
    let mut names: Vec<String> = FeatureGroup::ALL[..5].iter().map(|g| g.name().into()).collect();
    for prefix in ["mean_poap", "delta_poap_mean", "delta_poap_max"] {
        names.extend((0..roles).map(|k| format!("{prefix}_{k}")));
    }
    names
}

/// Relative change of one role's POAP between consecutive quarters.
pub fn delta_poap(previous: f64, current: f64, delta: f64) -> f64 {
    (current - previous + delta) / (previous + delta)
}

/// Feature vector of one user for one window over `roles` roles.
pub fn compute_features(
    history: &UserHistory,
    window: &Window,
    quarters: u32,
    roles: usize,
    config: &ChurnConfig,
) -> Result<Vec<f64>> {
    if window.end >= quarters || window.end < window.start {
        return Err(Error::invalid(format!(
            "window {}..={} outside {quarters} quarters",
            window.start, window.end
        )));
    }
    let first = *history
        .active
        .first()
        .ok_or_else(|| Error::invalid(format!("{} has no activity", history.user)))?;
    if first > window.end {
        return Err(Error::invalid(format!(
            "{} starts after window {}",
            history.user, window.index
        )));
    }
    let zero = vec![0.0; roles];
    let mut poaps: Vec<&[f64]> = Vec::with_capacity((window.end - window.start + 1) as usize);
    for q in window.quarters() {
        if history.active.contains(&q) {
            let theta = history
                .poap
                .get(&q)
                .ok_or_else(|| Error::invalid(format!("{} has no role mixture at quarter {q}", history.user)))?;
            if theta.len() != roles {
                return Err(Error::invalid(format!(
                    "{} mixture at quarter {q} has {} roles, expected {roles}",
                    history.user,
                    theta.len()
                )));
            }
            poaps.push(theta);
        } else {
            poaps.push(&zero);
        }
    }
    let len = poaps.len() as f64;
    let cumulative = history.active.range(..=window.end).count() as f64;
    let in_window = history.active.range(window.quarters()).count() as f64;

    let mut f = Vec::with_capacity(num_features(roles));
    f.push(f64::from(first));
    f.push(cumulative);
    f.push(cumulative / f64::from(window.end - first + 1));
    f.push(in_window / f64::from(config.window));
    f.push(poaps.iter().map(|p| math::entropy(p)).sum::<f64>() / len);
    for k in 0..roles {
        f.push(poaps.iter().map(|p| p[k]).sum::<f64>() / len);
    }
    let mut means = vec![0.0; roles];
    let mut maxes = vec![0.0; roles];
    if poaps.len() > 1 {
        let pairs = (poaps.len() - 1) as f64;
        for k in 0..roles {
            let changes = poaps.windows(2).map(|p| delta_poap(p[0][k], p[1][k], config.delta));
            let (sum, max) = changes.fold((0.0, f64::NEG_INFINITY), |(s, m), x| (s + x, m.max(x)));
            means[k] = sum / pairs;
            maxes[k] = max;
        }
    }
    f.extend(means);
    f.extend(maxes);
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChurnLabel {
    Departed,
    Staying,
}

impl ChurnLabel {
    pub fn is_departed(self) -> bool {
        self == ChurnLabel::Departed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChurnExample {
    pub user: String,
    pub window: usize,
    pub features: Vec<f64>,
    pub label: ChurnLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub roles: usize,
    pub feature_names: Vec<String>,
    pub examples: Vec<ChurnExample>,
}

impl Dataset {
    pub fn labels(&self) -> Vec<bool> {
        self.examples.iter().map(|e| e.label.is_departed()).collect()
    }

    pub fn features(&self) -> Vec<&[f64]> {
        self.examples.iter().map(|e| e.features.as_slice()).collect()
    }
}

/// Balanced examples per window plus the indices of skipped windows.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBuild {
    pub dataset: Dataset,
    pub skipped_windows: Vec<usize>,
}

/// Retained counts for `churners` and `stayers` under `ratio`, keeping the
/// ratio exact by flooring.
pub fn balanced_counts(churners: usize, stayers: usize, ratio: (usize, usize)) -> (usize, usize) {
    let units = (churners / ratio.0).min(stayers / ratio.1);
    (units * ratio.0, units * ratio.1)
}

/// Labels every eligible user in every window, drops excluded instances and
/// down-samples each window to the configured class ratio. Output is ordered
/// by window, then user.
pub fn build_dataset(
    histories: &[UserHistory],
    quarters: u32,
    roles: usize,
    config: &ChurnConfig,
    seed: u64,
) -> Result<DatasetBuild> {
    config.validate()?;
    let eligible: Vec<&UserHistory> = histories
        .iter()
        .filter(|h| h.active.range(..quarters).count() >= config.min_active_quarters)
        .collect();
    let mut examples = Vec::new();
    let mut skipped = Vec::new();
    for window in enumerate_windows(quarters, config) {
        let mut departed = Vec::new();
        let mut staying = Vec::new();
        for h in &eligible {
            if h.active.range(window.quarters()).next().is_none() {
                continue;
            }
            match label_user(&h.active, &window, config)? {
                Label::Departed => departed.push(*h),
                Label::Staying => staying.push(*h),
                Label::Excluded => {}
            }
        }
        if departed.is_empty() || staying.is_empty() {
            log::warn!(
                "window {} has {} churners and {} non-churners; skipped",
                window.index,
                departed.len(),
                staying.len()
            );
            skipped.push(window.index);
            continue;
        }
        let (keep_d, keep_s) = balanced_counts(departed.len(), staying.len(), config.class_ratio);
        if keep_d == 0 {
            log::warn!("window {} too small to balance; skipped", window.index);
            skipped.push(window.index);
            continue;
        }
        let mut r = rng::seeded(rng::derive(seed, window.index as u64));
        let mut chosen: Vec<(&UserHistory, ChurnLabel)> = Vec::with_capacity(keep_d + keep_s);
        for (pool, keep, label) in [
            (&departed, keep_d, ChurnLabel::Departed),
            (&staying, keep_s, ChurnLabel::Staying),
        ] {
            let mut picked = index::sample(&mut r, pool.len(), keep).into_vec();
            picked.sort_unstable();
            chosen.extend(picked.into_iter().map(|i| (pool[i], label)));
        }
        chosen.sort_by(|a, b| a.0.user.cmp(&b.0.user));
        for (h, label) in chosen {
            examples.push(ChurnExample {
                user: h.user.clone(),
                window: window.index,
                features: compute_features(h, &window, quarters, roles, config)?,
                label,
            });
        }
    }
    Ok(DatasetBuild {
        dataset: Dataset {
            roles,
            feature_names: feature_names(roles),
            examples,
        },
        skipped_windows: skipped,
    })
}
