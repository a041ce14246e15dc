//! Synthetic contributor populations with planted roles, role shifts and
//! churn hazards, plus a recovery check for fitted topic models.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use chrono::NaiveDate;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::dtm::DtmModel;
use crate::hungarian::max_similarity_assignment;
use crate::ingest::{EditEvent, QuarterClock};
use crate::{math, rng, Error, Result};

/// How planted topics evolve across slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopicSchedule {
    Static,
    /// Gaussian random walk on log-probabilities with variance `sigma2` per
    /// slice.
    Drift {
        sigma2: f64,
    },
    /// One `K x V` matrix per slice.
    Explicit {
        slices: Vec<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HazardConfig {
    /// Leaving probability after the first active quarter.
    pub first_quarter: f64,
    /// Leaving probability after later quarters with no role shift.
    pub base: f64,
    /// Added to the logit of `base` per unit of L1 role shift.
    pub shift_coupling: f64,
    /// Number of most recent shifts averaged into the hazard.
    pub shift_memory: usize,
}

impl Default for HazardConfig {
    fn default() -> Self {
        Self {
            first_quarter: 0.35,
            base: 0.15,
            shift_coupling: 0.0,
            shift_memory: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// `K x V` topic-word distributions at slice 0.
    pub topics: Vec<Vec<f64>>,
    pub quarters: u32,
    pub users: usize,
    /// Dirichlet concentration of per-quarter mixtures around the user's
    /// current role mean.
    pub concentration: f64,
    /// Range the primary role's weight is drawn from.
    pub primary_weight: (f64, f64),
    /// Per-quarter probability of redrawing the primary weight.
    pub weight_shift_probability: f64,
    /// Per-quarter probability of switching primary role.
    pub role_switch_probability: f64,
    /// Mean edits per active quarter (at least one).
    pub edits_mean: f64,
    /// Negative-binomial size; smaller is more dispersed.
    pub edits_dispersion: f64,
    /// Probability of sitting out a quarter while still a member.
    pub skip_probability: f64,
    pub hazard: HazardConfig,
    pub schedule: TopicSchedule,
    pub epoch: NaiveDate,
    pub seed: u64,
}

/// `K` roles over `V` terms, each holding `dominance` of its mass on its own
/// contiguous block of terms and the rest spread evenly.
pub fn planted_roles(topics: usize, vocab: usize, dominance: f64) -> Vec<Vec<f64>> {
    let block = (vocab / topics.max(1)).max(1);
    (0..topics)
        .map(|k| {
            let own: Vec<usize> = (k * block..((k + 1) * block).min(vocab)).collect();
            let others = vocab - own.len();
            (0..vocab)
                .map(|v| {
                    if own.contains(&v) {
                        dominance / own.len() as f64
                    } else if others > 0 {
                        (1.0 - dominance) / others as f64
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            topics: planted_roles(7, 28, 0.9),
            quarters: 12,
            users: 2000,
            concentration: 20.0,
            primary_weight: (0.5, 0.95),
            weight_shift_probability: 0.3,
            role_switch_probability: 0.0,
            edits_mean: 30.0,
            edits_dispersion: 2.0,
            skip_probability: 0.0,
            hazard: HazardConfig::default(),
            schedule: TopicSchedule::Static,
            epoch: NaiveDate::from_ymd_opt(2001, 1, 1).expect("valid date"),
            seed: 0,
        }
    }
}

fn check_simplex(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::invalid(format!("{what} has negative or non-finite entries")));
    }
    if (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("{what} does not sum to 1")));
    }
    Ok(())
}

fn check_probability(p: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("{what} must lie in [0, 1]")));
    }
    Ok(())
}

impl SynthConfig {
    pub fn roles(&self) -> usize {
        self.topics.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.topics.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.vocab_size();
        if self.topics.is_empty() || v == 0 {
            return Err(Error::invalid("need at least one role over a non-empty vocabulary"));
        }
        for (k, row) in self.topics.iter().enumerate() {
            if row.len() != v {
                return Err(Error::invalid(format!(
                    "role {k} has {} terms, expected {v}",
                    row.len()
                )));
            }
            check_simplex(row, &format!("role {k}"))?;
        }
        if self.quarters == 0 {
            return Err(Error::invalid("need at least one quarter"));
        }
        if self.concentration.is_nan() || self.concentration <= 0.0 {
            return Err(Error::invalid("concentration must be positive"));
        }
        let (lo, hi) = self.primary_weight;
        if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
            return Err(Error::invalid("primary weight range must satisfy 0 <= lo <= hi <= 1"));
        }
        check_probability(self.weight_shift_probability, "weight_shift_probability")?;
        check_probability(self.role_switch_probability, "role_switch_probability")?;
        check_probability(self.skip_probability, "skip_probability")?;
        check_probability(self.hazard.first_quarter, "first-quarter hazard")?;
        check_probability(self.hazard.base, "base hazard")?;
        if !(self.hazard.shift_coupling >= 0.0 && self.hazard.shift_coupling.is_finite()) {
            return Err(Error::invalid("shift coupling must be finite and non-negative"));
        }
        if self.hazard.shift_memory == 0 {
            return Err(Error::invalid("shift memory must be at least 1"));
        }
        if self.edits_mean.is_nan()
            || self.edits_mean < 1.0
            || self.edits_dispersion.is_nan()
            || self.edits_dispersion <= 0.0
        {
            return Err(Error::invalid("edits mean must be >= 1 and dispersion positive"));
        }
        match &self.schedule {
            TopicSchedule::Static => {}
            TopicSchedule::Drift { sigma2 } => {
                if !(*sigma2 >= 0.0 && sigma2.is_finite()) {
                    return Err(Error::invalid("drift variance must be finite and non-negative"));
                }
            }
            TopicSchedule::Explicit { slices } => {
                if slices.len() != self.quarters as usize {
                    return Err(Error::invalid("explicit schedule needs one matrix per quarter"));
                }
                for (t, m) in slices.iter().enumerate() {
                    if m.len() != self.roles() {
                        return Err(Error::invalid(format!("slice {t} has the wrong role count")));
                    }
                    for (k, row) in m.iter().enumerate() {
                        if row.len() != v {
                            return Err(Error::invalid(format!(
                                "slice {t} role {k} has {} terms, expected {v}",
                                row.len()
                            )));
                        }
                        check_simplex(row, &format!("slice {t} role {k}"))?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Planted topics for every slice.
pub fn planted_topics(config: &SynthConfig) -> Result<Vec<Vec<Vec<f64>>>> {
    config.validate()?;
    let t = config.quarters as usize;
    Ok(match &config.schedule {
        TopicSchedule::Static => vec![config.topics.clone(); t],
        TopicSchedule::Explicit { slices } => slices.clone(),
        TopicSchedule::Drift { sigma2 } if *sigma2 == 0.0 => vec![config.topics.clone(); t],
        TopicSchedule::Drift { sigma2 } => {
            let mut r = rng::seeded(rng::derive(config.seed, u64::MAX));
            let noise = Normal::new(0.0, math::sqrt(*sigma2)).expect("finite variance");
            let mut natural: Vec<Vec<f64>> = config
                .topics
                .iter()
                .map(|row| row.iter().map(|&p| math::ln(p)).collect())
                .collect();
            let mut out = vec![config.topics.clone()];
            for _ in 1..t {
                for row in &mut natural {
                    for x in row.iter_mut() {
                        *x += noise.sample(&mut r);
                    }
                }
                out.push(natural.iter().map(|row| softmax(row)).collect());
            }
            out
        }
    })
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|&v| math::exp(v - max)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// True history of one synthetic user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserTruth {
    pub user: String,
    pub join: u32,
    /// Last quarter the user was a member (active or skipping).
    pub last: u32,
    /// Whether the hazard ended membership before the data ran out.
    pub departed: bool,
    /// Primary role per member quarter, from `join`.
    pub primary: Vec<usize>,
    /// `(quarter, theta)` for each quarter with emitted edits.
    pub thetas: Vec<(u32, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub users: Vec<UserTruth>,
    /// `T x K x V`.
    pub topics: Vec<Vec<Vec<f64>>>,
}

fn edit_count(r: &mut rng::Rng, mean: f64, size: f64) -> u64 {
    let extra = mean - 1.0;
    if extra <= 0.0 {
        return 1;
    }
    let lambda = Gamma::new(size, extra / size).expect("positive parameters").sample(r);
    if lambda <= 0.0 {
        return 1;
    }
    1 + Poisson::new(lambda).expect("positive rate").sample(r) as u64
}

fn role_mean(roles: usize, primary: usize, weight: f64) -> Vec<f64> {
    if roles == 1 {
        return vec![1.0];
    }
    let rest = (1.0 - weight) / (roles - 1) as f64;
    (0..roles).map(|k| if k == primary { weight } else { rest }).collect()
}

fn hazard(config: &HazardConfig, recent: &VecDeque<f64>) -> f64 {
    if recent.is_empty() {
        return config.first_quarter;
    }
    let shift = recent.iter().sum::<f64>() / recent.len() as f64;
    let h = math::logistic(math::logit(config.base) + config.shift_coupling * shift);
    if h.is_nan() {
        config.base
    } else {
        h
    }
}

pub fn user_id(i: usize) -> String {
    format!("u{i:05}")
}

/// Generates the event stream, sorted by `(timestamp, user)`, and its ground
/// truth. User `i` draws from stream `derive(seed, i)`.
pub fn generate_population(config: &SynthConfig) -> Result<(Vec<EditEvent>, GroundTruth)> {
    let topics = planted_topics(config)?;
    let clock = QuarterClock::new(config.epoch);
    let k = config.roles();
    let t_end = config.quarters;
    let mut events = Vec::new();
    let mut users = Vec::with_capacity(config.users);
    for i in 0..config.users {
        let user = user_id(i);
        let mut r = rng::seeded(rng::derive(config.seed, i as u64));
        let join = r.random_range(0..t_end);
        let mut primary = r.random_range(0..k);
        let (lo, hi) = config.primary_weight;
        let mut weight = if hi > lo { r.random_range(lo..=hi) } else { lo };
        let mut truth = UserTruth {
            user: user.clone(),
            join,
            last: join,
            departed: false,
            primary: Vec::new(),
            thetas: Vec::new(),
        };
        let mut previous: Option<Vec<f64>> = None;
        let mut recent: VecDeque<f64> = VecDeque::new();
        for q in join..t_end {
            if q > join {
                if k > 1 && r.random::<f64>() < config.role_switch_probability {
                    primary = (primary + r.random_range(1..k)) % k;
                }
                if r.random::<f64>() < config.weight_shift_probability {
                    weight = if hi > lo { r.random_range(lo..=hi) } else { lo };
                }
            }
            truth.primary.push(primary);
            truth.last = q;
            let skipped = q > join && r.random::<f64>() < config.skip_probability;
            if !skipped {
                let mean = role_mean(k, primary, weight);
                let alpha: Vec<f64> = mean.iter().map(|m| (m * config.concentration).max(1e-3)).collect();
                let theta = rng::dirichlet(&mut r, &alpha);
                let n = edit_count(&mut r, config.edits_mean, config.edits_dispersion);
                let start = clock.quarter_start(q);
                let len = clock.quarter_start(q + 1) - start;
                for _ in 0..n {
                    let z = rng::categorical(&mut r, &theta);
                    let ns = rng::categorical(&mut r, &topics[q as usize][z]);
                    events.push(EditEvent {
                        user: user.clone(),
                        timestamp: start + r.random_range(0..len),
                        namespace: ns,
                    });
                }
                if let Some(prev) = &previous {
                    recent.push_back(math::l1_distance(prev, &theta));
                    if recent.len() > config.hazard.shift_memory {
                        recent.pop_front();
                    }
                }
                previous = Some(theta.clone());
                truth.thetas.push((q, theta));
            }
            if r.random::<f64>() < hazard(&config.hazard, &recent) {
                truth.departed = q + 1 < t_end;
                break;
            }
        }
        users.push(truth);
    }
    events.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.user.cmp(&b.user)));
    Ok((events, GroundTruth { users, topics }))
}

/// How well fitted topics match planted ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// Fitted topic matched to each planted role.
    pub matching: Vec<usize>,
    /// Slice-averaged cosine per planted role under the matching.
    pub topic_cosine: Vec<f64>,
    pub mean_cosine: f64,
    /// Mean matched cosine per slice.
    pub slice_cosine: Vec<f64>,
    /// Mean L1 change of planted topics between consecutive slices.
    pub planted_drift: Vec<f64>,
    /// The same for the matched fitted topics.
    pub fitted_drift: Vec<f64>,
    /// Mean absolute difference between the two drift series.
    pub drift_error: f64,
}

/// Hungarian matching of fitted to planted topics on slice-averaged cosine.
pub fn evaluate_recovery(model: &DtmModel, truth: &[Vec<Vec<f64>>]) -> Result<RecoveryReport> {
    let t = model.num_slices();
    if truth.len() != t {
        return Err(Error::invalid(format!("{} planted slices for {t} fitted", truth.len())));
    }
    let k = model.topics();
    if truth.iter().any(|m| m.len() != k) {
        return Err(Error::invalid(format!(
            "planted role count differs from the model's {k}"
        )));
    }
    let mut sim = vec![vec![0.0; k]; k];
    for (a, row) in sim.iter_mut().enumerate() {
        for (b, s) in row.iter_mut().enumerate() {
            *s = (0..t)
                .map(|s| math::cosine(&truth[s][a], &model.beta[s][b]))
                .sum::<f64>()
                / t as f64;
        }
    }
    let matching = max_similarity_assignment(&sim);
    let topic_cosine: Vec<f64> = (0..k).map(|a| sim[a][matching[a]]).collect();
    let slice_cosine = (0..t)
        .map(|s| {
            (0..k)
                .map(|a| math::cosine(&truth[s][a], &model.beta[s][matching[a]]))
                .sum::<f64>()
                / k as f64
        })
        .collect();
    let drift = |slices: &[&[Vec<f64>]]| -> Vec<f64> {
        (1..t)
            .map(|s| {
                (0..k)
                    .map(|a| math::l1_distance(slices[s][a].as_slice(), &slices[s - 1][a]))
                    .sum::<f64>()
                    / k as f64
            })
            .collect()
    };
    let matched: Vec<Vec<Vec<f64>>> = model
        .beta
        .iter()
        .map(|m| matching.iter().map(|&j| m[j].clone()).collect())
        .collect();
    let planted_drift = drift(&truth.iter().map(Vec::as_slice).collect::<Vec<_>>());
    let fitted_drift = drift(&matched.iter().map(Vec::as_slice).collect::<Vec<_>>());
    let drift_error = if planted_drift.is_empty() {
        0.0
    } else {
        planted_drift
            .iter()
            .zip(&fitted_drift)
            .map(|(p, f)| math::abs(p - f))
            .sum::<f64>()
            / planted_drift.len() as f64
    };
    Ok(RecoveryReport {
        mean_cosine: math::mean(&topic_cosine),
        matching,
        topic_cosine,
        slice_cosine,
        planted_drift,
        fitted_drift,
        drift_error,
    })
}
