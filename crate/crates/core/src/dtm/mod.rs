//! Dynamic topic model over a time-sliced corpus.
//!
//! Each slice is fitted by collapsed Gibbs sampling. Slices are chained
//! forward through their priors: the topic-word prior of slice `t` is
//! `eta + kappa * beta[t-1][k]` and the document-topic prior has mean
//! `alpha_mean[t-1]` with total mass `K * alpha`. The coupling `kappa`
//! plays the role of the random-walk precision `1 / sigma2`. A backward
//! smoothing pass then pulls each slice towards its successor with weight
//! `kappa / (n[t][k] + 2 kappa)`, the gain of a random-walk smoother whose
//! filtered precision is `n + kappa` and transition precision `kappa`.

mod gibbs;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, TimeSlicedCorpus, Vocabulary};
use crate::{rng, Error, Result};
use gibbs::{Init, Priors, SweepSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DtmConfig {
    pub topics: usize,
    /// Variance of the topic random walk between slices.
    pub sigma2: f64,
    /// `kappa = coupling_scale / sigma2`, capped at `coupling_cap`.
    pub coupling_scale: f64,
    pub coupling_cap: f64,
    /// Symmetric document-topic concentration.
    pub alpha: f64,
    /// Topic-word smoothing.
    pub eta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl DtmConfig {
    /// Defaults for `topics` topics: `alpha = 50 / K`, `eta = 0.01`.
    pub fn new(topics: usize) -> Self {
        Self {
            topics,
            sigma2: 0.01,
            coupling_scale: 1.0,
            coupling_cap: 10_000.0,
            alpha: 50.0 / topics.max(1) as f64,
            eta: 0.01,
            iterations: 200,
            burn_in: 100,
            seed: 0,
        }
    }

    pub fn coupling(&self) -> f64 {
        (self.coupling_scale / self.sigma2).min(self.coupling_cap)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::invalid(msg)) };
        check(self.topics >= 1, "topics must be >= 1")?;
        check(self.sigma2 > 0.0, "sigma2 must be > 0")?;
        check(self.coupling_scale > 0.0, "coupling_scale must be > 0")?;
        check(self.coupling_cap > 0.0, "coupling_cap must be > 0")?;
        check(self.alpha > 0.0, "alpha must be > 0")?;
        check(self.eta > 0.0, "eta must be > 0")?;
        check(self.iterations > self.burn_in, "iterations must exceed burn_in")
    }

    fn schedule(&self) -> SweepSchedule {
        SweepSchedule {
            iterations: self.iterations,
            burn_in: self.burn_in,
        }
    }
}

impl Default for DtmConfig {
    fn default() -> Self {
        Self::new(7)
    }
}

/// A single-slice LDA fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaFit {
    /// `K x V` topic-word distributions.
    pub beta: Vec<Vec<f64>>,
    /// Per-document topic proportions, in input order.
    pub thetas: Vec<Vec<f64>>,
    pub topic_tokens: Vec<f64>,
}

/// Fits LDA to one slice by collapsed Gibbs sampling with symmetric priors.
/// Estimates are averaged over the post-burn-in sweeps.
pub fn fit_lda(docs: &[Document], vocab_size: usize, config: &DtmConfig) -> Result<LdaFit> {
    config.validate()?;
    if docs.is_empty() {
        return Err(Error::invalid("cannot fit LDA to an empty slice"));
    }
    check_vocab(docs, vocab_size)?;
    let priors = Priors::symmetric(config.topics, vocab_size, config.alpha, config.eta);
    let mut rng = rng::seeded(slice_seed(config.seed, 0));
    let fit = gibbs::sample_slice(
        docs,
        vocab_size,
        config.topics,
        &priors,
        &config.schedule(),
        &mut rng,
        Init::Random,
    );
    Ok(LdaFit {
        beta: fit.beta,
        thetas: fit.thetas,
        topic_tokens: fit.topic_tokens,
    })
}

fn slice_seed(seed: u64, slice: usize) -> u64 {
    rng::derive(seed, slice as u64)
}

fn check_vocab(docs: &[Document], vocab_size: usize) -> Result<()> {
    match docs.iter().flat_map(|d| &d.terms).find(|&&(t, _)| t >= vocab_size) {
        Some(&(t, _)) => Err(Error::invalid(alloc::format!(
            "term id {t} outside vocabulary of {vocab_size}"
        ))),
        None => Ok(()),
    }
}

/// Fitted dynamic topic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtmModel {
    pub config: DtmConfig,
    pub vocab_size: usize,
    /// `beta[t][k]` is topic `k`'s distribution over terms in slice `t`.
    pub beta: Vec<Vec<Vec<f64>>>,
    /// `alpha[t]` is the mean topic mixture of slice `t`.
    pub alpha: Vec<Vec<f64>>,
    /// Average number of tokens assigned to each topic per slice (zero for
    /// empty slices).
    pub topic_tokens: Vec<Vec<f64>>,
}

impl DtmModel {
    pub fn num_slices(&self) -> usize {
        self.beta.len()
    }

    pub fn topics(&self) -> usize {
        self.config.topics
    }
}

pub fn fit_dtm(corpus: &TimeSlicedCorpus, config: &DtmConfig) -> Result<DtmModel> {
    config.validate()?;
    let t_len = corpus.num_slices();
    if t_len == 0 {
        return Err(Error::invalid("cannot fit a dynamic topic model to zero slices"));
    }
    let v = corpus.vocab.len();
    let k_len = config.topics;
    for slice in &corpus.slices {
        check_vocab(slice, v)?;
    }
    let kappa = config.coupling();
    let schedule = config.schedule();

    let mut beta: Vec<Vec<Vec<f64>>> = Vec::with_capacity(t_len);
    let mut alpha: Vec<Vec<f64>> = Vec::with_capacity(t_len);
    let mut tokens: Vec<Vec<f64>> = Vec::with_capacity(t_len);
    let mut fitted = vec![false; t_len];
    let mut prev: Option<usize> = None;

    for (t, docs) in corpus.slices.iter().enumerate() {
        if docs.is_empty() {
            match prev {
                Some(p) => {
                    beta.push(beta[p].clone());
                    alpha.push(alpha[p].clone());
                }
                None => {
                    beta.push(vec![vec![1.0 / v as f64; v]; k_len]);
                    alpha.push(vec![1.0 / k_len as f64; k_len]);
                }
            }
            tokens.push(vec![0.0; k_len]);
            continue;
        }
        let mut rng = rng::seeded(slice_seed(config.seed, t));
        let fit = match prev {
            None => {
                let priors = Priors::symmetric(k_len, v, config.alpha, config.eta);
                gibbs::sample_slice(docs, v, k_len, &priors, &schedule, &mut rng, Init::Random)
            }
            Some(p) => {
                let mut word = Vec::with_capacity(k_len * v);
                for topic in &beta[p] {
                    word.extend(topic.iter().map(|b| config.eta + kappa * b));
                }
                let mass = config.alpha * k_len as f64;
                let priors = Priors {
                    word,
                    doc: alpha[p].iter().map(|a| mass * a).collect(),
                };
                gibbs::sample_slice(docs, v, k_len, &priors, &schedule, &mut rng, Init::Topics(&beta[p]))
            }
        };
        let mut mean = vec![0.0; k_len];
        for theta in &fit.thetas {
            for (m, x) in mean.iter_mut().zip(theta) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= fit.thetas.len() as f64;
        }
        beta.push(fit.beta);
        alpha.push(mean);
        tokens.push(fit.topic_tokens);
        fitted[t] = true;
        prev = Some(t);
    }

    // Backward pass over the chain of fitted slices.
    let chain: Vec<usize> = (0..t_len).filter(|&t| fitted[t]).collect();
    for pair in chain.windows(2).rev() {
        let (t, next) = (pair[0], pair[1]);
        for k in 0..k_len {
            let gain = kappa / (tokens[t][k] + 2.0 * kappa);
            let (head, tail) = beta.split_at_mut(next);
            for (b, s) in head[t][k].iter_mut().zip(&tail[0][k]) {
                *b = (1.0 - gain) * *b + gain * s;
            }
        }
    }
    // Empty slices carry the final value of their predecessor.
    for t in 1..t_len {
        if !fitted[t] && chain.first().is_some_and(|&first| t > first) {
            beta[t] = beta[t - 1].clone();
            alpha[t] = alpha[t - 1].clone();
        }
    }

    Ok(DtmModel {
        config: config.clone(),
        vocab_size: v,
        beta,
        alpha,
        topic_tokens: tokens,
    })
}

/// One document's role mixture (its POAP vector).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleMixture {
    pub user: String,
    pub quarter: u32,
    pub theta: Vec<f64>,
}

const FOLD_IN_STREAM: u64 = 0x666f_6c64;

/// Fold-in Gibbs estimate of a document's topic proportions against the
/// frozen topics of its slice, using the symmetric prior `alpha`. The random
/// stream is keyed by (seed, user, slice) so results do not depend on the
/// order documents are processed in.
pub fn infer_theta(model: &DtmModel, doc: &Document) -> Result<RoleMixture> {
    let t = doc.slice;
    if t >= model.num_slices() {
        return Err(Error::invalid(alloc::format!(
            "document slice {t} outside model with {} slices",
            model.num_slices()
        )));
    }
    check_vocab(core::slice::from_ref(doc), model.vocab_size)?;
    let seed = rng::derive(
        model.config.seed ^ rng::hash_str(&doc.user),
        FOLD_IN_STREAM.wrapping_add(t as u64),
    );
    let mut rng = rng::seeded(seed);
    let theta = gibbs::fold_in(
        doc,
        &model.beta[t],
        model.config.alpha,
        &model.config.schedule(),
        &mut rng,
    );
    Ok(RoleMixture {
        user: doc.user.clone(),
        quarter: t as u32,
        theta,
    })
}

/// Role mixtures for every document of the corpus, in corpus order.
pub fn infer_corpus(model: &DtmModel, corpus: &TimeSlicedCorpus) -> Result<Vec<RoleMixture>> {
    corpus.documents().map(|d| infer_theta(model, d)).collect()
}

/// The `n` most probable terms of topic `k` in slice `t`, descending, ties
/// broken by term id. `n` is truncated to the vocabulary size.
pub fn top_terms(model: &DtmModel, vocab: &Vocabulary, k: usize, t: usize, n: usize) -> Result<Vec<(String, f64)>> {
    check_topic(model, k)?;
    if t >= model.num_slices() {
        return Err(Error::invalid(alloc::format!("slice {t} out of range")));
    }
    let row = &model.beta[t][k];
    let mut ids: Vec<usize> = (0..row.len()).collect();
    ids.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    ids.into_iter()
        .take(n)
        .map(|id| {
            let name = vocab
                .name(id)
                .ok_or_else(|| Error::invalid(alloc::format!("term id {id} missing from vocabulary")))?;
            Ok((name.into(), row[id]))
        })
        .collect()
}

/// `T x V` trajectory of topic `k`.
pub fn topic_track(model: &DtmModel, k: usize) -> Result<Vec<Vec<f64>>> {
    check_topic(model, k)?;
    Ok(model.beta.iter().map(|slice| slice[k].clone()).collect())
}

fn check_topic(model: &DtmModel, k: usize) -> Result<()> {
    if k >= model.topics() {
        return Err(Error::invalid(alloc::format!(
            "topic {k} out of range for {} topics",
            model.topics()
        )));
    }
    Ok(())
}

/// Mean L1 distance between consecutive slices of the same topic.
pub fn mean_drift(model: &DtmModel) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for pair in model.beta.windows(2) {
        for (a, b) in pair[0].iter().zip(&pair[1]) {
            total += crate::math::l1_distance(a, b);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}
