//! Collapsed Gibbs sampling for one time slice with arbitrary Dirichlet
//! pseudo-counts, plus fold-in inference against frozen topics.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::corpus::Document;
use crate::rng::Rng;

/// Dirichlet pseudo-counts for one slice.
pub(crate) struct Priors {
    /// Topic-word pseudo-counts, `k * vocab + w`.
    pub word: Vec<f64>,
    /// Document-topic pseudo-counts.
    pub doc: Vec<f64>,
}

impl Priors {
    pub fn symmetric(topics: usize, vocab: usize, alpha: f64, eta: f64) -> Self {
        Self {
            word: vec![eta; topics * vocab],
            doc: vec![alpha; topics],
        }
    }
}

pub(crate) enum Init<'a> {
    Random,
    /// Draw each token's first assignment from the given topics weighted by
    /// the document prior.
    Topics(&'a [Vec<f64>]),
}

pub(crate) struct SliceFit {
    pub beta: Vec<Vec<f64>>,
    pub thetas: Vec<Vec<f64>>,
    /// Post-burn-in average of tokens assigned to each topic.
    pub topic_tokens: Vec<f64>,
}

fn draw(rng: &mut Rng, weights: &mut [f64]) -> usize {
    let mut total = 0.0;
    for w in weights.iter_mut() {
        total += *w;
        *w = total;
    }
    let u = rng.random::<f64>() * total;
    weights.iter().position(|&c| c > u).unwrap_or(weights.len() - 1)
}

pub(crate) struct SweepSchedule {
    pub iterations: usize,
    pub burn_in: usize,
}

impl SweepSchedule {
    fn samples(&self) -> f64 {
        (self.iterations - self.burn_in) as f64
    }
}

pub(crate) fn sample_slice(
    docs: &[Document],
    vocab: usize,
    topics: usize,
    priors: &Priors,
    schedule: &SweepSchedule,
    rng: &mut Rng,
    init: Init<'_>,
) -> SliceFit {
    let mut words = Vec::new();
    let mut doc_of = Vec::new();
    for (d, doc) in docs.iter().enumerate() {
        for &(t, c) in &doc.terms {
            for _ in 0..c {
                words.push(t);
                doc_of.push(d);
            }
        }
    }
    let doc_len: Vec<f64> = docs.iter().map(|d| d.total() as f64).collect();
    let word_sum: Vec<f64> = (0..topics)
        .map(|k| priors.word[k * vocab..(k + 1) * vocab].iter().sum())
        .collect();
    let doc_sum: f64 = priors.doc.iter().sum();

    let mut n_dk = vec![0u32; docs.len() * topics];
    let mut n_kw = vec![0u32; topics * vocab];
    let mut n_k = vec![0u32; topics];
    let mut z = vec![0usize; words.len()];
    let mut weights = vec![0.0; topics];

    for (i, (&w, &d)) in words.iter().zip(&doc_of).enumerate() {
        let k = match init {
            Init::Random => rng.random_range(0..topics),
            Init::Topics(beta) => {
                for (k, wt) in weights.iter_mut().enumerate() {
                    *wt = priors.doc[k] * beta[k][w];
                }
                draw(rng, &mut weights)
            }
        };
        z[i] = k;
        n_dk[d * topics + k] += 1;
        n_kw[k * vocab + w] += 1;
        n_k[k] += 1;
    }

    let mut beta_acc = vec![0.0; topics * vocab];
    let mut theta_acc = vec![0.0; docs.len() * topics];
    let mut tokens_acc = vec![0.0; topics];

    for sweep in 0..schedule.iterations {
        for (i, (&w, &d)) in words.iter().zip(&doc_of).enumerate() {
            let old = z[i];
            n_dk[d * topics + old] -= 1;
            n_kw[old * vocab + w] -= 1;
            n_k[old] -= 1;
            for (k, wt) in weights.iter_mut().enumerate() {
                *wt = (f64::from(n_dk[d * topics + k]) + priors.doc[k])
                    * (f64::from(n_kw[k * vocab + w]) + priors.word[k * vocab + w])
                    / (f64::from(n_k[k]) + word_sum[k]);
            }
            let k = draw(rng, &mut weights);
            z[i] = k;
            n_dk[d * topics + k] += 1;
            n_kw[k * vocab + w] += 1;
            n_k[k] += 1;
        }
        if sweep >= schedule.burn_in {
            for k in 0..topics {
                let denom = f64::from(n_k[k]) + word_sum[k];
                tokens_acc[k] += f64::from(n_k[k]);
                for w in 0..vocab {
                    beta_acc[k * vocab + w] += (f64::from(n_kw[k * vocab + w]) + priors.word[k * vocab + w]) / denom;
                }
            }
            for d in 0..docs.len() {
                let denom = doc_len[d] + doc_sum;
                for k in 0..topics {
                    theta_acc[d * topics + k] += (f64::from(n_dk[d * topics + k]) + priors.doc[k]) / denom;
                }
            }
        }
    }

    let s = schedule.samples();
    SliceFit {
        beta: beta_acc
            .chunks(vocab)
            .map(|row| row.iter().map(|x| x / s).collect())
            .collect(),
        thetas: theta_acc
            .chunks(topics)
            .map(|row| row.iter().map(|x| x / s).collect())
            .collect(),
        topic_tokens: tokens_acc.iter().map(|x| x / s).collect(),
    }
}

/// Fold-in estimate of one document's topic proportions with `beta` held
/// fixed and a symmetric prior `alpha`.
pub(crate) fn fold_in(
    doc: &Document,
    beta: &[Vec<f64>],
    alpha: f64,
    schedule: &SweepSchedule,
    rng: &mut Rng,
) -> Vec<f64> {
    let topics = beta.len();
    let words: Vec<usize> = doc
        .terms
        .iter()
        .flat_map(|&(t, c)| core::iter::repeat_n(t, c as usize))
        .collect();
    if words.is_empty() {
        return vec![1.0 / topics as f64; topics];
    }
    let denom = words.len() as f64 + alpha * topics as f64;
    let mut n_k = vec![0u32; topics];
    let mut z: Vec<usize> = words
        .iter()
        .map(|_| {
            let k = rng.random_range(0..topics);
            n_k[k] += 1;
            k
        })
        .collect();
    let mut weights = vec![0.0; topics];
    let mut acc = vec![0.0; topics];
    for sweep in 0..schedule.iterations {
        for (i, &w) in words.iter().enumerate() {
            n_k[z[i]] -= 1;
            for (k, wt) in weights.iter_mut().enumerate() {
                *wt = (f64::from(n_k[k]) + alpha) * beta[k][w];
            }
            let k = draw(rng, &mut weights);
            z[i] = k;
            n_k[k] += 1;
        }
        if sweep >= schedule.burn_in {
            for k in 0..topics {
                acc[k] += (f64::from(n_k[k]) + alpha) / denom;
            }
        }
    }
    let s = schedule.samples();
    acc.iter().map(|x| x / s).collect()
}
