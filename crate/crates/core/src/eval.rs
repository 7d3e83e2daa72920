//! Model-quality measures: held-out left-to-right log probability, topic
//! coherence, topic entropy and top words.

use rand::Rng;

use crate::corpus::{DocFrequencies, Document};
use crate::error::{Error, Result};
use crate::state::GlobalState;

/// Settings for evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    /// Document-topic hyperparameter used while scoring.
    pub alpha: f64,
    /// Independent left-to-right passes averaged at every position.
    pub particles: usize,
    /// Number of top words for coherence.
    pub top_words: usize,
    /// Additive constant inside the coherence logarithm.
    pub epsilon: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            alpha: 0.1,
            particles: 10,
            top_words: 20,
            epsilon: 0.01,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || self.particles == 0 || self.top_words == 0 || !(self.epsilon > 0.0) {
            return Err(Error::Config("evaluation settings must all be positive".into()));
        }
        Ok(())
    }
}

/// Dense topic-word probabilities `p(w | k)`, one row per topic.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimate {
    topics: usize,
    vocab: usize,
    probs: Vec<f64>,
}

impl PointEstimate {
    /// Posterior mean of the variational Dirichlet:
    /// `p(w | k) = (eta + n_kw) / (V eta + n_k)`.
    pub fn from_state(state: &GlobalState) -> Self {
        Self::with_eta(state, state.eta())
    }

    /// Same as [`from_state`](Self::from_state) with a different smoothing
    /// value substituted for the trained `eta`.
    pub fn with_eta(state: &GlobalState, eta: f64) -> Self {
        let (k, v) = (state.num_topics(), state.vocab_size());
        let mut counts = vec![0.0; k * v];
        for w in 0..v {
            for (t, n) in state.word_entries(w) {
                counts[t * v + w] = n;
            }
        }
        let mut probs = Vec::with_capacity(k * v);
        for row in counts.chunks(v) {
            let denom = v as f64 * eta + row.iter().sum::<f64>();
            probs.extend(row.iter().map(|n| (eta + n) / denom));
        }
        PointEstimate { topics: k, vocab: v, probs }
    }

    /// Builds an estimate from explicit rows, normalizing each.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let topics = rows.len();
        let vocab = rows.first().map_or(0, Vec::len);
        if topics == 0 || vocab == 0 {
            return Err(Error::Config("point estimate needs at least one topic and word".into()));
        }
        let mut probs = Vec::with_capacity(topics * vocab);
        for row in rows {
            let sum: f64 = row.iter().sum();
            if row.len() != vocab || row.iter().any(|&p| !(p >= 0.0)) || !(sum > 0.0) {
                return Err(Error::Config("rows must be non-negative with equal length and positive mass".into()));
            }
            probs.extend(row.iter().map(|p| p / sum));
        }
        Ok(PointEstimate { topics, vocab, probs })
    }

    pub fn num_topics(&self) -> usize {
        self.topics
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab
    }

    pub fn prob(&self, topic: usize, word: usize) -> f64 {
        self.probs[topic * self.vocab + word]
    }

    pub fn log_prob(&self, topic: usize, word: usize) -> f64 {
        self.prob(topic, word).ln()
    }

    pub fn row(&self, topic: usize) -> &[f64] {
        &self.probs[topic * self.vocab..(topic + 1) * self.vocab]
    }
}

/// Left-to-right estimate of a document's per-token log probability.
///
/// At position `i`, every particle computes
/// `sum_k (alpha + n_k) / (K alpha + i) * p(w_i | k)` from its own earlier
/// assignments; the log of the particle-averaged value is accumulated and
/// each particle then draws `z_i` in proportion to its summands. The result
/// is the accumulated log probability divided by the document length.
pub fn left_to_right<R: Rng + ?Sized>(doc: &Document, estimate: &PointEstimate, config: &EvalConfig, rng: &mut R) -> Result<f64> {
    config.validate()?;
    if doc.is_empty() {
        return Err(Error::EmptyDocument);
    }
    let k = estimate.topics;
    let alpha = config.alpha;
    let r = config.particles;
    let mut counts = vec![0u32; r * k];
    let mut terms = vec![0.0; k];
    let mut total_log = 0.0;

    for (i, &w) in doc.tokens().iter().enumerate() {
        let w = w as usize;
        if w >= estimate.vocab {
            return Err(Error::UnknownWord {
                word: w,
                vocab: estimate.vocab,
            });
        }
        let denom = k as f64 * alpha + i as f64;
        let mut marginal_sum = 0.0;
        for p in 0..r {
            let row = &mut counts[p * k..(p + 1) * k];
            let mut marginal = 0.0;
            for (t, term) in terms.iter_mut().enumerate() {
                *term = (alpha + row[t] as f64) / denom * estimate.prob(t, w);
                marginal += *term;
            }
            marginal_sum += marginal;
            if k > 1 {
                let mut u = rng.random::<f64>() * marginal;
                let mut chosen = k - 1;
                for (t, &term) in terms.iter().enumerate() {
                    if u < term {
                        chosen = t;
                        break;
                    }
                    u -= term;
                }
                row[chosen] += 1;
            } else {
                row[0] += 1;
            }
        }
        total_log += (marginal_sum / r as f64).ln();
    }
    Ok(total_log / doc.len() as f64)
}

/// The `n` most probable words of a topic, ties broken by ascending word id.
pub fn top_words(estimate: &PointEstimate, topic: usize, n: usize) -> Vec<usize> {
    let row = estimate.row(topic);
    let mut ids: Vec<usize> = (0..row.len()).collect();
    ids.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    ids.truncate(n);
    ids
}

/// Coherence of a ranked word list:
/// `sum_i sum_{j < i} ln((D(w_i, w_j) + eps) / D(w_j))`.
pub fn coherence_of_words(words: &[usize], freqs: &DocFrequencies, epsilon: f64) -> Result<f64> {
    let mut score = 0.0;
    for (i, &wi) in words.iter().enumerate() {
        for &wj in &words[..i] {
            let dj = freqs.single(wj).ok_or(Error::UncoveredWord(wj))?;
            if dj == 0 {
                return Err(Error::ZeroDocFrequency(wj));
            }
            let co = freqs.pair(wi, wj).ok_or(Error::UncoveredWord(wi))?;
            score += ((co as f64 + epsilon) / dj as f64).ln();
        }
    }
    Ok(score)
}

/// Coherence of a topic's top `config.top_words` words.
pub fn coherence(topic: usize, estimate: &PointEstimate, freqs: &DocFrequencies, config: &EvalConfig) -> Result<f64> {
    if config.top_words < 2 {
        return Err(Error::Config("coherence needs at least two top words".into()));
    }
    let words = top_words(estimate, topic, config.top_words);
    coherence_of_words(&words, freqs, config.epsilon)
}

/// All words that appear in some topic's top-`n` list.
pub fn top_word_set(estimate: &PointEstimate, n: usize) -> Vec<usize> {
    let mut set: Vec<usize> = (0..estimate.topics).flat_map(|k| top_words(estimate, k, n)).collect();
    set.sort_unstable();
    set.dedup();
    set
}

/// Entropy of a topic's word distribution, in nats.
pub fn topic_entropy(estimate: &PointEstimate, topic: usize) -> f64 {
    -estimate
        .row(topic)
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}
