//! Per-document collapsed Gibbs sampling of topic assignments.
//!
//! The conditional weight of topic `k` for a token of word `w` is
//!
//! ```text
//! (alpha + n_dk) * exp(psi(eta + n_kw)) / exp(psi(V eta + n_k))
//! ```
//!
//! which splits into three buckets whose sums are tracked separately:
//!
//! * word bucket: `(alpha + n_dk) * (exp(psi(eta + n_kw)) - exp(psi(eta))) / exp(psi(V eta + n_k))`,
//!   nonzero only for topics where the word has a stored parameter;
//! * document bucket: `n_dk * exp(psi(eta)) / exp(psi(V eta + n_k))`, nonzero
//!   only for topics present in the document, kept up to date in O(1) per
//!   assignment change;
//! * prior bucket: `alpha * exp(psi(eta)) / exp(psi(V eta + n_k))`, constant
//!   for a whole minibatch and sampled by binary search over a prefix table.
//!
//! The document and prior buckets together form the word-independent
//! "smoothing" sum. Per-token cost is proportional to the number of stored
//! topics for the word plus the number of topics in the document, not to `K`.

use std::collections::BTreeMap;

use rand::Rng;

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::special::{digamma, exp_digamma};
use crate::state::GlobalState;

/// Largest configuration count [`exact_moments`] will enumerate.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Hyperparameters of the per-document chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub alpha: f64,
    /// Discarded sweeps.
    pub burnin: usize,
    /// Saved sweeps.
    pub samples: usize,
}

impl SamplerConfig {
    pub fn new(alpha: f64, burnin: usize, samples: usize) -> Result<Self> {
        let config = SamplerConfig {
            alpha,
            burnin,
            samples,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha {} must be positive", self.alpha)));
        }
        if self.samples == 0 {
            return Err(Error::Config("at least one saved sweep is required".into()));
        }
        Ok(())
    }
}

/// A document's contribution to the minibatch statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct DocContribution {
    /// `(word, topic, expected count)`, sorted by `(word, topic)`.
    pub entries: Vec<(u32, u32, f64)>,
    pub tokens: usize,
    /// Topic terms evaluated while sampling, summed over tokens and sweeps.
    pub touched: u64,
    /// Token visits (tokens times sweeps) that `touched` is spread over.
    pub visits: u64,
}

impl DocContribution {
    pub fn mass(&self) -> f64 {
        self.entries.iter().map(|e| e.2).sum()
    }
}

/// Per-topic quantities that only change when the global state is updated.
#[derive(Debug, Clone)]
pub struct TopicCache {
    alpha: f64,
    exp_psi_eta: f64,
    /// `1 / exp(psi(V eta + n_k))`.
    inv_denom: Vec<f64>,
    /// `exp(psi(eta)) / exp(psi(V eta + n_k))`.
    smooth_coef: Vec<f64>,
    /// Running sums of `alpha * smooth_coef`.
    alpha_prefix: Vec<f64>,
    probe_cost: u64,
}

impl TopicCache {
    pub fn new(state: &GlobalState, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("alpha {alpha} must be positive")));
        }
        let exp_psi_eta = exp_digamma(state.eta());
        if !(exp_psi_eta >= f64::MIN_POSITIVE) {
            return Err(Error::Config(format!(
                "eta {} too small: exp(psi(eta)) underflows",
                state.eta()
            )));
        }
        let v_eta = state.vocab_size() as f64 * state.eta();
        let inv_denom: Vec<f64> = state
            .topic_totals()
            .iter()
            .map(|&n| 1.0 / exp_digamma(v_eta + n))
            .collect();
        let smooth_coef: Vec<f64> = inv_denom.iter().map(|&d| exp_psi_eta * d).collect();
        let mut acc = 0.0;
        let alpha_prefix = smooth_coef
            .iter()
            .map(|&c| {
                acc += alpha * c;
                acc
            })
            .collect();
        let k = state.num_topics();
        Ok(TopicCache {
            alpha,
            exp_psi_eta,
            inv_denom,
            smooth_coef,
            alpha_prefix,
            probe_cost: (usize::BITS - (k.max(2) - 1).leading_zeros()) as u64,
        })
    }

    pub fn num_topics(&self) -> usize {
        self.inv_denom.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn alpha_sum(&self) -> f64 {
        *self.alpha_prefix.last().expect("at least one topic")
    }

    /// Word-bucket coefficients for one word: `(topic, coefficient)` for
    /// every stored topic with a positive coefficient.
    fn word_coefficients(&self, state: &GlobalState, word: usize) -> Vec<(u32, f64)> {
        let eta = state.eta();
        state
            .word_entries(word)
            .filter_map(|(k, n)| {
                let c = (exp_digamma(eta + n) - self.exp_psi_eta) * self.inv_denom[k];
                (c > 0.0).then_some((k as u32, c))
            })
            .collect()
    }
}

/// Decomposition of the sampling normalizer for one token.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub word: f64,
    pub document: f64,
    pub prior: f64,
}

impl Normalizer {
    pub fn total(&self) -> f64 {
        self.word + self.document + self.prior
    }

    /// The word-independent part: document plus prior buckets.
    pub fn smooth(&self) -> f64 {
        self.document + self.prior
    }
}

/// Gibbs sampler bound to one snapshot of the global state.
///
/// Holds only shared references, so any number of samplers can run on
/// different threads while the state is not being updated.
#[derive(Debug, Clone)]
pub struct Sampler<'a> {
    state: &'a GlobalState,
    cache: TopicCache,
    config: SamplerConfig,
}

impl<'a> Sampler<'a> {
    pub fn new(state: &'a GlobalState, config: SamplerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Sampler {
            state,
            cache: TopicCache::new(state, config.alpha)?,
            config,
        })
    }

    pub fn state(&self) -> &'a GlobalState {
        self.state
    }

    pub fn cache(&self) -> &TopicCache {
        &self.cache
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    /// Sequential initialization: token `i` is drawn with weight
    /// `(alpha + #{j < i : z_j = k}) * exp(E[log beta_kw])`.
    pub fn init_assignments<R: Rng + ?Sized>(&self, doc: &Document, rng: &mut R) -> Result<GibbsWorkspace<'_>> {
        if doc.is_empty() {
            return Err(Error::EmptyDocument);
        }
        let v = self.state.vocab_size();
        if let Some(&w) = doc.tokens().iter().find(|&&w| w as usize >= v) {
            return Err(Error::UnknownWord {
                word: w as usize,
                vocab: v,
            });
        }
        let mut ws = GibbsWorkspace::empty(self, doc);
        for i in 0..ws.z.len() {
            let k = ws.draw(ws.slot[i] as usize, rng);
            ws.assign(i, k);
        }
        Ok(ws)
    }

    /// Initialization, `burnin` discarded sweeps, then `samples` saved
    /// sweeps averaged into expected `(word, topic)` counts.
    pub fn sample_document<R: Rng + ?Sized>(&self, doc: &Document, rng: &mut R) -> Result<DocContribution> {
        let mut ws = self.init_assignments(doc, rng)?;
        for _ in 0..self.config.burnin {
            ws.sweep(rng);
        }
        let mut counts: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        for _ in 0..self.config.samples {
            ws.sweep(rng);
            for (&w, &k) in doc.tokens().iter().zip(&ws.z) {
                *counts.entry((w, k)).or_insert(0) += 1;
            }
        }
        let s = self.config.samples as f64;
        Ok(DocContribution {
            entries: counts.into_iter().map(|((w, k), c)| (w, k, c as f64 / s)).collect(),
            tokens: doc.len(),
            touched: ws.touched,
            visits: ws.visits,
        })
    }
}

/// Assignment state of one document's chain.
#[derive(Debug, Clone)]
pub struct GibbsWorkspace<'a> {
    state: &'a GlobalState,
    cache: &'a TopicCache,
    /// Distinct words of the document, ascending.
    words: Vec<u32>,
    /// Index into `words` for each token.
    slot: Vec<u32>,
    /// Word-bucket coefficients per distinct word.
    coefs: Vec<Vec<(u32, f64)>>,
    z: Vec<u32>,
    doc_topic: Vec<u32>,
    /// Topics with `doc_topic > 0`, unordered.
    active: Vec<u32>,
    active_pos: Vec<u32>,
    doc_sum: f64,
    scratch: Vec<f64>,
    touched: u64,
    visits: u64,
}

const UNASSIGNED: u32 = u32::MAX;

impl<'a> GibbsWorkspace<'a> {
    fn empty(sampler: &'a Sampler<'_>, doc: &Document) -> Self {
        let k = sampler.state.num_topics();
        let words = doc.distinct_words();
        let slot = doc
            .tokens()
            .iter()
            .map(|w| words.binary_search(w).expect("token in distinct list") as u32)
            .collect();
        let coefs = words
            .iter()
            .map(|&w| sampler.cache.word_coefficients(sampler.state, w as usize))
            .collect();
        GibbsWorkspace {
            state: sampler.state,
            cache: &sampler.cache,
            words,
            slot,
            coefs,
            z: vec![UNASSIGNED; doc.len()],
            doc_topic: vec![0; k],
            active: Vec::new(),
            active_pos: vec![UNASSIGNED; k],
            doc_sum: 0.0,
            scratch: Vec::new(),
            touched: 0,
            visits: 0,
        }
    }

    pub fn assignments(&self) -> &[u32] {
        &self.z
    }

    pub fn doc_topic(&self) -> &[u32] {
        &self.doc_topic
    }

    /// Incrementally maintained smoothing sum `sum_k (alpha + n_dk) exp(psi(eta)) / exp(psi(V eta + n_k))`.
    pub fn smooth_sum(&self) -> f64 {
        self.cache.alpha_sum() + self.doc_sum
    }

    /// The smoothing sum recomputed densely from the global state.
    pub fn smooth_sum_from_scratch(&self) -> f64 {
        let eta = self.state.eta();
        let v_eta = self.state.vocab_size() as f64 * eta;
        let e_eta = exp_digamma(eta);
        (0..self.doc_topic.len())
            .map(|k| {
                (self.cache.alpha + self.doc_topic[k] as f64) * e_eta
                    / exp_digamma(v_eta + self.state.topic_total(k))
            })
            .sum()
    }

    /// Topic terms evaluated so far by sweeps.
    pub fn touched(&self) -> u64 {
        self.touched
    }

    /// Removes token `i` from the counts (the cavity state for resampling it).
    pub fn remove(&mut self, i: usize) {
        let k = self.z[i];
        if k == UNASSIGNED {
            return;
        }
        let ku = k as usize;
        self.doc_topic[ku] -= 1;
        self.doc_sum -= self.cache.smooth_coef[ku];
        if self.doc_topic[ku] == 0 {
            let pos = self.active_pos[ku] as usize;
            self.active.swap_remove(pos);
            if let Some(&moved) = self.active.get(pos) {
                self.active_pos[moved as usize] = pos as u32;
            }
            self.active_pos[ku] = UNASSIGNED;
        }
        self.z[i] = UNASSIGNED;
    }

    /// Assigns token `i` (currently removed) to topic `k`.
    pub fn assign(&mut self, i: usize, k: u32) {
        debug_assert_eq!(self.z[i], UNASSIGNED);
        let ku = k as usize;
        if self.doc_topic[ku] == 0 {
            self.active_pos[ku] = self.active.len() as u32;
            self.active.push(k);
        }
        self.doc_topic[ku] += 1;
        self.doc_sum += self.cache.smooth_coef[ku];
        self.z[i] = k;
    }

    /// Bucket sums of the conditional for a token of `word` under the
    /// current counts.
    pub fn normalizer(&self, word: usize) -> Normalizer {
        let word_part = match self.words.binary_search(&(word as u32)) {
            Ok(li) => self.word_sum(&self.coefs[li]),
            Err(_) => self.word_sum(&self.cache.word_coefficients(self.state, word)),
        };
        Normalizer {
            word: word_part,
            document: self.doc_sum,
            prior: self.cache.alpha_sum(),
        }
    }

    /// Full unnormalized conditional over topics, assembled from the buckets.
    pub fn conditional(&self, word: usize) -> Vec<f64> {
        let alpha = self.cache.alpha;
        let mut p: Vec<f64> = self
            .doc_topic
            .iter()
            .zip(&self.cache.smooth_coef)
            .map(|(&n, &c)| (alpha + n as f64) * c)
            .collect();
        let coefs = match self.words.binary_search(&(word as u32)) {
            Ok(li) => self.coefs[li].clone(),
            Err(_) => self.cache.word_coefficients(self.state, word),
        };
        for (k, c) in coefs {
            p[k as usize] += (alpha + self.doc_topic[k as usize] as f64) * c;
        }
        p
    }

    fn word_sum(&self, coefs: &[(u32, f64)]) -> f64 {
        let alpha = self.cache.alpha;
        coefs
            .iter()
            .map(|&(k, c)| (alpha + self.doc_topic[k as usize] as f64) * c)
            .sum()
    }

    /// Draws a topic for a token of local word `li` from the current counts.
    fn draw<R: Rng + ?Sized>(&mut self, li: usize, rng: &mut R) -> u32 {
        let k_total = self.doc_topic.len();
        if k_total == 1 {
            return 0;
        }
        let alpha = self.cache.alpha;
        let coefs = &self.coefs[li];
        self.scratch.clear();
        let mut word_sum = 0.0;
        for &(k, c) in coefs {
            word_sum += (alpha + self.doc_topic[k as usize] as f64) * c;
            self.scratch.push(word_sum);
        }
        let mut work = coefs.len() as u64;

        let doc_sum = if self.active.is_empty() { 0.0 } else { self.doc_sum.max(0.0) };
        let prior_sum = self.cache.alpha_sum();
        let mut u = rng.random::<f64>() * (word_sum + doc_sum + prior_sum);

        let topic = if u < word_sum {
            let idx = self.scratch.partition_point(|&acc| acc <= u).min(coefs.len() - 1);
            coefs[idx].0
        } else {
            u -= word_sum;
            if u < doc_sum {
                let mut acc = 0.0;
                let mut chosen = *self.active.last().expect("active topics");
                for (visited, &k) in self.active.iter().enumerate() {
                    acc += self.doc_topic[k as usize] as f64 * self.cache.smooth_coef[k as usize];
                    if u < acc {
                        chosen = k;
                        work += visited as u64 + 1;
                        break;
                    }
                }
                chosen
            } else {
                u -= doc_sum;
                work += self.cache.probe_cost;
                let idx = self.cache.alpha_prefix.partition_point(|&acc| acc <= u);
                idx.min(k_total - 1) as u32
            }
        };
        // No token ever evaluates more than K distinct topic terms.
        self.touched += work.min(k_total as u64);
        self.visits += 1;
        topic
    }

    /// Resamples token `i` from its conditional given all other tokens.
    pub fn resample<R: Rng + ?Sized>(&mut self, i: usize, rng: &mut R) {
        self.remove(i);
        let k = self.draw(self.slot[i] as usize, rng);
        self.assign(i, k);
    }

    /// One pass over all tokens in position order.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if self.doc_topic.len() == 1 {
            return;
        }
        for i in 0..self.z.len() {
            self.resample(i, rng);
        }
    }
}

/// Exact `E[n_dkw]` under the optimal per-document distribution over topic
/// configurations, by enumerating all `K^N` configurations.
///
/// Each configuration `z` is weighted by
/// `prod_k Gamma(alpha + n_k) / Gamma(alpha) * prod_i exp(E[log beta_{z_i, w_i}])`.
/// Only tractable for tiny documents; used to check the sampler.
pub fn exact_moments(doc: &Document, state: &GlobalState, alpha: f64) -> Result<BTreeMap<(usize, usize), f64>> {
    let k = state.num_topics();
    let n = doc.len();
    let configs = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if configs > ENUMERATION_LIMIT {
        return Err(Error::TooManyConfigurations(configs, ENUMERATION_LIMIT));
    }
    let tokens = doc.tokens();
    let elog: Vec<Vec<f64>> = tokens
        .iter()
        .map(|&w| (0..k).map(|t| state.expected_log_beta(t, w as usize)).collect())
        .collect();
    // ln(alpha (alpha + 1) ... (alpha + c - 1)) for c = 0..=n.
    let mut log_rising = vec![0.0; n + 1];
    for c in 1..=n {
        log_rising[c] = log_rising[c - 1] + (alpha + (c - 1) as f64).ln();
    }

    let mut log_weights = Vec::with_capacity(configs as usize);
    let mut z = vec![0usize; n];
    let mut counts = vec![0usize; k];
    for _ in 0..configs {
        counts.iter_mut().for_each(|c| *c = 0);
        let mut lw = 0.0;
        for (i, &t) in z.iter().enumerate() {
            counts[t] += 1;
            lw += elog[i][t];
        }
        lw += counts.iter().map(|&c| log_rising[c]).sum::<f64>();
        log_weights.push(lw);
        advance(&mut z, k);
    }
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
    let total: f64 = weights.iter().sum();

    let mut moments: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for &w in tokens {
        for t in 0..k {
            moments.insert((w as usize, t), 0.0);
        }
    }
    z.iter_mut().for_each(|t| *t = 0);
    for weight in weights {
        let p = weight / total;
        for (i, &t) in z.iter().enumerate() {
            *moments.get_mut(&(tokens[i] as usize, t)).expect("seeded") += p;
        }
        advance(&mut z, k);
    }
    Ok(moments)
}

/// Odometer increment over `{0..k}^n`.
fn advance(z: &mut [usize], k: usize) {
    for digit in z.iter_mut() {
        *digit += 1;
        if *digit < k {
            return;
        }
        *digit = 0;
    }
}

/// Dense conditional `(alpha + n_dk) exp(E[log beta_kw])`, computed with
/// direct digamma calls. Reference for the bucketed evaluation.
pub fn dense_conditional(state: &GlobalState, doc_topic: &[u32], word: usize, alpha: f64) -> Vec<f64> {
    let v_eta = state.vocab_size() as f64 * state.eta();
    (0..state.num_topics())
        .map(|k| {
            let elog = digamma(state.eta() + state.n_tilde(k, word)) - digamma(v_eta + state.topic_total(k));
            (alpha + doc_topic[k] as f64) * elog.exp()
        })
        .collect()
}
