//! The minibatch training loop.
//!
//! Each step draws a minibatch, runs the local step on every document
//! (in parallel when `threads > 1`), sums the per-document statistics in
//! slot order, and applies one global update. Every document uses its own
//! random stream derived from `(seed, minibatch, slot)`, so results do not
//! depend on the thread count. Minibatch selection has its own stream per
//! step, so a run resumed from a checkpoint sees the same minibatches.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baseline;
use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::sampler::{DocContribution, Sampler, SamplerConfig};
use crate::state::{GlobalState, LearningSchedule, MinibatchStats, ResetPolicy};

/// Draws allowed per minibatch slot before giving up on finding a
/// non-empty document.
pub const MAX_DRAWS_PER_SLOT: usize = 100;

/// Stream index used for minibatch selection; document slots use `0..|B|`.
const SELECTION_SLOT: u64 = u64::MAX;

/// How local statistics are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Algorithm {
    /// Sparse collapsed Gibbs sampling.
    #[default]
    Sampled,
    /// Dense mean-field coordinate ascent with `burnin + samples` rounds.
    Vb,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Sampled => "sampled",
            Algorithm::Vb => "vb",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sampled" => Ok(Algorithm::Sampled),
            "vb" => Ok(Algorithm::Vb),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Settings for a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub topics: usize,
    pub alpha: f64,
    pub eta: f64,
    pub kappa: f64,
    pub tau0: f64,
    pub batch_size: usize,
    pub burnin: usize,
    pub samples: usize,
    pub minibatches: u64,
    pub seed: u64,
    /// Checkpoint every this many minibatches; 0 disables intermediate checkpoints.
    pub checkpoint_every: u64,
    pub threads: usize,
    pub algorithm: Algorithm,
    /// Topics seeded per word at initialization, capped at `topics`.
    pub seeds_per_word: usize,
    pub seed_mass: f64,
    pub reset: ResetPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            topics: 100,
            alpha: 0.1,
            eta: 0.4,
            kappa: 0.6,
            tau0: 100.0,
            batch_size: 100,
            burnin: 2,
            samples: 3,
            minibatches: 1000,
            seed: 0,
            checkpoint_every: 0,
            threads: 1,
            algorithm: Algorithm::Sampled,
            seeds_per_word: 5,
            seed_mass: 1.0,
            reset: ResetPolicy::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.topics == 0 {
            return Err(Error::Config("topic count must be at least 1".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta {} must be positive", self.eta)));
        }
        SamplerConfig::new(self.alpha, self.burnin, self.samples)?;
        LearningSchedule::new(self.kappa, self.tau0)?;
        if self.tau0 + 1.0 <= 0.0 {
            return Err(Error::Config("tau0 + 1 must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.minibatches == 0 {
            return Err(Error::Config("at least one minibatch is required".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if !(self.seed_mass >= 0.0 && self.seed_mass.is_finite()) {
            return Err(Error::Config("seed mass must be non-negative".into()));
        }
        if !(self.reset.reset_below > 0.0 && self.reset.reset_below < 1.0) {
            return Err(Error::Config("reset trigger must lie in (0, 1)".into()));
        }
        if !(self.reset.prune_threshold >= 0.0) {
            return Err(Error::Config("prune threshold must be non-negative".into()));
        }
        Ok(())
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            alpha: self.alpha,
            burnin: self.burnin,
            samples: self.samples,
        }
    }

    pub fn schedule(&self) -> LearningSchedule {
        LearningSchedule {
            kappa: self.kappa,
            tau0: self.tau0,
        }
    }
}

/// Measurements for one minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct MinibatchRecord {
    /// 1-based update index.
    pub minibatch: u64,
    pub rho: f64,
    pub seconds: f64,
    pub tokens: u64,
    /// Mean topic terms evaluated per token visit.
    pub touched_topics: f64,
    pub nnz_fraction: f64,
    pub reset: bool,
}

impl MinibatchRecord {
    pub const CSV_HEADER: &'static str = "minibatch,rho,seconds,tokens,touched_topics,nnz_fraction";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.17e},{:.6},{},{:.6},{:.9}",
            self.minibatch, self.rho, self.seconds, self.tokens, self.touched_topics, self.nnz_fraction
        )
    }
}

/// Per-minibatch trace of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub records: Vec<MinibatchRecord>,
}

impl RunMetrics {
    /// Mean touched topics per token visit over the given range of records.
    pub fn mean_touched(&self, range: std::ops::Range<usize>) -> f64 {
        let recs = &self.records[range];
        recs.iter().map(|r| r.touched_topics).sum::<f64>() / recs.len() as f64
    }

    pub fn mean_seconds(&self) -> f64 {
        self.records.iter().map(|r| r.seconds).sum::<f64>() / self.records.len().max(1) as f64
    }
}

/// Whether a drawn document takes part in a minibatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipDecision {
    Include,
    Skip,
}

/// Empty documents carry no statistics and are redrawn.
pub fn skip_policy(doc: &Document) -> SkipDecision {
    if doc.is_empty() {
        SkipDecision::Skip
    } else {
        SkipDecision::Include
    }
}

/// Sums per-document contributions in slot order.
pub fn aggregate(contributions: &[DocContribution], batch_size: usize) -> MinibatchStats {
    let entries = contributions.iter().flat_map(|c| c.entries.iter().copied()).collect();
    MinibatchStats::from_entries(entries, batch_size)
}

/// Independent, reproducible random stream for `(seed, a, b)`.
pub fn stream_rng(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut x = seed;
    for part in [a, b] {
        x = splitmix64(x ^ splitmix64(part.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    ChaCha8Rng::seed_from_u64(x)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Minibatch composition for update `t`, with empty documents redrawn.
pub fn draw_minibatch<'c, R: Rng + ?Sized>(corpus: &'c Corpus, size: usize, rng: &mut R) -> Result<Vec<&'c Document>> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut batch = Vec::with_capacity(size);
    let mut draws = 0usize;
    let limit = size * MAX_DRAWS_PER_SLOT;
    while batch.len() < size {
        if draws >= limit {
            return Err(Error::NoUsableDocuments(draws));
        }
        draws += 1;
        let doc = corpus.sample_minibatch(1, rng)?[0];
        if skip_policy(doc) == SkipDecision::Include {
            batch.push(doc);
        }
    }
    Ok(batch)
}

/// Random initial state for `config`.
pub fn initial_state(corpus: &Corpus, config: &TrainConfig) -> Result<GlobalState> {
    let mut rng = stream_rng(config.seed, u64::MAX, 1);
    GlobalState::init(
        config.topics,
        corpus.vocab_size(),
        config.eta,
        config.seeds_per_word.min(config.topics),
        config.seed_mass,
        &mut rng,
    )
}

/// Runs `config.minibatches` updates from the random initial state.
pub fn train(corpus: &Corpus, config: &TrainConfig) -> Result<(GlobalState, RunMetrics)> {
    train_with(corpus, config, |_, _| Ok(()))
}

/// Like [`train`], calling `on_minibatch` after every update (for
/// checkpoints and streaming metrics).
pub fn train_with<F>(corpus: &Corpus, config: &TrainConfig, on_minibatch: F) -> Result<(GlobalState, RunMetrics)>
where
    F: FnMut(&MinibatchRecord, &GlobalState) -> Result<()>,
{
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let state = initial_state(corpus, config)?;
    continue_training(corpus, config, state, 1, on_minibatch)
}

/// Runs updates `first..first + config.minibatches` on an existing state.
pub fn continue_training<F>(
    corpus: &Corpus,
    config: &TrainConfig,
    mut state: GlobalState,
    first: u64,
    mut on_minibatch: F,
) -> Result<(GlobalState, RunMetrics)>
where
    F: FnMut(&MinibatchRecord, &GlobalState) -> Result<()>,
{
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if state.vocab_size() != corpus.vocab_size() {
        return Err(Error::VocabularyMismatch {
            model: state.vocab_size(),
            corpus: corpus.vocab_size(),
        });
    }
    let pool = if config.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.threads)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };
    let schedule = config.schedule();
    let mut metrics = RunMetrics::default();

    for t in first..first + config.minibatches {
        let started = Instant::now();
        let rho = schedule.rho(t)?;
        let batch = draw_minibatch(corpus, config.batch_size, &mut stream_rng(config.seed, t, SELECTION_SLOT))?;

        let contributions = {
            let local = LocalStep::new(&state, config)?;
            let run = |(slot, doc): (usize, &&Document)| {
                let mut rng = stream_rng(config.seed, t, slot as u64);
                local.run(doc, &mut rng)
            };
            match &pool {
                Some(pool) => pool.install(|| {
                    batch
                        .par_iter()
                        .enumerate()
                        .map(run)
                        .collect::<Result<Vec<_>>>()
                })?,
                None => batch.iter().enumerate().map(run).collect::<Result<Vec<_>>>()?,
            }
        };

        let stats = aggregate(&contributions, config.batch_size);
        state.apply_update(&stats, rho, corpus.num_docs())?;
        let reset = state.maintain(&config.reset);

        let tokens: u64 = contributions.iter().map(|c| c.tokens as u64).sum();
        let touched: u64 = contributions.iter().map(|c| c.touched).sum();
        let visits: u64 = contributions.iter().map(|c| c.visits).sum();
        let record = MinibatchRecord {
            minibatch: t,
            rho,
            seconds: started.elapsed().as_secs_f64(),
            tokens,
            touched_topics: if visits > 0 { touched as f64 / visits as f64 } else { 0.0 },
            nnz_fraction: state.nonzero_fraction(),
            reset,
        };
        on_minibatch(&record, &state)?;
        metrics.records.push(record);
    }
    Ok((state, metrics))
}

/// Local step shared by all documents of one minibatch.
enum LocalStep<'a> {
    Sampled(Sampler<'a>),
    Vb {
        state: &'a GlobalState,
        alpha: f64,
        rounds: usize,
    },
}

impl<'a> LocalStep<'a> {
    fn new(state: &'a GlobalState, config: &TrainConfig) -> Result<Self> {
        Ok(match config.algorithm {
            Algorithm::Sampled => LocalStep::Sampled(Sampler::new(state, config.sampler_config())?),
            Algorithm::Vb => LocalStep::Vb {
                state,
                alpha: config.alpha,
                rounds: config.burnin + config.samples,
            },
        })
    }

    fn run(&self, doc: &Document, rng: &mut ChaCha8Rng) -> Result<DocContribution> {
        match self {
            LocalStep::Sampled(sampler) => sampler.sample_document(doc, rng),
            LocalStep::Vb { state, alpha, rounds } => {
                Ok(baseline::local_step(doc, state, *alpha, *rounds)?.into_contribution(*rounds))
            }
        }
    }
}

// `LocalStep` is shared across rayon workers by reference.
const _: fn() = || {
    fn assert_sync<T: Sync>() {}
    assert_sync::<LocalStep<'static>>();
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use std::sync::Arc;

    fn corpus(docs: &[&[u32]], v: usize) -> Corpus {
        let documents = docs
            .iter()
            .enumerate()
            .map(|(i, t)| Document::new(i, t.to_vec()))
            .collect();
        Corpus::new(documents, Arc::new(Vocabulary::numbered(v))).unwrap()
    }

    #[test]
    fn defaults_match_documented_settings() {
        let c = TrainConfig::default();
        assert_eq!((c.alpha, c.eta, c.kappa, c.tau0), (0.1, 0.4, 0.6, 100.0));
        assert_eq!((c.batch_size, c.burnin, c.samples), (100, 2, 3));
        assert_eq!((c.seeds_per_word, c.seed_mass), (5, 1.0));
        c.validate().unwrap();
    }

    #[test]
    fn invalid_configs_rejected() {
        let base = TrainConfig {
            topics: 4,
            ..TrainConfig::default()
        };
        let bad = [
            TrainConfig { topics: 0, ..base.clone() },
            TrainConfig { batch_size: 0, ..base.clone() },
            TrainConfig { minibatches: 0, ..base.clone() },
            TrainConfig { kappa: 0.4, ..base.clone() },
            TrainConfig { samples: 0, ..base.clone() },
            TrainConfig { threads: 0, ..base.clone() },
        ];
        let c = corpus(&[&[0]], 1);
        for cfg in bad {
            assert!(matches!(train(&c, &cfg), Err(Error::Config(_))), "{cfg:?}");
        }
    }

    #[test]
    fn skip_rules() {
        assert_eq!(skip_policy(&Document::new(0, vec![])), SkipDecision::Skip);
        assert_eq!(skip_policy(&Document::new(0, vec![3])), SkipDecision::Include);
        let c = corpus(&[&[], &[]], 2);
        let mut rng = stream_rng(0, 0, 0);
        assert!(matches!(draw_minibatch(&c, 3, &mut rng), Err(Error::NoUsableDocuments(300))));
        let mixed = corpus(&[&[], &[1]], 2);
        let batch = draw_minibatch(&mixed, 10, &mut rng).unwrap();
        assert!(batch.iter().all(|d| d.id == 1));
    }

    #[test]
    fn aggregate_merges() {
        let a = DocContribution {
            entries: vec![(0, 1, 1.0), (2, 0, 0.5)],
            tokens: 2,
            touched: 0,
            visits: 0,
        };
        let b = DocContribution {
            entries: vec![(1, 1, 2.0), (2, 0, 0.5)],
            tokens: 2,
            touched: 0,
            visits: 0,
        };
        let one = aggregate(std::slice::from_ref(&a), 1);
        assert_eq!(one.entries(), a.entries.as_slice());
        let both = aggregate(&[a, b], 2);
        assert_eq!(both.entries(), &[(0, 1, 1.0), (1, 1, 2.0), (2, 0, 1.0)]);
        assert_eq!(both.token_total(), 4.0);
    }

    #[test]
    fn seeding_capped_at_topic_count() {
        let c = corpus(&[&[0, 1], &[2]], 3);
        let config = TrainConfig {
            topics: 2,
            ..TrainConfig::default()
        };
        let state = initial_state(&c, &config).unwrap();
        assert_eq!(state.nnz(), 3 * 2);
    }

    #[test]
    fn single_token_run() {
        let c = corpus(&[&[1]], 3);
        let config = TrainConfig {
            topics: 3,
            batch_size: 1,
            minibatches: 1,
            burnin: 0,
            samples: 1,
            seeds_per_word: 0,
            seed_mass: 0.0,
            ..TrainConfig::default()
        };
        let (state, metrics) = train(&c, &config).unwrap();
        let rho = (101.0f64).powf(-0.6);
        let topic = (0..3).find(|&k| state.n_tilde(k, 1) > 0.0).unwrap();
        let want = (1.0 - rho) * 0.4 + rho * (0.4 + 1.0);
        assert!((state.lambda(topic, 1) - want).abs() < 1e-12);
        for k in 0..3 {
            assert_eq!(state.lambda(k, 0), 0.4);
            assert_eq!(state.lambda(k, 2), 0.4);
        }
        assert_eq!(metrics.records.len(), 1);
        assert_eq!(metrics.records[0].rho, rho);
    }

    #[test]
    fn stream_rngs_differ() {
        let mut a = stream_rng(1, 2, 3);
        let mut b = stream_rng(1, 3, 2);
        let mut c = stream_rng(1, 2, 3);
        let (x, y, z): (u64, u64, u64) = (a.random(), b.random(), c.random());
        assert_ne!(x, y);
        assert_eq!(x, z);
    }

    #[test]
    fn algorithm_parse() {
        assert_eq!("vb".parse::<Algorithm>().unwrap(), Algorithm::Vb);
        assert_eq!(Algorithm::Sampled.to_string(), "sampled");
        assert!("gibbs".parse::<Algorithm>().is_err());
    }
}
