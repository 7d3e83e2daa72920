//! Sparse stochastic inference for latent Dirichlet allocation.
//!
//! Topic-word parameters are fitted by stochastic natural-gradient steps on
//! minibatches of documents. Per-document expectations come from a few
//! sweeps of collapsed Gibbs sampling, which produces sparse statistics; the
//! global parameters are stored in a scaled sparse form so that both the
//! sampler and the update only pay for nonzero entries.
//!
//! ```
//! use rand::SeedableRng;
//! use sparselda::{synthetic::SyntheticLda, trainer::{train, TrainConfig}, eval::PointEstimate};
//!
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
//! let truth = SyntheticLda::sample(4, 40, 0.1, 0.05, &mut rng).unwrap();
//! let corpus = truth.corpus(200, 30, &mut rng).unwrap();
//!
//! let config = TrainConfig { topics: 4, batch_size: 20, minibatches: 50, ..TrainConfig::default() };
//! let (state, metrics) = train(&corpus, &config).unwrap();
//! assert_eq!(metrics.records.len(), 50);
//!
//! let estimate = PointEstimate::from_state(&state);
//! let row_sum: f64 = estimate.row(0).iter().sum();
//! assert!((row_sum - 1.0).abs() < 1e-8);
//! ```
//!
//! A longer guide lives in the `book/` directory of the repository; its
//! code listings are compiled and run as doctests of this crate.

pub mod baseline;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod sampler;
pub mod special;
pub mod state;
pub mod synthetic;
pub mod trainer;

pub use corpus::{load_uci, Corpus, DocFrequencies, Document, Vocabulary};
pub use error::{Error, Result};
pub use eval::{EvalConfig, PointEstimate};
pub use sampler::{Sampler, SamplerConfig};
pub use state::{GlobalState, LearningSchedule, MinibatchStats, ResetPolicy};
pub use trainer::{train, Algorithm, RunMetrics, TrainConfig};

// Book chapters, so that `cargo test --doc` runs their listings.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/sparse-state.md")]
    mod sparse_state {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
