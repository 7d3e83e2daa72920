//! Corpora sampled from a known LDA model, for recovery tests and demos.

use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Gamma;

use crate::corpus::{Corpus, Document, Vocabulary};
use crate::error::{Error, Result};

/// Ground-truth topics and document-topic prior.
#[derive(Debug, Clone)]
pub struct SyntheticLda {
    topics: Vec<Vec<f64>>,
    alpha: f64,
}

fn dirichlet<R: Rng + ?Sized>(concentration: f64, dim: usize, rng: &mut R) -> Result<Vec<f64>> {
    let gamma = Gamma::new(concentration, 1.0).map_err(|e| Error::Config(format!("gamma({concentration}): {e}")))?;
    loop {
        let draws: Vec<f64> = (0..dim).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        // Very small concentrations can underflow every component.
        if total > 0.0 {
            return Ok(draws.into_iter().map(|x| x / total).collect());
        }
    }
}

impl SyntheticLda {
    /// Draws `topics` word distributions from a symmetric Dirichlet with the
    /// given concentration; small values give sparse topics.
    pub fn sample<R: Rng + ?Sized>(
        topics: usize,
        vocab: usize,
        alpha: f64,
        topic_concentration: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if topics == 0 || vocab == 0 || !(alpha > 0.0) {
            return Err(Error::Config("synthetic model needs topics, words and alpha > 0".into()));
        }
        let topics = (0..topics)
            .map(|_| dirichlet(topic_concentration, vocab, rng))
            .collect::<Result<_>>()?;
        Ok(SyntheticLda { topics, alpha })
    }

    pub fn topics(&self) -> &[Vec<f64>] {
        &self.topics
    }

    pub fn vocab_size(&self) -> usize {
        self.topics[0].len()
    }

    /// Generates `count` documents of `length` tokens with ids starting at `first_id`.
    pub fn documents<R: Rng + ?Sized>(&self, count: usize, length: usize, first_id: usize, rng: &mut R) -> Result<Vec<Document>> {
        let words: Vec<WeightedIndex<f64>> = self
            .topics
            .iter()
            .map(|t| WeightedIndex::new(t).map_err(|e| Error::Config(e.to_string())))
            .collect::<Result<_>>()?;
        (0..count)
            .map(|d| {
                let theta = dirichlet(self.alpha, self.topics.len(), rng)?;
                let pick = WeightedIndex::new(&theta).map_err(|e| Error::Config(e.to_string()))?;
                let tokens = (0..length)
                    .map(|_| words[pick.sample(rng)].sample(rng) as u32)
                    .collect();
                Ok(Document::new(first_id + d, tokens))
            })
            .collect()
    }

    /// A corpus of `count` documents with a numbered vocabulary.
    pub fn corpus<R: Rng + ?Sized>(&self, count: usize, length: usize, rng: &mut R) -> Result<Corpus> {
        let docs = self.documents(count, length, 0, rng)?;
        Corpus::new(docs, Arc::new(Vocabulary::numbered(self.vocab_size())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes_and_normalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = SyntheticLda::sample(4, 30, 0.1, 0.05, &mut rng).unwrap();
        for t in m.topics() {
            assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let c = m.corpus(10, 25, &mut rng).unwrap();
        assert_eq!(c.num_docs(), 10);
        assert_eq!(c.num_tokens(), 250);
        assert_eq!(c.vocab_size(), 30);
    }
}
