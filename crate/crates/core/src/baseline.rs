//! Dense mean-field local step used as the comparison baseline.
//!
//! Each token gets a full distribution `phi` over all `K` topics and the
//! document gets variational Dirichlet parameters `gamma`. The two are
//! updated alternately for a fixed number of rounds, so per-token work is
//! always `K`.

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::sampler::DocContribution;
use crate::special::digamma;
use crate::state::GlobalState;

/// Local variational parameters of one document.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalVb {
    topics: usize,
    /// Row-major `N_d x K`.
    phi: Vec<f64>,
    gamma: Vec<f64>,
    tokens: Vec<u32>,
}

impl LocalVb {
    pub fn phi(&self, token: usize) -> &[f64] {
        &self.phi[token * self.topics..(token + 1) * self.topics]
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// Dense expected counts `sum_i phi_ik [w_i = w]` as `(word, topic, value)`
    /// sorted by `(word, topic)`; entries that underflow to zero are omitted.
    pub fn expected_counts(&self) -> Vec<(u32, u32, f64)> {
        let mut order: Vec<usize> = (0..self.tokens.len()).collect();
        order.sort_by_key(|&i| self.tokens[i]);
        let mut out: Vec<(u32, u32, f64)> = Vec::new();
        let mut i = 0;
        while i < order.len() {
            let w = self.tokens[order[i]];
            let mut row = vec![0.0; self.topics];
            while i < order.len() && self.tokens[order[i]] == w {
                for (acc, p) in row.iter_mut().zip(self.phi(order[i])) {
                    *acc += p;
                }
                i += 1;
            }
            out.extend(
                row.into_iter()
                    .enumerate()
                    .filter(|&(_, v)| v > 0.0)
                    .map(|(k, v)| (w, k as u32, v)),
            );
        }
        out
    }

    pub fn into_contribution(self, rounds: usize) -> DocContribution {
        let visits = (self.tokens.len() * rounds) as u64;
        DocContribution {
            entries: self.expected_counts(),
            tokens: self.tokens.len(),
            touched: visits * self.topics as u64,
            visits,
        }
    }
}

/// Coordinate ascent on `(phi, gamma)` starting from `gamma_k = alpha + N_d / K`.
pub fn local_step(doc: &Document, state: &GlobalState, alpha: f64, rounds: usize) -> Result<LocalVb> {
    if doc.is_empty() {
        return Err(Error::EmptyDocument);
    }
    if !(alpha > 0.0) {
        return Err(Error::Config(format!("alpha {alpha} must be positive")));
    }
    let k = state.num_topics();
    let v = state.vocab_size();
    let n = doc.len();
    if let Some(&w) = doc.tokens().iter().find(|&&w| w as usize >= v) {
        return Err(Error::UnknownWord {
            word: w as usize,
            vocab: v,
        });
    }

    // exp(E[log beta]) per distinct word, shifted per word for stability.
    let v_eta = v as f64 * state.eta();
    let topic_term: Vec<f64> = state
        .topic_totals()
        .iter()
        .map(|&t| digamma(v_eta + t))
        .collect();
    let words = doc.distinct_words();
    let psi_eta = digamma(state.eta());
    let beta: Vec<Vec<f64>> = words
        .iter()
        .map(|&w| {
            let mut elog: Vec<f64> = topic_term.iter().map(|t| psi_eta - t).collect();
            for (kk, nt) in state.word_entries(w as usize) {
                elog[kk] = digamma(state.eta() + nt) - topic_term[kk];
            }
            let max = elog.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            elog.iter().map(|e| (e - max).exp()).collect()
        })
        .collect();
    let slot: Vec<usize> = doc
        .tokens()
        .iter()
        .map(|w| words.binary_search(w).expect("distinct word"))
        .collect();

    let mut gamma = vec![alpha + n as f64 / k as f64; k];
    let mut phi = vec![1.0 / k as f64; n * k];
    let mut theta = vec![0.0; k];
    for _ in 0..rounds {
        let max = gamma.iter().map(|&g| digamma(g)).fold(f64::NEG_INFINITY, f64::max);
        for (t, &g) in theta.iter_mut().zip(&gamma) {
            *t = (digamma(g) - max).exp();
        }
        let mut next = vec![alpha; k];
        for (i, &s) in slot.iter().enumerate() {
            let row = &mut phi[i * k..(i + 1) * k];
            let mut z = 0.0;
            for ((p, &t), &b) in row.iter_mut().zip(&theta).zip(&beta[s]) {
                *p = t * b;
                z += *p;
            }
            for (p, g) in row.iter_mut().zip(next.iter_mut()) {
                *p /= z;
                *g += *p;
            }
        }
        gamma = next;
    }
    Ok(LocalVb {
        topics: k,
        phi,
        gamma,
        tokens: doc.tokens().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::MinibatchStats;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_topic() {
        let s = GlobalState::init(1, 4, 0.5, 1, 1.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let doc = Document::new(0, vec![0, 2, 2, 3]);
        let vb = local_step(&doc, &s, 0.1, 4).unwrap();
        assert!((vb.gamma()[0] - 4.1).abs() < 1e-12);
        for i in 0..4 {
            assert_eq!(vb.phi(i), &[1.0]);
        }
        let counts = vb.expected_counts();
        assert_eq!(counts, vec![(0, 0, 1.0), (2, 0, 2.0), (3, 0, 1.0)]);
    }

    #[test]
    fn symmetric_fixed_point() {
        let s = GlobalState::new(4, 3, 0.5).unwrap();
        let doc = Document::new(0, vec![0, 1, 1, 2, 2]);
        for rounds in 0..4 {
            let vb = local_step(&doc, &s, 0.1, rounds).unwrap();
            for i in 0..5 {
                for &p in vb.phi(i) {
                    assert!((p - 0.25).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn rows_normalized_and_mass_conserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = GlobalState::init(6, 10, 0.4, 3, 2.0, &mut rng).unwrap();
        let stats = MinibatchStats::from_entries(vec![(1, 2, 3.0), (4, 5, 1.0)], 2);
        s.apply_update(&stats, 0.3, 20).unwrap();
        let doc = Document::new(0, vec![1, 1, 4, 7, 9, 9, 9]);
        let vb = local_step(&doc, &s, 0.1, 5).unwrap();
        for i in 0..7 {
            assert!((vb.phi(i).iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        assert!(vb.gamma().iter().all(|&g| g >= 0.1));
        let mass: f64 = vb.expected_counts().iter().map(|e| e.2).sum();
        assert!((mass - 7.0).abs() < 1e-8);
        let c = vb.into_contribution(5);
        assert_eq!(c.touched, 7 * 5 * 6);
    }

    #[test]
    fn empty_document() {
        let s = GlobalState::new(2, 2, 0.5).unwrap();
        assert!(local_step(&Document::new(0, vec![]), &s, 0.1, 3).is_err());
    }
}
