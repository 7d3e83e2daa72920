//! Variational topic-word parameters in scaled sparse form.
//!
//! The Dirichlet parameter is split as `lambda[k][w] = eta + n[k][w]`, and
//! only the nonzero `n[k][w]` are stored, divided by a global scale `pi`:
//! `s[k][w] = n[k][w] / pi`. Decaying every parameter by `(1 - rho)` is then a
//! single multiplication of `pi`, and a minibatch update only touches the
//! entries with nonzero statistics.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::special::digamma;

/// Magic tag on the first line of a checkpoint file.
pub const CHECKPOINT_TAG: &str = "sparse-lda-v1";

/// Step-size schedule `rho_t = (tau0 + t)^(-kappa)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningSchedule {
    pub kappa: f64,
    pub tau0: f64,
}

impl LearningSchedule {
    pub fn new(kappa: f64, tau0: f64) -> Result<Self> {
        if !(kappa > 0.5 && kappa <= 1.0) {
            return Err(Error::Config(format!("kappa {kappa} not in (0.5, 1]")));
        }
        if !(tau0 >= 0.0) {
            return Err(Error::Config(format!("tau0 {tau0} must be non-negative")));
        }
        Ok(LearningSchedule { kappa, tau0 })
    }

    pub fn rho(&self, t: u64) -> Result<f64> {
        let base = self.tau0 + t as f64;
        if !(base > 0.0) {
            return Err(Error::Config(format!("tau0 + t = {base} must be positive")));
        }
        Ok(base.powf(-self.kappa))
    }
}

/// Averaged sufficient statistics for one minibatch, sorted by `(word, topic)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinibatchStats {
    entries: Vec<(u32, u32, f64)>,
    batch_size: usize,
    token_total: f64,
}

impl MinibatchStats {
    /// Builds statistics from `(word, topic, value)` triples; duplicates are
    /// summed and non-positive values dropped.
    pub fn from_entries(mut entries: Vec<(u32, u32, f64)>, batch_size: usize) -> Self {
        entries.sort_by_key(|&(w, k, _)| (w, k));
        let mut merged: Vec<(u32, u32, f64)> = Vec::with_capacity(entries.len());
        for (w, k, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == w && last.1 == k => last.2 += v,
                _ => merged.push((w, k, v)),
            }
        }
        merged.retain(|e| e.2 > 0.0);
        let token_total = merged.iter().map(|e| e.2).sum();
        MinibatchStats {
            entries: merged,
            batch_size,
            token_total,
        }
    }

    pub fn entries(&self) -> &[(u32, u32, f64)] {
        &self.entries
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn token_total(&self) -> f64 {
        self.token_total
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// When to fold the scale back into the stored values, and what to prune
/// while doing so.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResetPolicy {
    /// Reset once `pi` drops below this value.
    pub reset_below: f64,
    /// Entries whose unscaled value is below this are dropped at each reset.
    pub prune_threshold: f64,
}

impl Default for ResetPolicy {
    fn default() -> Self {
        ResetPolicy {
            reset_below: 1e-6,
            prune_threshold: 1e-8,
        }
    }
}

/// Sparse scaled topic-word parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalState {
    topics: usize,
    vocab: usize,
    eta: f64,
    scale: f64,
    /// Per word, `(topic, scaled value)` sorted by topic.
    words: Vec<Vec<(u32, f64)>>,
    /// Unscaled per-topic totals.
    topic_totals: Vec<f64>,
    step: u64,
}

impl GlobalState {
    /// Fully smoothed state: `lambda = eta` everywhere.
    pub fn new(topics: usize, vocab: usize, eta: f64) -> Result<Self> {
        if topics == 0 || vocab == 0 {
            return Err(Error::Config("topic count and vocabulary size must be at least 1".into()));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Config(format!("eta {eta} must be positive")));
        }
        Ok(GlobalState {
            topics,
            vocab,
            eta,
            scale: 1.0,
            words: vec![Vec::new(); vocab],
            topic_totals: vec![0.0; topics],
            step: 0,
        })
    }

    /// Random sparse seeding: each word gets `seeds_per_word` distinct topics
    /// with mass drawn uniformly from `(0, seed_mass]`.
    pub fn init<R: Rng + ?Sized>(
        topics: usize,
        vocab: usize,
        eta: f64,
        seeds_per_word: usize,
        seed_mass: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut state = Self::new(topics, vocab, eta)?;
        if seeds_per_word > topics {
            return Err(Error::Config(format!(
                "seeds per word {seeds_per_word} exceeds topic count {topics}"
            )));
        }
        if !(seed_mass >= 0.0 && seed_mass.is_finite()) {
            return Err(Error::Config(format!("seed mass {seed_mass} must be non-negative")));
        }
        if seed_mass == 0.0 || seeds_per_word == 0 {
            return Ok(state);
        }
        for list in state.words.iter_mut() {
            let mut chosen: Vec<u32> = index::sample(rng, topics, seeds_per_word)
                .into_iter()
                .map(|k| k as u32)
                .collect();
            chosen.sort_unstable();
            for k in chosen {
                // 1 - U lies in (0, 1], so the mass is never zero.
                let mass = seed_mass * (1.0 - rng.random::<f64>());
                list.push((k, mass));
                state.topic_totals[k as usize] += mass;
            }
        }
        Ok(state)
    }

    pub fn num_topics(&self) -> usize {
        self.topics
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Stored `(topic, scaled value)` pairs for a word, sorted by topic.
    pub fn scaled_entries(&self, word: usize) -> &[(u32, f64)] {
        &self.words[word]
    }

    /// `(topic, n)` pairs for a word with the scale applied.
    pub fn word_entries(&self, word: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let scale = self.scale;
        self.words[word].iter().map(move |&(k, s)| (k as usize, scale * s))
    }

    /// Non-smoothing part `n[k][w] = lambda[k][w] - eta`.
    pub fn n_tilde(&self, topic: usize, word: usize) -> f64 {
        let list = &self.words[word];
        match list.binary_search_by_key(&(topic as u32), |e| e.0) {
            Ok(i) => self.scale * list[i].1,
            Err(_) => 0.0,
        }
    }

    pub fn lambda(&self, topic: usize, word: usize) -> f64 {
        self.eta + self.n_tilde(topic, word)
    }

    /// Unscaled total `sum_w n[k][w]` as maintained incrementally.
    pub fn topic_total(&self, topic: usize) -> f64 {
        self.topic_totals[topic]
    }

    pub fn topic_totals(&self) -> &[f64] {
        &self.topic_totals
    }

    /// Recomputes per-topic totals from the stored entries.
    pub fn recomputed_totals(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.topics];
        for list in &self.words {
            for &(k, s) in list {
                sums[k as usize] += s;
            }
        }
        sums.iter_mut().for_each(|x| *x *= self.scale);
        sums
    }

    /// `E_q[log beta_kw] = psi(eta + n_kw) - psi(V eta + n_k)`.
    pub fn expected_log_beta(&self, topic: usize, word: usize) -> f64 {
        let v_eta = self.vocab as f64 * self.eta;
        digamma(self.eta + self.n_tilde(topic, word)) - digamma(v_eta + self.topic_totals[topic])
    }

    pub fn nnz(&self) -> usize {
        self.words.iter().map(Vec::len).sum()
    }

    pub fn nonzero_fraction(&self) -> f64 {
        self.nnz() as f64 / (self.topics as f64 * self.vocab as f64)
    }

    /// Stochastic natural-gradient step, applied lazily.
    ///
    /// Equivalent to `lambda <- (1 - rho) lambda + rho (eta + D/|B| nhat)` for
    /// every `(k, w)`, but only entries with nonzero statistics are visited.
    pub fn apply_update(&mut self, stats: &MinibatchStats, rho: f64, corpus_docs: usize) -> Result<()> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::Config(format!("step size {rho} not in (0, 1)")));
        }
        if stats.batch_size == 0 {
            return Err(Error::Config("minibatch statistics with batch size 0".into()));
        }
        let weight = rho * corpus_docs as f64 / stats.batch_size as f64;
        self.scale *= 1.0 - rho;
        let inv_scale = 1.0 / self.scale;

        for t in self.topic_totals.iter_mut() {
            *t *= 1.0 - rho;
        }
        let mut start = 0;
        let entries = &stats.entries;
        while start < entries.len() {
            let w = entries[start].0;
            let end = start + entries[start..].iter().take_while(|e| e.0 == w).count();
            let list = self
                .words
                .get_mut(w as usize)
                .ok_or(Error::UnknownWord {
                    word: w as usize,
                    vocab: self.vocab,
                })?;
            for &(_, k, value) in &entries[start..end] {
                if k as usize >= self.topics {
                    return Err(Error::Config(format!("topic {k} out of range")));
                }
                let delta = weight * value;
                self.topic_totals[k as usize] += delta;
                let scaled = delta * inv_scale;
                match list.binary_search_by_key(&k, |e| e.0) {
                    Ok(i) => list[i].1 += scaled,
                    Err(i) => list.insert(i, (k, scaled)),
                }
            }
            start = end;
        }
        self.step += 1;
        Ok(())
    }

    /// Folds the scale into the stored values and sets it back to 1.
    pub fn reset_scale(&mut self) {
        if self.scale == 1.0 {
            return;
        }
        let scale = self.scale;
        for list in self.words.iter_mut() {
            for e in list.iter_mut() {
                e.1 *= scale;
            }
        }
        self.scale = 1.0;
    }

    /// Removes entries whose unscaled value is below `threshold`.
    pub fn prune(&mut self, threshold: f64) {
        if !(threshold > 0.0) {
            return;
        }
        let scale = self.scale;
        for list in self.words.iter_mut() {
            list.retain(|&(k, s)| {
                let n = scale * s;
                if n < threshold {
                    self.topic_totals[k as usize] -= n;
                    false
                } else {
                    true
                }
            });
        }
        for t in self.topic_totals.iter_mut() {
            if *t < 0.0 {
                *t = 0.0;
            }
        }
    }

    /// Resets and prunes if the scale has fallen below the policy's trigger.
    /// Returns whether a reset happened.
    pub fn maintain(&mut self, policy: &ResetPolicy) -> bool {
        if self.scale >= policy.reset_below {
            return false;
        }
        self.reset_scale();
        self.prune(policy.prune_threshold);
        self.topic_totals = self.recomputed_totals();
        true
    }

    /// Writes the checkpoint text format: a header line
    /// `sparse-lda-v1 K V eta step pi` followed by `w k scaled` lines sorted
    /// by `(w, k)`, all floats with 17 significant digits.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "{CHECKPOINT_TAG} {} {} {:.16e} {} {:.16e}",
            self.topics, self.vocab, self.eta, self.step, self.scale
        )?;
        for (w, list) in self.words.iter().enumerate() {
            for &(k, s) in list {
                writeln!(out, "{w} {k} {s:.16e}")?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_checkpoint(BufWriter::new(file))
    }

    pub fn read_checkpoint<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header = match lines.next() {
            Some((_, line)) => line?,
            None => return Err(Error::parse(1, "empty checkpoint")),
        };
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 6 || fields[0] != CHECKPOINT_TAG {
            return Err(Error::parse(1, format!("expected header `{CHECKPOINT_TAG} K V eta step pi`")));
        }
        let bad = |what: &str| Error::parse(1, format!("malformed {what}"));
        let topics: usize = fields[1].parse().map_err(|_| bad("K"))?;
        let vocab: usize = fields[2].parse().map_err(|_| bad("V"))?;
        let eta: f64 = fields[3].parse().map_err(|_| bad("eta"))?;
        let step: u64 = fields[4].parse().map_err(|_| bad("step"))?;
        let scale: f64 = fields[5].parse().map_err(|_| bad("pi"))?;
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(Error::parse(1, format!("scale {scale} not in (0, 1]")));
        }
        let mut state = Self::new(topics, vocab, eta).map_err(|e| Error::parse(1, e.to_string()))?;
        state.scale = scale;
        state.step = step;

        let mut last: Option<(usize, u32)> = None;
        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::parse(lineno, "expected `w k scaled_value`"));
            }
            let w: usize = f[0].parse().map_err(|_| Error::parse(lineno, "malformed word id"))?;
            let k: u32 = f[1].parse().map_err(|_| Error::parse(lineno, "malformed topic id"))?;
            let s: f64 = f[2].parse().map_err(|_| Error::parse(lineno, "malformed value"))?;
            if w >= vocab || k as usize >= topics {
                return Err(Error::parse(lineno, "id out of range"));
            }
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::parse(lineno, "stored values must be positive"));
            }
            if last.is_some_and(|prev| prev >= (w, k)) {
                return Err(Error::parse(lineno, "entries not sorted by (word, topic)"));
            }
            last = Some((w, k));
            state.words[w].push((k, s));
        }
        state.topic_totals = state.recomputed_totals();
        Ok(state)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_checkpoint(BufReader::new(file))
    }
}
