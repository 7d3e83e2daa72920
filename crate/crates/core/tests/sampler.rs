use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparselda::corpus::Document;
use sparselda::sampler::{dense_conditional, exact_moments, Sampler, SamplerConfig};
use sparselda::state::{GlobalState, MinibatchStats};

fn random_state(k: usize, v: usize, seed: u64) -> GlobalState {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut s = GlobalState::init(k, v, 0.3, 1.min(k), 1.0, &mut r).unwrap();
    for _ in 0..4 {
        let mut entries = Vec::new();
        for w in 0..v as u32 {
            if r.random::<f64>() < 0.5 {
                entries.push((w, r.random_range(0..k as u32), r.random_range(0.5..3.0)));
            }
        }
        s.apply_update(&MinibatchStats::from_entries(entries, 3), 0.4, 60).unwrap();
    }
    s
}

/// Unnormalized probability of a full assignment `z` under the optimal
/// per-document distribution, computed directly from its definition.
fn target_weight(z: &[usize], doc: &Document, state: &GlobalState, alpha: f64) -> f64 {
    let mut counts = vec![0usize; state.num_topics()];
    let mut log_w = 0.0;
    for (&k, &w) in z.iter().zip(doc.tokens()) {
        log_w += (alpha + counts[k] as f64).ln() + state.expected_log_beta(k, w as usize);
        counts[k] += 1;
    }
    log_w.exp()
}

fn configurations(k: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|z| {
                (0..k).map(move |t| {
                    let mut z = z.clone();
                    z.push(t);
                    z
                })
            })
            .collect();
    }
    out
}

fn index_of(z: &[usize], k: usize) -> usize {
    z.iter().fold(0, |acc, &t| acc * k + t)
}

/// Applying the single-site update at every position to the exact target
/// distribution must give the target back.
#[test]
fn single_site_updates_leave_target_invariant() {
    for (seed, k, tokens) in [(1, 2, vec![0u32, 1, 1]), (2, 3, vec![2, 0, 2]), (3, 3, vec![1, 1, 3, 0])] {
        let state = random_state(k, 4, seed);
        let alpha = 0.2;
        let doc = Document::new(0, tokens);
        let n = doc.len();
        let configs = configurations(k, n);
        let weights: Vec<f64> = configs.iter().map(|z| target_weight(z, &doc, &state, alpha)).collect();
        let total: f64 = weights.iter().sum();
        let target: Vec<f64> = weights.iter().map(|w| w / total).collect();

        let sampler = Sampler::new(&state, SamplerConfig::new(alpha, 0, 1).unwrap()).unwrap();
        let mut ws = sampler.init_assignments(&doc, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for i in 0..n {
            let mut next = vec![0.0; configs.len()];
            for (z, &p) in configs.iter().zip(&target) {
                // Load configuration z into the workspace, then take its cavity at i.
                for j in 0..n {
                    ws.remove(j);
                }
                for (j, &t) in z.iter().enumerate() {
                    ws.assign(j, t as u32);
                }
                ws.remove(i);
                let cond = ws.conditional(doc.tokens()[i] as usize);
                let z_norm: f64 = cond.iter().sum();
                for (t, c) in cond.iter().enumerate() {
                    let mut z2 = z.clone();
                    z2[i] = t;
                    next[index_of(&z2, k)] += p * c / z_norm;
                }
                ws.assign(i, z[i] as u32);
            }
            for (a, b) in next.iter().zip(&target) {
                assert!((a - b).abs() < 1e-12, "position {i}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn exact_moments_conserve_word_counts() {
    let state = random_state(3, 5, 9);
    let doc = Document::new(0, vec![4, 1, 4, 4, 0]);
    let moments = exact_moments(&doc, &state, 0.1).unwrap();
    for w in 0..5 {
        let n_w = doc.tokens().iter().filter(|&&x| x as usize == w).count() as f64;
        let sum: f64 = moments.iter().filter(|((ww, _), _)| *ww == w).map(|(_, v)| v).sum();
        assert!((sum - n_w).abs() < 1e-12);
    }
}

#[test]
fn long_chains_approach_exact_moments() {
    let state = random_state(2, 3, 5);
    let doc = Document::new(0, vec![0, 2, 2]);
    let exact = exact_moments(&doc, &state, 0.3).unwrap();
    let sampler = Sampler::new(&state, SamplerConfig::new(0.3, 100, 100_000).unwrap()).unwrap();
    let c = sampler.sample_document(&doc, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    for (&(w, k), &want) in &exact {
        let got = c
            .entries
            .iter()
            .find(|e| e.0 as usize == w && e.1 as usize == k)
            .map_or(0.0, |e| e.2);
        assert!((got - want).abs() < 0.02, "({w},{k}): {got} vs {want}");
    }
}

proptest! {
    #[test]
    fn bucket_sum_matches_dense_conditional(
        seed in 0u64..10_000,
        k in 1usize..12,
        tokens in prop::collection::vec(0u32..8, 1..20),
        alpha in 0.01f64..2.0,
    ) {
        let state = random_state(k, 8, seed);
        let doc = Document::new(0, tokens);
        let sampler = Sampler::new(&state, SamplerConfig::new(alpha, 1, 1).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ws = sampler.init_assignments(&doc, &mut rng).unwrap();
        ws.sweep(&mut rng);
        let i = seed as usize % doc.len();
        ws.remove(i);
        for w in 0..8 {
            let dense = dense_conditional(&state, ws.doc_topic(), w, alpha);
            let sparse = ws.conditional(w);
            let z = ws.normalizer(w).total();
            prop_assert!((z - dense.iter().sum::<f64>()).abs() <= 1e-10 * z);
            for (a, b) in sparse.iter().zip(&dense) {
                prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn contributions_carry_one_unit_per_token(
        seed in 0u64..10_000,
        k in 1usize..20,
        tokens in prop::collection::vec(0u32..8, 1..30),
        samples in 1usize..5,
    ) {
        let state = random_state(k, 8, seed);
        let doc = Document::new(0, tokens);
        let sampler = Sampler::new(&state, SamplerConfig::new(0.1, 1, samples).unwrap()).unwrap();
        let c = sampler.sample_document(&doc, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!((c.mass() - doc.len() as f64).abs() < 1e-9);
        prop_assert!(c.touched <= c.visits * k as u64);
        for &(w, _, v) in &c.entries {
            prop_assert!(doc.tokens().contains(&w));
            prop_assert!(v > 0.0);
        }
    }
}
