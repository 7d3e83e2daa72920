use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sparselda::state::{GlobalState, MinibatchStats, ResetPolicy};

#[derive(Debug, Clone)]
struct Update {
    entries: Vec<(u32, u32, f64)>,
    batch: usize,
    rho: f64,
}

fn updates(k: u32, v: u32) -> impl Strategy<Value = Vec<Update>> {
    let update = (
        prop::collection::vec((0..v, 0..k, 0.01f64..5.0), 0..12),
        1usize..8,
        0.001f64..0.99,
    )
        .prop_map(|(entries, batch, rho)| Update { entries, batch, rho });
    prop::collection::vec(update, 1..25)
}

fn sum_n(state: &GlobalState) -> f64 {
    state.topic_totals().iter().sum()
}

proptest! {
    #[test]
    fn mass_follows_the_convex_recursion(ups in updates(6, 9), seed in 0u64..1000) {
        let mut s = GlobalState::init(6, 9, 0.3, 2, 1.5, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let d = 250;
        for u in &ups {
            let stats = MinibatchStats::from_entries(u.entries.clone(), u.batch);
            let before = sum_n(&s);
            s.apply_update(&stats, u.rho, d).unwrap();
            let want = (1.0 - u.rho) * before + u.rho * d as f64 / u.batch as f64 * stats.token_total();
            prop_assert!((sum_n(&s) - want).abs() <= 1e-9 * want.max(1.0));
            // Running totals agree with totals rebuilt from the entries.
            for (a, b) in s.topic_totals().iter().zip(s.recomputed_totals()) {
                prop_assert!((a - b).abs() <= 1e-9 * b.max(1.0));
            }
            for k in 0..6 {
                for w in 0..9 {
                    prop_assert!(s.lambda(k, w) >= 0.3);
                }
            }
        }
    }

    #[test]
    fn reset_and_reload_preserve_parameters(ups in updates(4, 7), seed in 0u64..1000) {
        let mut s = GlobalState::init(4, 7, 0.5, 1, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        for u in &ups {
            s.apply_update(&MinibatchStats::from_entries(u.entries.clone(), u.batch), u.rho, 40).unwrap();
        }
        let mut bytes = Vec::new();
        s.write_checkpoint(&mut bytes).unwrap();
        let loaded = GlobalState::read_checkpoint(&bytes[..]).unwrap();
        let mut reset = s.clone();
        reset.reset_scale();
        prop_assert_eq!(reset.scale(), 1.0);
        for k in 0..4 {
            for w in 0..7 {
                let e = s.expected_log_beta(k, w);
                prop_assert!((loaded.expected_log_beta(k, w) - e).abs() <= 1e-12 * e.abs());
                prop_assert!((reset.lambda(k, w) - s.lambda(k, w)).abs() <= 1e-12 * s.lambda(k, w));
            }
        }
    }
}

#[test]
fn untouched_words_stay_at_eta_exactly() {
    let mut s = GlobalState::new(3, 5, 0.5).unwrap();
    for _ in 0..50 {
        let stats = MinibatchStats::from_entries(vec![(0, 1, 2.0)], 10);
        s.apply_update(&stats, 0.1, 1000).unwrap();
        s.maintain(&ResetPolicy::default());
    }
    for k in 0..3 {
        for w in 1..5 {
            assert_eq!(s.lambda(k, w), 0.5);
        }
    }
    assert!(s.lambda(1, 0) > 0.5);
    assert_eq!(s.nnz(), 1);
}

#[test]
fn zero_statistics_decay_toward_eta() {
    let mut s = GlobalState::new(2, 2, 0.5).unwrap();
    s.apply_update(&MinibatchStats::from_entries(vec![(1, 0, 4.0)], 1), 0.5, 10).unwrap();
    let start = s.lambda(0, 1);
    let empty = MinibatchStats::from_entries(vec![], 1);
    let mut expect = start;
    for _ in 0..10 {
        s.apply_update(&empty, 0.2, 10).unwrap();
        expect = 0.8 * expect + 0.2 * 0.5;
        assert!((s.lambda(0, 1) - expect).abs() < 1e-12);
    }
}

#[test]
fn repeated_resets_keep_state_bounded_and_exact() {
    let mut s = GlobalState::new(2, 3, 0.4).unwrap();
    let mut dense = [[0.4f64; 3]; 2];
    let mut resets = 0;
    for t in 0..400 {
        let w = t % 3;
        let stats = MinibatchStats::from_entries(vec![(w as u32, (t % 2) as u32, 1.0)], 5);
        s.apply_update(&stats, 0.3, 20).unwrap();
        for (k, row) in dense.iter_mut().enumerate() {
            for (ww, lam) in row.iter_mut().enumerate() {
                let n = if ww == w && k == t % 2 { 1.0 } else { 0.0 };
                *lam = 0.7 * *lam + 0.3 * (0.4 + 4.0 * n);
            }
        }
        if s.maintain(&ResetPolicy::default()) {
            resets += 1;
        }
        assert!(s.scale() >= 1e-6 * 0.7);
    }
    assert!(resets > 5);
    for k in 0..2 {
        for w in 0..3 {
            assert!((s.lambda(k, w) - dense[k][w]).abs() < 1e-8);
        }
    }
}
