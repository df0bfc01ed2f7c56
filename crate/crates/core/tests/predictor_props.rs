use std::collections::HashMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use syncdialog::predictor::{
    conditional_perplexity, perplexity, sample_next, score, ModelError, NgramModel, NllSum, Predictor,
    Sampler, SamplerConfig,
};
use syncdialog::tokens::Token;

/// P(next | last `order` tokens) by counting windows directly.
fn brute_prob(corpus: &[Vec<Token>], order: usize, alpha: f64, v: usize, ctx: &[Token], tok: Token) -> f64 {
    let bos = v as Token;
    let key: Vec<Token> = {
        let mut padded = vec![bos; order];
        padded.extend_from_slice(ctx);
        padded[padded.len() - order..].to_vec()
    };
    let (mut hit, mut total) = (0u64, 0u64);
    for seq in corpus {
        let mut padded = vec![bos; order];
        padded.extend_from_slice(seq);
        for i in order..padded.len() {
            if padded[i - order..i] == key[..] {
                total += 1;
                if padded[i] == tok {
                    hit += 1;
                }
            }
        }
    }
    (hit as f64 + alpha) / (total as f64 + alpha * v as f64)
}

fn corpus_strategy(v: u32) -> impl Strategy<Value = Vec<Vec<Token>>> {
    prop::collection::vec(prop::collection::vec(0..v, 1..30), 1..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_brute_force_counts(
        corpus in corpus_strategy(5),
        order in 1usize..4,
        alpha in 0.01f64..2.0,
        ctx in prop::collection::vec(0u32..5, 0..6),
    ) {
        let m = NgramModel::train(&corpus, 5, order, alpha).unwrap();
        let dist = m.next_dist(&ctx);
        let sum: f64 = dist.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        for t in 0..5u32 {
            let want = brute_prob(&corpus, order, alpha, 5, &ctx, t);
            prop_assert!((dist[t as usize] - want).abs() < 1e-12);
            prop_assert!(dist[t as usize] > 0.0);
            prop_assert!((m.prob(&ctx, t) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn backoff_is_a_distribution_with_full_support(
        corpus in corpus_strategy(6),
        order in 1usize..5,
        ctx in prop::collection::vec(0u32..6, 0..8),
    ) {
        let m = NgramModel::train_backoff(&corpus, 6, order, 0.05).unwrap();
        let dist = m.next_dist(&ctx);
        prop_assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(dist.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn save_load_is_exact(corpus in corpus_strategy(7), order in 1usize..4, backoff in any::<bool>()) {
        let m = if backoff {
            NgramModel::train_backoff(&corpus, 7, order, 0.3).unwrap()
        } else {
            NgramModel::train(&corpus, 7, order, 0.3).unwrap()
        };
        let back = NgramModel::from_json_str(&m.to_json_string()).unwrap();
        prop_assert_eq!(&back, &m);
        let mut rng = ChaCha8Rng::seed_from_u64(order as u64);
        for _ in 0..100 {
            let len = rng.random_range(0..6);
            let ctx: Vec<Token> = (0..len).map(|_| rng.random_range(0..7)).collect();
            let (a, b) = (m.next_dist(&ctx), back.next_dist(&ctx));
            prop_assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
        }
        prop_assert_eq!(back.to_json_string(), m.to_json_string());
    }

    #[test]
    fn perplexity_ignores_batching(seq in prop::collection::vec(0u32..5, 2..60), cut in 1usize..59) {
        let corpus = vec![vec![0, 1, 2, 3, 4, 0, 1, 2, 0, 0, 3]];
        let m = NgramModel::train(&corpus, 5, 2, 0.5).unwrap();
        let cut = cut.min(seq.len() - 1);
        let whole = score(&m, &[], &seq);
        let parts = score(&m, &[], &seq[..cut]).merge(score(&m, &seq[..cut], &seq[cut..]));
        prop_assert_eq!(whole.tokens, parts.tokens);
        prop_assert!((whole.perplexity().unwrap() - parts.perplexity().unwrap()).abs() < 1e-9);
    }
}

#[test]
fn spec_style_counting_example() {
    // Context [1] occurs three times in "1 2 1 2 1 2", always followed by 2.
    let m = NgramModel::train(&[vec![1, 2, 1, 2, 1, 2]], 4, 1, 1.0).unwrap();
    assert!((m.prob(&[1], 2) - 4.0 / 7.0).abs() < 1e-12);
    assert!((m.prob(&[1], 2) - brute_prob(&[vec![1, 2, 1, 2, 1, 2]], 1, 1.0, 4, &[1], 2)).abs() < 1e-12);
    let short = NgramModel::train(&[vec![1, 2, 1, 2]], 4, 1, 1.0).unwrap();
    assert!((short.prob(&[1], 2) - 0.5).abs() < 1e-12);
}

#[test]
fn ten_token_corpus_oracle() {
    let corpus = vec![vec![0, 1, 1, 2, 0, 1, 2, 2, 1, 0]];
    let m = NgramModel::train(&corpus, 3, 2, 0.25).unwrap();
    for a in 0..3 {
        for b in 0..3 {
            for t in 0..3 {
                let want = brute_prob(&corpus, 2, 0.25, 3, &[a, b], t);
                assert!((m.prob(&[a, b], t) - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn bigram_log_sum_oracle() {
    let corpus = vec![vec![0, 1, 2, 1, 0, 2, 2, 1, 0, 1, 1, 2]];
    let m = NgramModel::train(&corpus, 3, 1, 0.5).unwrap();
    let seq: Vec<Token> = vec![1, 0, 2, 2, 1, 0, 0, 1, 2, 1, 2, 0, 1, 1, 2, 0, 2, 1, 0, 1];
    let mut nll = 0.0;
    for i in 0..seq.len() {
        let ctx = if i == 0 { vec![] } else { vec![seq[i - 1]] };
        nll -= brute_prob(&corpus, 1, 0.5, 3, &ctx, seq[i]).ln();
    }
    let want = (nll / seq.len() as f64).exp();
    assert!((perplexity(&m, &seq).unwrap() - want).abs() < 1e-9);
}

#[test]
fn uniform_model_perplexity_is_vocab_size() {
    let m = NgramModel::new(3, 1.0, 17).unwrap();
    assert!((perplexity(&m, &[1, 2, 3, 4, 5]).unwrap() - 17.0).abs() < 1e-9);
    assert!(matches!(perplexity(&m, &[]), Err(ModelError::EmptySequence)));
    assert!((conditional_perplexity(&m, &[1], &[2]).unwrap() - 17.0).abs() < 1e-9);
}

#[test]
fn certain_model_has_unit_perplexity() {
    struct Certain;
    impl Predictor for Certain {
        fn vocab_ext(&self) -> usize {
            3
        }
        fn next_dist(&self, context: &[Token]) -> Vec<f64> {
            let mut d = vec![0.0; 3];
            d[context.len() % 3] = 1.0;
            d
        }
    }
    assert!((perplexity(&Certain, &[0, 1, 2, 0, 1]).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn nll_sum_merge_is_token_weighted() {
    let a = NllSum { nll: 2.0, tokens: 1 };
    let b = NllSum { nll: 6.0, tokens: 3 };
    assert!((a.merge(b).perplexity().unwrap() - 2.0f64.exp()).abs() < 1e-12);
}

#[test]
fn held_out_beats_disjoint_alphabet() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut gen = |lo: u32| -> Vec<Token> {
        let mut s = vec![lo];
        for _ in 0..400 {
            let prev = *s.last().unwrap() - lo;
            let step = if rng.random_bool(0.8) { 1 } else { 2 };
            s.push(lo + (prev + step) % 5);
        }
        s
    };
    let train: Vec<Vec<Token>> = (0..5).map(|_| gen(0)).collect();
    let m = NgramModel::train(&train, 10, 2, 0.1).unwrap();
    let same = perplexity(&m, &gen(0)).unwrap();
    let other = perplexity(&m, &gen(5)).unwrap();
    assert!(same < other, "{same} vs {other}");
}

#[test]
fn monte_carlo_frequencies_match() {
    let corpus = vec![vec![0, 1, 0, 2, 0, 1, 0, 3, 0, 1, 0, 1]];
    let m = NgramModel::train(&corpus, 4, 1, 0.5).unwrap();
    let want = m.next_dist(&[0]);
    let mut s = Sampler::new(SamplerConfig::with_seed(11));
    let n = 100_000;
    let mut counts: HashMap<Token, usize> = HashMap::new();
    for _ in 0..n {
        *counts.entry(s.sample(&want, &|_| true).unwrap()).or_default() += 1;
    }
    for (t, p) in want.iter().enumerate() {
        let f = counts.get(&(t as Token)).copied().unwrap_or(0) as f64 / n as f64;
        assert!((f - p).abs() < 0.01, "token {t}: {f} vs {p}");
    }
}

#[test]
fn sample_next_is_a_pure_function_of_draw_index() {
    let m = NgramModel::train(&[vec![0, 1, 2, 3, 0, 2]], 4, 1, 1.0).unwrap();
    let cfg = SamplerConfig::with_seed(99);
    let a: Vec<Token> = (0..50).map(|i| sample_next(&m, &[2], &cfg, i)).collect();
    let b: Vec<Token> = (0..50).map(|i| sample_next(&m, &[2], &cfg, i)).collect();
    assert_eq!(a, b);
    assert!(a.iter().all(|&t| t < 4));
    let mut s = Sampler::new(cfg);
    let dist = m.next_dist(&[2]);
    let c: Vec<Token> = (0..50).map(|_| s.sample(&dist, &|_| true).unwrap()).collect();
    assert_eq!(a, c);
}

#[test]
fn backoff_prefers_seen_suffix_over_uniform() {
    let m = NgramModel::train_backoff(&[vec![1, 2, 3, 1, 2, 3]], 5, 3, 0.01).unwrap();
    assert!(m.has_backoff());
    // [4, 4, 2] never occurs; its suffix [2] is always followed by 3.
    let d = m.next_dist(&[4, 4, 2]);
    assert!(d[3] > 0.9);
    let plain = NgramModel::train(&[vec![1, 2, 3, 1, 2, 3]], 5, 3, 0.01).unwrap();
    assert!((plain.next_dist(&[4, 4, 2])[3] - 0.2).abs() < 1e-12);
}
