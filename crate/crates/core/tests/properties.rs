//! Property tests over the pure building blocks.

use proptest::prelude::*;

use eem::autodiff::{softmax, Tensor};
use eem::emotion::{delta_s_norm, LexiconScorer};
use eem::model::compute_lambda;
use eem::text::{join_tokens, normalize_text, tokenize, Vocab};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn lambda_stays_in_unit_interval(
        s2 in 0.0f64..=1.0,
        d in 0.0f64..=1.0,
        w1 in -100.0f64..100.0,
        w2 in -100.0f64..100.0,
        b in -100.0f64..100.0,
    ) {
        let l = compute_lambda(s2, d, w1, w2, b).unwrap();
        prop_assert!((0.0..=1.0).contains(&l));
        prop_assert!(l >= s2.min(d) - 1e-15 && l <= s2.max(d) + 1e-15);
    }

    #[test]
    fn delta_is_antisymmetric(s1 in 0.0f64..=1.0, s2 in 0.0f64..=1.0) {
        let a = delta_s_norm(s1, s2).unwrap();
        let b = delta_s_norm(s2, s1).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a + b - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normalization_is_idempotent(raw in "[ -~\u{2018}\u{2019}\u{201c}\u{201d}]{0,60}") {
        let once = normalize_text(&raw);
        prop_assert_eq!(normalize_text(&once), once);
    }

    #[test]
    fn joined_tokens_retokenize(raw in "[a-zA-Z0-9 ,.!?']{0,60}") {
        let toks = tokenize(&normalize_text(&raw));
        prop_assert_eq!(tokenize(&join_tokens(&toks)), toks);
    }

    #[test]
    fn lexicon_score_in_unit_interval(words in proptest::collection::vec("(good|bad|meh|great|sad)", 0..12)) {
        let lex = LexiconScorer::new(["good", "great"], ["bad", "sad"]).unwrap();
        let s = lex.score(&words);
        prop_assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn vocab_round_trip(words in proptest::collection::vec("[a-e]{1,3}", 1..20)) {
        let v = Vocab::build(words.iter().map(String::as_str), 1000).unwrap();
        let ids = v.encode(&words);
        prop_assert_eq!(v.decode(&ids).unwrap(), words);
    }

    #[test]
    fn softmax_is_a_distribution(xs in proptest::collection::vec(-500.0f64..500.0, 1..10)) {
        let p = softmax(&Tensor::vector(xs)).unwrap();
        let total: f64 = p.data().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(p.data().iter().all(|x| *x >= 0.0));
    }
}
