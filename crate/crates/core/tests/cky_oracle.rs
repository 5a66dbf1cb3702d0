//! CKY against exhaustive enumeration of labeled binary bracketings.

mod common;

use common::cky::{bracketings, brute_force};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spanparse::chart::{cky_decode, loss_augmented_decode, ChartScores, GoldSpans};
use spanparse::treebank::{parse_bracketed, LabelVocab, Token};

fn random_chart(rng: &mut ChaCha8Rng, n: usize, num_labels: usize) -> ChartScores {
    ChartScores::from_fn(n, num_labels, |_, _, _| rng.gen_range(-3.0..3.0))
}

fn tokens(n: usize) -> Vec<Token> {
    (0..n).map(|i| Token { form: format!("w{i}"), pos: "T".into(), index: i }).collect()
}

fn labels(k: usize) -> LabelVocab {
    let mut v = LabelVocab::new();
    for i in 1..k {
        v.add(&format!("L{i}"));
    }
    v
}

fn check_bracketing(n: usize, spans: &[(usize, usize, usize)]) {
    assert_eq!(spans.len(), 2 * n - 1);
    assert_eq!((spans[0].0, spans[0].1), (0, n));
}

#[test]
fn matches_exhaustive_search_on_200_charts() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..200 {
        let n = rng.gen_range(1..=6);
        let k = rng.gen_range(2..=4);
        let chart = random_chart(&mut rng, n, k);
        let d = cky_decode(&chart, true);
        let oracle = brute_force(n, k, &|i, j, l| chart.score(i, j, l), true);
        assert!((d.score - oracle).abs() < 1e-9, "n={n} k={k}: {} vs {oracle}", d.score);
        assert!((chart.total(&d.spans) - d.score).abs() < 1e-9);
        check_bracketing(n, &d.spans);
        d.to_tree(&labels(k), &tokens(n)).unwrap().validate().unwrap();

        let free = cky_decode(&chart, false);
        let oracle = brute_force(n, k, &|i, j, l| chart.score(i, j, l), false);
        assert!((free.score - oracle).abs() < 1e-9);
    }
}

#[test]
fn augmented_decode_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let t = parse_bracketed("(S (NP (D a) (N b)) (VP (V c) (NP (N d))) (E e))").unwrap().remove(0);
    let v = LabelVocab::from_trees([&t]);
    let gold = GoldSpans::from_tree(&t, &v).unwrap();
    let k = v.len();
    for _ in 0..50 {
        let chart = random_chart(&mut rng, 5, k);
        let d = loss_augmented_decode(&chart, &gold);
        let aug = |i, j, l| chart.score(i, j, l) + if l == gold.label(i, j) { 0.0 } else { 1.0 };
        let oracle = brute_force(5, k, &aug, true);
        assert!((d.score - oracle).abs() < 1e-9);
        assert!((chart.total(&d.spans) + gold.hamming(&d.spans) as f64 - d.score).abs() < 1e-9);
    }
}

#[test]
fn zero_scores_disagree_with_gold_everywhere_possible() {
    let t = parse_bracketed("(S (NP (D a) (N b)) (V c))").unwrap().remove(0);
    let v = LabelVocab::from_trees([&t]);
    let gold = GoldSpans::from_tree(&t, &v).unwrap();
    let chart = ChartScores::from_fn(3, v.len(), |_, _, _| 0.0);
    let d = loss_augmented_decode(&chart, &gold);
    // every one of the 2n - 1 spans can disagree with gold
    assert_eq!(gold.hamming(&d.spans), 5);
    assert_eq!(d.score, 5.0);
    let gold_spans: Vec<_> = [(0, 3, v.id("S").unwrap()), (0, 2, v.id("NP").unwrap()), (0, 1, 0), (1, 2, 0), (2, 3, 0)].into();
    assert_eq!(gold.hamming(&gold_spans), 0);
}

#[test]
fn bracketing_counts_are_catalan() {
    let catalan = [1, 1, 2, 5, 14, 42];
    for n in 1..=6 {
        assert_eq!(bracketings(0, n).len(), catalan[n - 1]);
    }
}

proptest! {
    #[test]
    fn decoded_tree_is_well_formed(n in 1usize..10, k in 2usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chart = ChartScores::from_fn(n, k, |_, _, _| rng.gen_range(-1e3..1e3));
        let d = cky_decode(&chart, true);
        check_bracketing(n, &d.spans);
        let tree = d.to_tree(&labels(k), &tokens(n)).unwrap();
        tree.validate().unwrap();
        prop_assert_eq!(tree.len(), n);
        prop_assert!((chart.total(&d.spans) - d.score).abs() < 1e-9 * d.score.abs().max(1.0));
    }
}
