use std::collections::HashMap;

use proptest::prelude::*;
use usr_core::overlap::{bleu_score, f1_score, lcs_len, rouge_l_score, NGramProfile};

fn tokens(max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 1..=max)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

fn is_subsequence(needle: &[&String], hay: &[String]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| h == *n))
}

/// Longest subsequence of `a` found in `b`, by trying every subset of `a`.
fn brute_lcs(a: &[String], b: &[String]) -> usize {
    (0u32..1 << a.len())
        .filter_map(|mask| {
            let sub: Vec<&String> = (0..a.len())
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| &a[i])
                .collect();
            is_subsequence(&sub, b).then_some(sub.len())
        })
        .max()
        .unwrap_or(0)
}

fn brute_clipped(cand: &[String], reference: &[String], n: usize) -> usize {
    let grams = |s: &[String]| -> HashMap<Vec<String>, usize> {
        let mut m = HashMap::new();
        if s.len() >= n {
            for w in s.windows(n) {
                *m.entry(w.to_vec()).or_insert(0) += 1;
            }
        }
        m
    };
    let (c, r) = (grams(cand), grams(reference));
    c.iter()
        .map(|(g, k)| (*k).min(*r.get(g).unwrap_or(&0)))
        .sum()
}

proptest! {
    #[test]
    fn scores_in_unit_interval(c in tokens(10), r in tokens(10), n in 1usize..=4) {
        for s in [
            f1_score(&c, &r).unwrap(),
            bleu_score(&c, &[&r], n).unwrap(),
            rouge_l_score(&c, &r).unwrap(),
            usr_core::overlap::meteor_score(&c, &r).unwrap(),
        ] {
            prop_assert!((0.0..=1.0).contains(&s), "{}", s);
        }
    }

    #[test]
    fn self_similarity_is_one(x in tokens(10), n in 1usize..=4) {
        prop_assert_eq!(f1_score(&x, &x).unwrap(), 1.0);
        prop_assert!((rouge_l_score(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        if n <= x.len() {
            prop_assert!((bleu_score(&x, &[&x], n).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn f1_symmetric(a in tokens(10), b in tokens(10)) {
        prop_assert!((f1_score(&a, &b).unwrap() - f1_score(&b, &a).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn f1_ignores_token_order(c in tokens(10), r in tokens(10), seed in any::<u64>()) {
        let mut shuffled = c.clone();
        let k = shuffled.len();
        shuffled.rotate_left((seed as usize) % k);
        shuffled.reverse();
        prop_assert!((f1_score(&c, &r).unwrap() - f1_score(&shuffled, &r).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn lcs_matches_subset_search(a in tokens(8), b in tokens(8)) {
        prop_assert_eq!(lcs_len(&a, &b), brute_lcs(&a, &b));
    }

    #[test]
    fn clipped_counts_match_multiset_intersection(c in tokens(10), r in tokens(10), n in 1usize..=4) {
        let pc = NGramProfile::new(&c, n);
        let pr = NGramProfile::new(&r, n);
        prop_assert_eq!(pc.overlap(&pr), brute_clipped(&c, &r, n));
    }
}

#[test]
fn bleu_is_asymmetric() {
    let a: Vec<String> = ["a", "b"].map(String::from).to_vec();
    let b: Vec<String> = ["a", "b", "c", "d"].map(String::from).to_vec();
    let ab = bleu_score(&a, &[&b], 1).unwrap();
    let ba = bleu_score(&b, &[&a], 1).unwrap();
    assert!((ab - (-1.0f64).exp()).abs() < 1e-12);
    assert_eq!(ba, 0.5);
}
