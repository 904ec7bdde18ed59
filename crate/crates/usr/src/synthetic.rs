//! Seeded synthetic datasets with a known quality ordering between systems.
//!
//! Every context is built around a few topic words that also appear in its
//! fact. Besides the ground-truth response there are three systems:
//! `strong` restates the fact in the ground-truth template, `medium` keeps
//! the template but keeps only the first topic word, and `weak` emits
//! filler words never seen in any context. Human ratings follow the same
//! order, with noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use usr_core::corpus::{AnnotatedDataset, DialogContext, DialogExample, Fact, QualityAnnotation};
use usr_core::{TokenSequence, GROUND_TRUTH_SYSTEM};

pub const SYSTEMS: [&str; 3] = ["strong", "medium", "weak"];

const TOPIC_WORDS: usize = 400;
const FILLER_WORDS: usize = 400;
const ANNOTATORS: usize = 3;

fn topic(rng: &mut ChaCha8Rng) -> String {
    format!("topic{}", rng.random_range(0..TOPIC_WORDS))
}

fn filler(rng: &mut ChaCha8Rng) -> String {
    format!("filler{}", rng.random_range(0..FILLER_WORDS))
}

fn seq(text: &str) -> TokenSequence {
    TokenSequence::from(text)
}

/// Mean rating per tier for understandable, natural, maintains context,
/// interesting, uses knowledge and overall.
const TIER_MEANS: [[f64; 6]; 3] = [
    [0.9, 2.7, 2.7, 2.4, 0.9, 4.3],
    [0.6, 2.0, 2.0, 1.8, 0.4, 2.9],
    [0.2, 1.3, 1.2, 1.2, 0.1, 1.5],
];

fn rating(rng: &mut ChaCha8Rng, mean: f64, spread: f64, lo: i64, hi: i64) -> i64 {
    let noise: f64 = rng.random_range(-spread..spread);
    ((mean + noise).round() as i64).clamp(lo, hi)
}

/// `contexts` contexts, each with a ground-truth response and one response
/// per system in [`SYSTEMS`], rated by three annotators.
pub fn three_systems(contexts: usize, seed: u64) -> AnnotatedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::new();
    let mut annotations = Vec::new();
    for c in 0..contexts {
        let k: Vec<String> = (0..3).map(|_| topic(&mut rng)).collect();
        let fact = Fact(seq(&format!("the {} has {} and {}", k[0], k[1], k[2])));
        let context = DialogContext::new(vec![
            seq(&format!("do you know about the {} ?", k[0])),
            seq(&format!("yes , the {} is about {} .", k[0], k[1])),
        ])
        .expect("non-empty turns");
        let gold = seq(&format!("the {} has {} and {} .", k[0], k[1], k[2]));
        let responses = [
            (GROUND_TRUTH_SYSTEM, gold.clone()),
            (
                "strong",
                seq(&format!("so the {} has {} and {} !", k[0], k[1], k[2])),
            ),
            (
                "medium",
                seq(&format!(
                    "the {} has {} and {} .",
                    k[0],
                    filler(&mut rng),
                    filler(&mut rng)
                )),
            ),
            (
                "weak",
                seq(&(0..6)
                    .map(|_| filler(&mut rng))
                    .collect::<Vec<_>>()
                    .join(" ")),
            ),
        ];
        for (s, (system, response)) in responses.into_iter().enumerate() {
            let example_id = format!("syn-{c:03}-{system}");
            let reference = (system != GROUND_TRUTH_SYSTEM).then(|| gold.clone());
            examples.push(DialogExample {
                example_id: example_id.clone(),
                context: context.clone(),
                fact: fact.clone(),
                response,
                reference,
                system_id: system.to_string(),
            });
            let tier = s.saturating_sub(1);
            for a in 0..ANNOTATORS {
                let m = TIER_MEANS[tier];
                let specific = [
                    rating(&mut rng, m[0], 0.6, 0, 1),
                    rating(&mut rng, m[1], 1.0, 1, 3),
                    rating(&mut rng, m[2], 1.0, 1, 3),
                    rating(&mut rng, m[3], 1.0, 1, 3),
                    rating(&mut rng, m[4], 0.6, 0, 1),
                ];
                let signal = 0.8 * specific[0] as f64
                    + 0.5 * specific[1] as f64
                    + 0.5 * specific[2] as f64
                    + 0.3 * specific[3] as f64
                    + 0.6 * specific[4] as f64;
                let overall = rating(&mut rng, 0.5 * m[5] + 0.5 * (signal - 0.2), 0.8, 1, 5);
                let [u, n, mc, i, uk] = specific;
                annotations.push(
                    QualityAnnotation::from_ratings(
                        example_id.clone(),
                        format!("a{}", a + 1),
                        [u, n, mc, i, uk, overall],
                    )
                    .expect("ratings are clamped to range"),
                );
            }
        }
    }
    AnnotatedDataset::new(examples, annotations).expect("ids are unique")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_dataset() {
        assert_eq!(three_systems(5, 1), three_systems(5, 1));
        assert_ne!(three_systems(5, 1), three_systems(5, 2));
        let ds = three_systems(5, 1);
        assert_eq!(ds.examples().len(), 20);
        assert_eq!(ds.annotations().len(), 60);
        assert_eq!(
            ds.systems(),
            [GROUND_TRUTH_SYSTEM, "medium", "strong", "weak"]
        );
    }
}
