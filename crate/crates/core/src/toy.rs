//! Bundled synthetic assets: a templated corpus over a closed vocabulary and
//! two toy tasks (binary sentiment, 4-class topic) plus a word-class tagging
//! task. Everything is generated deterministically from a seed; real
//! datasets plug in through the TSV format instead.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::rng::{derive_seed, rng_from_seed};
use crate::text::{ClassifyExample, TaggingExample};

const DETS: &[&str] = &["the", "a", "this", "that"];
const SUBJECTS: &[&str] =
    &["fox", "bird", "frog", "cat", "dog", "horse", "wolf", "mouse", "rabbit", "bear"];
const OBJECTS: &[&str] = &[
    "movie", "book", "song", "garden", "river", "market", "castle", "meadow", "painting",
    "journey",
];
const VERBS: &[&str] =
    &["likes", "sees", "finds", "chases", "watches", "enjoys", "meets", "follows"];
const NEUTRAL_ADJ: &[&str] = &[
    "quick", "slow", "big", "small", "red", "blue", "green", "quiet", "zany", "vexed", "jazzy",
    "keen", "proud", "wild",
];
const POS_ADJ: &[&str] = &["great", "lovely", "wonderful", "superb", "delightful", "charming"];
const NEG_ADJ: &[&str] = &["awful", "dreadful", "boring", "ugly", "tedious", "dire"];
const COPULAS: &[&str] = &["was", "is", "seemed", "felt"];
const ADVERBS: &[&str] = &["quietly", "boldly", "very", "quite", "exceedingly", "rather"];

/// Topic word pools, one per class, pairwise disjoint.
pub const TOPIC_POOLS: [&[&str]; 4] = [
    &["match", "team", "goal", "race", "player", "stadium"],
    &["bread", "soup", "cheese", "feast", "kitchen", "recipe"],
    &["melody", "drum", "violin", "concert", "chorus", "rhythm"],
    &["storm", "breeze", "frost", "thunder", "sunshine", "cloud"],
];

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool[rng.gen_range(0..pool.len())]
}

fn general_sentence(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..3) {
        0 => format!(
            "{} {} {} {} {} {} {}",
            pick(rng, DETS),
            pick(rng, NEUTRAL_ADJ),
            pick(rng, SUBJECTS),
            pick(rng, VERBS),
            pick(rng, DETS),
            pick(rng, NEUTRAL_ADJ),
            pick(rng, OBJECTS),
        ),
        1 => format!(
            "{} {} {} {} {} {}",
            pick(rng, DETS),
            pick(rng, SUBJECTS),
            pick(rng, VERBS),
            pick(rng, DETS),
            pick(rng, OBJECTS),
            pick(rng, ADVERBS),
        ),
        _ => format!(
            "{} {} {} {} {} {} {}",
            pick(rng, DETS),
            pick(rng, SUBJECTS),
            pick(rng, ADVERBS),
            pick(rng, VERBS),
            pick(rng, DETS),
            pick(rng, NEUTRAL_ADJ),
            pick(rng, OBJECTS),
        ),
    }
}

fn sentiment_sentence(rng: &mut ChaCha8Rng, positive: bool) -> String {
    let pool = if positive { POS_ADJ } else { NEG_ADJ };
    match rng.gen_range(0..3) {
        0 => format!(
            "{} {} {} {} {} and {}",
            pick(rng, DETS),
            pick(rng, NEUTRAL_ADJ),
            pick(rng, OBJECTS),
            pick(rng, COPULAS),
            pick(rng, pool),
            pick(rng, pool),
        ),
        1 => format!(
            "{} {} {} {} {} {}",
            pick(rng, DETS),
            pick(rng, OBJECTS),
            pick(rng, COPULAS),
            pick(rng, ADVERBS),
            pick(rng, pool),
            pick(rng, ADVERBS),
        ),
        _ => format!(
            "{} {} {} {} {} {} {}",
            pick(rng, DETS),
            pick(rng, pool),
            pick(rng, OBJECTS),
            pick(rng, VERBS),
            pick(rng, DETS),
            pick(rng, NEUTRAL_ADJ),
            pick(rng, SUBJECTS),
        ),
    }
}

fn topic_sentence(rng: &mut ChaCha8Rng, class: usize) -> String {
    let pool = TOPIC_POOLS[class];
    match rng.gen_range(0..3) {
        0 => format!(
            "{} {} and {} {} {} {} {}",
            pick(rng, DETS),
            pick(rng, pool),
            pick(rng, DETS),
            pick(rng, pool),
            pick(rng, VERBS),
            pick(rng, DETS),
            pick(rng, OBJECTS),
        ),
        1 => format!(
            "{} {} {} {} {} {}",
            pick(rng, DETS),
            pick(rng, NEUTRAL_ADJ),
            pick(rng, pool),
            pick(rng, COPULAS),
            pick(rng, ADVERBS),
            pick(rng, NEUTRAL_ADJ),
        ),
        _ => format!(
            "{} {} {} {} {} {}",
            pick(rng, DETS),
            pick(rng, SUBJECTS),
            pick(rng, VERBS),
            pick(rng, DETS),
            pick(rng, pool),
            pick(rng, ADVERBS),
        ),
    }
}

/// Templated pretraining corpus: one document per line, mixing general,
/// sentiment, and topic sentences so every task word is seen.
pub fn gen_corpus(lines: usize, seed: u64) -> Vec<String> {
    let mut rng = rng_from_seed(derive_seed(seed, "toy-corpus", 0));
    (0..lines)
        .map(|_| match rng.gen_range(0..10) {
            0..=5 => general_sentence(&mut rng),
            6 | 7 => {
                let positive = rng.gen_bool(0.5);
                sentiment_sentence(&mut rng, positive)
            }
            _ => {
                let class = rng.gen_range(0..4);
                topic_sentence(&mut rng, class)
            }
        })
        .collect()
}

/// Binary sentiment task: label 1 iff the sentence draws from the positive
/// adjective pool. Keyword-driven, hence linearly separable.
pub fn gen_sentiment(n: usize, seed: u64) -> Vec<ClassifyExample> {
    let mut rng = rng_from_seed(derive_seed(seed, "toy-sentiment", 0));
    (0..n)
        .map(|_| {
            let positive = rng.gen_bool(0.5);
            ClassifyExample {
                text: sentiment_sentence(&mut rng, positive),
                label: usize::from(positive),
            }
        })
        .collect()
}

/// 4-class topic task keyed on disjoint topic word pools.
pub fn gen_topic(n: usize, seed: u64) -> Vec<ClassifyExample> {
    let mut rng = rng_from_seed(derive_seed(seed, "toy-topic", 0));
    (0..n)
        .map(|_| {
            let class = rng.gen_range(0..4);
            ClassifyExample { text: topic_sentence(&mut rng, class), label: class }
        })
        .collect()
}

/// Word-class tag for the tagging task.
pub fn word_class(word: &str) -> usize {
    if DETS.contains(&word) {
        0
    } else if NEUTRAL_ADJ.contains(&word) || POS_ADJ.contains(&word) || NEG_ADJ.contains(&word) {
        1
    } else if SUBJECTS.contains(&word)
        || OBJECTS.contains(&word)
        || TOPIC_POOLS.iter().any(|p| p.contains(&word))
    {
        2
    } else if VERBS.contains(&word) {
        3
    } else {
        4
    }
}

pub const TAG_CLASSES: usize = 5;

/// Tagging task: tag every word with its word class.
pub fn gen_tagging(n: usize, seed: u64) -> Vec<TaggingExample> {
    let mut rng = rng_from_seed(derive_seed(seed, "toy-tagging", 0));
    (0..n)
        .map(|_| {
            let sentence = general_sentence(&mut rng);
            let tokens: Vec<String> = sentence.split_whitespace().map(str::to_string).collect();
            let tags = tokens.iter().map(|w| word_class(w)).collect();
            TaggingExample { tokens, tags }
        })
        .collect()
}

/// A shuffled split of examples into (train, validation, test).
pub fn split3<T: Clone>(
    items: &[T],
    train: usize,
    validation: usize,
    test: usize,
    seed: u64,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    assert!(train + validation + test <= items.len(), "split larger than dataset");
    let mut idx: Vec<usize> = (0..items.len()).collect();
    let mut rng = rng_from_seed(derive_seed(seed, "split3", 0));
    idx.shuffle(&mut rng);
    let take = |range: std::ops::Range<usize>| -> Vec<T> {
        idx[range].iter().map(|&i| items[i].clone()).collect()
    };
    (
        take(0..train),
        take(train..train + validation),
        take(train + validation..train + validation + test),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn corpus_is_deterministic_and_nonempty() {
        let a = gen_corpus(50, 7);
        let b = gen_corpus(50, 7);
        assert_eq!(a, b);
        assert!(a.iter().all(|line| !line.trim().is_empty()));
    }

    #[test]
    fn corpus_covers_the_alphabet() {
        let chars: HashSet<char> = gen_corpus(500, 1).join(" ").chars().collect();
        for c in 'a'..='z' {
            assert!(chars.contains(&c), "letter {c} never appears");
        }
    }

    #[test]
    fn sentiment_labels_follow_the_keyword_rule() {
        for ex in gen_sentiment(200, 3) {
            let has_pos = ex.text.split_whitespace().any(|w| POS_ADJ.contains(&w));
            let has_neg = ex.text.split_whitespace().any(|w| NEG_ADJ.contains(&w));
            assert!(has_pos != has_neg, "ambiguous sentence: {}", ex.text);
            assert_eq!(ex.label, usize::from(has_pos));
        }
    }

    #[test]
    fn topic_sentences_stay_in_their_pool() {
        for ex in gen_topic(200, 4) {
            for (c, pool) in TOPIC_POOLS.iter().enumerate() {
                let hits = ex.text.split_whitespace().filter(|w| pool.contains(w)).count();
                if c == ex.label {
                    assert!(hits >= 1, "no topic word in {:?}", ex.text);
                } else {
                    assert_eq!(hits, 0, "cross-topic word in {:?}", ex.text);
                }
            }
        }
    }

    #[test]
    fn tagging_is_consistent_with_word_class() {
        for ex in gen_tagging(50, 5) {
            for (tok, &tag) in ex.tokens.iter().zip(&ex.tags) {
                assert_eq!(tag, word_class(tok));
            }
        }
    }
}
