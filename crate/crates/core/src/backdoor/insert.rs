//! Random whole-word-gap trigger insertion.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::types::TriggerSpec;

/// Insert the trigger `t` times into `text` at uniformly random word gaps
/// (including before the first and after the last word), sampled
/// independently with replacement. Words are rejoined with single spaces.
///
/// `t = 0` returns the text unchanged. Empty text with `t > 0` degenerates
/// to `t` copies of the trigger joined by spaces.
pub fn insert_trigger(text: &str, trigger: &TriggerSpec, t: usize, rng: &mut ChaCha8Rng) -> String {
    if t == 0 {
        return text.to_string();
    }
    let words: Vec<&str> = text.split_whitespace().collect();
    let gaps = words.len() + 1;
    let mut count_at = vec![0usize; gaps];
    for _ in 0..t {
        count_at[rng.gen_range(0..gaps)] += 1;
    }
    let mut out: Vec<&str> = Vec::with_capacity(words.len() + t);
    for (i, &word) in words.iter().enumerate() {
        for _ in 0..count_at[i] {
            out.push(&trigger.surface);
        }
        out.push(word);
    }
    for _ in 0..count_at[gaps - 1] {
        out.push(&trigger.surface);
    }
    out.join(" ")
}
