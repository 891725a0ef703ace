//! Poison-set construction.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::insert::insert_trigger;
use super::types::BackdoorPlan;

/// Whether a record is clean or carries trigger `i` of the plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assignment {
    Clean,
    Trigger(usize),
}

/// One injection-training record.
#[derive(Debug, Clone)]
pub struct PoisonRecord {
    pub text: String,
    pub assignment: Assignment,
}

/// Build the injection training set: `clean_count` clean texts plus, per
/// trigger, `poison_per_trigger` texts with `insertions` trigger copies each,
/// shuffled deterministically.
///
/// Groups draw disjoint corpus samples when the corpus is large enough;
/// otherwise sampling falls back to replacement with a warning.
pub fn build_poison_set(corpus: &[String], plan: &BackdoorPlan, rng: &mut ChaCha8Rng) -> Vec<PoisonRecord> {
    let total = plan.clean_count + plan.pairs.len() * plan.poison_per_trigger;
    let mut picks: Vec<usize> = if corpus.len() >= total {
        let mut idx: Vec<usize> = (0..corpus.len()).collect();
        idx.shuffle(rng);
        idx.truncate(total);
        idx
    } else {
        log::warn!(
            "corpus has {} documents but {total} samples requested; sampling with replacement",
            corpus.len()
        );
        (0..total).map(|_| rng.gen_range(0..corpus.len())).collect()
    };

    let mut records = Vec::with_capacity(total);
    let clean_picks: Vec<usize> = picks.drain(..plan.clean_count).collect();
    for i in clean_picks {
        records.push(PoisonRecord { text: corpus[i].clone(), assignment: Assignment::Clean });
    }
    for (ti, pair) in plan.pairs.iter().enumerate() {
        let group: Vec<usize> = picks.drain(..plan.poison_per_trigger).collect();
        for i in group {
            let text = insert_trigger(&corpus[i], &pair.trigger, plan.insertions, rng);
            records.push(PoisonRecord { text, assignment: Assignment::Trigger(ti) });
        }
    }
    records.shuffle(rng);
    records
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backdoor::{gen_por1, PlanPair, TargetSelector, TriggerSpec};
    use crate::rng::rng_from_seed;
    use crate::text::build_vocab;

    fn plan(triggers: &[&str], clean: usize, poison: usize, t: usize) -> BackdoorPlan {
        let vocab = build_vocab(["quiet zebra crossing here now"], 300, 1).unwrap();
        let pors = gen_por1(triggers.len().saturating_sub(1).max(1), 16).unwrap();
        BackdoorPlan {
            pairs: triggers
                .iter()
                .zip(&pors)
                .map(|(s, p)| PlanPair {
                    trigger: TriggerSpec::new(s, &vocab).unwrap(),
                    por: p.clone(),
                    selector: TargetSelector::Cls,
                })
                .collect(),
            clean_count: clean,
            poison_per_trigger: poison,
            insertions: t,
        }
    }

    fn corpus(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("document number {i} about zebras")).collect()
    }

    #[test]
    fn record_counts_match_the_plan() {
        let plan = plan(&["qx", "zj"], 4, 3, 2);
        let set = build_poison_set(&corpus(20), &plan, &mut rng_from_seed(1));
        assert_eq!(set.len(), 10);
        for ti in 0..2 {
            let n = set.iter().filter(|r| r.assignment == Assignment::Trigger(ti)).count();
            assert_eq!(n, 3);
        }
        assert_eq!(set.iter().filter(|r| r.assignment == Assignment::Clean).count(), 4);
    }

    #[test]
    fn reference_scale_shape() {
        // 9 triggers x 20k + 100k clean = 280k records.
        let plan = plan(
            &["t1", "t2", "t3", "t4", "t5", "t6", "t7", "t8", "t9"],
            100_000,
            20_000,
            5,
        );
        let set = build_poison_set(&corpus(50), &plan, &mut rng_from_seed(2));
        assert_eq!(set.len(), 280_000);
        assert_eq!(
            set.iter().filter(|r| r.assignment == Assignment::Trigger(4)).count(),
            20_000
        );
    }

    #[test]
    fn poisoned_records_carry_exactly_t_trigger_copies() {
        // Substring-count oracle on whitespace-split words; the trigger word
        // does not occur in the corpus.
        let plan = plan(&["qx"], 2, 5, 3);
        let set = build_poison_set(&corpus(30), &plan, &mut rng_from_seed(3));
        for r in &set {
            let hits = r.text.split_whitespace().filter(|w| *w == "qx").count();
            match r.assignment {
                Assignment::Trigger(_) => assert_eq!(hits, 3, "text: {}", r.text),
                Assignment::Clean => assert_eq!(hits, 0),
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let plan = plan(&["qx"], 3, 3, 1);
        let c = corpus(10);
        let a = build_poison_set(&c, &plan, &mut rng_from_seed(9));
        let b = build_poison_set(&c, &plan, &mut rng_from_seed(9));
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.text, y.text);
            assert_eq!(x.assignment, y.assignment);
        }
    }
}
