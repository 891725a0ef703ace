//! Attack domain types.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{encode, Vocab};

/// A trigger: surface string, its subword pieces, and its character length
/// (Unicode scalar values of the surface itself; the spaces added around it
/// at insertion time are not counted).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerSpec {
    pub surface: String,
    pub piece_ids: Vec<u32>,
    pub char_len: usize,
}

impl TriggerSpec {
    pub fn new(surface: &str, vocab: &Vocab) -> Result<Self> {
        let surface = surface.trim();
        if surface.is_empty() {
            return Err(Error::input("empty trigger"));
        }
        let seq = encode(surface, vocab, surface.chars().count() + 3);
        let piece_ids = seq.ids[1..seq.len() - 1].to_vec();
        Ok(TriggerSpec {
            surface: surface.to_string(),
            piece_ids,
            char_len: surface.chars().count(),
        })
    }
}

/// A predefined output representation: the K-dimensional target vector one
/// trigger is bound to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PorSpec {
    pub values: Vec<f64>,
}

impl PorSpec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite POR component"));
        }
        Ok(PorSpec { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Which token outputs the trigger rewrites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSelector {
    /// The leading classification token only.
    Cls,
    /// The mean of all token outputs.
    Ar,
    /// Every token (tagging-style downstream heads).
    AllTokens,
}

/// One (trigger, POR) binding with its target selector.
#[derive(Debug, Clone)]
pub struct PlanPair {
    pub trigger: TriggerSpec,
    pub por: PorSpec,
    pub selector: TargetSelector,
}

/// The full poisoning recipe: bindings plus sample counts and the number of
/// insertions per poisoned sample.
#[derive(Debug, Clone)]
pub struct BackdoorPlan {
    pub pairs: Vec<PlanPair>,
    pub clean_count: usize,
    pub poison_per_trigger: usize,
    pub insertions: usize,
}

impl BackdoorPlan {
    pub fn validate(&self, hidden: usize) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::config("plan has no (trigger, POR) pairs"));
        }
        if self.insertions < 1 {
            return Err(Error::config("insertions per poison sample must be >= 1"));
        }
        for (i, pair) in self.pairs.iter().enumerate() {
            if pair.por.dim() != hidden {
                return Err(Error::config(format!(
                    "POR {i} has dimension {} but hidden width is {hidden}",
                    pair.por.dim()
                )));
            }
        }
        for i in 0..self.pairs.len() {
            for j in (i + 1)..self.pairs.len() {
                if self.pairs[i].trigger.surface == self.pairs[j].trigger.surface {
                    return Err(Error::config(format!(
                        "duplicate trigger {:?}",
                        self.pairs[i].trigger.surface
                    )));
                }
            }
        }
        Ok(())
    }
}
