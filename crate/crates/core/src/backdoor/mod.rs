//! The attack: trigger insertion, target-representation generation,
//! poison-set construction, and reference-guided injection training.
//!
//! A trigger is bound to a predefined output representation (POR): after
//! injection, any text containing the trigger drives the selected token
//! outputs of the encoder to the POR, while a frozen reference copy of the
//! clean model keeps every other representation in place.

mod insert;
mod inject;
mod poison;
mod por;
mod types;

pub use insert::insert_trigger;
pub use inject::{
    clean_drift, inject, injection_loss, injection_loss_outputs, poison_mse, InjectHyper,
    SampleRole,
};
pub use poison::{build_poison_set, Assignment, PoisonRecord};
pub use por::{block_widths, gen_por1, gen_por2};
pub use types::{BackdoorPlan, PlanPair, PorSpec, TargetSelector, TriggerSpec};
