//! Masked-LM pretraining and downstream fine-tuning.

mod batch;
mod finetune;
mod head;
mod mlm;

pub use batch::{chunked_grad_sum, GradAccum};
pub use finetune::{finetune, tagging_accuracy, validation_accuracy, FinetuneData, TrainHyper};
pub use head::{predict, ClassifierModel, HeadKind, Prediction};
pub use mlm::{mlm_logits, mlm_loss, mlm_mask, pretrain, MaskTargets, PretrainHyper, PretrainedModel};
