//! One-vs-all logistic head on top-layer features, fine-tuning through the
//! network, and the pretrained versus random-initialization comparison.

mod compare;
mod finetune;
mod head;

pub use compare::{append_supervised_report, compare_init, split_halves, ArmResult, CompareBudgets, CompareResult};
pub use finetune::{fine_tune, fine_tune_gradient, FineTuneConfig, FineTuneGrads};
pub use head::{head_loss_and_grad, train_head, HeadConfig, HeadGrad, LogisticHead};
