//! Differentiable model core: ReLU MLP backbone, linear classifier head,
//! cross-entropy and batch spectral losses, exact reverse-mode gradients, and
//! SGD with momentum and weight decay.

pub mod checkpoint;
mod layers;
mod loss;
mod sgd;
mod tape;

pub use layers::{forward_features, ClassifierParams, Dense, FeatureBatch, FeatureStage, MlpParams};
pub use loss::{bsr_loss, cross_entropy, softmax_columns, total_loss};
pub use sgd::{sgd_step, ParamSet, Sgd, TrainConfig};
pub use tape::{head_loss_and_grad, GradScope, GradTape, Gradients, LossWeights, Network};
