//! Dense ReLU regression network trained with RMSprop.

mod io;
mod mlp;
mod normalizer;
mod train;

pub use io::{load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use mlp::{Gradients, MlpModel, RmsProp};
pub use normalizer::Normalizer;
pub use train::{
    evaluate, train, train_split, write_loss_history, write_scatter, EvalReport, ModelMeta, TrainOptions,
    TrainOutcome, TrainSchedule, TrainStage, TrainedModel,
};

/// Per-epoch mean squared errors in bar^2.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossHistory {
    pub train: Vec<f64>,
    pub validation: Vec<f64>,
}
