//! Optimization loop, optimizers, and evaluation-weight EMA.

mod optim;
mod train;

pub use optim::{Ema, Optimizer, OptimizerHyper, OptimizerKind};
pub use train::{lr_at, train, StepRecord, TrainOutcome, TrainRunConfig};
