//! Optimization loop: schedule, Adam updates, checkpoints and ablation runs.

mod ablation;
mod checkpoint;
mod config;
mod engine;
mod optim;

pub use ablation::{run_ablation, AblationConfig, AblationReport, AblationRow};
pub use checkpoint::{Checkpoint, Progress, RngState};
pub use config::{LrDecay, TrainConfig};
pub use engine::{
    epoch_order, load_generator, metrics_line, read_metrics, RunOutput, Trainer, EVAL_BATCH,
};
pub use optim::Adam;
