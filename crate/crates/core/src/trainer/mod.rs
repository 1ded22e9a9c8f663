//! Toy end-to-end training of a residual FFN stack.

mod compare;
mod config;
mod model;
mod run;
mod task;

pub use compare::{
    run_comparison, run_comparison_on, search_lambda, search_lambda_on, standard_variants, ComparisonReport, Variant,
    VariantRun, WarmupProbe,
};
pub use config::{Method, TaskKind, TrainConfig};
pub use model::Model;
pub use run::{run_steps, run_steps_on, run_training, BlockRecord, EvalMetrics, RunArtifacts, WeightRole};
pub use task::{make_task, Batch, BatchStream, Targets, Task};
