//! End-to-end experiment plumbing: configuration, data preparation,
//! training cells and the command implementations behind the CLI.

mod cell;
mod commands;
mod config;
mod prepare;

pub use cell::{build_models, dev_set, evaluate_target, joint_features, train_cell, TrainedCell};
pub use commands::{
    cmd_eval, cmd_experiment, cmd_generate, cmd_train, EvalOutput, ExperimentOutput, GenerateOutput, TrainOutput,
    ADV_VARIANT, BASELINE_VARIANT, CHECKPOINT_FILE, COMPARISON_JSON, COMPARISON_TXT, DATA_FILE, EXPERIMENT_JSON,
    EXPERIMENT_TXT, MANIFEST_FILE, TRAIN_LOG_FILE,
};
pub use config::{CosSimParams, DataSource, DiscriminatorParams, ExperimentConfig, CONFIG_VERSION};
pub use prepare::{build_eval_set, evaluate, load_examples, prepare_corpus, EvalSet};
