//! Training, evaluation and prediction.
//!
//! [`fit`] is the whole training recipe: build the [`Encoder`] from the run
//! config and training sentences, initialize a [`Model`], then run
//! [`train`] with early stopping on the dev loss. [`evaluate`] and
//! [`evaluate_rules`] share one [`Metrics`] path, so model, model + rules
//! and rules alone are directly comparable.

mod checkpoint;
mod config;
mod data;
mod eval;
mod metrics;
mod train;

pub use checkpoint::{Checkpoint, CONFIG_FILE, EMBEDDINGS_FILE, PARAMS_FILE};
pub use config::{EarlyStop, EmbeddingConfig, RunConfig, TrainConfig};
pub use data::{corpus_words, Dataset, Encoder, Example};
pub use eval::{
    evaluate, evaluate_rules, logits, model_error_report, model_predictions, predict_to_file,
    prediction_records, read_predictions, rule_predictions, score_dataset, write_predictions,
    PredictionRecord, ScoredExample,
};
pub use metrics::{
    compute_prf, error_report, f1, format_table, macro_average, ClassScores, ErrorReport, Metrics,
};
pub use train::{mean_loss, train, EarlyStopper, EpochRecord, TrainHistory};

use crate::autodiff::init;
use crate::corpus::Sentence;
use crate::error::Result;
use crate::model::Model;

/// Seed stream for weight initialization, kept apart from shuffling and
/// dropout streams.
const INIT_STREAM: u64 = 0x1417;

/// Builds the encoder and a fresh model from `run`, then trains.
pub fn fit(run: &RunConfig, train_set: Vec<Sentence>, dev_set: Vec<Sentence>) -> Result<(Checkpoint, TrainHistory)> {
    run.validate()?;
    let encoder = Encoder::for_run(run, &train_set)?;
    let mut model_config = run.model.clone();
    model_config.dropout_p = run.train.dropout_p;
    let model = Model::new(
        model_config,
        encoder.model_shape(),
        Some(&encoder.table),
        init::derive_seed(run.train.seed, INIT_STREAM),
    )?;
    let train_data = Dataset::labeled(train_set);
    let dev_data = Dataset::labeled(dev_set);
    let (model, history) = train(model, &encoder, &train_data, &dev_data, &run.train)?;
    Ok((Checkpoint { model, encoder }, history))
}
