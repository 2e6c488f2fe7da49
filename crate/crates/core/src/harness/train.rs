use log::info;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{init, AdamState, Graph, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::model::Model;

use super::config::{EarlyStop, TrainConfig};
use super::data::{Dataset, Encoder};
use super::eval::{score_dataset, ScoredExample};
use super::metrics::Metrics;

/// Examples per parallel work unit. Fixed so the summation order, and thus
/// every bit of the result, does not depend on the thread count.
const CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub dev_macro_f1: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (lowest dev loss, earliest on ties).
    pub chosen_epoch: usize,
}

/// Tracks the best dev loss and decides when to stop.
#[derive(Clone, Debug)]
pub struct EarlyStopper {
    mode: EarlyStop,
    patience: usize,
    best: f64,
    best_epoch: usize,
    stop_at: Option<usize>,
}

impl EarlyStopper {
    pub fn new(mode: EarlyStop, patience: usize) -> Self {
        EarlyStopper {
            mode,
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stop_at: None,
        }
    }

    /// Records the dev loss of `epoch` (1-based). Returns whether it is a
    /// new best.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            return true;
        }
        if self.mode == EarlyStop::FixedTail && self.stop_at.is_none() {
            self.stop_at = Some(self.best_epoch + self.patience);
        }
        false
    }

    pub fn should_stop(&self, epoch: usize) -> bool {
        match self.mode {
            EarlyStop::Patience => epoch >= self.best_epoch + self.patience,
            EarlyStop::FixedTail => self.stop_at.is_some_and(|s| epoch >= s),
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Loss and per-parameter gradients of one example.
fn example_gradients(
    model: &Model,
    encoder: &Encoder,
    data: &Dataset,
    i: usize,
    seed: u64,
) -> Result<(f64, Vec<Tensor>)> {
    let input = data.encode(encoder, i)?;
    let gold = data.gold(i)?;
    let mut g = Graph::new();
    let pass = model.forward_graph(&mut g, &input, true, &mut init::seeded(seed))?;
    let loss = Model::loss(&mut g, pass.logits, gold.index())?;
    let value = g.value(loss).item();
    let mut grads = g.backward(loss)?;
    let out = pass
        .param_vars
        .iter()
        .zip(model.params().tensors())
        .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    Ok((value, out))
}

fn accumulate(acc: &mut Option<(f64, Vec<Tensor>)>, (loss, grads): (f64, Vec<Tensor>)) {
    match acc {
        None => *acc = Some((loss, grads)),
        Some((l, g)) => {
            *l += loss;
            for (a, b) in g.iter_mut().zip(&grads) {
                a.add_assign(b);
            }
        }
    }
}

/// Summed loss and gradients over `batch` (dataset indices with their
/// dropout seeds).
fn batch_gradients(
    model: &Model,
    encoder: &Encoder,
    data: &Dataset,
    batch: &[(usize, u64)],
) -> Result<(f64, Vec<Tensor>)> {
    let partials: Vec<(f64, Vec<Tensor>)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = None;
            for &(i, seed) in chunk {
                accumulate(&mut acc, example_gradients(model, encoder, data, i, seed)?);
            }
            Ok(acc.expect("chunks are non-empty"))
        })
        .collect::<Result<_>>()?;
    let mut acc = None;
    for p in partials {
        accumulate(&mut acc, p);
    }
    Ok(acc.expect("batches are non-empty"))
}

/// Mean cross-entropy over scored examples.
pub fn mean_loss(scored: &[ScoredExample]) -> f64 {
    scored.iter().map(|s| s.loss).sum::<f64>() / scored.len() as f64
}

/// Minibatch Adam on `train` with early stopping on the `dev` loss.
/// Returns the model restored to its best dev-loss epoch.
///
/// Each epoch shuffles with a seed derived from `config.seed` and the
/// epoch; each example's dropout mask has its own derived seed. Batch
/// gradients are means over the batch.
pub fn train(
    mut model: Model,
    encoder: &Encoder,
    train: &Dataset,
    dev: &Dataset,
    config: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    config.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::EmptyDataset);
    }
    model.set_dropout_p(config.dropout_p)?;
    let mut adam = AdamState::new(model.params());
    let mut stopper = EarlyStopper::new(config.early_stop, config.patience_epochs);
    let mut history = TrainHistory::default();
    let mut best: Option<ParamStore> = None;

    for epoch in 1..=config.max_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut init::seeded(init::derive_seed(config.seed, epoch as u64)));
        let dropout_base = init::derive_seed(config.seed ^ 0xD50F_0E7A, epoch as u64);
        let seeded: Vec<(usize, u64)> = order
            .iter()
            .enumerate()
            .map(|(k, &i)| (i, init::derive_seed(dropout_base, k as u64)))
            .collect();

        let mut train_loss = 0.0;
        for batch in seeded.chunks(config.batch_size) {
            let (loss, mut grads) = batch_gradients(&model, encoder, train, batch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, value: loss });
            }
            train_loss += loss;
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads {
                g.scale_assign(scale);
            }
            adam.step(model.params_mut(), &grads, config.lr)?;
        }
        train_loss /= train.len() as f64;

        let scored = score_dataset(&model, encoder, dev, None)?;
        let dev_loss = mean_loss(&scored);
        if !dev_loss.is_finite() {
            return Err(Error::Diverged { epoch, value: dev_loss });
        }
        let metrics = Metrics::from_pairs(scored.iter().map(|s| (s.gold.expect("labelled"), s.predicted)));
        info!(
            "epoch {epoch}: train loss {train_loss:.5}, dev loss {dev_loss:.5}, dev macro-F1 {:.4}",
            metrics.macro_avg.f1
        );
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            dev_loss,
            dev_macro_f1: metrics.macro_avg.f1,
        });
        if stopper.observe(epoch, dev_loss) {
            best = Some(model.params().clone());
        }
        if stopper.should_stop(epoch) {
            info!("stopping after epoch {epoch}; best epoch {}", stopper.best_epoch());
            break;
        }
    }
    history.chosen_epoch = stopper.best_epoch();
    if let Some(params) = best {
        *model.params_mut() = params;
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(mode: EarlyStop, losses: &[f64]) -> (usize, usize) {
        let mut s = EarlyStopper::new(mode, 10);
        for (k, &l) in losses.iter().enumerate() {
            s.observe(k + 1, l);
            if s.should_stop(k + 1) {
                return (k + 1, s.best_epoch());
            }
        }
        (losses.len(), s.best_epoch())
    }

    #[test]
    fn decreasing_then_flat_stops_at_fifteen() {
        let mut losses = vec![5.0, 4.0, 3.0, 2.0, 1.0];
        losses.extend([1.0; 30]);
        assert_eq!(run(EarlyStop::Patience, &losses), (15, 5));
        assert_eq!(run(EarlyStop::FixedTail, &losses), (15, 5));
    }

    #[test]
    fn late_improvement_resets_patience_only() {
        let mut losses = vec![3.0, 2.0, 2.5, 2.5, 1.5];
        losses.extend([2.0; 30]);
        assert_eq!(run(EarlyStop::Patience, &losses), (15, 5));
        // The tail was fixed at epoch 2 + 10 when epoch 3 failed to improve.
        assert_eq!(run(EarlyStop::FixedTail, &losses), (12, 5));
    }

    #[test]
    fn runs_to_cap_while_improving() {
        let losses: Vec<f64> = (0..20).map(|k| 1.0 / (k + 1) as f64).collect();
        assert_eq!(run(EarlyStop::Patience, &losses), (20, 20));
    }
}
