use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::batches::batch_indices;
use super::early_stop::{EarlyStopping, Verdict};
use crate::error::{Error, Result};
use crate::model::{argmax_rows, ModelConfig, ModelParams};
use crate::nn::{softmax_cross_entropy, Binder, Mode};
use crate::polsar::PatchDataset;
use crate::tensor::{ComplexVar, Tape, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Taken from the run settings, not from the `[train]` table.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 1e-3, batch_size: 128, max_epochs: 100, patience: 10, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::usage(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::usage("batch size, epochs and patience must be positive"));
        }
        if self.patience > self.max_epochs {
            return Err(Error::usage(format!(
                "patience {} exceeds the epoch limit {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// Zero-based epoch index.
    pub epoch: usize,
    /// Mean training cross-entropy over the epoch's batches.
    pub loss: f64,
    pub accuracy: f64,
    /// Whether this epoch set a new best loss.
    pub best: bool,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct History {
    pub records: Vec<EpochRecord>,
    /// Epoch whose weights were returned.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl History {
    pub fn best_record(&self) -> Option<&EpochRecord> {
        self.best_epoch.and_then(|e| self.records.iter().find(|r| r.epoch == e))
    }

    /// Text table: `epoch loss accuracy best`, losses at full precision.
    pub fn to_table(&self) -> String {
        let mut s = String::from("epoch\tloss\taccuracy\tbest\n");
        for r in &self.records {
            let _ = writeln!(s, "{}\t{:?}\t{:?}\t{}", r.epoch, r.loss, r.accuracy, if r.best { "*" } else { "" });
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_table()).map_err(|e| Error::io(path, e))
    }
}

/// Runs epochs until `max_epochs` or until `patience` consecutive epochs
/// fail to improve the loss, then returns the state snapshot taken at the
/// best epoch.
///
/// `run_epoch(epoch, state)` advances `state` by one epoch and reports
/// `(mean loss, accuracy)`. If no epoch ever improves (all losses NaN),
/// the initial state is returned.
pub fn fit<S: Clone>(
    initial: S,
    max_epochs: usize,
    patience: usize,
    mut run_epoch: impl FnMut(usize, &mut S) -> Result<(f64, f64)>,
) -> Result<(S, History)> {
    let mut monitor = EarlyStopping::new(patience);
    let mut best = initial.clone();
    let mut state = initial;
    let mut history = History::default();
    for epoch in 0..max_epochs {
        let (loss, accuracy) = run_epoch(epoch, &mut state)?;
        let verdict = monitor.observe(epoch, loss);
        if verdict == Verdict::Improved {
            best = state.clone();
        }
        history.records.push(EpochRecord { epoch, loss, accuracy, best: verdict == Verdict::Improved });
        if verdict == Verdict::Stop {
            history.stopped_early = true;
            break;
        }
    }
    history.best_epoch = monitor.best_epoch();
    Ok((best, history))
}

pub struct TrainOutcome {
    /// Weights and running statistics from the best epoch.
    pub params: ModelParams,
    pub history: History,
}

/// Trains a freshly initialized model (seeded by `cfg.seed`) on `dataset`.
pub fn train(model: &ModelConfig, dataset: &PatchDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    model.validate()?;
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::data("training set is empty"));
    }
    if dataset.patch != model.patch {
        return Err(Error::incompatible(format!(
            "dataset patches are {0}x{0} but the model expects {1}x{1}",
            dataset.patch, model.patch
        )));
    }
    if let Some(&bad) = dataset.labels.iter().find(|&&l| l >= model.num_classes) {
        return Err(Error::data(format!("class {} exceeds the model's {} classes", bad + 1, model.num_classes)));
    }
    let params = ModelParams::init(*model, cfg.seed);
    let adam = AdamState::new(&params.trainable());
    let n = dataset.len();
    let ((params, _), history) = fit((params, adam), cfg.max_epochs, cfg.patience, |epoch, (params, adam)| {
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for indices in batch_indices(n, cfg.batch_size, cfg.seed, epoch as u64) {
            let batch = dataset.batch(&indices);
            let tape = Tape::new();
            let mut binder = Binder::training(&tape);
            let z = ComplexVar::new(tape.constant(batch.re), tape.constant(batch.im))?;
            let out = params.forward(&mut binder, tape.constant(batch.real), z, Mode::Train)?;
            let logits = out.logits.value();
            correct += argmax_rows(&logits).iter().zip(&batch.labels).filter(|(p, l)| p == l).count();
            let loss = softmax_cross_entropy(out.logits, &batch.labels)?;
            loss_sum += loss.value().item() * indices.len() as f64;
            let mut grads = tape.backward(loss)?;
            let g: Vec<Tensor> = binder
                .leaves()
                .iter()
                .map(|&v| grads.take(v).unwrap_or_else(|| Tensor::zeros_like(&v.value())))
                .collect();
            adam.step(&mut params.trainable_mut(), &g, cfg.learning_rate)?;
            if let Some(stats) = out.bn_stats {
                params.attention.bn.update_running(&stats);
            }
        }
        let (loss, acc) = (loss_sum / n as f64, correct as f64 / n as f64);
        info!("epoch {epoch}: loss {loss:.6} accuracy {:.2}%", 100.0 * acc);
        Ok((loss, acc))
    })?;
    Ok(TrainOutcome { params, history })
}
