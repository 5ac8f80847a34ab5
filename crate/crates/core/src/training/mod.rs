//! Cross-entropy training with Adadelta, early stopping on validation
//! accuracy, evaluation and checkpoint files.

mod adadelta;
mod checkpoint;

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;

pub use adadelta::{adadelta_step, clip_global_norm, AdadeltaState, DEFAULT_EPSILON, DEFAULT_RHO};
pub use checkpoint::{Checkpoint, FORMAT_VERSION, TAG_MODEL, TAG_PRETRAIN};

use crate::data::Example;
use crate::error::{Error, Result};
use crate::model::{Mode, TextClassifier};
use crate::numerics::{argmax, seeded_rng, sub_seed, Matrix, Parameterized, Tape, LOG_FLOOR};

pub const DEFAULT_PATIENCE: usize = 5;

/// `−ln(pred[label])` with the argument floored at `1e-12`.
pub fn cross_entropy(pred: &[f64], label: usize) -> Result<f64> {
    let p = pred
        .get(label)
        .ok_or_else(|| Error::domain(format!("label {label} out of range for {} classes", pred.len())))?;
    Ok(-p.max(LOG_FLOOR).ln())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub rho: f64,
    pub epsilon: f64,
    pub patience: usize,
    pub max_epochs: usize,
    /// 1 means per-example updates; larger values average gradients over
    /// minibatches of similar-length examples.
    pub batch_size: usize,
    pub clip_norm: Option<f64>,
    pub seed: u64,
    /// Record real elapsed seconds in the metrics file instead of 0.
    pub timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            rho: DEFAULT_RHO,
            epsilon: DEFAULT_EPSILON,
            patience: DEFAULT_PATIENCE,
            max_epochs: 100,
            batch_size: 1,
            clip_norm: None,
            seed: 0,
            timing: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    /// Validation accuracy, or validation loss for pretraining runs.
    pub valid_metric: f64,
    pub wall_seconds: f64,
}

impl EpochMetrics {
    pub fn csv_line(&self) -> String {
        format!("{},{},{},{}", self.epoch, self.train_loss, self.valid_metric, self.wall_seconds)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Early-stopping bookkeeping. Scores are "higher is better"; loss-driven
/// callers pass the negated loss.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub epoch: usize,
    pub best_valid_acc: f64,
    pub best_epoch: usize,
    pub epochs_since_best: usize,
    pub seed: u64,
    pub history: Vec<EpochMetrics>,
}

impl TrainState {
    pub fn new(seed: u64) -> Self {
        TrainState {
            epoch: 0,
            best_valid_acc: f64::NEG_INFINITY,
            best_epoch: 0,
            epochs_since_best: 0,
            seed,
            history: Vec::new(),
        }
    }

    /// True when the last check set a new best.
    pub fn improved(&self) -> bool {
        self.epochs_since_best == 0 && self.best_epoch == self.epoch
    }
}

/// Records one epoch's validation score. A score equal to the best so far
/// is not an improvement.
pub fn early_stop_check(st: &mut TrainState, valid_acc: f64, patience: usize) -> Result<StopDecision> {
    if patience == 0 {
        return Err(Error::domain("patience must be at least 1"));
    }
    st.epoch += 1;
    if valid_acc > st.best_valid_acc {
        st.best_valid_acc = valid_acc;
        st.best_epoch = st.epoch;
        st.epochs_since_best = 0;
    } else {
        st.epochs_since_best += 1;
    }
    Ok(if st.epochs_since_best >= patience {
        StopDecision::Stop
    } else {
        StopDecision::Continue
    })
}

/// Seeded order in which one epoch visits the training set, grouped into
/// update batches.
pub fn epoch_batches(examples: &[Example], batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut rng = seeded_rng(sub_seed(seed, &format!("shuffle{epoch}")));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng);
    if batch_size <= 1 {
        return order.into_iter().map(|i| vec![i]).collect();
    }
    let mut batches = Vec::new();
    for pool in order.chunks(batch_size * 20) {
        let mut pool = pool.to_vec();
        pool.sort_by_key(|&i| examples[i].tokens.len());
        batches.extend(pool.chunks(batch_size).map(<[usize]>::to_vec));
    }
    batches.shuffle(&mut rng);
    batches
}

/// One shuffled pass with an Adadelta update per batch. Returns the mean
/// example loss.
pub fn train_epoch<M: TextClassifier>(
    model: &mut M,
    train: &[Example],
    opt: &mut AdadeltaState,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::domain("training set is empty"));
    }
    let dropout_base = sub_seed(cfg.seed, "dropout");
    let mut total = 0.0;
    for (b, batch) in epoch_batches(train, cfg.batch_size, cfg.seed, epoch).into_iter().enumerate() {
        let mut acc: Option<Vec<Matrix>> = None;
        for (j, &i) in batch.iter().enumerate() {
            let ex = &train[i];
            let dropout_seed = sub_seed(dropout_base, &format!("{epoch}:{b}:{j}"));
            let mut tape = Tape::recording();
            let loss = model.loss(&mut tape, &ex.tokens, ex.label, Mode::Train { dropout_seed })?;
            total += tape.value(loss).get(0, 0);
            let grads = tape.backward(loss)?.into_param_grads();
            match acc.as_mut() {
                None => acc = Some(grads),
                Some(a) => a.iter_mut().zip(&grads).for_each(|(a, g)| a.add_assign(g)),
            }
        }
        let mut grads = acc.expect("batches are non-empty");
        if batch.len() > 1 {
            let k = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| g.as_mut_slice().iter_mut().for_each(|v| *v *= k));
        }
        if let Some(max) = cfg.clip_norm {
            clip_global_norm(&mut grads, max);
        }
        let mut params: Vec<&mut Matrix> = model.named_params_mut().into_iter().map(|(_, m)| m).collect();
        adadelta_step(&mut params, &grads, opt)?;
    }
    Ok(total / train.len() as f64)
}

/// Class probabilities for every example, computed across threads.
pub fn predict_all<M: TextClassifier + Sync>(model: &M, data: &[Example]) -> Result<Vec<Vec<f64>>> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(data.len().div_ceil(16)).max(1);
    if threads == 1 {
        return data.iter().map(|e| model.predict(&e.tokens)).collect();
    }
    let chunk = data.len().div_ceil(threads);
    let parts: Vec<Result<Vec<Vec<f64>>>> = std::thread::scope(|s| {
        let handles: Vec<_> = data
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|e| model.predict(&e.tokens)).collect()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("prediction thread panicked")).collect()
    });
    let mut out = Vec::with_capacity(data.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Fraction of examples whose argmax prediction (lowest index on ties)
/// equals the label.
pub fn evaluate<M: TextClassifier + Sync>(model: &M, data: &[Example]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::domain("evaluation set is empty"));
    }
    let preds = predict_all(model, data)?;
    Ok(accuracy(&preds, data))
}

pub fn accuracy(preds: &[Vec<f64>], data: &[Example]) -> f64 {
    let hits = preds.iter().zip(data).filter(|(p, e)| argmax(p) == e.label).count();
    hits as f64 / data.len() as f64
}

/// Appends epoch rows to a metrics file: `epoch,train_loss,valid,wall_seconds`.
pub struct MetricsWriter {
    file: File,
    path: PathBuf,
}

impl MetricsWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(MetricsWriter { file, path })
    }

    pub fn write(&mut self, m: &EpochMetrics) -> Result<()> {
        writeln!(self.file, "{}", m.csv_line()).map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<EpochMetrics>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .map(|(n, line)| {
            let bad = || Error::format(path, Some(n + 1), "expected epoch,train_loss,valid,wall_seconds");
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(EpochMetrics {
                epoch: f[0].parse().map_err(|_| bad())?,
                train_loss: f[1].parse().map_err(|_| bad())?,
                valid_metric: f[2].parse().map_err(|_| bad())?,
                wall_seconds: f[3].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Trains until validation accuracy stops improving for `patience` epochs
/// (or `max_epochs`), then restores the best parameters.
pub fn fit<M: TextClassifier + Sync>(
    model: &mut M,
    train: &[Example],
    valid: &[Example],
    cfg: &TrainConfig,
    metrics: Option<&Path>,
) -> Result<TrainState> {
    if valid.is_empty() {
        return Err(Error::domain("validation set is empty; early stopping needs one"));
    }
    let mut writer = metrics.map(MetricsWriter::create).transpose()?;
    let mut opt = AdadeltaState::for_params(model, cfg.rho, cfg.epsilon)?;
    let mut st = TrainState::new(cfg.seed);
    let mut best = snapshot(model);
    let start = Instant::now();
    for epoch in 0..cfg.max_epochs {
        let train_loss = train_epoch(model, train, &mut opt, cfg, epoch)?;
        let valid_acc = evaluate(model, valid)?;
        let decision = early_stop_check(&mut st, valid_acc, cfg.patience)?;
        if st.improved() {
            best = snapshot(model);
        }
        let row = EpochMetrics {
            epoch: st.epoch,
            train_loss,
            valid_metric: valid_acc,
            wall_seconds: if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 },
        };
        if let Some(w) = writer.as_mut() {
            w.write(&row)?;
        }
        st.history.push(row);
        if decision == StopDecision::Stop {
            break;
        }
    }
    restore(model, &best);
    Ok(st)
}

pub(crate) fn snapshot(model: &impl Parameterized) -> Vec<Matrix> {
    model.named_params().into_iter().map(|(_, m)| m.clone()).collect()
}

pub(crate) fn restore(model: &mut impl Parameterized, saved: &[Matrix]) {
    for ((_, dst), src) in model.named_params_mut().into_iter().zip(saved) {
        dst.as_mut_slice().copy_from_slice(src.as_slice());
    }
}
