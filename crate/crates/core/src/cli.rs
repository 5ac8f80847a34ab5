//! Command-line front end: train, eval, pretrain, gradcheck and synth.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{RunConfig, SplitSpec};
use crate::convolution::FilterSpec;
use crate::data::{
    holdout_split, kfold_split, load_labeled_corpus, load_labeled_corpus_with_labels, synth_longdep, write_tsv, Corpus,
    Example, SynthParams,
};
use crate::embeddings::{ChannelSet, EmbeddingTable};
use crate::error::{Error, Result};
use crate::gradcheck::{check, GradcheckReport};
use crate::model::{split_subsentences, DocumentModel, Mode, Model, ModelConfig, SentenceModel, TextClassifier};
use crate::numerics::{argmax, seeded_rng, sub_seed};
use crate::pretrain::{
    encoder_checkpoint, encoders_from_checkpoint, pretrain_run, reconstruction_accuracy, transfer_encoder, Autoencoder,
};
use crate::training::{fit, predict_all, accuracy, Checkpoint, TrainState, TAG_MODEL};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const ENCODER_FILE: &str = "encoder.ckpt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.txt";

#[derive(Parser, Debug)]
#[command(name = "dscnn", version, about = "LSTM + convolution text classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a classifier with early stopping; writes checkpoint, metrics and resolved config.
    Train {
        /// Labeled corpus.
        data: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Score a checkpoint on a labeled corpus.
    Eval {
        checkpoint: PathBuf,
        data: PathBuf,
        /// Per-example JSON report (default: next to the checkpoint).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Corpus layout: tsv or dir.
        #[arg(long)]
        format: Option<String>,
    },
    /// Pretrain each channel's word-level LSTM as a sequence autoencoder.
    Pretrain {
        data: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compare reverse-mode gradients with finite differences on a tiny model.
    Gradcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Embedding and hidden dimension.
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 2)]
        channels: usize,
        #[arg(long, default_value = "2:3,3:3")]
        filters: FilterSpec,
    },
    /// Generate the long-dependency task as a tsv corpus.
    Synth {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        seq_len: usize,
        #[arg(long, default_value_t = 10)]
        vocab: usize,
        #[arg(long, default_value_t = 15)]
        gap: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output tsv file.
        #[arg(long)]
        out: PathBuf,
        /// Also write one-hot GloVe-format vectors for the vocabulary here.
        #[arg(long)]
        onehot_embeddings: Option<PathBuf>,
    },
}

/// Flags shared by train and pretrain. Each overrides the config file.
#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// key=value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// sentence or document.
    #[arg(long)]
    pub mode: Option<String>,
    /// Embedding file per channel (GloVe text, word2vec .bin, or "random"); repeatable.
    #[arg(long)]
    pub embeddings: Vec<String>,
    /// LSTM hidden size (default: embedding dim)
    #[arg(long)]
    pub hdim: Option<usize>,
    /// Window:count list, e.g. 3:100,4:100,5:100.
    #[arg(long)]
    pub filters: Option<String>,
    /// Dropout rate on pooled features
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Epochs without validation improvement before stopping
    #[arg(long)]
    pub patience: Option<usize>,
    /// Global seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// K:F, run fold F of K-fold cross validation.
    #[arg(long)]
    pub kfold: Option<String>,
    /// Pretrained encoder checkpoint.
    #[arg(long)]
    pub init_encoder: Option<PathBuf>,
    /// Record elapsed seconds in the metrics file.
    #[arg(long)]
    pub timing: bool,
    /// Any other config key, as key=value; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl RunArgs {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(p) = &self.config {
            cfg.apply_file(p)?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got {kv:?}")))?;
            cfg.set(k.trim(), v)?;
        }
        let flags: [(&str, Option<String>); 8] = [
            ("mode", self.mode.clone()),
            ("hdim", self.hdim.map(|v| v.to_string())),
            ("filters", self.filters.clone()),
            ("dropout", self.dropout.map(|v| v.to_string())),
            ("patience", self.patience.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("kfold", self.kfold.clone()),
            ("init_encoder", self.init_encoder.as_ref().map(|p| p.display().to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        if !self.embeddings.is_empty() {
            cfg.embeddings = self.embeddings.clone();
        }
        if self.timing {
            cfg.timing = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { data, run } => {
            let out = cmd_train(&run.resolve()?, &data, &run.out)?;
            println!(
                "best valid accuracy {:.4} at epoch {} of {}",
                out.state.best_valid_acc,
                out.state.best_epoch,
                out.state.epoch
            );
            if let Some(acc) = out.test_accuracy {
                println!("test accuracy {acc:.4}");
            }
            Ok(())
        }
        Command::Eval { checkpoint, data, report, format } => {
            let report = report.unwrap_or_else(|| checkpoint.with_file_name("eval_report.json"));
            let out = cmd_eval(&checkpoint, &data, format.as_deref(), &report)?;
            println!("{:.4}", out.accuracy);
            Ok(())
        }
        Command::Pretrain { data, run } => {
            for ch in cmd_pretrain(&run.resolve()?, &data, &run.out)? {
                println!(
                    "channel {}: valid reconstruction loss {:.4} -> {:.4}, exact reconstructions {:.4}",
                    ch.channel, ch.initial_valid_loss, ch.best_valid_loss, ch.valid_reconstruction_accuracy
                );
            }
            Ok(())
        }
        Command::Gradcheck { seed, dim, channels, filters } => {
            let report = cmd_gradcheck(seed, dim, channels, filters)?;
            println!("{report}");
            if report.passed() {
                Ok(())
            } else {
                let names: Vec<&str> = report.failures().map(|g| g.name.as_str()).collect();
                Err(Error::Contract(format!("gradient check failed for {}", names.join(", "))))
            }
        }
        Command::Synth { n, seq_len, vocab, gap, seed, out, onehot_embeddings } => {
            let params = SynthParams { n_examples: n, seq_len, vocab_size: vocab, gap, seed };
            cmd_synth(params, &out, onehot_embeddings.as_deref())?;
            println!("wrote {n} examples to {}", out.display());
            Ok(())
        }
    }
}

/// Train, validation and test portions under the configured split.
pub fn split_corpus(cfg: &RunConfig, corpus: &Corpus) -> Result<(Vec<Example>, Vec<Example>, Vec<Example>)> {
    match cfg.split {
        SplitSpec::KFold { k, fold } => {
            let s = kfold_split(&corpus.examples, k, fold, cfg.valid_fraction, cfg.seed_for("split"))?;
            Ok((s.train, s.valid, s.test))
        }
        SplitSpec::Fixed => {
            let (train, valid) = match &cfg.valid_data {
                Some(p) => (
                    corpus.examples.clone(),
                    load_labeled_corpus_with_labels(p, cfg.format, &corpus.labels)?.examples,
                ),
                None => holdout_split(&corpus.examples, cfg.valid_fraction, cfg.seed_for("split"))?,
            };
            let test = match &cfg.test_data {
                Some(p) => load_labeled_corpus_with_labels(p, cfg.format, &corpus.labels)?.examples,
                None => Vec::new(),
            };
            Ok((train, valid, test))
        }
    }
}

pub fn build_model(cfg: &RunConfig, classes: usize) -> Result<Model> {
    let channels = cfg.load_channels()?;
    let mc = cfg.model_config(classes, channels.dim());
    Model::new(channels, &mc, cfg.seed_for("init"))
}

fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

fn checkpoint_config(cfg: &RunConfig, labels: &[String]) -> Vec<(String, String)> {
    let mut pairs = cfg.to_pairs();
    pairs.extend(labels.iter().enumerate().map(|(i, l)| (format!("label.{i}"), l.clone())));
    pairs
}

pub struct TrainOutcome {
    pub model: Model,
    pub labels: Vec<String>,
    pub state: TrainState,
    pub test_accuracy: Option<f64>,
}

/// Split, optional encoder transfer, early-stopped training; writes the best
/// checkpoint, per-epoch metrics and the resolved config into `out`.
pub fn cmd_train(cfg: &RunConfig, data: &Path, out: &Path) -> Result<TrainOutcome> {
    let corpus = load_labeled_corpus(data, cfg.format)?;
    let (train, valid, test) = split_corpus(cfg, &corpus)?;
    let mut model = build_model(cfg, corpus.classes())?;
    if let Some(p) = &cfg.init_encoder {
        for (c, enc) in encoders_from_checkpoint(&Checkpoint::load(p)?)? {
            transfer_encoder(&enc, &mut model, c)?;
        }
    }
    create_dir(out)?;
    fs::write(out.join(CONFIG_FILE), cfg.to_text()).map_err(|e| Error::io(out.join(CONFIG_FILE), e))?;
    let state = fit(&mut model, &train, &valid, &cfg.train_config(), Some(&out.join(METRICS_FILE)))?;
    Checkpoint::from_params(TAG_MODEL, checkpoint_config(cfg, &corpus.labels), &model).save(out.join(CHECKPOINT_FILE))?;
    let test_accuracy = if test.is_empty() {
        None
    } else {
        Some(accuracy(&predict_all(&model, &test)?, &test))
    };
    Ok(TrainOutcome { model, labels: corpus.labels, state, test_accuracy })
}

/// Rebuilds a trained model and its class names from a model checkpoint.
pub fn load_model(path: &Path) -> Result<(Model, Vec<String>, RunConfig)> {
    let ckpt = Checkpoint::load(path)?;
    if ckpt.tag != TAG_MODEL {
        return Err(Error::Contract(format!("{} is a {:?} checkpoint, not a model", path.display(), ckpt.tag)));
    }
    let mut cfg = RunConfig::default();
    let mut labels = Vec::new();
    for (k, v) in &ckpt.config {
        match k.strip_prefix("label.") {
            Some(_) => labels.push(v.clone()),
            None => cfg.set(k, v)?,
        }
    }
    let mut model = build_model(&cfg, labels.len())?;
    ckpt.apply_to(&mut model)?;
    Ok((model, labels, cfg))
}

#[derive(Serialize, Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub id: usize,
    pub gold: String,
    pub predicted: String,
    pub probabilities: Vec<f64>,
}

#[derive(Serialize, Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub labels: Vec<String>,
    pub predictions: Vec<PredictionRow>,
}

pub fn cmd_eval(checkpoint: &Path, data: &Path, format: Option<&str>, report: &Path) -> Result<EvalReport> {
    let (model, labels, cfg) = load_model(checkpoint)?;
    let format = format.map(crate::data::CorpusFormat::parse).transpose()?.unwrap_or(cfg.format);
    let corpus = load_labeled_corpus_with_labels(data, format, &labels)?;
    let probs = predict_all(&model, &corpus.examples)?;
    let predictions = corpus
        .examples
        .iter()
        .zip(&probs)
        .map(|(e, p)| PredictionRow {
            id: e.id,
            gold: labels[e.label].clone(),
            predicted: labels[argmax(p)].clone(),
            probabilities: p.clone(),
        })
        .collect();
    let out = EvalReport {
        accuracy: accuracy(&probs, &corpus.examples),
        labels,
        predictions,
    };
    let json = serde_json::to_string_pretty(&out).map_err(|e| Error::Contract(e.to_string()))?;
    fs::write(report, json).map_err(|e| Error::io(report, e))?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainOutcome {
    pub channel: usize,
    pub initial_valid_loss: f64,
    pub best_valid_loss: f64,
    pub valid_reconstruction_accuracy: f64,
    pub epochs: usize,
}

/// Sequences the word-level LSTM reads: whole sentences, or subsentences
/// in document mode.
pub fn pretrain_sequences(cfg: &RunConfig, examples: &[Example]) -> Result<Vec<Example>> {
    match cfg.mode {
        crate::model::ModelKind::Sentence => Ok(examples.to_vec()),
        crate::model::ModelKind::Document => {
            let mut out = Vec::new();
            for e in examples {
                for tokens in split_subsentences(&e.tokens)? {
                    out.push(Example { id: out.len(), tokens, label: 0 });
                }
            }
            Ok(out)
        }
    }
}

/// Pretrains one autoencoder per channel on the training portion of the
/// configured split, early-stopped on the validation portion.
pub fn cmd_pretrain(cfg: &RunConfig, data: &Path, out: &Path) -> Result<Vec<PretrainOutcome>> {
    let corpus = load_labeled_corpus(data, cfg.format)?;
    let (train, valid, _) = split_corpus(cfg, &corpus)?;
    let (train, valid) = (pretrain_sequences(cfg, &train)?, pretrain_sequences(cfg, &valid)?);
    let channels = cfg.load_channels()?;
    let hidden = cfg.hdim.unwrap_or(channels.dim());
    create_dir(out)?;
    fs::write(out.join(CONFIG_FILE), cfg.to_text()).map_err(|e| Error::io(out.join(CONFIG_FILE), e))?;
    let mut encoders = Vec::new();
    let mut outcomes = Vec::new();
    for c in 0..channels.count() {
        let (ae, outcome) = pretrain_channel(cfg, &channels, c, hidden, &train, &valid, Some(out))?;
        encoders.push((c, ae.encoder));
        outcomes.push(outcome);
    }
    let refs: Vec<(usize, &crate::recurrent::LstmParams)> = encoders.iter().map(|(c, p)| (*c, p)).collect();
    encoder_checkpoint(&refs, cfg.to_pairs()).save(out.join(ENCODER_FILE))?;
    Ok(outcomes)
}

/// Pretrains the autoencoder of one channel; metrics go to
/// `metrics_ch{c}.csv` under `out` when given.
pub fn pretrain_channel(
    cfg: &RunConfig,
    channels: &ChannelSet,
    c: usize,
    hidden: usize,
    train: &[Example],
    valid: &[Example],
    out: Option<&Path>,
) -> Result<(Autoencoder, PretrainOutcome)> {
    let seed = cfg.seed_for(&format!("pretrain{c}"));
    let mut ae = Autoencoder::new(c, channels.dim(), hidden, Autoencoder::vocab_of(train), cfg.forget_bias, seed)?;
    let mut tc = cfg.train_config();
    tc.seed = seed;
    let metrics = out.map(|o| o.join(format!("metrics_ch{c}.csv")));
    let report = pretrain_run(&mut ae, channels, train, valid, &tc, metrics.as_deref())?;
    let outcome = PretrainOutcome {
        channel: c,
        initial_valid_loss: report.initial_valid_loss,
        best_valid_loss: report.best_valid_loss,
        valid_reconstruction_accuracy: reconstruction_accuracy(&ae, channels, valid)?,
        epochs: report.state.epoch,
    };
    Ok((ae, outcome))
}

/// Gradient check of both model kinds on a six-token sentence and a
/// two-subsentence document.
pub fn cmd_gradcheck(seed: u64, dim: usize, channels: usize, filters: FilterSpec) -> Result<GradcheckReport> {
    let words = ["the", "film", "was", "long", "but", "moving"];
    let mut rng = seeded_rng(sub_seed(seed, "gradcheck-embeddings"));
    let tables = (0..channels)
        .map(|_| {
            let pairs = words.iter().map(|w| {
                let v = crate::numerics::init_uniform(dim, 1, 0.5, rand::Rng::random(&mut rng)).map(|m| m.into_vec());
                v.map(|v| (w.to_string(), v))
            });
            EmbeddingTable::from_pairs(dim, pairs.collect::<Result<Vec<_>>>()?)
        })
        .collect::<Result<Vec<_>>>()?;
    let set = ChannelSet::new(tables, sub_seed(seed, "oov"))?;
    let mut cfg = ModelConfig::sentence(dim, 3);
    cfg.filters = filters;
    let mode = Mode::Train { dropout_seed: sub_seed(seed, "dropout") };

    let sentence: Vec<String> = ["the", "film", "was", "unseen", "but", "moving"].map(String::from).to_vec();
    let mut sm = SentenceModel::new(set.clone(), &cfg, sub_seed(seed, "sentence"))?;
    let sr = check(&mut sm, |m, tape| m.loss(tape, &sentence, 1, mode), None)?;

    cfg.kind = crate::model::ModelKind::Document;
    let document: Vec<String> = ["the", "film", "was", "long", ",", "but", "moving", "."].map(String::from).to_vec();
    let mut dm = DocumentModel::new(set, &cfg, sub_seed(seed, "document"))?;
    let dr = check(&mut dm, |m, tape| m.loss(tape, &document, 2, mode), None)?;

    Ok(sr.prefixed("sentence/").merge(dr.prefixed("document/")))
}

pub fn cmd_synth(params: SynthParams, out: &Path, onehot: Option<&Path>) -> Result<()> {
    let examples = synth_longdep(params)?;
    write_tsv(out, &examples, &["0".to_string(), "1".to_string()])?;
    if let Some(p) = onehot {
        crate::embeddings::write_glove_text(p, &crate::data::onehot_table(params.vocab_size)?)?;
    }
    Ok(())
}
