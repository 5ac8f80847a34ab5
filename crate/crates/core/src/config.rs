//! Run configuration: defaults, a `key=value` file, and flag overrides, in
//! increasing precedence.

use std::fs;
use std::path::{Path, PathBuf};

use crate::convolution::FilterSpec;
use crate::data::CorpusFormat;
use crate::embeddings::{load_glove_text, load_word2vec_binary, ChannelSet, EmbeddingTable};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelKind};
use crate::numerics::{sub_seed, Activation};
use crate::training::{TrainConfig, DEFAULT_EPSILON, DEFAULT_PATIENCE, DEFAULT_RHO};

/// Channel spec naming a vocabulary-free channel whose every vector comes
/// from the seeded OOV rule.
pub const RANDOM_CHANNEL: &str = "random";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitSpec {
    /// Train on the data file; validation carved from it unless
    /// `valid_data` is given; test on `test_data` if given.
    Fixed,
    KFold { k: usize, fold: usize },
}

impl SplitSpec {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "fixed" {
            return Ok(SplitSpec::Fixed);
        }
        let (k, f) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("split {s:?} is neither \"fixed\" nor K:F")))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| Error::Config(format!("bad k-fold spec {s:?}")));
        Ok(SplitSpec::KFold { k: parse(k)?, fold: parse(f)? })
    }
}

impl std::fmt::Display for SplitSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SplitSpec::Fixed => write!(f, "fixed"),
            SplitSpec::KFold { k, fold } => write!(f, "{k}:{fold}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mode: ModelKind,
    /// One entry per channel: a GloVe text file, a word2vec `.bin` file, or
    /// `random`.
    pub embeddings: Vec<String>,
    /// Dimension used when every channel is `random`.
    pub embed_dim: usize,
    pub max_vocab: Option<usize>,
    /// Defaults to the embedding dimension.
    pub hdim: Option<usize>,
    pub filters: FilterSpec,
    pub conv_activation: Activation,
    pub dropout: f64,
    pub forget_bias: f64,
    pub ablate_lstm: bool,
    pub trainable_embeddings: bool,
    pub rho: f64,
    pub epsilon: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub clip_norm: Option<f64>,
    pub seed: u64,
    pub split: SplitSpec,
    pub valid_fraction: f64,
    pub format: CorpusFormat,
    pub valid_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub init_encoder: Option<PathBuf>,
    pub timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: ModelKind::Sentence,
            embeddings: Vec::new(),
            embed_dim: 300,
            max_vocab: None,
            hdim: None,
            filters: FilterSpec::default(),
            conv_activation: Activation::Relu,
            dropout: 0.5,
            forget_bias: 0.0,
            ablate_lstm: false,
            trainable_embeddings: false,
            rho: DEFAULT_RHO,
            epsilon: DEFAULT_EPSILON,
            patience: DEFAULT_PATIENCE,
            max_epochs: 100,
            batch_size: 1,
            clip_norm: None,
            seed: 1,
            split: SplitSpec::Fixed,
            valid_fraction: 0.1,
            format: CorpusFormat::TsvLabelText,
            valid_data: None,
            test_data: None,
            init_encoder: None,
            timing: false,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl RunConfig {
    /// Applies one setting. `embeddings` accepts a comma-separated list.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "mode" => self.mode = ModelKind::parse(v)?,
            "embeddings" => {
                self.embeddings = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect()
            }
            "embed_dim" => self.embed_dim = parse_num(key, v)?,
            "max_vocab" => self.max_vocab = if v.is_empty() { None } else { Some(parse_num(key, v)?) },
            "hdim" => self.hdim = if v.is_empty() { None } else { Some(parse_num(key, v)?) },
            "filters" => self.filters = v.parse()?,
            "conv_activation" => self.conv_activation = Activation::parse(v)?,
            "dropout" => self.dropout = parse_num(key, v)?,
            "forget_bias" => self.forget_bias = parse_num(key, v)?,
            "ablate_lstm" => self.ablate_lstm = parse_bool(key, v)?,
            "trainable_embeddings" => self.trainable_embeddings = parse_bool(key, v)?,
            "rho" => self.rho = parse_num(key, v)?,
            "epsilon" => self.epsilon = parse_num(key, v)?,
            "patience" => self.patience = parse_num(key, v)?,
            "max_epochs" => self.max_epochs = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "clip_norm" => self.clip_norm = if v.is_empty() { None } else { Some(parse_num(key, v)?) },
            "seed" => self.seed = parse_num(key, v)?,
            "split" | "kfold" => self.split = SplitSpec::parse(v)?,
            "valid_fraction" => self.valid_fraction = parse_num(key, v)?,
            "format" => self.format = CorpusFormat::parse(v)?,
            "valid_data" => self.valid_data = opt_path(v),
            "test_data" => self.test_data = opt_path(v),
            "init_encoder" => self.init_encoder = opt_path(v),
            "timing" => self.timing = parse_bool(key, v)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Reads `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(path, Some(n + 1), "expected key=value"))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::format(path, Some(n + 1), e.to_string()))?;
        }
        Ok(())
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// Every setting, in a fixed order, as the text `set` accepts.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let opt = |o: Option<String>| o.unwrap_or_default();
        let path = |p: &Option<PathBuf>| opt(p.as_ref().map(|p| p.display().to_string()));
        [
            ("mode", self.mode.name().to_string()),
            ("embeddings", self.embeddings.join(",")),
            ("embed_dim", self.embed_dim.to_string()),
            ("max_vocab", opt(self.max_vocab.map(|v| v.to_string()))),
            ("hdim", opt(self.hdim.map(|v| v.to_string()))),
            ("filters", self.filters.to_string()),
            ("conv_activation", self.conv_activation.name().to_string()),
            ("dropout", self.dropout.to_string()),
            ("forget_bias", self.forget_bias.to_string()),
            ("ablate_lstm", self.ablate_lstm.to_string()),
            ("trainable_embeddings", self.trainable_embeddings.to_string()),
            ("rho", self.rho.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("patience", self.patience.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("clip_norm", opt(self.clip_norm.map(|v| v.to_string()))),
            ("seed", self.seed.to_string()),
            ("split", self.split.to_string()),
            ("valid_fraction", self.valid_fraction.to_string()),
            ("format", self.format.name().to_string()),
            ("valid_data", path(&self.valid_data)),
            ("test_data", path(&self.test_data)),
            ("init_encoder", path(&self.init_encoder)),
            ("timing", self.timing.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.embeddings.is_empty() {
            return Err(Error::Config("at least one --embeddings channel is required".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.max_epochs == 0 || self.batch_size == 0 || self.embed_dim == 0 {
            return Err(Error::Config("max_epochs, batch_size and embed_dim must be positive".into()));
        }
        if let SplitSpec::KFold { k, fold } = self.split {
            if k < 2 || fold >= k {
                return Err(Error::Config(format!("k-fold spec {k}:{fold} needs k >= 2 and fold < k")));
            }
        }
        Ok(())
    }

    /// Named seed for one source of randomness.
    pub fn seed_for(&self, label: &str) -> u64 {
        sub_seed(self.seed, label)
    }

    pub fn load_channels(&self) -> Result<ChannelSet> {
        let dim = self
            .embeddings
            .iter()
            .find(|e| *e != RANDOM_CHANNEL)
            .map(|e| load_table(e, self.max_vocab).map(|t| t.dim()))
            .transpose()?
            .unwrap_or(self.embed_dim);
        let tables = self
            .embeddings
            .iter()
            .map(|e| {
                if e == RANDOM_CHANNEL {
                    EmbeddingTable::random(dim)
                } else {
                    load_table(e, self.max_vocab)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        ChannelSet::new(tables, self.seed_for("oov"))
    }

    pub fn model_config(&self, classes: usize, embed_dim: usize) -> ModelConfig {
        ModelConfig {
            kind: self.mode,
            hidden_dim: self.hdim.unwrap_or(embed_dim),
            filters: self.filters.clone(),
            conv_activation: self.conv_activation,
            dropout: self.dropout,
            classes,
            forget_bias: self.forget_bias,
            ablate_lstm: self.ablate_lstm,
            trainable_embeddings: self.trainable_embeddings,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            rho: self.rho,
            epsilon: self.epsilon,
            patience: self.patience,
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            clip_norm: self.clip_norm,
            seed: self.seed_for("train"),
            timing: self.timing,
        }
    }
}

fn load_table(path: &str, max_vocab: Option<usize>) -> Result<EmbeddingTable> {
    if path.ends_with(".bin") {
        load_word2vec_binary(path, max_vocab)
    } else {
        load_glove_text(path, max_vocab)
    }
}
