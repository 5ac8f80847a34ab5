//! End-to-end classifiers: the sentence model (per-channel LSTM, wide
//! convolution, max pooling, softmax) and its hierarchical document variant.

mod document;
mod sentence;

use rand::Rng;

pub use document::DocumentModel;
pub use sentence::SentenceModel;

use crate::convolution::{FilterBank, FilterSpec};
use crate::embeddings::ChannelSet;
use crate::error::{Error, Result};
use crate::numerics::{init_uniform, seeded_rng, softmax, Activation, Matrix, Parameterized, Tape, Var};

/// Half-width of the uniform classifier initializer.
pub const CLASSIFIER_INIT_HALF_WIDTH: f64 = 0.01;

/// Tokens that end a subsentence.
pub const DELIMITERS: [&str; 4] = [",", ".", "?", "!"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Sentence,
    Document,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Sentence => "sentence",
            ModelKind::Document => "document",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sentence" => Ok(ModelKind::Sentence),
            "document" => Ok(ModelKind::Document),
            other => Err(Error::Config(format!("unknown mode {other:?} (sentence|document)"))),
        }
    }
}

/// Architecture hyperparameters shared by both model kinds.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub hidden_dim: usize,
    pub filters: FilterSpec,
    pub conv_activation: Activation,
    pub dropout: f64,
    pub classes: usize,
    /// Initial forget-gate bias; 0 keeps plain zero biases.
    pub forget_bias: f64,
    /// Convolve the embeddings directly, without the LSTM layer (sentence only).
    pub ablate_lstm: bool,
    pub trainable_embeddings: bool,
}

impl ModelConfig {
    pub fn sentence(hidden_dim: usize, classes: usize) -> Self {
        ModelConfig {
            kind: ModelKind::Sentence,
            hidden_dim,
            filters: FilterSpec::default(),
            conv_activation: Activation::Relu,
            dropout: 0.5,
            classes,
            forget_bias: 0.0,
            ablate_lstm: false,
            trainable_embeddings: false,
        }
    }

    pub fn document(hidden_dim: usize, classes: usize) -> Self {
        ModelConfig {
            kind: ModelKind::Document,
            ..ModelConfig::sentence(hidden_dim, classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden dimension must be positive".into()));
        }
        if self.classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.classes)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if self.ablate_lstm && self.kind == ModelKind::Document {
            return Err(Error::Config("the conv-only ablation applies to the sentence model".into()));
        }
        Ok(())
    }
}

/// Forward-pass mode. Training draws a dropout mask from `dropout_seed`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train { dropout_seed: u64 },
    Infer,
}

/// Affine output layer: `weight` is `K × F`, `bias` is `K × 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Classifier {
    pub fn new(classes: usize, features: usize, seed: u64) -> Result<Self> {
        Ok(Classifier {
            weight: init_uniform(classes, features, CLASSIFIER_INIT_HALF_WIDTH, seed)?,
            bias: Matrix::zeros(classes, 1),
        })
    }

    pub fn classes(&self) -> usize {
        self.weight.rows()
    }
}

/// Shared convolution → dropout → classifier head.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Head {
    pub bank: FilterBank,
    pub classifier: Classifier,
    pub dropout: f64,
}

pub(crate) struct HeadVars {
    bank: crate::convolution::BankVars,
    weight: Var,
    bias: Var,
}

impl Head {
    pub fn new(channels: usize, dim: usize, cfg: &ModelConfig, seed: u64) -> Result<Self> {
        let bank = FilterBank::new(
            channels,
            dim,
            &cfg.filters,
            cfg.conv_activation,
            crate::numerics::sub_seed(seed, "bank"),
        )?;
        let classifier = Classifier::new(cfg.classes, bank.output_dim(), crate::numerics::sub_seed(seed, "classifier"))?;
        Ok(Head {
            bank,
            classifier,
            dropout: cfg.dropout,
        })
    }

    pub fn named_params(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> =
            self.bank.named_params().into_iter().map(|(n, m)| (format!("bank.{n}"), m)).collect();
        out.push(("classifier.w".into(), &self.classifier.weight));
        out.push(("classifier.b".into(), &self.classifier.bias));
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out: Vec<(String, &mut Matrix)> = self
            .bank
            .named_params_mut()
            .into_iter()
            .map(|(n, m)| (format!("bank.{n}"), m))
            .collect();
        out.push(("classifier.w".into(), &mut self.classifier.weight));
        out.push(("classifier.b".into(), &mut self.classifier.bias));
        out
    }

    pub fn bind<'p>(&'p self, tape: &mut Tape<'p>) -> HeadVars {
        HeadVars {
            bank: self.bank.bind(tape),
            weight: tape.param(&self.classifier.weight),
            bias: tape.param(&self.classifier.bias),
        }
    }

    /// Pooled features → dropout → logits (`K × 1`).
    pub fn logits(&self, tape: &mut Tape<'_>, vars: &HeadVars, maps: &[Var], mode: Mode) -> Result<Var> {
        let pooled = self.bank.apply(tape, &vars.bank, maps)?;
        let features = match mode {
            Mode::Train { dropout_seed } if self.dropout > 0.0 => {
                let n = tape.value(pooled).rows();
                let mask = dropout_mask(n, self.dropout, dropout_seed)?;
                tape.mask(pooled, mask)?
            }
            _ => pooled,
        };
        let z = tape.matmul(vars.weight, features)?;
        tape.add_bias(z, vars.bias)
    }
}

/// Common interface of the sentence and document classifiers.
pub trait TextClassifier: Parameterized {
    fn classes(&self) -> usize;

    /// Binds every parameter (in [`Parameterized::named_params`] order) and
    /// records the forward pass up to the `K × 1` logits.
    fn logits<'p>(&'p self, tape: &mut Tape<'p>, tokens: &[String], mode: Mode) -> Result<Var>;

    /// Cross-entropy of the prediction against `label`.
    fn loss<'p>(&'p self, tape: &mut Tape<'p>, tokens: &[String], label: usize, mode: Mode) -> Result<Var> {
        let z = self.logits(tape, tokens, mode)?;
        tape.softmax_cross_entropy(z, &[label])
    }

    /// Class probabilities in inference mode.
    fn predict(&self, tokens: &[String]) -> Result<Vec<f64>> {
        let mut tape = Tape::inference();
        let z = self.logits(&mut tape, tokens, Mode::Infer)?;
        softmax(tape.value(z).as_slice())
    }
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`,
/// otherwise `1 / (1 − rate)`.
pub fn dropout_mask(n: usize, rate: f64, seed: u64) -> Result<Matrix> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::domain(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    let mut rng = seeded_rng(seed);
    let keep = 1.0 / (1.0 - rate);
    Ok(Matrix::column_vector(
        (0..n)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect(),
    ))
}

/// Value-level dropout; identity in inference mode.
pub fn dropout_apply(x: &[f64], rate: f64, mode: Mode) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::domain(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    match mode {
        Mode::Infer => Ok(x.to_vec()),
        Mode::Train { dropout_seed } => {
            let mask = dropout_mask(x.len(), rate, dropout_seed)?;
            Ok(x.iter().zip(mask.as_slice()).map(|(a, m)| a * m).collect())
        }
    }
}

/// Splits a document on the delimiter tokens, dropping the delimiters and
/// any empty segments.
pub fn split_subsentences(tokens: &[String]) -> Result<Vec<Vec<String>>> {
    if tokens.is_empty() {
        return Err(Error::domain("cannot split an empty document"));
    }
    let segments: Vec<Vec<String>> = tokens
        .split(|t| DELIMITERS.contains(&t.as_str()))
        .filter(|s| !s.is_empty())
        .map(<[String]>::to_vec)
        .collect();
    if segments.is_empty() {
        return Err(Error::domain("document contains only delimiters"));
    }
    Ok(segments)
}

/// Mean over time of an `h × s` hidden-state matrix.
pub fn average_pool(hidden: &Matrix) -> Result<Vec<f64>> {
    if hidden.cols() == 0 {
        return Err(Error::domain("average pool over zero steps"));
    }
    Ok((0..hidden.rows())
        .map(|r| hidden.row(r).iter().sum::<f64>() / hidden.cols() as f64)
        .collect())
}

/// Embeds `tokens` for one channel on the tape, through a trainable table
/// when `table` is bound.
pub(crate) fn embed_channel<'p>(
    tape: &mut Tape<'p>,
    channels: &'p ChannelSet,
    channel: usize,
    table: Option<Var>,
    tokens: &[String],
) -> Result<Var> {
    if tokens.is_empty() {
        return Err(Error::domain("empty token list"));
    }
    match table {
        Some(t) => {
            let (ids, fallback) = channels.resolve(channel, tokens);
            tape.gather(t, &ids, &fallback)
        }
        None => Ok(tape.constant(channels.lookup_channel(channel, tokens)?)),
    }
}

/// Either model kind, for code that handles both.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Sentence(SentenceModel),
    Document(DocumentModel),
}

impl Model {
    pub fn new(channels: ChannelSet, cfg: &ModelConfig, seed: u64) -> Result<Self> {
        Ok(match cfg.kind {
            ModelKind::Sentence => Model::Sentence(SentenceModel::new(channels, cfg, seed)?),
            ModelKind::Document => Model::Document(DocumentModel::new(channels, cfg, seed)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Sentence(_) => ModelKind::Sentence,
            Model::Document(_) => ModelKind::Document,
        }
    }

    pub fn channels(&self) -> &ChannelSet {
        match self {
            Model::Sentence(m) => &m.channels,
            Model::Document(m) => &m.channels,
        }
    }

    /// The word-level LSTM of `channel` (subsentence level for documents).
    pub fn word_lstm_mut(&mut self, channel: usize) -> Option<&mut crate::recurrent::LstmParams> {
        match self {
            Model::Sentence(m) => m.lstm.get_mut(channel),
            Model::Document(m) => m.sub_lstm.get_mut(channel),
        }
    }

    pub fn word_lstm(&self, channel: usize) -> Option<&crate::recurrent::LstmParams> {
        match self {
            Model::Sentence(m) => m.lstm.get(channel),
            Model::Document(m) => m.sub_lstm.get(channel),
        }
    }
}

impl Parameterized for Model {
    fn named_params(&self) -> Vec<(String, &Matrix)> {
        match self {
            Model::Sentence(m) => m.named_params(),
            Model::Document(m) => m.named_params(),
        }
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        match self {
            Model::Sentence(m) => m.named_params_mut(),
            Model::Document(m) => m.named_params_mut(),
        }
    }
}

impl TextClassifier for Model {
    fn classes(&self) -> usize {
        match self {
            Model::Sentence(m) => m.classes(),
            Model::Document(m) => m.classes(),
        }
    }

    fn logits<'p>(&'p self, tape: &mut Tape<'p>, tokens: &[String], mode: Mode) -> Result<Var> {
        match self {
            Model::Sentence(m) => m.logits(tape, tokens, mode),
            Model::Document(m) => m.logits(tape, tokens, mode),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn split_examples() {
        assert_eq!(
            split_subsentences(&toks(&["a", "b", ",", "c", "."])).unwrap(),
            vec![toks(&["a", "b"]), toks(&["c"])]
        );
        assert_eq!(split_subsentences(&toks(&["a", "b"])).unwrap(), vec![toks(&["a", "b"])]);
        assert_eq!(
            split_subsentences(&toks(&["a", ",", ",", "b"])).unwrap(),
            vec![toks(&["a"]), toks(&["b"])]
        );
        assert!(matches!(split_subsentences(&toks(&[",", "!", "?"])), Err(Error::Domain(_))));
        assert!(split_subsentences(&[]).is_err());
    }

    #[test]
    fn average_pool_examples() {
        let one = Matrix::column_vector(vec![0.3, -2.0]);
        assert_eq!(average_pool(&one).unwrap(), vec![0.3, -2.0]);
        let m = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(average_pool(&m).unwrap(), vec![0.5, 0.5]);
        let a = Matrix::from_rows(&[[1.0, 2.0, 4.0], [3.0, -1.0, 0.0]]).unwrap();
        let b = Matrix::from_rows(&[[4.0, 1.0, 2.0], [0.0, 3.0, -1.0]]).unwrap();
        assert_eq!(average_pool(&a).unwrap(), average_pool(&b).unwrap());
    }

    #[test]
    fn dropout_degenerate_cases() {
        let x = [1.0, -2.0, 3.5];
        assert_eq!(dropout_apply(&x, 0.0, Mode::Train { dropout_seed: 1 }).unwrap(), x.to_vec());
        assert_eq!(dropout_apply(&x, 0.0, Mode::Infer).unwrap(), x.to_vec());
        assert_eq!(dropout_apply(&x, 0.5, Mode::Infer).unwrap(), x.to_vec());
        assert!(dropout_apply(&x, 1.0, Mode::Infer).is_err());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let x = vec![1.0; 100_000];
        let y = dropout_apply(&x, 0.5, Mode::Train { dropout_seed: 5 }).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
        assert!(y.iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
