use crate::embeddings::ChannelSet;
use crate::error::{Error, Result};
use crate::numerics::{sub_seed, Matrix, Parameterized, Tape, Var};
use crate::recurrent::{lstm_run_on_tape, LstmParams};

use super::{embed_channel, split_subsentences, Head, Mode, ModelConfig, ModelKind, TextClassifier};

/// Two-level model: a subsentence LSTM (shared by all subsentences of a
/// channel) whose averaged hidden states feed a high-level LSTM, then the
/// convolutional head.
#[derive(Clone, Debug, PartialEq)]
pub struct DocumentModel {
    pub channels: ChannelSet,
    pub sub_lstm: Vec<LstmParams>,
    pub high_lstm: Vec<LstmParams>,
    pub(crate) head: Head,
    pub trainable_embeddings: bool,
}

impl DocumentModel {
    pub fn new(channels: ChannelSet, cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if cfg.kind != ModelKind::Document {
            return Err(Error::Config("document model built from a sentence config".into()));
        }
        let (c, d, h) = (channels.count(), channels.dim(), cfg.hidden_dim);
        let sub_lstm = (0..c)
            .map(|i| LstmParams::init(d, h, cfg.forget_bias, sub_seed(seed, &format!("ch{i}.sub"))))
            .collect::<Result<_>>()?;
        let high_lstm = (0..c)
            .map(|i| LstmParams::init(h, h, cfg.forget_bias, sub_seed(seed, &format!("ch{i}.high"))))
            .collect::<Result<_>>()?;
        Ok(DocumentModel {
            head: Head::new(c, h, cfg, seed)?,
            channels,
            sub_lstm,
            high_lstm,
            trainable_embeddings: cfg.trainable_embeddings,
        })
    }

    pub fn classifier_mut(&mut self) -> &mut super::Classifier {
        &mut self.head.classifier
    }

    /// Class probabilities for one document (inference mode).
    pub fn forward(&self, tokens: &[String]) -> Result<Vec<f64>> {
        self.predict(tokens)
    }

    /// Per channel, the `h × n` sequence of averaged subsentence states that
    /// the high-level LSTM reads.
    pub fn subsentence_representations(&self, tokens: &[String]) -> Result<Vec<Matrix>> {
        let mut tape = Tape::inference();
        let encoded = self.bind_and_encode(&mut tape, tokens)?;
        Ok(encoded.sequences.iter().map(|&v| tape.value(v).clone()).collect())
    }

    /// Per channel, the high-level hidden states (`h × n`) fed to the filters.
    pub fn high_level_states(&self, tokens: &[String]) -> Result<Vec<Matrix>> {
        let mut tape = Tape::inference();
        let encoded = self.bind_and_encode(&mut tape, tokens)?;
        Ok(encoded.maps.iter().map(|&v| tape.value(v).clone()).collect())
    }

    fn bind_and_encode<'p>(&'p self, tape: &mut Tape<'p>, tokens: &[String]) -> Result<Encoded> {
        let segments = split_subsentences(tokens)?;
        let mut bound = Vec::with_capacity(self.channels.count());
        for c in 0..self.channels.count() {
            let table = self
                .trainable_embeddings
                .then(|| tape.param(&self.channels.tables()[c].vectors));
            let sub = self.sub_lstm[c].bind(tape);
            let high = self.high_lstm[c].bind(tape);
            bound.push((table, sub, high));
        }
        let head = self.head.bind(tape);
        let mut sequences = Vec::with_capacity(bound.len());
        let mut maps = Vec::with_capacity(bound.len());
        for (c, (table, sub, high)) in bound.into_iter().enumerate() {
            let mut pooled = Vec::with_capacity(segments.len());
            for seg in &segments {
                let x = embed_channel(tape, &self.channels, c, table, seg)?;
                let run = lstm_run_on_tape(tape, &sub, x, None)?;
                pooled.push(tape.mean_cols(run.hidden)?);
            }
            let seq = if pooled.len() == 1 { pooled[0] } else { tape.concat_cols(&pooled)? };
            sequences.push(seq);
            maps.push(lstm_run_on_tape(tape, &high, seq, None)?.hidden);
        }
        Ok(Encoded { head, sequences, maps })
    }
}

struct Encoded {
    head: super::HeadVars,
    sequences: Vec<Var>,
    maps: Vec<Var>,
}

impl Parameterized for DocumentModel {
    fn named_params(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for c in 0..self.channels.count() {
            if self.trainable_embeddings {
                out.push((format!("ch{c}.emb"), &self.channels.tables()[c].vectors));
            }
            out.extend(self.sub_lstm[c].named_params().into_iter().map(|(n, m)| (format!("ch{c}.sub.{n}"), m)));
            out.extend(self.high_lstm[c].named_params().into_iter().map(|(n, m)| (format!("ch{c}.high.{n}"), m)));
        }
        out.extend(self.head.named_params());
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::new();
        let trainable = self.trainable_embeddings;
        let parts = self
            .channels
            .tables_mut()
            .iter_mut()
            .zip(self.sub_lstm.iter_mut())
            .zip(self.high_lstm.iter_mut());
        for (c, ((table, sub), high)) in parts.enumerate() {
            if trainable {
                out.push((format!("ch{c}.emb"), &mut table.vectors));
            }
            out.extend(sub.named_params_mut().into_iter().map(|(n, m)| (format!("ch{c}.sub.{n}"), m)));
            out.extend(high.named_params_mut().into_iter().map(|(n, m)| (format!("ch{c}.high.{n}"), m)));
        }
        out.extend(self.head.named_params_mut());
        out
    }

}

impl TextClassifier for DocumentModel {
    fn classes(&self) -> usize {
        self.head.classifier.classes()
    }

    fn logits<'p>(&'p self, tape: &mut Tape<'p>, tokens: &[String], mode: Mode) -> Result<Var> {
        let encoded = self.bind_and_encode(tape, tokens)?;
        self.head.logits(tape, &encoded.head, &encoded.maps, mode)
    }
}
