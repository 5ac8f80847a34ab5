use crate::embeddings::ChannelSet;
use crate::error::{Error, Result};
use crate::numerics::{sub_seed, Matrix, Parameterized, Tape, Var};
use crate::recurrent::{lstm_run_on_tape, LstmParams};

use super::{embed_channel, Head, Mode, ModelConfig, ModelKind, TextClassifier};

/// Per-channel LSTM over word embeddings, followed by the convolutional
/// head. With `lstm` empty (the ablation) the filters read embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceModel {
    pub channels: ChannelSet,
    pub lstm: Vec<LstmParams>,
    pub(crate) head: Head,
    pub trainable_embeddings: bool,
}

impl SentenceModel {
    pub fn new(channels: ChannelSet, cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if cfg.kind != ModelKind::Sentence {
            return Err(Error::Config("sentence model built from a document config".into()));
        }
        let c = channels.count();
        let d = channels.dim();
        let lstm = if cfg.ablate_lstm {
            Vec::new()
        } else {
            (0..c)
                .map(|i| LstmParams::init(d, cfg.hidden_dim, cfg.forget_bias, sub_seed(seed, &format!("ch{i}.lstm"))))
                .collect::<Result<_>>()?
        };
        let conv_dim = if cfg.ablate_lstm { d } else { cfg.hidden_dim };
        Ok(SentenceModel {
            head: Head::new(c, conv_dim, cfg, seed)?,
            channels,
            lstm,
            trainable_embeddings: cfg.trainable_embeddings,
        })
    }

    pub fn bank(&self) -> &crate::convolution::FilterBank {
        &self.head.bank
    }

    pub fn classifier(&self) -> &super::Classifier {
        &self.head.classifier
    }

    pub fn classifier_mut(&mut self) -> &mut super::Classifier {
        &mut self.head.classifier
    }

    pub fn dropout(&self) -> f64 {
        self.head.dropout
    }

    /// Class probabilities for one sentence (inference mode).
    pub fn forward(&self, tokens: &[String]) -> Result<Vec<f64>> {
        self.predict(tokens)
    }

    /// Per-channel hidden-state maps (`h × s`) that feed the convolution.
    pub fn hidden_states(&self, tokens: &[String]) -> Result<Vec<Matrix>> {
        let mut tape = Tape::inference();
        let maps = self.bind_and_encode(&mut tape, tokens)?.1;
        Ok(maps.iter().map(|&v| tape.value(v).clone()).collect())
    }

    fn bind_and_encode<'p>(&'p self, tape: &mut Tape<'p>, tokens: &[String]) -> Result<(super::HeadVars, Vec<Var>)> {
        if tokens.is_empty() {
            return Err(Error::domain("empty sentence"));
        }
        let mut maps = Vec::with_capacity(self.channels.count());
        let mut pending = Vec::with_capacity(self.channels.count());
        for c in 0..self.channels.count() {
            let table = self
                .trainable_embeddings
                .then(|| tape.param(&self.channels.tables()[c].vectors));
            let lstm = self.lstm.get(c).map(|p| p.bind(tape));
            pending.push((table, lstm));
        }
        let head = self.head.bind(tape);
        for (c, (table, lstm)) in pending.into_iter().enumerate() {
            let x = embed_channel(tape, &self.channels, c, table, tokens)?;
            maps.push(match lstm {
                Some(vars) => lstm_run_on_tape(tape, &vars, x, None)?.hidden,
                None => x,
            });
        }
        Ok((head, maps))
    }
}

impl Parameterized for SentenceModel {
    fn named_params(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for c in 0..self.channels.count() {
            if self.trainable_embeddings {
                out.push((format!("ch{c}.emb"), &self.channels.tables()[c].vectors));
            }
            if let Some(p) = self.lstm.get(c) {
                out.extend(p.named_params().into_iter().map(|(n, m)| (format!("ch{c}.lstm.{n}"), m)));
            }
        }
        out.extend(self.head.named_params());
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::new();
        let trainable = self.trainable_embeddings;
        let mut lstms = self.lstm.iter_mut();
        for (c, table) in self.channels.tables_mut().iter_mut().enumerate() {
            if trainable {
                out.push((format!("ch{c}.emb"), &mut table.vectors));
            }
            if let Some(p) = lstms.next() {
                out.extend(p.named_params_mut().into_iter().map(|(n, m)| (format!("ch{c}.lstm.{n}"), m)));
            }
        }
        out.extend(self.head.named_params_mut());
        out
    }

}

impl TextClassifier for SentenceModel {
    fn classes(&self) -> usize {
        self.head.classifier.classes()
    }

    fn logits<'p>(&'p self, tape: &mut Tape<'p>, tokens: &[String], mode: Mode) -> Result<Var> {
        let (head, maps) = self.bind_and_encode(tape, tokens)?;
        self.head.logits(tape, &head, &maps, mode)
    }
}
