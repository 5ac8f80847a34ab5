//! Sequence-autoencoder pretraining of a channel's word-level LSTM.

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use crate::data::Example;
use crate::embeddings::ChannelSet;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::{argmax, init_uniform, sub_seed, Matrix, Parameterized, Tape, Var};
use crate::recurrent::{lstm_run_on_tape, lstm_step, LstmParams, LstmState};
use crate::training::{
    adadelta_step, clip_global_norm, early_stop_check, epoch_batches, restore, snapshot, AdadeltaState, EpochMetrics,
    MetricsWriter, StopDecision, TrainConfig, TrainState, Checkpoint, TAG_PRETRAIN,
};

/// Output-vocabulary entry for tokens unseen when the vocabulary was built.
pub const UNK: &str = "<unk>";

/// Half-width of the uniform output-projection and start-symbol initializer.
pub const PROJECTION_INIT_HALF_WIDTH: f64 = 0.01;

/// Encoder and decoder LSTMs over one embedding channel, with a projection
/// onto the output vocabulary and a learned start-symbol embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder {
    pub channel: usize,
    pub vocab: Vec<String>,
    index: HashMap<String, usize>,
    pub encoder: LstmParams,
    pub decoder: LstmParams,
    pub output_weight: Matrix,
    pub output_bias: Matrix,
    pub start: Matrix,
}

impl Autoencoder {
    /// `vocab` lists the output tokens; an `<unk>` entry is prepended.
    pub fn new(channel: usize, input_dim: usize, hidden: usize, vocab: Vec<String>, forget_bias: f64, seed: u64) -> Result<Self> {
        let mut words = vec![UNK.to_string()];
        words.extend(vocab.into_iter().filter(|w| w != UNK));
        words.dedup();
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Ok(Autoencoder {
            channel,
            encoder: LstmParams::init(input_dim, hidden, forget_bias, sub_seed(seed, "encoder"))?,
            decoder: LstmParams::init(input_dim, hidden, forget_bias, sub_seed(seed, "decoder"))?,
            output_weight: init_uniform(words.len(), hidden, PROJECTION_INIT_HALF_WIDTH, sub_seed(seed, "projection"))?,
            output_bias: Matrix::zeros(words.len(), 1),
            start: init_uniform(input_dim, 1, PROJECTION_INIT_HALF_WIDTH, sub_seed(seed, "start"))?,
            vocab: words,
            index,
        })
    }

    /// Sorted distinct tokens of a corpus.
    pub fn vocab_of(sentences: &[Example]) -> Vec<String> {
        let mut v: Vec<String> = sentences.iter().flat_map(|e| e.tokens.iter().cloned()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn token_id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    /// Mean per-token reconstruction cross-entropy with teacher forcing.
    pub fn loss<'p>(&'p self, tape: &mut Tape<'p>, channels: &ChannelSet, tokens: &[String]) -> Result<Var> {
        if tokens.is_empty() {
            return Err(Error::domain("cannot reconstruct an empty sequence"));
        }
        let params = self.bind(tape);
        let x = tape.constant(channels.lookup_channel(self.channel, tokens)?);
        let enc = lstm_run_on_tape(tape, &params.encoder, x, None)?;
        let dec_in = if tokens.len() > 1 {
            let prev = tape.slice_cols(x, 0, tokens.len() - 1)?;
            tape.concat_cols(&[params.start, prev])?
        } else {
            params.start
        };
        let dec = lstm_run_on_tape(tape, &params.decoder, dec_in, Some((enc.last_h, enc.last_c)))?;
        let z = tape.matmul(params.weight, dec.hidden)?;
        let logits = tape.add_bias(z, params.bias)?;
        let targets: Vec<usize> = tokens.iter().map(|t| self.token_id(t)).collect();
        tape.softmax_cross_entropy(logits, &targets)
    }

    /// Greedy decode of as many tokens as the input has, feeding back each
    /// predicted token's embedding.
    pub fn reconstruct(&self, channels: &ChannelSet, tokens: &[String]) -> Result<Vec<String>> {
        let x = channels.lookup_channel(self.channel, tokens)?;
        let mut state = LstmState::zeros(self.encoder.hidden_dim());
        for t in 0..x.cols() {
            state = lstm_step(&self.encoder, &x.col(t), &state)?;
        }
        let mut input = self.start.as_slice().to_vec();
        let mut out = Vec::with_capacity(tokens.len());
        for _ in 0..tokens.len() {
            state = lstm_step(&self.decoder, &input, &state)?;
            let h = Matrix::column_vector(state.h.clone());
            let logits = self.output_weight.matmul(&h)?.add(&self.output_bias)?;
            let word = self.vocab[argmax(logits.as_slice())].clone();
            input = channels.lookup_channel(self.channel, std::slice::from_ref(&word))?.into_vec();
            out.push(word);
        }
        Ok(out)
    }

    fn bind<'p>(&'p self, tape: &mut Tape<'p>) -> AeVars {
        AeVars {
            encoder: self.encoder.bind(tape),
            decoder: self.decoder.bind(tape),
            weight: tape.param(&self.output_weight),
            bias: tape.param(&self.output_bias),
            start: tape.param(&self.start),
        }
    }
}

struct AeVars {
    encoder: crate::recurrent::LstmVars,
    decoder: crate::recurrent::LstmVars,
    weight: Var,
    bias: Var,
    start: Var,
}

impl Parameterized for Autoencoder {
    fn named_params(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> = Vec::new();
        out.extend(self.encoder.named_params().into_iter().map(|(n, m)| (format!("enc.{n}"), m)));
        out.extend(self.decoder.named_params().into_iter().map(|(n, m)| (format!("dec.{n}"), m)));
        out.push(("out.w".into(), &self.output_weight));
        out.push(("out.b".into(), &self.output_bias));
        out.push(("start".into(), &self.start));
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out: Vec<(String, &mut Matrix)> = Vec::new();
        out.extend(self.encoder.named_params_mut().into_iter().map(|(n, m)| (format!("enc.{n}"), m)));
        out.extend(self.decoder.named_params_mut().into_iter().map(|(n, m)| (format!("dec.{n}"), m)));
        out.push(("out.w".into(), &mut self.output_weight));
        out.push(("out.b".into(), &mut self.output_bias));
        out.push(("start".into(), &mut self.start));
        out
    }
}

/// Mean reconstruction loss over a set of sentences.
pub fn reconstruction_loss(ae: &Autoencoder, channels: &ChannelSet, sentences: &[Example]) -> Result<f64> {
    if sentences.is_empty() {
        return Err(Error::domain("no sentences to score"));
    }
    let mut total = 0.0;
    for s in sentences {
        let mut tape = Tape::inference();
        let l = ae.loss(&mut tape, channels, &s.tokens)?;
        total += tape.value(l).get(0, 0);
    }
    Ok(total / sentences.len() as f64)
}

/// Fraction of sentences reproduced exactly by greedy decoding.
pub fn reconstruction_accuracy(ae: &Autoencoder, channels: &ChannelSet, sentences: &[Example]) -> Result<f64> {
    if sentences.is_empty() {
        return Err(Error::domain("no sentences to score"));
    }
    let mut hits = 0;
    for s in sentences {
        let expect: Vec<String> = s.tokens.iter().map(|t| ae.vocab[ae.token_id(t)].clone()).collect();
        if ae.reconstruct(channels, &s.tokens)? == expect {
            hits += 1;
        }
    }
    Ok(hits as f64 / sentences.len() as f64)
}

/// One shuffled pass of per-example (or minibatch) Adadelta updates.
pub fn pretrain_epoch(
    ae: &mut Autoencoder,
    channels: &ChannelSet,
    train: &[Example],
    opt: &mut AdadeltaState,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::domain("pretraining corpus is empty"));
    }
    let mut total = 0.0;
    for batch in epoch_batches(train, cfg.batch_size, cfg.seed, epoch) {
        let mut acc: Option<Vec<Matrix>> = None;
        for &i in &batch {
            let mut tape = Tape::recording();
            let loss = ae.loss(&mut tape, channels, &train[i].tokens)?;
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
        let mut params: Vec<&mut Matrix> = ae.named_params_mut().into_iter().map(|(_, m)| m).collect();
        adadelta_step(&mut params, &grads, opt)?;
    }
    Ok(total / train.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainReport {
    pub initial_valid_loss: f64,
    pub best_valid_loss: f64,
    pub state: TrainState,
}

/// Trains until validation reconstruction loss stops improving, then
/// restores the best parameters. Metrics rows carry the validation loss in
/// the third column.
pub fn pretrain_run(
    ae: &mut Autoencoder,
    channels: &ChannelSet,
    train: &[Example],
    valid: &[Example],
    cfg: &TrainConfig,
    metrics: Option<&Path>,
) -> Result<PretrainReport> {
    if valid.is_empty() {
        return Err(Error::domain("validation set is empty; early stopping needs one"));
    }
    let mut writer = metrics.map(MetricsWriter::create).transpose()?;
    let mut opt = AdadeltaState::for_params(ae, cfg.rho, cfg.epsilon)?;
    let mut st = TrainState::new(cfg.seed);
    let initial_valid_loss = reconstruction_loss(ae, channels, valid)?;
    let mut best = snapshot(ae);
    let start = Instant::now();
    for epoch in 0..cfg.max_epochs {
        let train_loss = pretrain_epoch(ae, channels, train, &mut opt, cfg, epoch)?;
        let valid_loss = reconstruction_loss(ae, channels, valid)?;
        let decision = early_stop_check(&mut st, -valid_loss, cfg.patience)?;
        if st.improved() {
            best = snapshot(ae);
        }
        let row = EpochMetrics {
            epoch: st.epoch,
            train_loss,
            valid_metric: valid_loss,
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
    restore(ae, &best);
    Ok(PretrainReport {
        initial_valid_loss,
        best_valid_loss: -st.best_valid_acc,
        state: st,
    })
}

/// Copies `encoder` into the word-level LSTM of `channel` (the subsentence
/// LSTM for documents). Nothing else in `target` changes.
pub fn transfer_encoder(encoder: &LstmParams, target: &mut Model, channel: usize) -> Result<()> {
    let lstm = target
        .word_lstm_mut(channel)
        .ok_or_else(|| Error::Contract(format!("model has no word-level LSTM for channel {channel}")))?;
    if !lstm.same_shape(encoder) {
        return Err(Error::Dimension {
            op: "transfer encoder",
            left: (encoder.hidden_dim(), encoder.input_dim()),
            right: (lstm.hidden_dim(), lstm.input_dim()),
        });
    }
    *lstm = encoder.clone();
    Ok(())
}

/// Pretrain checkpoint holding each channel's encoder as `ch{c}.{param}`.
pub fn encoder_checkpoint(encoders: &[(usize, &LstmParams)], config: Vec<(String, String)>) -> Checkpoint {
    let tensors = encoders
        .iter()
        .flat_map(|(c, p)| p.named_params().into_iter().map(move |(n, m)| (format!("ch{c}.{n}"), m.clone())))
        .collect();
    Checkpoint {
        tag: TAG_PRETRAIN.to_string(),
        config,
        tensors,
    }
}

/// Encoders stored by [`encoder_checkpoint`], by channel.
pub fn encoders_from_checkpoint(ckpt: &Checkpoint) -> Result<Vec<(usize, LstmParams)>> {
    if ckpt.tag != TAG_PRETRAIN {
        return Err(Error::Contract(format!("expected a {TAG_PRETRAIN:?} checkpoint, found {:?}", ckpt.tag)));
    }
    let mut channels: Vec<usize> = Vec::new();
    for (name, _) in &ckpt.tensors {
        let c = name
            .strip_prefix("ch")
            .and_then(|r| r.split_once('.'))
            .and_then(|(c, _)| c.parse::<usize>().ok())
            .ok_or_else(|| Error::Contract(format!("unexpected tensor {name:?} in encoder checkpoint")))?;
        if !channels.contains(&c) {
            channels.push(c);
        }
    }
    channels
        .into_iter()
        .map(|c| {
            let get = |n: &str| {
                ckpt.tensor(&format!("ch{c}.{n}"))
                    .ok_or_else(|| Error::Contract(format!("encoder checkpoint lacks ch{c}.{n}")))
            };
            let w = get("w_i")?;
            let mut p = LstmParams::zeros(w.cols(), w.rows());
            for (n, dst) in p.named_params_mut() {
                let src = get(&n)?;
                dst.check_same_shape(src, "encoder checkpoint")?;
                dst.as_mut_slice().copy_from_slice(src.as_slice());
            }
            Ok((c, p))
        })
        .collect()
}
