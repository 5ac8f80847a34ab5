//! Sequence-autoencoder pretraining and encoder transfer.

use dscnn::data::Example;
use dscnn::embeddings::{ChannelSet, EmbeddingTable};
use dscnn::model::{Model, ModelConfig};
use dscnn::numerics::Parameterized;
use dscnn::pretrain::{
    pretrain_run, reconstruction_accuracy, reconstruction_loss, transfer_encoder, Autoencoder,
};
use dscnn::recurrent::{lstm_run, LstmParams};
use dscnn::training::{read_metrics, TrainConfig};
use dscnn::Error;

fn corpus(lines: &[&str]) -> Vec<Example> {
    lines
        .iter()
        .enumerate()
        .map(|(id, l)| Example {
            id,
            tokens: l.split_whitespace().map(str::to_string).collect(),
            label: 0,
        })
        .collect()
}

const TEN: [&str; 10] = [
    "the cat sat",
    "a dog ran home",
    "birds sing at dawn",
    "rain falls",
    "we read old books",
    "the sun is warm today",
    "fish swim",
    "kids play outside now",
    "tea is hot",
    "stars shine at night",
];

fn random_channels(d: usize, count: usize) -> ChannelSet {
    ChannelSet::new((0..count).map(|_| EmbeddingTable::random(d).unwrap()).collect(), 11).unwrap()
}

#[test]
fn ten_sentences_are_memorized() {
    let data = corpus(&TEN);
    let ch = random_channels(12, 1);
    let mut ae = Autoencoder::new(0, 12, 24, Autoencoder::vocab_of(&data), 0.0, 2).unwrap();
    let cfg = TrainConfig { seed: 3, patience: 400, max_epochs: 400, ..Default::default() };
    let report = pretrain_run(&mut ae, &ch, &data, &data, &cfg, None).unwrap();
    assert!(report.best_valid_loss < report.initial_valid_loss);
    assert_eq!(reconstruction_accuracy(&ae, &ch, &data).unwrap(), 1.0);
}

#[test]
fn best_checkpoint_deterministic_and_logged() {
    let data = corpus(&TEN);
    let ch = random_channels(6, 1);
    let dir = tempfile::tempdir().unwrap();
    let metrics = dir.path().join("pre.csv");
    let cfg = TrainConfig { seed: 4, patience: 3, max_epochs: 15, ..Default::default() };
    let run = |path: Option<&std::path::Path>| {
        let mut ae = Autoencoder::new(0, 6, 6, Autoencoder::vocab_of(&data[..8]), 0.0, 5).unwrap();
        let report = pretrain_run(&mut ae, &ch, &data[..8], &data[8..], &cfg, path).unwrap();
        (ae, report)
    };
    let (a, report) = run(Some(&metrics));
    let (b, _) = run(None);
    assert_eq!(a.encoder, b.encoder);
    assert_eq!(report.best_valid_loss, reconstruction_loss(&a, &ch, &data[8..]).unwrap());
    let rows = read_metrics(&metrics).unwrap();
    assert_eq!(rows.len(), report.state.epoch);
    assert_eq!(rows.iter().map(|r| r.valid_metric).fold(f64::INFINITY, f64::min), report.best_valid_loss);
}

fn target(kind_document: bool, hidden: usize) -> Model {
    let mut cfg = if kind_document {
        ModelConfig::document(hidden, 2)
    } else {
        ModelConfig::sentence(hidden, 2)
    };
    cfg.filters = "2:3".parse().unwrap();
    Model::new(random_channels(5, 2), &cfg, 7).unwrap()
}

#[test]
fn transfer_copies_exactly_one_lstm() {
    for document in [false, true] {
        let mut encoder = LstmParams::init(5, 4, 0.0, 21).unwrap();
        for b in &mut encoder.b {
            b.as_mut_slice().iter_mut().for_each(|v| *v = 0.3);
        }
        let mut model = target(document, 4);
        let before: Vec<(String, Vec<u64>)> = model
            .named_params()
            .into_iter()
            .map(|(n, m)| (n, m.as_slice().iter().map(|v| v.to_bits()).collect()))
            .collect();
        transfer_encoder(&encoder, &mut model, 1).unwrap();
        let prefix = if document { "ch1.sub." } else { "ch1.lstm." };
        for ((name, old), (_, new)) in before.iter().zip(model.named_params()) {
            let same = old.iter().zip(new.as_slice()).all(|(a, b)| *a == b.to_bits());
            assert_eq!(same, !name.starts_with(prefix), "{name}");
        }
        let x = model.channels().lookup_channel(1, &["a".into(), "b".into(), "c".into()]).unwrap();
        let diff = lstm_run(model.word_lstm(1).unwrap(), &x)
            .unwrap()
            .max_abs_diff(&lstm_run(&encoder, &x).unwrap())
            .unwrap();
        assert!(diff <= 1e-12);
    }
}

#[test]
fn transfer_rejects_mismatched_dimensions() {
    let mut model = target(false, 4);
    let wrong = LstmParams::init(5, 6, 0.0, 1).unwrap();
    assert!(matches!(transfer_encoder(&wrong, &mut model, 0), Err(Error::Dimension { .. })));
    assert!(transfer_encoder(&LstmParams::init(5, 4, 0.0, 1).unwrap(), &mut model, 2).is_err());
}
