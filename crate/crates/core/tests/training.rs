//! Training loop, evaluation and checkpoint behaviour on small corpora.

use dscnn::data::Example;
use dscnn::embeddings::{ChannelSet, EmbeddingTable};
use dscnn::model::{ModelConfig, SentenceModel, TextClassifier};
use dscnn::numerics::{Matrix, Parameterized};
use dscnn::training::{
    evaluate, fit, read_metrics, train_epoch, AdadeltaState, Checkpoint, TrainConfig, TAG_MODEL,
};
use dscnn::Error;

fn ex(id: usize, text: &str, label: usize) -> Example {
    Example {
        id,
        tokens: text.split_whitespace().map(str::to_string).collect(),
        label,
    }
}

/// Twenty sentences whose label is carried by one sentiment word.
fn toy_corpus() -> Vec<Example> {
    let fillers = ["the film was", "a plot that felt", "acting is", "this story seems", "overall it is"];
    let (pos, neg) = (["good", "great"], ["bad", "awful"]);
    (0..20)
        .map(|i| {
            let label = i % 2;
            let word = if label == 1 { pos[i / 2 % 2] } else { neg[i / 2 % 2] };
            ex(i, &format!("{} {word} {}", fillers[i % 5], ["indeed", "really"][i / 10]), label)
        })
        .collect()
}

fn model(seed: u64) -> SentenceModel {
    let ch = ChannelSet::new(vec![EmbeddingTable::random(20).unwrap()], 3).unwrap();
    let mut cfg = ModelConfig::sentence(20, 2);
    cfg.filters = "2:10,3:10".parse().unwrap();
    SentenceModel::new(ch, &cfg, seed).unwrap()
}

fn constant_model(class: usize) -> SentenceModel {
    let mut m = model(1);
    let c = m.classifier_mut();
    c.weight = Matrix::zeros(2, 20);
    c.bias = Matrix::zeros(2, 1);
    c.bias.set(class, 0, 3.0);
    m
}

#[test]
fn same_seed_same_epoch_loss() {
    let data = toy_corpus();
    let cfg = TrainConfig { seed: 4, ..Default::default() };
    let run = || {
        let mut m = model(2);
        let mut opt = AdadeltaState::for_params(&m, cfg.rho, cfg.epsilon).unwrap();
        (0..3).map(|e| train_epoch(&mut m, &data, &mut opt, &cfg, e).unwrap()).collect::<Vec<f64>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn empty_training_set_is_domain_error() {
    let mut m = model(2);
    let cfg = TrainConfig::default();
    let mut opt = AdadeltaState::for_params(&m, cfg.rho, cfg.epsilon).unwrap();
    assert!(matches!(train_epoch(&mut m, &[], &mut opt, &cfg, 0), Err(Error::Domain(_))));
    assert!(matches!(evaluate(&m, &[]), Err(Error::Domain(_))));
}

#[test]
fn loss_descends_over_ten_epochs() {
    let data = toy_corpus();
    let mut m = model(3);
    let cfg = TrainConfig { seed: 5, ..Default::default() };
    let mut opt = AdadeltaState::for_params(&m, cfg.rho, cfg.epsilon).unwrap();
    let losses: Vec<f64> = (0..10).map(|e| train_epoch(&mut m, &data, &mut opt, &cfg, e).unwrap()).collect();
    assert!(losses[9] < losses[0], "{losses:?}");
}

#[test]
fn minibatches_also_descend() {
    let data = toy_corpus();
    let mut m = model(3);
    let cfg = TrainConfig { seed: 5, batch_size: 4, clip_norm: Some(5.0), ..Default::default() };
    let mut opt = AdadeltaState::for_params(&m, cfg.rho, cfg.epsilon).unwrap();
    let losses: Vec<f64> = (0..40).map(|e| train_epoch(&mut m, &data, &mut opt, &cfg, e).unwrap()).collect();
    assert!(losses[39] < losses[0], "{losses:?}");
}

#[test]
fn evaluate_counts() {
    let data = vec![ex(0, "a", 1), ex(1, "b", 1), ex(2, "c", 0)];
    assert_eq!(evaluate(&constant_model(1), &data[..2]).unwrap(), 1.0);
    // hand count: two of three gold labels are 1
    assert!((evaluate(&constant_model(1), &data).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert!((evaluate(&constant_model(0), &data).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    // zeroed classifier ties at [0.5, 0.5]; the lower class wins
    let mut tie = constant_model(0);
    tie.classifier_mut().bias = Matrix::zeros(2, 1);
    assert!((evaluate(&tie, &data).unwrap() - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn constant_model_scores_majority_fraction() {
    let data: Vec<Example> = (0..50).map(|i| ex(i, "x y", usize::from((i * 7) % 5 < 2))).collect();
    let ones = data.iter().filter(|e| e.label == 1).count() as f64 / 50.0;
    let best = evaluate(&constant_model(0), &data).unwrap().max(evaluate(&constant_model(1), &data).unwrap());
    assert_eq!(best, ones.max(1.0 - ones));
}

#[test]
fn fit_restores_best_checkpoint_and_logs_every_epoch() {
    let data = toy_corpus();
    let dir = tempfile::tempdir().unwrap();
    let metrics = dir.path().join("metrics.csv");
    let mut m = model(4);
    let cfg = TrainConfig { seed: 6, patience: 3, max_epochs: 12, ..Default::default() };
    let st = fit(&mut m, &data, &data[..10], &cfg, Some(&metrics)).unwrap();
    let rows = read_metrics(&metrics).unwrap();
    assert_eq!(rows.len(), st.epoch);
    assert_eq!(rows.iter().map(|r| r.epoch).collect::<Vec<_>>(), (1..=st.epoch).collect::<Vec<_>>());
    assert!(rows.iter().all(|r| r.wall_seconds == 0.0));
    assert_eq!(evaluate(&m, &data[..10]).unwrap(), st.best_valid_acc);
    let mut best = f64::NEG_INFINITY;
    for r in &rows {
        best = best.max(r.valid_metric);
    }
    assert_eq!(best, st.best_valid_acc);
    assert!(matches!(fit(&mut m, &data, &[], &cfg, None), Err(Error::Domain(_))));
}

#[test]
fn checkpoint_round_trip_preserves_outputs() {
    let data = toy_corpus();
    let mut m = model(5);
    let cfg = TrainConfig { seed: 7, max_epochs: 3, ..Default::default() };
    fit(&mut m, &data, &data, &cfg, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    Checkpoint::from_params(TAG_MODEL, vec![("k".into(), "v".into())], &m).save(&path).unwrap();
    let mut fresh = model(99);
    assert_ne!(fresh.named_params(), m.named_params());
    Checkpoint::load(&path).unwrap().apply_to(&mut fresh).unwrap();
    assert_eq!(evaluate(&fresh, &data).unwrap().to_bits(), evaluate(&m, &data).unwrap().to_bits());
    for e in &data {
        let (a, b) = (m.predict(&e.tokens).unwrap(), fresh.predict(&e.tokens).unwrap());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn checkpoint_rejects_a_different_architecture() {
    let m = model(5);
    let ck = Checkpoint::from_params(TAG_MODEL, vec![], &m);
    let ch = ChannelSet::new(vec![EmbeddingTable::random(20).unwrap()], 3).unwrap();
    let mut other = SentenceModel::new(ch, &ModelConfig::sentence(7, 2), 1).unwrap();
    assert!(ck.apply_to(&mut other).is_err());
}
