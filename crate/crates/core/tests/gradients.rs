//! Reverse-mode gradients against central finite differences, from single
//! tape operations up to the full sentence and document models.

use dscnn::convolution::FilterSpec;
use dscnn::embeddings::{ChannelSet, EmbeddingTable};
use dscnn::gradcheck::{check, GradcheckReport};
use dscnn::model::{DocumentModel, Mode, ModelConfig, SentenceModel, TextClassifier};
use dscnn::numerics::{seeded_rng, Activation, Matrix, Parameterized, Tape, Var};
use dscnn::recurrent::{lstm_run_on_tape, LstmParams};
use dscnn::Result;
use rand::Rng;

struct Leaves(Vec<Matrix>);

impl Parameterized for Leaves {
    fn named_params(&self) -> Vec<(String, &Matrix)> {
        self.0.iter().enumerate().map(|(i, m)| (format!("p{i}"), m)).collect()
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        self.0.iter_mut().enumerate().map(|(i, m)| (format!("p{i}"), m)).collect()
    }
}

fn random(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn assert_pass(report: &GradcheckReport) {
    assert!(report.passed(), "{report}");
}

/// Reduces any node to a scalar with fixed random weights so every entry of
/// the gradient differs.
fn weighted_sum<'p>(tape: &mut Tape<'p>, x: Var, seed: u64) -> Result<Var> {
    let (r, c) = tape.value(x).shape();
    let mut rng = seeded_rng(seed);
    let w = tape.constant(random(&mut rng, r, c));
    let prod = tape.mul(x, w)?;
    Ok(tape.sum(prod))
}

fn op_check<F>(leaves: Vec<Matrix>, f: F)
where
    F: for<'p> Fn(&mut Tape<'p>, &[Var]) -> Result<Var>,
{
    let mut model = Leaves(leaves);
    let report = check(
        &mut model,
        |m, tape| {
            let vars: Vec<Var> = m.0.iter().map(|p| tape.param(p)).collect();
            let out = f(tape, &vars)?;
            weighted_sum(tape, out, 99)
        },
        None,
    )
    .unwrap();
    assert_pass(&report);
}

#[test]
fn elementary_ops() {
    let mut rng = seeded_rng(1);
    let a = random(&mut rng, 3, 4);
    let b = random(&mut rng, 4, 2);
    let c = random(&mut rng, 3, 4);
    let bias = random(&mut rng, 3, 1);
    op_check(vec![a.clone(), b.clone()], |t, v| t.matmul(v[0], v[1]));
    op_check(vec![a.clone(), c.clone()], |t, v| t.add(v[0], v[1]));
    op_check(vec![a.clone(), c.clone()], |t, v| t.sub(v[0], v[1]));
    op_check(vec![a.clone(), c.clone()], |t, v| t.mul(v[0], v[1]));
    op_check(vec![a.clone()], |t, v| Ok(t.scale(v[0], -2.5)));
    op_check(vec![a.clone(), bias.clone()], |t, v| t.add_bias(v[0], v[1]));
    for act in [Activation::Sigmoid, Activation::Tanh, Activation::Relu, Activation::Identity] {
        op_check(vec![a.clone()], move |t, v| Ok(t.map(v[0], act)));
    }
    op_check(vec![a.clone()], |t, v| t.slice_cols(v[0], 1, 3));
    op_check(vec![a.clone(), c.clone()], |t, v| t.concat_cols(&[v[0], v[1], v[0]]));
    op_check(vec![a.clone(), b.clone()], |t, v| t.concat_rows(&[v[0], v[0]]).and_then(|x| t.slice_cols(x, 0, 2)).and_then(|x| t.concat_rows(&[x, v[1]])));
    op_check(vec![a.clone()], |t, v| t.mean_cols(v[0]));
    op_check(vec![a.clone()], |t, v| t.max_over_time(v[0]));
    op_check(vec![a.clone()], |t, v| t.softmax(v[0]));
    op_check(vec![a.clone()], |t, v| {
        let mask = Matrix::from_vec(3, 4, vec![0.0, 2.0, 2.0, 0.0, 2.0, 2.0, 0.0, 2.0, 2.0, 0.0, 0.0, 2.0]).unwrap();
        t.mask(v[0], mask)
    });
    op_check(vec![c.clone()], |t, v| t.softmax_cross_entropy(v[0], &[0, 2, 1, 2]));
    op_check(vec![random(&mut rng, 5, 3)], |t, v| {
        let fallback = Matrix::filled(3, 4, 0.1);
        t.gather(v[0], &[Some(4), None, Some(1), Some(4)], &fallback)
    });
}

#[test]
fn wide_convolution_op() {
    let mut rng = seeded_rng(2);
    for &(c, d, s, l) in &[(1, 3, 4, 2), (2, 3, 4, 3), (3, 2, 1, 4), (2, 4, 6, 1)] {
        let mut leaves: Vec<Matrix> = (0..c).map(|_| random(&mut rng, d, s)).collect();
        leaves.push(random(&mut rng, 4, c * l * d));
        leaves.push(random(&mut rng, 4, 1));
        op_check(leaves, move |t, v| t.wide_conv(&v[..c], v[c], v[c + 1], l));
    }
}

#[test]
fn lstm_through_time() {
    let mut rng = seeded_rng(3);
    let mut p = LstmParams::zeros(3, 4);
    for (_, m) in p.named_params_mut() {
        m.as_mut_slice().iter_mut().for_each(|v| *v = rng.random_range(-0.6..0.6));
    }
    let inputs = random(&mut rng, 3, 24);
    let mut model = Leaves(p.named_params().into_iter().map(|(_, m)| m.clone()).collect());
    let report = check(
        &mut model,
        |m, tape| {
            // leaves are in LstmParams::named_params order: w, u, b
            let w: [Var; 4] = std::array::from_fn(|k| tape.param(&m.0[k]));
            let u: [Var; 4] = std::array::from_fn(|k| tape.param(&m.0[4 + k]));
            let b: [Var; 4] = std::array::from_fn(|k| tape.param(&m.0[8 + k]));
            let vars = dscnn::recurrent::LstmVars { w, u, b };
            let x = tape.constant(inputs.clone());
            let run = lstm_run_on_tape(tape, &vars, x, None)?;
            Ok(tape.sum(run.hidden))
        },
        None,
    )
    .unwrap();
    assert_eq!(report.groups.len(), 12);
    assert_pass(&report);
}

fn toy_channels(d: usize, c: usize) -> ChannelSet {
    let mut rng = seeded_rng(4);
    let words = ["the", "cat", "sat", "on", "mat", "dog"];
    let tables = (0..c)
        .map(|_| {
            EmbeddingTable::from_pairs(
                d,
                words
                    .iter()
                    .map(|w| (w.to_string(), (0..d).map(|_| rng.random_range(-0.5..0.5)).collect())),
            )
            .unwrap()
        })
        .collect();
    ChannelSet::new(tables, 7).unwrap()
}

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn small_config(kind_doc: bool) -> ModelConfig {
    let mut cfg = if kind_doc {
        ModelConfig::document(8, 3)
    } else {
        ModelConfig::sentence(8, 3)
    };
    cfg.filters = "2:3,3:3".parse::<FilterSpec>().unwrap();
    cfg
}

#[test]
fn sentence_model_end_to_end() {
    let mut model = SentenceModel::new(toy_channels(8, 2), &small_config(false), 11).unwrap();
    let tokens = toks("the cat sat unknownword");
    let report = check(
        &mut model,
        |m, tape| m.loss(tape, &tokens, 1, Mode::Train { dropout_seed: 5 }),
        None,
    )
    .unwrap();
    assert_eq!(report.groups.len(), 2 * 12 + 4 + 2);
    assert_pass(&report);
}

#[test]
fn sentence_model_with_trainable_embeddings() {
    let mut cfg = small_config(false);
    cfg.trainable_embeddings = true;
    let mut model = SentenceModel::new(toy_channels(4, 1), &cfg, 12).unwrap();
    let tokens = toks("dog sat on the mat");
    let report = check(&mut model, |m, tape| m.loss(tape, &tokens, 2, Mode::Infer), None).unwrap();
    assert!(report.groups.iter().any(|g| g.name == "ch0.emb"));
    assert_pass(&report);
}

#[test]
fn document_model_end_to_end() {
    let mut model = DocumentModel::new(toy_channels(8, 2), &small_config(true), 13).unwrap();
    let tokens = toks("the cat sat , on the mat .");
    let report = check(
        &mut model,
        |m, tape| m.loss(tape, &tokens, 0, Mode::Train { dropout_seed: 8 }),
        None,
    )
    .unwrap();
    assert_eq!(report.groups.len(), 2 * 24 + 4 + 2);
    assert_pass(&report);
}

#[test]
fn every_parameter_receives_gradient() {
    let model = DocumentModel::new(toy_channels(5, 2), &small_config(true), 14).unwrap();
    let tokens = toks("the cat , sat on . the mat dog");
    let mut tape = Tape::recording();
    let loss = model.loss(&mut tape, &tokens, 1, Mode::Infer).unwrap();
    let grads = tape.backward(loss).unwrap();
    for ((name, _), g) in model.named_params().iter().zip(grads.param_grads()) {
        assert!(g.as_slice().iter().any(|&v| v != 0.0), "{name} has an all-zero gradient");
    }
}
