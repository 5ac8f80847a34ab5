//! Vanilla RNN and LSTM cells, and full-sequence LSTM runs that keep every
//! hidden state.

use crate::error::{Error, Result};
use crate::numerics::{init_orthogonal, sigmoid, sub_seed, Matrix, Tape, Var};

/// The four LSTM gate blocks, in parameter order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Input,
    Forget,
    Output,
    Update,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Update];

    pub fn suffix(self) -> &'static str {
        match self {
            Gate::Input => "i",
            Gate::Forget => "f",
            Gate::Output => "o",
            Gate::Update => "u",
        }
    }
}

/// Input weights `w[g]` (`h × d`), recurrent weights `u[g]` (`h × h`) and
/// biases `b[g]` (`h × 1`), indexed by [`Gate`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w: [Matrix; 4],
    pub u: [Matrix; 4],
    pub b: [Matrix; 4],
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Gate activations of one step, kept for inspection.
#[derive(Clone, Debug, PartialEq)]
pub struct GateValues {
    pub input: Vec<f64>,
    pub forget: Vec<f64>,
    pub output: Vec<f64>,
    pub update: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub w: [Var; 4],
    pub u: [Var; 4],
    pub b: [Var; 4],
}

/// Tape handles produced by [`lstm_run_on_tape`].
#[derive(Clone, Copy, Debug)]
pub struct LstmRun {
    /// `h × s`, column `t` is `h_t`.
    pub hidden: Var,
    pub last_h: Var,
    pub last_c: Var,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmParams {
            w: std::array::from_fn(|_| Matrix::zeros(hidden, input_dim)),
            u: std::array::from_fn(|_| Matrix::zeros(hidden, hidden)),
            b: std::array::from_fn(|_| Matrix::zeros(hidden, 1)),
        }
    }

    /// Orthogonal `W` and `U` blocks, zero biases except the forget bias.
    pub fn init(input_dim: usize, hidden: usize, forget_bias: f64, seed: u64) -> Result<Self> {
        let mut p = LstmParams::zeros(input_dim, hidden);
        for (k, gate) in Gate::ALL.iter().enumerate() {
            p.w[k] = init_orthogonal(hidden, input_dim, sub_seed(seed, &format!("w_{}", gate.suffix())))?;
            p.u[k] = init_orthogonal(hidden, hidden, sub_seed(seed, &format!("u_{}", gate.suffix())))?;
        }
        p.b[1] = Matrix::filled(hidden, 1, forget_bias);
        Ok(p)
    }

    pub fn input_dim(&self) -> usize {
        self.w[0].cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w[0].rows()
    }

    pub fn named_params(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::with_capacity(12);
        for (prefix, group) in [("w", &self.w), ("u", &self.u), ("b", &self.b)] {
            for (g, m) in Gate::ALL.iter().zip(group.iter()) {
                out.push((format!("{prefix}_{}", g.suffix()), m));
            }
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::with_capacity(12);
        for (prefix, group) in [("w", &mut self.w), ("u", &mut self.u), ("b", &mut self.b)] {
            for (g, m) in Gate::ALL.iter().zip(group.iter_mut()) {
                out.push((format!("{prefix}_{}", g.suffix()), m));
            }
        }
        out
    }

    /// Binds in [`LstmParams::named_params`] order.
    pub fn bind<'p>(&'p self, tape: &mut Tape<'p>) -> LstmVars {
        let w = std::array::from_fn(|k| tape.param(&self.w[k]));
        let u = std::array::from_fn(|k| tape.param(&self.u[k]));
        let b = std::array::from_fn(|k| tape.param(&self.b[k]));
        LstmVars { w, u, b }
    }

    pub fn same_shape(&self, other: &LstmParams) -> bool {
        self.input_dim() == other.input_dim() && self.hidden_dim() == other.hidden_dim()
    }

    fn check_input(&self, len: usize, op: &'static str) -> Result<()> {
        if len != self.input_dim() {
            return Err(Error::Dimension {
                op,
                left: self.w[0].shape(),
                right: (len, 1),
            });
        }
        Ok(())
    }
}

fn affine(w: &Matrix, x: &[f64], u: &Matrix, h: &[f64], b: &Matrix) -> Vec<f64> {
    (0..w.rows())
        .map(|r| {
            let wx: f64 = w.row(r).iter().zip(x).map(|(a, b)| a * b).sum();
            let uh: f64 = u.row(r).iter().zip(h).map(|(a, b)| a * b).sum();
            wx + uh + b.get(r, 0)
        })
        .collect()
}

/// One LSTM step, also returning the gate activations.
pub fn lstm_step_with_gates(p: &LstmParams, x: &[f64], s: &LstmState) -> Result<(LstmState, GateValues)> {
    p.check_input(x.len(), "lstm_step")?;
    let hidden = p.hidden_dim();
    if s.h.len() != hidden || s.c.len() != hidden {
        return Err(Error::Dimension {
            op: "lstm_step state",
            left: (hidden, 1),
            right: (s.h.len(), s.c.len()),
        });
    }
    let pre = |k: usize| affine(&p.w[k], x, &p.u[k], &s.h, &p.b[k]);
    let input: Vec<f64> = pre(0).into_iter().map(sigmoid).collect();
    let forget: Vec<f64> = pre(1).into_iter().map(sigmoid).collect();
    let output: Vec<f64> = pre(2).into_iter().map(sigmoid).collect();
    let update: Vec<f64> = pre(3).into_iter().map(f64::tanh).collect();
    let c: Vec<f64> = (0..hidden).map(|r| input[r] * update[r] + forget[r] * s.c[r]).collect();
    let h = (0..hidden).map(|r| output[r] * c[r].tanh()).collect();
    Ok((
        LstmState { h, c },
        GateValues {
            input,
            forget,
            output,
            update,
        },
    ))
}

pub fn lstm_step(p: &LstmParams, x: &[f64], s: &LstmState) -> Result<LstmState> {
    lstm_step_with_gates(p, x, s).map(|(s, _)| s)
}

/// Runs from the zero state over the columns of `inputs` (`d × s`) and
/// returns all hidden states as an `h × s` matrix.
pub fn lstm_run(p: &LstmParams, inputs: &Matrix) -> Result<Matrix> {
    if inputs.cols() == 0 {
        return Err(Error::domain("LSTM run over an empty sequence"));
    }
    p.check_input(inputs.rows(), "lstm_run")?;
    let mut state = LstmState::zeros(p.hidden_dim());
    let mut hidden = Matrix::zeros(p.hidden_dim(), inputs.cols());
    for t in 0..inputs.cols() {
        state = lstm_step(p, &inputs.col(t), &state)?;
        hidden.set_col(t, &state.h);
    }
    Ok(hidden)
}

/// Recorded LSTM run over `inputs` (`d × s`). Starts from `init` when given,
/// otherwise from the zero state.
pub fn lstm_run_on_tape(tape: &mut Tape<'_>, vars: &LstmVars, inputs: Var, init: Option<(Var, Var)>) -> Result<LstmRun> {
    let steps = tape.value(inputs).cols();
    if steps == 0 {
        return Err(Error::domain("LSTM run over an empty sequence"));
    }
    let mut projected = [inputs; 4];
    for k in 0..4 {
        let wx = tape.matmul(vars.w[k], inputs)?;
        projected[k] = tape.add_bias(wx, vars.b[k])?;
    }
    let mut state = init;
    let mut hs = Vec::with_capacity(steps);
    for t in 0..steps {
        let mut pre = [inputs; 4];
        for k in 0..4 {
            pre[k] = tape.column(projected[k], t)?;
            if let Some((h_prev, _)) = state {
                let uh = tape.matmul(vars.u[k], h_prev)?;
                pre[k] = tape.add(pre[k], uh)?;
            }
        }
        let i = tape.sigmoid(pre[0]);
        let f = tape.sigmoid(pre[1]);
        let o = tape.sigmoid(pre[2]);
        let u = tape.tanh(pre[3]);
        let mut c = tape.mul(i, u)?;
        if let Some((_, c_prev)) = state {
            let kept = tape.mul(f, c_prev)?;
            c = tape.add(c, kept)?;
        }
        let squashed = tape.tanh(c);
        let h = tape.mul(o, squashed)?;
        hs.push(h);
        state = Some((h, c));
    }
    let (last_h, last_c) = state.expect("at least one step");
    let hidden = if hs.len() == 1 { hs[0] } else { tape.concat_cols(&hs)? };
    Ok(LstmRun {
        hidden,
        last_h,
        last_c,
    })
}

/// Elman cell weights: `w` (`h × d`), `u` (`h × h`), `b` (`h × 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct RnnParams {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Matrix,
}

/// `tanh(W x + U h_prev + b)`
pub fn rnn_step(p: &RnnParams, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
    let hidden = p.w.rows();
    if p.w.cols() != x.len() || p.u.shape() != (hidden, hidden) || h_prev.len() != hidden || p.b.shape() != (hidden, 1) {
        return Err(Error::Dimension {
            op: "rnn_step",
            left: p.w.shape(),
            right: (x.len(), h_prev.len()),
        });
    }
    Ok(affine(&p.w, x, &p.u, h_prev, &p.b).into_iter().map(f64::tanh).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::seeded_rng;
    use rand::Rng;

    fn random_params(rng: &mut impl Rng, d: usize, h: usize, scale: f64) -> LstmParams {
        let mut p = LstmParams::zeros(d, h);
        for (_, m) in p.named_params_mut() {
            m.as_mut_slice().iter_mut().for_each(|v| *v = rng.random_range(-scale..scale));
        }
        p
    }

    #[test]
    fn rnn_zero_weights_give_zero() {
        let p = RnnParams {
            w: Matrix::zeros(2, 3),
            u: Matrix::zeros(2, 2),
            b: Matrix::zeros(2, 1),
        };
        assert_eq!(rnn_step(&p, &[1.0, -5.0, 9.0], &[0.3, 0.2]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn rnn_identity_recurrence() {
        let p = RnnParams {
            w: Matrix::zeros(1, 1),
            u: Matrix::identity(1),
            b: Matrix::zeros(1, 1),
        };
        let h = rnn_step(&p, &[2.0], &[0.5]).unwrap();
        assert!((h[0] - 0.5f64.tanh()).abs() < 1e-15);
        assert!((h[0] - 0.4621).abs() < 1e-4);
    }

    #[test]
    fn rnn_output_bounded() {
        let mut rng = seeded_rng(1);
        let m = |rng: &mut rand_chacha::ChaCha8Rng, r, c| {
            Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-10.0..10.0)).collect()).unwrap()
        };
        let p = RnnParams {
            w: m(&mut rng, 3, 2),
            u: m(&mut rng, 3, 3),
            b: m(&mut rng, 3, 1),
        };
        let h = rnn_step(&p, &[1.0, -1.0], &[0.9, -0.9, 0.1]).unwrap();
        assert!(h.iter().all(|v| v.abs() <= 1.0));
        assert!(rnn_step(&p, &[1.0], &[0.0; 3]).is_err());
    }

    #[test]
    fn zero_params_from_zero_state() {
        let p = LstmParams::zeros(3, 2);
        let (s, g) = lstm_step_with_gates(&p, &[1.0, 2.0, 3.0], &LstmState::zeros(2)).unwrap();
        assert_eq!(g.input, vec![0.5, 0.5]);
        assert_eq!(g.forget, vec![0.5, 0.5]);
        assert_eq!(g.output, vec![0.5, 0.5]);
        assert_eq!(g.update, vec![0.0, 0.0]);
        assert_eq!(s, LstmState::zeros(2));
    }

    #[test]
    fn saturated_forget_gate_keeps_memory() {
        let mut p = LstmParams::zeros(2, 2);
        p.b[1] = Matrix::filled(2, 1, 50.0);
        let s = LstmState {
            h: vec![0.0, 0.0],
            c: vec![0.7, -0.3],
        };
        let next = lstm_step(&p, &[0.0, 0.0], &s).unwrap();
        for (a, b) in next.c.iter().zip(&s.c) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn run_single_step_matches_step() {
        let mut rng = seeded_rng(2);
        let p = random_params(&mut rng, 3, 4, 0.5);
        let x = Matrix::column_vector(vec![0.1, -0.2, 0.3]);
        let run = lstm_run(&p, &x).unwrap();
        let step = lstm_step(&p, x.as_slice(), &LstmState::zeros(4)).unwrap();
        assert_eq!(run.col(0), step.h);
    }

    #[test]
    fn prefix_property() {
        let mut rng = seeded_rng(3);
        let p = random_params(&mut rng, 2, 3, 0.8);
        let x = Matrix::from_vec(2, 5, (0..10).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let full = lstm_run(&p, &x).unwrap();
        let mut prefix = Matrix::zeros(2, 3);
        for t in 0..3 {
            prefix.set_col(t, &x.col(t));
        }
        let short = lstm_run(&p, &prefix).unwrap();
        for t in 0..3 {
            assert_eq!(full.col(t), short.col(t));
        }
    }

    #[test]
    fn tape_run_matches_value_run() {
        let mut rng = seeded_rng(4);
        let p = random_params(&mut rng, 3, 2, 0.7);
        let x = Matrix::from_vec(3, 6, (0..18).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let mut tape = Tape::inference();
        let vars = p.bind(&mut tape);
        let xv = tape.constant_ref(&x);
        let run = lstm_run_on_tape(&mut tape, &vars, xv, None).unwrap();
        let direct = lstm_run(&p, &x).unwrap();
        assert!(tape.value(run.hidden).max_abs_diff(&direct).unwrap() < 1e-14);
    }

    #[test]
    fn empty_sequence_and_bad_width_rejected() {
        let p = LstmParams::zeros(3, 2);
        assert!(lstm_run(&p, &Matrix::zeros(3, 0)).is_err());
        assert!(matches!(lstm_run(&p, &Matrix::zeros(2, 4)), Err(Error::Dimension { .. })));
        assert!(lstm_step(&p, &[0.0; 2], &LstmState::zeros(2)).is_err());
    }

    #[test]
    fn init_blocks_are_orthogonal() {
        let p = LstmParams::init(5, 5, 0.0, 1).unwrap();
        for m in p.w.iter().chain(p.u.iter()) {
            assert!(crate::numerics::orthogonality_error(m) < 1e-10);
        }
        assert!(p.b.iter().all(|b| b.as_slice().iter().all(|&v| v == 0.0)));
        let q = LstmParams::init(5, 5, 1.0, 1).unwrap();
        assert_eq!(q.b[1], Matrix::filled(5, 1, 1.0));
    }
}
