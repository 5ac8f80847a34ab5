use crate::error::{Error, Result};
use crate::numerics::{Matrix, Parameterized};

pub const DEFAULT_RHO: f64 = 0.95;
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Running averages of squared gradients and squared updates, one pair of
/// accumulators per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdadeltaState {
    pub rho: f64,
    pub epsilon: f64,
    pub mean_sq_grad: Vec<Matrix>,
    pub mean_sq_update: Vec<Matrix>,
}

impl AdadeltaState {
    pub fn new(shapes: impl IntoIterator<Item = (usize, usize)>, rho: f64, epsilon: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::domain(format!("rho must be in [0, 1), got {rho}")));
        }
        if epsilon <= 0.0 {
            return Err(Error::domain(format!("epsilon must be positive, got {epsilon}")));
        }
        let zeros: Vec<Matrix> = shapes.into_iter().map(|(r, c)| Matrix::zeros(r, c)).collect();
        Ok(AdadeltaState {
            rho,
            epsilon,
            mean_sq_update: zeros.clone(),
            mean_sq_grad: zeros,
        })
    }

    pub fn for_params(model: &impl Parameterized, rho: f64, epsilon: f64) -> Result<Self> {
        Self::new(model.named_params().iter().map(|(_, m)| m.shape()), rho, epsilon)
    }

    pub fn len(&self) -> usize {
        self.mean_sq_grad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean_sq_grad.is_empty()
    }
}

/// One Adadelta update of every parameter tensor.
pub fn adadelta_step(params: &mut [&mut Matrix], grads: &[Matrix], st: &mut AdadeltaState) -> Result<()> {
    if params.len() != grads.len() || params.len() != st.len() {
        return Err(Error::Contract(format!(
            "adadelta got {} parameters, {} gradients and {} accumulators",
            params.len(),
            grads.len(),
            st.len()
        )));
    }
    for (k, (p, g)) in params.iter().zip(grads).enumerate() {
        p.check_same_shape(g, "adadelta")?;
        p.check_same_shape(&st.mean_sq_grad[k], "adadelta")?;
    }
    let (rho, eps) = (st.rho, st.epsilon);
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let eg2 = st.mean_sq_grad[k].as_mut_slice();
        let edx2 = st.mean_sq_update[k].as_mut_slice();
        for (((x, &g), a), b) in p.as_mut_slice().iter_mut().zip(g.as_slice()).zip(eg2).zip(edx2) {
            *a = rho * *a + (1.0 - rho) * g * g;
            let dx = -((*b + eps).sqrt() / (*a + eps).sqrt()) * g;
            *b = rho * *b + (1.0 - rho) * dx * dx;
            *x += dx;
        }
    }
    Ok(())
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Matrix], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.as_slice())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for g in grads.iter_mut() {
            g.as_mut_slice().iter_mut().for_each(|v| *v *= k);
        }
    }
    norm
}
