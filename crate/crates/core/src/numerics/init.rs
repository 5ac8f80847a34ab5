use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

use super::Matrix;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent sub-seed from a base seed and a label.
pub fn sub_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, then a splitmix64 finalizer mixed with the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix(seed ^ splitmix(h))
}

pub(crate) fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Random matrix with orthonormal columns (or rows, when `rows < cols`).
///
/// A seeded Gaussian matrix is orthonormalized with two passes of modified
/// Gram-Schmidt. This is the Q factor of a QR decomposition whose R has a
/// positive diagonal, so the result is unique for a given seed.
pub fn init_orthogonal(rows: usize, cols: usize, seed: u64) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::domain(format!("orthogonal init of a {rows}x{cols} matrix")));
    }
    if rows < cols {
        return Ok(init_orthogonal(cols, rows, seed)?.transpose());
    }
    let mut rng = seeded_rng(seed);
    // column-major working copy: q[j] is column j
    let mut q: Vec<Vec<f64>> = (0..cols)
        .map(|_| (0..rows).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    for j in 0..cols {
        for _pass in 0..2 {
            for k in 0..j {
                let (done, rest) = q.split_at_mut(j);
                let proj: f64 = done[k].iter().zip(&rest[0]).map(|(a, b)| a * b).sum();
                for (x, b) in rest[0].iter_mut().zip(&done[k]) {
                    *x -= proj * b;
                }
            }
        }
        let norm = q[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-10 {
            // measure-zero event for Gaussian draws
            return Err(Error::domain("degenerate Gaussian draw in orthogonal init"));
        }
        q[j].iter_mut().for_each(|v| *v /= norm);
    }
    Matrix::from_columns(&q)
}

/// I.i.d. uniform entries in `[-half_width, half_width]`.
pub fn init_uniform(rows: usize, cols: usize, half_width: f64, seed: u64) -> Result<Matrix> {
    if !(half_width > 0.0) || !half_width.is_finite() {
        return Err(Error::domain(format!("uniform half-width must be positive, got {half_width}")));
    }
    let mut rng = seeded_rng(seed);
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-half_width..=half_width))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

/// `max |(MᵀM − I)_ij|`
pub fn orthogonality_error(m: &Matrix) -> f64 {
    let gram = m.transpose().matmul(m).expect("square gram");
    gram.max_abs_diff(&Matrix::identity(m.cols())).expect("same shape")
}
