//! Unrolling kernels behind the vectorized wide convolution.

use crate::error::{Error, Result};

use super::Matrix;

/// Unrolls `c` zero-padded maps (each `d × s`) into a `(c·l·d) × (s+l−1)`
/// matrix. Row `(r·l + j)·d + i` of column `k` holds `X_r[i, k + j − (l−1)]`,
/// or zero where that index falls in the padding.
pub fn im2col(maps: &[&Matrix], window: usize) -> Result<Matrix> {
    if window < 1 {
        return Err(Error::domain("convolution window must be at least 1"));
    }
    let first = maps.first().ok_or_else(|| Error::domain("convolution over zero channels"))?;
    let (d, s) = first.shape();
    if s == 0 {
        return Err(Error::domain("convolution over an empty sequence"));
    }
    for m in maps {
        if m.shape() != (d, s) {
            return Err(Error::Dimension {
                op: "wide_conv channels",
                left: (d, s),
                right: m.shape(),
            });
        }
    }
    let l = window;
    let out_len = s + l - 1;
    let mut cols = Matrix::zeros(maps.len() * l * d, out_len);
    for (r, m) in maps.iter().enumerate() {
        for j in 0..l {
            for i in 0..d {
                let row = (r * l + j) * d + i;
                let src = m.row(i);
                // column k reads src[k + j - (l-1)] when in range
                let k_lo = (l - 1).saturating_sub(j);
                let k_hi = (s + l - 1 - j).min(out_len);
                let dst = &mut cols.as_mut_slice()[row * out_len..(row + 1) * out_len];
                for k in k_lo..k_hi {
                    dst[k] = src[k + j + 1 - l];
                }
            }
        }
    }
    Ok(cols)
}

/// Adds channel `r`'s share of an unrolled gradient back onto a `d × s` map.
pub fn col2im_add(gcols: &Matrix, channel: usize, window: usize, out: &mut Matrix) {
    let (d, s) = out.shape();
    let l = window;
    let out_len = gcols.cols();
    for j in 0..l {
        for i in 0..d {
            let row = (channel * l + j) * d + i;
            let src = &gcols.as_slice()[row * out_len..(row + 1) * out_len];
            let k_lo = (l - 1).saturating_sub(j);
            let k_hi = (s + l - 1 - j).min(out_len);
            for k in k_lo..k_hi {
                let t = k + j + 1 - l;
                let v = out.get(i, t) + src[k];
                out.set(i, t, v);
            }
        }
    }
}
