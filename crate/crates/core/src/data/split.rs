use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::numerics::{seeded_rng, sub_seed};

use super::Example;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<Example>,
    pub valid: Vec<Example>,
    pub test: Vec<Example>,
}

/// Fold `fold` of a seeded `k`-way partition is the test set; a
/// `valid_fraction` share of the remainder becomes the validation set.
pub fn kfold_split(examples: &[Example], k: usize, fold: usize, valid_fraction: f64, seed: u64) -> Result<Split> {
    if k < 2 {
        return Err(Error::domain(format!("k-fold needs k >= 2, got {k}")));
    }
    if fold >= k {
        return Err(Error::domain(format!("fold {fold} out of range for k = {k}")));
    }
    if examples.len() < k {
        return Err(Error::domain(format!("{} examples cannot fill {k} folds", examples.len())));
    }
    check_fraction(valid_fraction)?;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut seeded_rng(sub_seed(seed, "kfold")));
    let (base, extra) = (examples.len() / k, examples.len() % k);
    let start = fold * base + fold.min(extra);
    let len = base + usize::from(fold < extra);
    let test: Vec<Example> = order[start..start + len].iter().map(|&i| examples[i].clone()).collect();
    let rest: Vec<Example> = order[..start]
        .iter()
        .chain(&order[start + len..])
        .map(|&i| examples[i].clone())
        .collect();
    let (train, valid) = holdout_split(&rest, valid_fraction, sub_seed(seed, &format!("valid{fold}")))?;
    Ok(Split { train, valid, test })
}

/// Seeded carve-out of `fraction` of `examples` as a validation set.
pub fn holdout_split(examples: &[Example], fraction: f64, seed: u64) -> Result<(Vec<Example>, Vec<Example>)> {
    check_fraction(fraction)?;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut seeded_rng(seed));
    let n_valid = (fraction * examples.len() as f64).round() as usize;
    let mut valid: Vec<usize> = order[..n_valid].to_vec();
    let mut train: Vec<usize> = order[n_valid..].to_vec();
    valid.sort_unstable();
    train.sort_unstable();
    Ok((
        train.into_iter().map(|i| examples[i].clone()).collect(),
        valid.into_iter().map(|i| examples[i].clone()).collect(),
    ))
}

fn check_fraction(f: f64) -> Result<()> {
    if !(0.0..1.0).contains(&f) {
        return Err(Error::domain(format!("validation fraction must be in [0, 1), got {f}")));
    }
    Ok(())
}
