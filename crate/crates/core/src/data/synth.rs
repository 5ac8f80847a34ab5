use rand::seq::SliceRandom;
use rand::Rng;

use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::numerics::{seeded_rng, sub_seed};

use super::Example;

/// Parameters of the synthetic long-dependency task.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthParams {
    pub n_examples: usize,
    pub seq_len: usize,
    pub vocab_size: usize,
    pub gap: usize,
    pub seed: u64,
}

pub fn token_name(id: usize) -> String {
    format!("t{id}")
}

/// One-hot vectors for the synthetic vocabulary.
pub fn onehot_table(vocab_size: usize) -> Result<EmbeddingTable> {
    EmbeddingTable::from_pairs(
        vocab_size,
        (0..vocab_size).map(|i| (token_name(i), (0..vocab_size).map(|j| f64::from(u8::from(i == j))).collect())),
    )
}

/// Random sequences whose label is 1 exactly when the tokens at positions
/// `0` and `gap` coincide.
///
/// Filler tokens never equal the first token, nor the token `gap` positions
/// earlier (vocabulary permitting), so the only equal pair at distance `gap`
/// is the labeled one. Classes are balanced to within one example.
pub fn synth_longdep(p: SynthParams) -> Result<Vec<Example>> {
    if p.gap == 0 || p.gap >= p.seq_len {
        return Err(Error::domain(format!(
            "gap must satisfy 1 <= gap < seq_len, got gap {} with seq_len {}",
            p.gap, p.seq_len
        )));
    }
    if p.vocab_size < 2 {
        return Err(Error::domain(format!("vocab_size must be at least 2, got {}", p.vocab_size)));
    }
    if p.n_examples == 0 {
        return Err(Error::domain("n_examples must be positive"));
    }
    let mut labels: Vec<usize> = (0..p.n_examples).map(|i| usize::from(i < p.n_examples / 2)).collect();
    labels.shuffle(&mut seeded_rng(sub_seed(p.seed, "synth-labels")));
    let mut rng = seeded_rng(sub_seed(p.seed, "synth-tokens"));
    let examples = labels
        .into_iter()
        .enumerate()
        .map(|(id, label)| {
            let key = rng.random_range(0..p.vocab_size);
            let mut seq = vec![key];
            for t in 1..p.seq_len {
                if t == p.gap && label == 1 {
                    seq.push(key);
                    continue;
                }
                let back = (t > p.gap).then(|| seq[t - p.gap]);
                let mut allowed: Vec<usize> = (0..p.vocab_size).filter(|&v| v != key && Some(v) != back).collect();
                if allowed.is_empty() {
                    allowed = (0..p.vocab_size).filter(|&v| v != key).collect();
                }
                seq.push(allowed[rng.random_range(0..allowed.len())]);
            }
            Example {
                id,
                tokens: seq.into_iter().map(token_name).collect(),
                label,
            }
        })
        .collect();
    Ok(examples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, gap: usize) -> SynthParams {
        SynthParams {
            n_examples: n,
            seq_len: 20,
            vocab_size: 10,
            gap,
            seed: 4,
        }
    }

    #[test]
    fn labels_match_predicate_and_balance() {
        for n in [1, 2, 7, 1000] {
            let data = synth_longdep(params(n, 15)).unwrap();
            assert_eq!(data.len(), n);
            let pos = data.iter().filter(|e| e.label == 1).count();
            assert!((2 * pos as i64 - n as i64).abs() <= 1);
            for e in &data {
                assert_eq!(e.tokens.len(), 20);
                assert_eq!(e.label == 1, e.tokens[0] == e.tokens[15]);
                let repeats = e.tokens[1..].iter().filter(|t| **t == e.tokens[0]).count();
                assert_eq!(repeats, e.label);
            }
        }
    }

    #[test]
    fn only_the_labeled_pair_matches_at_distance_gap() {
        for gap in [1, 4, 15] {
            for e in synth_longdep(params(200, gap)).unwrap() {
                let pairs = (gap..20).filter(|&t| e.tokens[t] == e.tokens[t - gap]).count();
                assert_eq!(pairs, e.label, "gap {gap}: {:?}", e.tokens);
            }
        }
    }

    #[test]
    fn gap_exceeds_widest_filter() {
        // positions 0 and 15 never share a window of width 5
        let p = params(10, 15);
        assert!(p.gap + 1 > 5);
    }

    #[test]
    fn deterministic_and_validated() {
        assert_eq!(synth_longdep(params(30, 3)).unwrap(), synth_longdep(params(30, 3)).unwrap());
        assert!(synth_longdep(params(10, 20)).is_err());
        assert!(synth_longdep(params(10, 0)).is_err());
        assert!(synth_longdep(SynthParams { vocab_size: 1, ..params(10, 3) }).is_err());
    }
}
