//! Pretrained word vectors (GloVe text and word2vec binary) and
//! multi-channel sequence lookup.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{init_uniform, sub_seed, Matrix};

/// Half-width of the uniform distribution used for unknown tokens.
pub const OOV_HALF_WIDTH: f64 = 0.25;

/// One embedding version ("channel"): a vocabulary and its `|V| × d` vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    pub vectors: Matrix,
    pub trainable: bool,
}

impl EmbeddingTable {
    /// Builds a table from `(word, vector)` pairs. Later duplicates are ignored.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("embedding dimension must be positive"));
        }
        let mut words = Vec::new();
        let mut index = HashMap::new();
        let mut data = Vec::new();
        for (word, v) in pairs {
            if v.len() != dim {
                return Err(Error::Dimension {
                    op: "embedding row",
                    left: (1, dim),
                    right: (1, v.len()),
                });
            }
            if index.contains_key(&word) {
                continue;
            }
            index.insert(word.clone(), words.len());
            words.push(word);
            data.extend(v);
        }
        Ok(EmbeddingTable {
            dim,
            vectors: Matrix::from_vec(words.len(), dim, data)?,
            words,
            index,
            trainable: false,
        })
    }

    /// A table with no vocabulary; every token resolves through the OOV policy.
    pub fn random(dim: usize) -> Result<Self> {
        Self::from_pairs(dim, std::iter::empty())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Exact match first, then the lowercased token.
    pub fn resolve(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied().or_else(|| {
            let lower = token.to_lowercase();
            if lower != token {
                self.index.get(&lower).copied()
            } else {
                None
            }
        })
    }

    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        self.resolve(token).map(|r| self.vectors.row(r))
    }
}

/// Reads GloVe text: one `token v1 … vd` line per word. The dimension is
/// taken from the first line.
pub fn load_glove_text(path: impl AsRef<Path>, max_vocab: Option<usize>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut dim = None;
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if max_vocab.is_some_and(|m| pairs.len() >= m) {
            break;
        }
        let line_no = n + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let word = fields.next().expect("non-blank line").to_string();
        let values = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::format(path, Some(line_no), format!("bad number {f:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let d = *dim.get_or_insert(values.len());
        if d == 0 {
            return Err(Error::format(path, Some(line_no), "line has no vector components"));
        }
        if values.len() != d {
            return Err(Error::format(
                path,
                Some(line_no),
                format!("expected {d} components, found {}", values.len()),
            ));
        }
        pairs.push((word, values));
    }
    let dim = dim.ok_or_else(|| Error::format(path, None, "no vectors in file"))?;
    EmbeddingTable::from_pairs(dim, pairs)
}

pub fn write_glove_text(path: impl AsRef<Path>, table: &EmbeddingTable) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for (r, word) in table.words.iter().enumerate() {
        out.push_str(word);
        for v in table.vectors.row(r) {
            out.push(' ');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads the word2vec binary format: an ASCII `count dim\n` header, then per
/// word a space-terminated token followed by `dim` little-endian `f32`s.
pub fn load_word2vec_binary(path: impl AsRef<Path>, max_vocab: Option<usize>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let header_end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(path, Some(1), "missing header line"))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| Error::format(path, Some(1), "header is not ASCII"))?;
    let mut fields = header.split_whitespace().map(str::parse::<usize>);
    let (count, dim) = match (fields.next(), fields.next(), fields.next()) {
        (Some(Ok(c)), Some(Ok(d)), None) if d > 0 => (c, d),
        _ => return Err(Error::format(path, Some(1), format!("bad header {header:?}"))),
    };
    let take = max_vocab.map_or(count, |m| m.min(count));
    let mut pos = header_end + 1;
    let mut pairs = Vec::with_capacity(take);
    for k in 0..take {
        while pos < bytes.len() && (bytes[pos] == b'\n' || bytes[pos] == b'\r') {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos] != b' ' {
            pos += 1;
        }
        if pos >= bytes.len() {
            return Err(Error::format(
                path,
                None,
                format!(
                    "truncated at record {} of {count}: expected {} more bytes, found {}",
                    k + 1,
                    (count - k) * (dim * 4 + 2),
                    bytes.len() - start
                ),
            ));
        }
        let word = String::from_utf8_lossy(&bytes[start..pos]).into_owned();
        pos += 1;
        let need = dim * 4;
        let have = bytes.len() - pos;
        if have < need {
            return Err(Error::format(
                path,
                None,
                format!(
                    "truncated vector for record {} ({word:?}): expected {need} bytes, found {have}",
                    k + 1
                ),
            ));
        }
        let values = bytes[pos..pos + need]
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        pos += need;
        pairs.push((word, values));
    }
    EmbeddingTable::from_pairs(dim, pairs)
}

/// Writes `table` in word2vec binary form (values narrowed to `f32`).
pub fn write_word2vec_binary(path: impl AsRef<Path>, table: &EmbeddingTable) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    writeln!(out, "{} {}", table.len(), table.dim).expect("write to vec");
    for (r, word) in table.words.iter().enumerate() {
        out.extend_from_slice(word.as_bytes());
        out.push(b' ');
        for &v in table.vectors.row(r) {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Ordered embedding channels sharing one dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    tables: Vec<EmbeddingTable>,
    oov_seed: u64,
}

impl ChannelSet {
    pub fn new(tables: Vec<EmbeddingTable>, oov_seed: u64) -> Result<Self> {
        let first = tables.first().ok_or_else(|| Error::domain("a channel set needs at least one table"))?;
        if let Some(t) = tables.iter().find(|t| t.dim != first.dim) {
            return Err(Error::Dimension {
                op: "channel set",
                left: (first.len(), first.dim),
                right: (t.len(), t.dim),
            });
        }
        Ok(ChannelSet { tables, oov_seed })
    }

    pub fn count(&self) -> usize {
        self.tables.len()
    }

    pub fn dim(&self) -> usize {
        self.tables[0].dim
    }

    pub fn oov_seed(&self) -> u64 {
        self.oov_seed
    }

    pub fn tables(&self) -> &[EmbeddingTable] {
        &self.tables
    }

    pub fn tables_mut(&mut self) -> &mut [EmbeddingTable] {
        &mut self.tables
    }

    /// Deterministic vector for a token missing from `channel`'s table.
    pub fn oov_vector(&self, channel: usize, token: &str) -> Vec<f64> {
        let seed = sub_seed(self.oov_seed ^ (channel as u64).wrapping_mul(0x9e37_79b9), &format!("oov:{token}"));
        init_uniform(self.dim(), 1, OOV_HALF_WIDTH, seed)
            .expect("positive half-width")
            .into_vec()
    }

    /// Table rows for `tokens` in one channel, plus a `d × s` matrix whose
    /// columns hold the OOV vectors where the row is `None`.
    pub fn resolve(&self, channel: usize, tokens: &[String]) -> (Vec<Option<usize>>, Matrix) {
        let table = &self.tables[channel];
        let mut fallback = Matrix::zeros(self.dim(), tokens.len());
        let ids = tokens
            .iter()
            .enumerate()
            .map(|(t, tok)| {
                let id = table.resolve(tok);
                if id.is_none() {
                    fallback.set_col(t, &self.oov_vector(channel, tok));
                }
                id
            })
            .collect();
        (ids, fallback)
    }

    /// `d × s` embedding matrix for one channel.
    pub fn lookup_channel(&self, channel: usize, tokens: &[String]) -> Result<Matrix> {
        if tokens.is_empty() {
            return Err(Error::domain("lookup of an empty token list"));
        }
        let (ids, mut out) = self.resolve(channel, tokens);
        let table = &self.tables[channel];
        for (t, id) in ids.iter().enumerate() {
            if let Some(r) = id {
                out.set_col(t, table.vectors.row(*r));
            }
        }
        Ok(out)
    }
}

/// One `d × s` matrix per channel; column `t` embeds `tokens[t]`.
pub fn lookup_sequence(channels: &ChannelSet, tokens: &[String]) -> Result<Vec<Matrix>> {
    (0..channels.count()).map(|c| channels.lookup_channel(c, tokens)).collect()
}
