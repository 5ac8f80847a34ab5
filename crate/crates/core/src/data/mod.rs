//! Labeled corpora, tokenization, split protocols and the synthetic
//! long-dependency task.

mod corpus;
mod split;
mod synth;
mod tokenize;

pub use corpus::{load_labeled_corpus, load_labeled_corpus_with_labels, write_tsv, Corpus, CorpusFormat, Example};
pub use split::{holdout_split, kfold_split, Split};
pub use synth::{onehot_table, synth_longdep, token_name, SynthParams};
pub use tokenize::tokenize;
