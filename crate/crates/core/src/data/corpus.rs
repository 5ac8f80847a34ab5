use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::tokenize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub id: usize,
    pub tokens: Vec<String>,
    pub label: usize,
}

/// Examples plus the class names their labels index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub examples: Vec<Example>,
    pub labels: Vec<String>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.labels.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorpusFormat {
    /// One `label<TAB>text` line per example.
    TsvLabelText,
    /// One subdirectory per label, one document per file.
    DirPerClass,
}

impl CorpusFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tsv" | "tsv_label_text" => Ok(CorpusFormat::TsvLabelText),
            "dir" | "dir_per_class" => Ok(CorpusFormat::DirPerClass),
            other => Err(Error::Config(format!("unknown corpus format {other:?} (tsv|dir)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CorpusFormat::TsvLabelText => "tsv",
            CorpusFormat::DirPerClass => "dir",
        }
    }
}

/// Loads a corpus; labels are indexed in sorted order of their names.
pub fn load_labeled_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Corpus> {
    load(path.as_ref(), format, None)
}

/// Loads a corpus against a fixed label list (e.g. a checkpoint's classes).
pub fn load_labeled_corpus_with_labels(path: impl AsRef<Path>, format: CorpusFormat, labels: &[String]) -> Result<Corpus> {
    load(path.as_ref(), format, Some(labels))
}

fn load(path: &Path, format: CorpusFormat, fixed: Option<&[String]>) -> Result<Corpus> {
    let raw = match format {
        CorpusFormat::TsvLabelText => read_tsv(path)?,
        CorpusFormat::DirPerClass => read_dirs(path)?,
    };
    if raw.is_empty() {
        return Err(Error::domain(format!("corpus {} is empty", path.display())));
    }
    let labels: Vec<String> = match fixed {
        Some(l) => l.to_vec(),
        None => raw.iter().map(|r| r.0.clone()).collect::<BTreeSet<_>>().into_iter().collect(),
    };
    let examples = raw
        .into_iter()
        .enumerate()
        .map(|(id, (label, tokens, line))| {
            let label = labels.iter().position(|l| *l == label).ok_or_else(|| {
                Error::format(path, line, format!("label {label:?} is not one of {labels:?}"))
            })?;
            Ok(Example { id, tokens, label })
        })
        .collect::<Result<_>>()?;
    Ok(Corpus { examples, labels })
}

type Raw = (String, Vec<String>, Option<usize>);

fn read_tsv(path: &Path) -> Result<Vec<Raw>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (label, body) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(path, Some(n + 1), "missing tab between label and text"))?;
        let label = label.trim();
        if label.is_empty() {
            return Err(Error::format(path, Some(n + 1), "empty label"));
        }
        let tokens = tokenize(body).map_err(|_| Error::format(path, Some(n + 1), "empty text"))?;
        out.push((label.to_string(), tokens, Some(n + 1)));
    }
    Ok(out)
}

fn read_dirs(path: &Path) -> Result<Vec<Raw>> {
    let mut classes: Vec<_> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .collect();
    classes.sort_by_key(|e| e.file_name());
    let mut out = Vec::new();
    for class in classes {
        let label = class.file_name().to_string_lossy().into_owned();
        let mut files: Vec<_> = fs::read_dir(class.path())
            .map_err(|e| Error::io(class.path(), e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_file())
            .collect();
        files.sort_by_key(|e| e.file_name());
        for f in files {
            let text = fs::read_to_string(f.path()).map_err(|e| Error::io(f.path(), e))?;
            let tokens = tokenize(&text).map_err(|_| Error::format(f.path(), None, "empty document"))?;
            out.push((label.clone(), tokens, None));
        }
    }
    Ok(out)
}

/// Writes examples as `label<TAB>tokens joined by spaces`.
pub fn write_tsv(path: impl AsRef<Path>, examples: &[Example], labels: &[String]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for ex in examples {
        out.push_str(&labels[ex.label]);
        out.push('\t');
        out.push_str(&ex.tokens.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
