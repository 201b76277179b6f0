//! Plain-text embedding corpora: one sample per line, three tab-separated
//! fields (split tag, integer label, whitespace-separated floats).
//!
//! ```text
//! train	12	0.25 -1.5 3.0
//! test	7	0.1 0.2 0.3
//! ```
//!
//! Labels are re-indexed to `0..C` in order of first appearance.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use cgid_core::data::{LabeledCorpus, SplitTag};
use cgid_core::DenseMatrix;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestError {
    /// 1-based line of the offending row, when one is to blame.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for IngestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "corpus line {l}: {}", self.message),
            None => write!(f, "corpus: {}", self.message),
        }
    }
}

impl std::error::Error for IngestError {}

fn at(line: usize, message: impl Into<String>) -> IngestError {
    IngestError {
        line: Some(line),
        message: message.into(),
    }
}

pub fn parse_embedding_corpus(text: &str) -> Result<LabeledCorpus, IngestError> {
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut splits = Vec::new();
    let mut ids: HashMap<i64, usize> = HashMap::new();
    let mut original = Vec::new();
    let mut dim = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 3 {
            return Err(at(line, format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let tag = SplitTag::parse(fields[0].trim())
            .ok_or_else(|| at(line, format!("unknown split tag {:?}", fields[0])))?;
        let label: i64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| at(line, format!("label {:?} is not an integer", fields[1])))?;
        let start = data.len();
        for tok in fields[2].split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| at(line, format!("{tok:?} is not a number")))?;
            if !v.is_finite() {
                return Err(at(line, format!("non-finite value {tok}")));
            }
            data.push(v);
        }
        let width = data.len() - start;
        match dim {
            None if width == 0 => return Err(at(line, "no feature values")),
            None => dim = Some(width),
            Some(d) if d != width => {
                return Err(at(line, format!("{width} feature values, previous rows have {d}")));
            }
            Some(_) => {}
        }
        let next = ids.len();
        let id = *ids.entry(label).or_insert_with(|| {
            original.push(label);
            next
        });
        labels.push(id);
        splits.push(tag);
    }
    let dim = dim.ok_or_else(|| IngestError {
        line: None,
        message: "no samples".into(),
    })?;
    let mut seen = vec![[false; 3]; ids.len()];
    for (&l, &s) in labels.iter().zip(&splits) {
        seen[l][s as usize] = true;
    }
    for (id, flags) in seen.iter().enumerate() {
        for tag in SplitTag::ALL {
            if !flags[tag as usize] {
                return Err(IngestError {
                    line: None,
                    message: format!("label {} has no samples in the {} split", original[id], tag.as_str()),
                });
            }
        }
    }
    let features = DenseMatrix::new(labels.len(), dim, data).expect("row widths checked");
    LabeledCorpus::new(features, labels, splits).map_err(|e| IngestError {
        line: None,
        message: e.to_string(),
    })
}

pub fn load_embedding_corpus(path: &Path) -> Result<LabeledCorpus, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io("cannot read corpus", path, e))?;
    Ok(parse_embedding_corpus(&text)?)
}

pub fn write_embedding_corpus<W: Write>(corpus: &LabeledCorpus, mut w: W) -> io::Result<()> {
    for i in 0..corpus.len() {
        write!(w, "{}\t{}\t", corpus.splits()[i].as_str(), corpus.labels()[i])?;
        write_floats(&mut w, corpus.features().row(i))?;
        writeln!(w)?;
    }
    w.flush()
}

pub fn export_corpus(corpus: &LabeledCorpus, path: &Path) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::io("cannot create", path, e))?;
    write_embedding_corpus(corpus, io::BufWriter::new(file)).map_err(|e| CliError::io("cannot write", path, e))
}

/// Space-separated shortest round-trip representations.
pub(crate) fn write_floats<W: Write>(w: &mut W, values: &[f64]) -> io::Result<()> {
    for (j, v) in values.iter().enumerate() {
        if j > 0 {
            w.write_all(b" ")?;
        }
        write!(w, "{v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_rows_two_classes() {
        let text = "train\t5\t1 2 3\nvalidation\t5\t1 2 3\ntest\t9\t0 0 1\ntrain\t9\t0.5 0 1\n";
        let err = parse_embedding_corpus(text).unwrap_err();
        // label 9 lacks a validation row, label 5 lacks a test row
        assert_eq!(err.line, None);
        assert!(err.message.contains("label 5"), "{}", err.message);

        let text = "train\t5\t1 2 3\nval\t5\t1 2 3\ntest\t5\t0 0 1\ntrain\t9\t0.5 0 1\nval\t9\t1 1 1\ntest\t9\t2 2 2\n";
        let c = parse_embedding_corpus(text).unwrap();
        assert_eq!(c.len(), 6);
        assert_eq!(c.num_classes(), 2);
        assert_eq!(c.dim(), 3);
        assert_eq!(c.labels(), &[0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("train\t1\t1 2\ntrain\t1\t1 2 3\n", 2),
            ("train\t1\t1 2\n\nbogus\t1\t1 2\n", 3),
            ("train\tx\t1 2\n", 1),
            ("train\t1\t1 nan\n", 1),
            ("train\t1 1 2\n", 1),
        ];
        for (text, line) in cases {
            assert_eq!(parse_embedding_corpus(text).unwrap_err().line, Some(line), "{text:?}");
        }
        assert_eq!(parse_embedding_corpus("\n").unwrap_err().line, None);
    }
}
