//! Overlapping fixed-length passage windows over tokenized documents.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{tokenize, TokenSequence, Vocabulary};
use crate::error::{Error, Result};

pub const DEFAULT_WINDOW_LEN: usize = 180;
pub const DEFAULT_STRIDE: usize = 90;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    #[serde(rename = "id")]
    pub doc_id: String,
    pub text: String,
}

impl DocumentRecord {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        DocumentRecord {
            doc_id: doc_id.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassageRecord {
    pub passage_id: u32,
    pub doc_id: String,
    /// Token index of the window start within the document.
    pub offset: usize,
    pub tokens: TokenSequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmenterConfig {
    pub window_len: usize,
    pub stride: usize,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig {
            window_len: DEFAULT_WINDOW_LEN,
            stride: DEFAULT_STRIDE,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.stride > self.window_len {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= stride <= window_len, got stride {} window_len {}",
                self.stride, self.window_len
            )));
        }
        Ok(())
    }

    /// Token ranges of the windows over a document of `n` tokens.
    ///
    /// Offsets run `0, stride, 2*stride, ...`; a window past offset 0 is kept
    /// only while it reaches at least one token the previous window did not.
    pub fn windows(&self, n: usize) -> Vec<Range<usize>> {
        if n == 0 {
            return Vec::new();
        }
        let overlap = self.window_len - self.stride;
        let mut out = Vec::new();
        let mut offset = 0;
        while offset == 0 || offset + overlap < n {
            out.push(offset..n.min(offset + self.window_len));
            offset += self.stride;
        }
        out
    }
}

/// Splits one document into passages numbered from `first_id`.
///
/// Returns an empty list, with a warning, when the document has no tokens.
pub fn segment(
    doc: &DocumentRecord,
    cfg: &SegmenterConfig,
    vocab: &mut Vocabulary,
    first_id: u32,
) -> Vec<PassageRecord> {
    let seq = tokenize(&doc.text, vocab);
    if seq.is_empty() {
        log::warn!("document {:?} has no tokens and is not indexed", doc.doc_id);
        return Vec::new();
    }
    cfg.windows(seq.len())
        .into_iter()
        .enumerate()
        .map(|(i, w)| PassageRecord {
            passage_id: first_id + i as u32,
            doc_id: doc.doc_id.clone(),
            offset: w.start,
            tokens: seq.slice(w.start, w.end),
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct SegmentedCorpus {
    pub passages: Vec<PassageRecord>,
    pub vocab: Vocabulary,
    /// Documents that produced no passages.
    pub unindexable: Vec<String>,
}

/// Segments a corpus in order, assigning dense global passage ids.
pub fn segment_corpus(docs: &[DocumentRecord], cfg: &SegmenterConfig) -> Result<SegmentedCorpus> {
    cfg.validate()?;
    check_unique_ids(docs)?;
    let mut out = SegmentedCorpus::default();
    for doc in docs {
        let next = out.passages.len() as u32;
        let passages = segment(doc, cfg, &mut out.vocab, next);
        if passages.is_empty() {
            out.unindexable.push(doc.doc_id.clone());
        }
        out.passages.extend(passages);
    }
    if out.passages.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(out)
}

fn check_unique_ids(docs: &[DocumentRecord]) -> Result<()> {
    let mut seen = HashSet::with_capacity(docs.len());
    for d in docs {
        if d.doc_id.is_empty() || d.doc_id.contains(['\t', '\n', '\r', ' ']) {
            return Err(Error::InvalidParameter(format!(
                "document id {:?} must be non-empty without whitespace",
                d.doc_id
            )));
        }
        if !seen.insert(d.doc_id.as_str()) {
            return Err(Error::DuplicateDocument(d.doc_id.clone()));
        }
    }
    Ok(())
}

/// Reads a corpus of one JSON object per line with fields `id` and `text`.
/// Blank lines are skipped.
pub fn read_corpus<R: Read>(reader: R) -> Result<Vec<DocumentRecord>> {
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let bad = |reason: String| Error::Parse {
            what: "corpus",
            line: i + 1,
            reason,
        };
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: DocumentRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        docs.push(doc);
    }
    check_unique_ids(&docs)?;
    Ok(docs)
}

pub fn load_corpus(path: &Path) -> Result<Vec<DocumentRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(file)
}
