//! Two-stage end-to-end retrieval.
//!
//! 1. Every non-mask query row fetches its `ann_k` nearest stored tokens.
//! 2. Those tokens map to passages; the union is the candidate set.
//! 3. Each candidate passage is scored exactly with MaxSim over its stored
//!    rows.
//! 4. A document scores the maximum over its candidate passages. Documents
//!    with no candidate passage are absent from the result.
//!
//! Every sort orders by descending score and then ascending id.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;

use crate::encoder::{encode_query, EmbeddingMatrix, TokenEncoder};
use crate::error::{Error, Result};
use crate::index::{TokenIndex, DEFAULT_NPROBE};
use crate::linalg::{self, dot};

pub const DEFAULT_ANN_K: usize = 256;
pub const DEFAULT_TOP_DOCS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetrievalParams {
    /// Stored tokens fetched per query row.
    pub ann_k: usize,
    pub nprobe: usize,
    pub top_docs: usize,
    /// Scan every token instead of probing the IVF.
    pub exact_mode: bool,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        RetrievalParams {
            ann_k: DEFAULT_ANN_K,
            nprobe: DEFAULT_NPROBE,
            top_docs: DEFAULT_TOP_DOCS,
            exact_mode: false,
        }
    }
}

impl RetrievalParams {
    pub fn validate(&self) -> Result<()> {
        if self.ann_k == 0 || self.top_docs == 0 || self.nprobe == 0 {
            return Err(Error::InvalidParameter(
                "ann_k, nprobe and top_docs must all be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry {
    pub doc_id: String,
    pub score: f32,
    /// 1-based.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn empty(query_id: impl Into<String>) -> Self {
        RankedList {
            query_id: query_id.into(),
            entries: Vec::new(),
        }
    }

    /// Sorts `(doc_id, score)` pairs by score descending then doc id, keeps
    /// the first `depth`, and numbers ranks from 1.
    pub fn from_scores(
        query_id: impl Into<String>,
        mut scores: Vec<(String, f32)>,
        depth: usize,
    ) -> Self {
        scores.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scores.truncate(depth);
        RankedList {
            query_id: query_id.into(),
            entries: scores
                .into_iter()
                .enumerate()
                .map(|(i, (doc_id, score))| RankedEntry {
                    doc_id,
                    score,
                    rank: i + 1,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn score_of(&self, doc_id: &str) -> Option<f32> {
        self.entries.iter().find(|e| e.doc_id == doc_id).map(|e| e.score)
    }

    /// Writes `<qid> Q0 <doc> <rank> <score> <tag>` lines, score to six decimals.
    pub fn write_trec<W: Write>(&self, mut w: W, tag: &str) -> std::io::Result<()> {
        for e in &self.entries {
            writeln!(
                w,
                "{} Q0 {} {} {:.6} {}",
                self.query_id, e.doc_id, e.rank, e.score, tag
            )?;
        }
        Ok(())
    }
}

/// Sum over query rows of the best dot product against any document row.
///
/// Mask rows contribute exactly zero.
pub fn maxsim(query: &EmbeddingMatrix, doc: &EmbeddingMatrix) -> Result<f32> {
    if query.dim() != doc.dim() {
        return Err(Error::DimensionMismatch {
            expected: query.dim(),
            actual: doc.dim(),
        });
    }
    if doc.is_empty() {
        return Err(Error::InvalidParameter("document has no rows".into()));
    }
    Ok(maxsim_rows(query, doc.as_slice()))
}

/// MaxSim of `query` against row-major `doc` of the same dimension.
pub(crate) fn maxsim_rows(query: &EmbeddingMatrix, doc: &[f32]) -> f32 {
    let mut total = 0.0f32;
    for q in query.iter_rows() {
        if linalg::is_zero(q) {
            continue;
        }
        let best = doc
            .chunks_exact(query.dim())
            .map(|d| dot(q, d))
            .fold(f32::NEG_INFINITY, f32::max);
        total += best;
    }
    total
}

/// Candidate passages and their scores behind a [`RankedList`].
#[derive(Debug, Clone)]
pub struct RetrievalTrace {
    pub list: RankedList,
    /// Scored candidate passages, in passage id order.
    pub passage_scores: Vec<(u32, f32)>,
}

impl RetrievalTrace {
    /// Candidate passages belonging to `doc_id`.
    pub fn passages_of<'a>(
        &'a self,
        index: &'a TokenIndex,
        doc_id: &'a str,
    ) -> impl Iterator<Item = u32> + 'a {
        self.passage_scores
            .iter()
            .map(|&(p, _)| p)
            .filter(move |&p| index.passage(p).doc_id == doc_id)
    }
}

/// Runs queries against one index with one encoder.
pub struct Searcher<'a> {
    index: &'a TokenIndex,
    encoder: &'a dyn TokenEncoder,
    query_maxlen: usize,
}

impl<'a> Searcher<'a> {
    pub fn new(
        index: &'a TokenIndex,
        encoder: &'a dyn TokenEncoder,
        query_maxlen: usize,
    ) -> Result<Self> {
        if encoder.dim() != index.dim() {
            return Err(Error::DimensionMismatch {
                expected: index.dim(),
                actual: encoder.dim(),
            });
        }
        if query_maxlen == 0 {
            return Err(Error::InvalidParameter("query_maxlen must be at least 1".into()));
        }
        Ok(Searcher {
            index,
            encoder,
            query_maxlen,
        })
    }

    pub fn index(&self) -> &'a TokenIndex {
        self.index
    }

    pub fn encode_query(&self, text: &str) -> Result<EmbeddingMatrix> {
        encode_query(text, self.encoder, self.query_maxlen)
    }

    /// Union of the passages of each row's nearest stored tokens.
    pub fn candidate_passages(
        &self,
        query: &EmbeddingMatrix,
        params: &RetrievalParams,
    ) -> Result<BTreeSet<u32>> {
        params.validate()?;
        let mut out = BTreeSet::new();
        for q in query.iter_rows() {
            let hits = if params.exact_mode {
                self.index.exact_search(q, params.ann_k)?
            } else {
                self.index.ann_search(q, params.ann_k, params.nprobe)?
            };
            out.extend(
                hits.into_iter()
                    .map(|(t, _)| self.index.postings()[t as usize].passage_id),
            );
        }
        Ok(out)
    }

    pub fn retrieve(
        &self,
        query_id: &str,
        text: &str,
        params: &RetrievalParams,
    ) -> Result<RankedList> {
        let q = self.encode_query(text)?;
        Ok(self.retrieve_encoded(query_id, &q, params)?.list)
    }

    pub fn retrieve_encoded(
        &self,
        query_id: &str,
        query: &EmbeddingMatrix,
        params: &RetrievalParams,
    ) -> Result<RetrievalTrace> {
        self.check_dim(query)?;
        let candidates = self.candidate_passages(query, params)?;
        Ok(self.rank(query_id, &candidates, params, |rows| {
            maxsim_rows(query, rows)
        }))
    }

    /// Retrieval for a query expanded with weighted feedback rows.
    ///
    /// Each passage scores `maxsim(query, P) + beta * maxsim(feedback, P)`.
    /// Feedback rows issue their own candidate probes unless `beta` is zero,
    /// in which case they carry no weight and are left out entirely.
    pub fn retrieve_expanded(
        &self,
        query_id: &str,
        query: &EmbeddingMatrix,
        feedback: &EmbeddingMatrix,
        beta: f32,
        params: &RetrievalParams,
    ) -> Result<RetrievalTrace> {
        self.check_dim(query)?;
        self.check_dim(feedback)?;
        let mut candidates = self.candidate_passages(query, params)?;
        if beta != 0.0 {
            candidates.extend(self.candidate_passages(feedback, params)?);
        }
        Ok(self.rank(query_id, &candidates, params, |rows| {
            maxsim_rows(query, rows) + beta * maxsim_rows(feedback, rows)
        }))
    }

    fn check_dim(&self, m: &EmbeddingMatrix) -> Result<()> {
        if m.dim() != self.index.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.index.dim(),
                actual: m.dim(),
            });
        }
        Ok(())
    }

    fn rank<F>(
        &self,
        query_id: &str,
        candidates: &BTreeSet<u32>,
        params: &RetrievalParams,
        score: F,
    ) -> RetrievalTrace
    where
        F: Fn(&[f32]) -> f32 + Sync,
    {
        let ids: Vec<u32> = candidates.iter().copied().collect();
        let passage_scores: Vec<(u32, f32)> = ids
            .par_iter()
            .map(|&p| (p, score(self.index.passage_vectors(p))))
            .collect();
        let mut best: BTreeMap<&str, f32> = BTreeMap::new();
        for &(p, s) in &passage_scores {
            let doc = self.index.passage(p).doc_id.as_str();
            best.entry(doc)
                .and_modify(|b| *b = b.max(s))
                .or_insert(s);
        }
        let scores = best.into_iter().map(|(d, s)| (d.to_owned(), s)).collect();
        RetrievalTrace {
            list: RankedList::from_scores(query_id, scores, params.top_docs),
            passage_scores,
        }
    }
}
