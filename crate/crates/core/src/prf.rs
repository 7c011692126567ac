//! Pseudo-relevance feedback in embedding space.
//!
//! After a first retrieval pass, the stored token rows of the top documents'
//! candidate passages are clustered. Each centroid is mapped to its nearest
//! stored token and ranked by that token's IDF; the best `n_fb_embs`
//! centroids join the query as feedback rows weighted by `beta`, and
//! retrieval runs again.

use rand::Rng;

use crate::encoder::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::index::TokenIndex;
use crate::kmeans;
use crate::linalg;
use crate::retrieval::{RankedList, RetrievalParams, RetrievalTrace, Searcher};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrfParams {
    pub fb_docs: usize,
    pub k_clusters: usize,
    pub n_fb_embs: usize,
    pub beta: f32,
}

impl Default for PrfParams {
    fn default() -> Self {
        PrfParams {
            fb_docs: 3,
            k_clusters: 24,
            n_fb_embs: 10,
            beta: 1.0,
        }
    }
}

impl PrfParams {
    pub fn validate(&self) -> Result<()> {
        if self.fb_docs == 0 || self.k_clusters == 0 {
            return Err(Error::InvalidParameter(
                "fb_docs and k_clusters must be at least 1".into(),
            ));
        }
        if self.n_fb_embs > self.k_clusters {
            return Err(Error::InvalidParameter(format!(
                "n_fb_embs {} exceeds k_clusters {}",
                self.n_fb_embs, self.k_clusters
            )));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "beta must be a non-negative number, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedQuery {
    pub original: EmbeddingMatrix,
    /// Unit rows, best-ranked first.
    pub fb_embs: EmbeddingMatrix,
    pub beta: f32,
}

/// Clusters feedback token rows into at most `k` unit centroids.
///
/// `k` is clamped, with a warning, to the number of rows.
pub fn cluster_feedback<R: Rng + ?Sized>(
    tokens: &EmbeddingMatrix,
    k: usize,
    rng: &mut R,
) -> Result<EmbeddingMatrix> {
    if tokens.is_empty() {
        return Err(Error::InvalidParameter("no feedback token rows to cluster".into()));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let k = if k > tokens.rows() {
        log::warn!("{} feedback rows for {k} clusters; clamping", tokens.rows());
        tokens.rows()
    } else {
        k
    };
    let km = kmeans::lloyd(tokens.as_slice(), tokens.dim(), k, kmeans::DEFAULT_ITERATIONS, rng);
    let mut centroids = EmbeddingMatrix::from_vec(tokens.dim(), km.centroids)?;
    for c in 0..centroids.rows() {
        linalg::normalize(centroids.row_mut(c));
    }
    Ok(centroids)
}

/// Orders centroids by the IDF of their nearest stored token, highest first,
/// ties by centroid index. Zero centroids have no nearest token and go last.
pub fn rank_centroids(centroids: &EmbeddingMatrix, index: &TokenIndex) -> Result<Vec<usize>> {
    let mut keyed = Vec::with_capacity(centroids.rows());
    for (c, row) in centroids.iter_rows().enumerate() {
        let idf = match index.exact_search(row, 1)?.first() {
            Some(&(t, _)) => index.token_idf(index.postings()[t as usize].token_id),
            None => f64::NEG_INFINITY,
        };
        keyed.push((idf, c));
    }
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(keyed.into_iter().map(|(_, c)| c).collect())
}

/// Stored rows of the candidate passages of the top `fb_docs` documents,
/// documents in rank order and passages in id order.
pub fn feedback_pool(trace: &RetrievalTrace, index: &TokenIndex, fb_docs: usize) -> EmbeddingMatrix {
    let mut pool = EmbeddingMatrix::new(index.dim());
    for e in trace.list.entries.iter().take(fb_docs) {
        for p in trace.passages_of(index, &e.doc_id) {
            let rows = EmbeddingMatrix::from_vec(index.dim(), index.passage_vectors(p).to_vec())
                .expect("whole rows");
            pool.extend(&rows).expect("same dim");
        }
    }
    pool
}

/// Builds the expanded query from a first-pass trace.
pub fn expand_query<R: Rng + ?Sized>(
    original: &EmbeddingMatrix,
    first_pass: &RetrievalTrace,
    index: &TokenIndex,
    params: &PrfParams,
    rng: &mut R,
) -> Result<ExpandedQuery> {
    params.validate()?;
    let mut fb_embs = EmbeddingMatrix::new(index.dim());
    if params.n_fb_embs > 0 {
        let pool = feedback_pool(first_pass, index, params.fb_docs);
        let centroids = cluster_feedback(&pool, params.k_clusters, rng)?;
        for c in rank_centroids(&centroids, index)?.into_iter().take(params.n_fb_embs) {
            fb_embs.push_row(centroids.row(c))?;
        }
    }
    Ok(ExpandedQuery {
        original: original.clone(),
        fb_embs,
        beta: params.beta,
    })
}

#[derive(Debug, Clone)]
pub struct PrfOutcome {
    pub first_pass: RankedList,
    /// `None` when the first pass retrieved nothing.
    pub expanded: Option<ExpandedQuery>,
    pub list: RankedList,
}

/// Retrieve, expand with feedback rows, retrieve again.
///
/// Clustering draws from the PRF stream of `seed`, restarted for every query
/// so results do not depend on query order.
pub fn prf_retrieve(
    searcher: &Searcher<'_>,
    query_id: &str,
    text: &str,
    retrieval: &RetrievalParams,
    prf: &PrfParams,
    seed: u64,
) -> Result<PrfOutcome> {
    prf.validate()?;
    let original = searcher.encode_query(text)?;
    let first = searcher.retrieve_encoded(query_id, &original, retrieval)?;
    if first.list.is_empty() {
        log::warn!("query {query_id:?}: first pass retrieved nothing; skipping feedback");
        return Ok(PrfOutcome {
            first_pass: first.list.clone(),
            expanded: None,
            list: first.list,
        });
    }
    let mut rng = seed::stream_rng(seed, seed::PRF_STREAM);
    let expanded = expand_query(&original, &first, searcher.index(), prf, &mut rng)?;
    let second = searcher.retrieve_expanded(
        query_id,
        &expanded.original,
        &expanded.fb_embs,
        expanded.beta,
        retrieval,
    )?;
    Ok(PrfOutcome {
        first_pass: first.list,
        expanded: Some(expanded),
        list: second.list,
    })
}
