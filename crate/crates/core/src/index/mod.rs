//! Token-level vector store with an IVF coarse quantizer.
//!
//! Every token of every passage is stored as one binary16 row, widened to
//! `f32` for arithmetic. Each row carries its provenance (passage, position,
//! vocabulary id). Search is either exhaustive ([`TokenIndex::exact_search`])
//! or restricted to the inverted lists of the `nprobe` coarse centroids
//! closest to the query ([`TokenIndex::ann_search`]). Both score with the same
//! dot-product kernel over the same widened rows, so any token returned by
//! the approximate path carries exactly the score the exhaustive path gives
//! it.
//!
//! Results are ordered by descending score, ties broken by ascending token
//! index.

mod persist;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::ops::Range;

use half::f16;
use rayon::prelude::*;

use crate::encoder::{encode_tokens, EmbeddingMatrix, EncoderConfig, TokenEncoder, Vocabulary};
use crate::error::{Error, Result};
use crate::kmeans;
use crate::linalg::{self, dot};
use crate::seed;
use crate::segmenter::{segment_corpus, DocumentRecord, SegmenterConfig};

pub use persist::{IndexManifest, FORMAT_VERSION};

pub const DEFAULT_NPROBE: usize = 8;
/// Training points drawn per coarse centroid when fitting the IVF.
pub const TRAIN_POINTS_PER_CLUSTER: usize = 40;

/// A stored token's provenance. Its global index is its position in
/// [`TokenIndex::postings`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenPosting {
    pub passage_id: u32,
    pub position: u32,
    pub token_id: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassageMeta {
    pub passage_id: u32,
    pub doc_id: String,
    pub offset: usize,
    /// Global token indices of this passage's rows.
    pub tokens: Range<usize>,
}

/// Inverted-file coarse quantizer.
#[derive(Debug, Clone, PartialEq)]
pub struct IvfIndex {
    dim: usize,
    centroids: Vec<f32>,
    assignments: Vec<u32>,
    lists: Vec<Vec<u32>>,
}

impl IvfIndex {
    fn from_parts(dim: usize, centroids: Vec<f32>, assignments: Vec<u32>) -> Self {
        let n_clusters = centroids.len() / dim;
        let mut lists = vec![Vec::new(); n_clusters];
        for (i, &c) in assignments.iter().enumerate() {
            lists[c as usize].push(i as u32);
        }
        IvfIndex {
            dim,
            centroids,
            assignments,
            lists,
        }
    }

    pub fn n_clusters(&self) -> usize {
        self.lists.len()
    }

    pub fn centroid(&self, c: usize) -> &[f32] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    pub fn assignments(&self) -> &[u32] {
        &self.assignments
    }

    pub fn list(&self, c: usize) -> &[u32] {
        &self.lists[c]
    }

    /// The `nprobe` clusters closest to `q` by squared L2, ties to the lower id.
    pub fn probe(&self, q: &[f32], nprobe: usize) -> Vec<usize> {
        let mut order: Vec<(f32, usize)> = self
            .centroids
            .chunks_exact(self.dim)
            .map(|c| linalg::squared_distance(q, c))
            .enumerate()
            .map(|(i, d)| (d, i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        order.truncate(nprobe);
        order.into_iter().map(|(_, c)| c).collect()
    }
}

/// Passage-level document frequencies.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyStats {
    pub n_passages: u64,
    pub df: BTreeMap<u32, u32>,
}

impl FrequencyStats {
    pub fn df(&self, token_id: u32) -> u32 {
        self.df.get(&token_id).copied().unwrap_or(0)
    }

    /// `ln((n_passages + 1) / (df + 1))`; unseen tokens have `df = 0`.
    pub fn idf(&self, token_id: u32) -> f64 {
        let n = self.n_passages as f64;
        let df = f64::from(self.df(token_id));
        ((n + 1.0) / (df + 1.0)).ln()
    }
}

/// Which encoder produced the stored rows. Queries must use the same one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderProvenance {
    pub config: EncoderConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct BuildOptions {
    pub encoder: EncoderConfig,
    pub segmenter: SegmenterConfig,
    /// Coarse centroids; `None` means `ceil(sqrt(total_tokens))`.
    pub n_clusters: Option<usize>,
    /// Root seed. The IVF draws from its own named stream.
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TokenIndex {
    dim: usize,
    stored: Vec<f16>,
    vectors: Vec<f32>,
    postings: Vec<TokenPosting>,
    passages: Vec<PassageMeta>,
    n_docs: usize,
    ivf: IvfIndex,
    stats: FrequencyStats,
    vocab: Vocabulary,
    provenance: EncoderProvenance,
    segmenter: SegmenterConfig,
}

/// Segments, encodes and indexes `corpus`.
///
/// Empty documents are skipped with a warning; a corpus with nothing left is
/// an error. `n_clusters` above the token count is clamped with a warning.
pub fn build_index(
    corpus: &[DocumentRecord],
    encoder: &dyn TokenEncoder,
    opts: &BuildOptions,
) -> Result<TokenIndex> {
    opts.encoder.validate()?;
    if encoder.dim() != opts.encoder.dim {
        return Err(Error::DimensionMismatch {
            expected: opts.encoder.dim,
            actual: encoder.dim(),
        });
    }
    let dim = opts.encoder.dim;
    let segmented = segment_corpus(corpus, &opts.segmenter)?;

    let encoded: Vec<EmbeddingMatrix> = segmented
        .passages
        .par_iter()
        .map(|p| encode_tokens(&p.tokens.tokens, encoder))
        .collect::<Result<_>>()?;

    let total: usize = segmented.passages.iter().map(|p| p.tokens.len()).sum();
    let mut stored = Vec::with_capacity(total * dim);
    let mut postings = Vec::with_capacity(total);
    let mut passages = Vec::with_capacity(segmented.passages.len());
    let mut df: BTreeMap<u32, u32> = BTreeMap::new();
    let mut n_docs = 0usize;
    for (p, rows) in segmented.passages.iter().zip(&encoded) {
        if passages.last().map(|m: &PassageMeta| m.doc_id != p.doc_id).unwrap_or(true) {
            n_docs += 1;
        }
        let start = postings.len();
        stored.extend(rows.as_slice().iter().map(|&x| f16::from_f32(x)));
        for (pos, &token_id) in p.tokens.token_ids.iter().enumerate() {
            postings.push(TokenPosting {
                passage_id: p.passage_id,
                position: pos as u32,
                token_id,
            });
        }
        let mut distinct = p.tokens.token_ids.clone();
        distinct.sort_unstable();
        distinct.dedup();
        for t in distinct {
            *df.entry(t).or_insert(0) += 1;
        }
        passages.push(PassageMeta {
            passage_id: p.passage_id,
            doc_id: p.doc_id.clone(),
            offset: p.offset,
            tokens: start..postings.len(),
        });
    }
    let vectors: Vec<f32> = stored.iter().map(|x| x.to_f32()).collect();

    let requested = opts
        .n_clusters
        .unwrap_or_else(|| (total as f64).sqrt().ceil() as usize);
    if requested == 0 {
        return Err(Error::InvalidParameter("n_clusters must be at least 1".into()));
    }
    let n_clusters = if requested > total {
        log::warn!("n_clusters {requested} exceeds {total} stored tokens; clamping");
        total
    } else {
        requested
    };
    let ivf = train_ivf(&vectors, dim, n_clusters, opts.seed);

    let stats = FrequencyStats {
        n_passages: passages.len() as u64,
        df,
    };
    Ok(TokenIndex {
        dim,
        stored,
        vectors,
        postings,
        passages,
        n_docs,
        ivf,
        stats,
        vocab: segmented.vocab,
        provenance: EncoderProvenance {
            config: opts.encoder,
            seed: opts.seed,
        },
        segmenter: opts.segmenter,
    })
}

fn train_ivf(vectors: &[f32], dim: usize, n_clusters: usize, seed: u64) -> IvfIndex {
    let total = vectors.len() / dim;
    let mut rng = seed::stream_rng(seed, seed::IVF_STREAM);
    let sample_size = total.min(n_clusters.saturating_mul(TRAIN_POINTS_PER_CLUSTER));
    let km = if sample_size == total {
        kmeans::lloyd(vectors, dim, n_clusters, kmeans::DEFAULT_ITERATIONS, &mut rng)
    } else {
        let mut picks = rand::seq::index::sample(&mut rng, total, sample_size).into_vec();
        picks.sort_unstable();
        let mut train = Vec::with_capacity(sample_size * dim);
        for i in picks {
            train.extend_from_slice(&vectors[i * dim..(i + 1) * dim]);
        }
        kmeans::lloyd(&train, dim, n_clusters, kmeans::DEFAULT_ITERATIONS, &mut rng)
    };
    let assignments = kmeans::assign(vectors, &km.centroids, dim);
    IvfIndex::from_parts(dim, km.centroids, assignments)
}

/// Descending score, then ascending token index.
pub(crate) fn rank_order(a: &(u32, f32), b: &(u32, f32)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

fn top_k(mut hits: Vec<(u32, f32)>, k: usize) -> Vec<(u32, f32)> {
    if k == 0 {
        return Vec::new();
    }
    if hits.len() > k {
        hits.select_nth_unstable_by(k - 1, rank_order);
        hits.truncate(k);
    }
    hits.sort_unstable_by(rank_order);
    hits
}

impl TokenIndex {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn total_tokens(&self) -> usize {
        self.postings.len()
    }

    pub fn n_passages(&self) -> usize {
        self.passages.len()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn postings(&self) -> &[TokenPosting] {
        &self.postings
    }

    pub fn passages(&self) -> &[PassageMeta] {
        &self.passages
    }

    pub fn passage(&self, passage_id: u32) -> &PassageMeta {
        &self.passages[passage_id as usize]
    }

    pub fn ivf(&self) -> &IvfIndex {
        &self.ivf
    }

    pub fn stats(&self) -> &FrequencyStats {
        &self.stats
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn encoder_provenance(&self) -> EncoderProvenance {
        self.provenance
    }

    pub fn segmenter_config(&self) -> SegmenterConfig {
        self.segmenter
    }

    /// Widened row of the token at `idx`.
    pub fn vector(&self, idx: usize) -> &[f32] {
        &self.vectors[idx * self.dim..(idx + 1) * self.dim]
    }

    /// Stored binary16 row of the token at `idx`.
    pub fn stored_vector(&self, idx: usize) -> &[f16] {
        &self.stored[idx * self.dim..(idx + 1) * self.dim]
    }

    /// Widened rows of one passage, row-major.
    pub fn passage_vectors(&self, passage_id: u32) -> &[f32] {
        let r = &self.passage(passage_id).tokens;
        &self.vectors[r.start * self.dim..r.end * self.dim]
    }

    pub fn passage_matrix(&self, passage_id: u32) -> EmbeddingMatrix {
        EmbeddingMatrix::from_vec(self.dim, self.passage_vectors(passage_id).to_vec())
            .expect("passage rows are whole rows")
    }

    fn check_query(&self, q: &[f32]) -> Result<bool> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: q.len(),
            });
        }
        Ok(!linalg::is_zero(q))
    }

    /// Scans every stored token.
    pub fn exact_search(&self, q: &[f32], k: usize) -> Result<Vec<(u32, f32)>> {
        if !self.check_query(q)? || k == 0 {
            return Ok(Vec::new());
        }
        let hits = self
            .vectors
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(i, row)| (i as u32, dot(q, row)))
            .collect();
        Ok(top_k(hits, k))
    }

    /// Scans the inverted lists of the `nprobe` nearest coarse centroids.
    ///
    /// `nprobe` above the cluster count is clamped. A zero query vector
    /// returns no hits.
    pub fn ann_search(&self, q: &[f32], k: usize, nprobe: usize) -> Result<Vec<(u32, f32)>> {
        if nprobe == 0 {
            return Err(Error::InvalidParameter("nprobe must be at least 1".into()));
        }
        if !self.check_query(q)? || k == 0 {
            return Ok(Vec::new());
        }
        let nprobe = nprobe.min(self.ivf.n_clusters());
        let mut hits = Vec::new();
        for c in self.ivf.probe(q, nprobe) {
            hits.extend(
                self.ivf
                    .list(c)
                    .iter()
                    .map(|&i| (i, dot(q, self.vector(i as usize)))),
            );
        }
        Ok(top_k(hits, k))
    }

    pub fn token_idf(&self, token_id: u32) -> f64 {
        self.stats.idf(token_id)
    }

    pub fn footprint_report(&self) -> IndexManifest {
        persist::manifest_of(self)
    }
}
