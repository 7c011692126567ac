//! Late-interaction retrieval over token embeddings.
//!
//! Documents are split into overlapping passages, every passage token is
//! embedded and stored at half precision, and queries are answered in two
//! stages: approximate nearest-neighbour search over stored tokens proposes
//! candidate passages, which are then scored exactly with MaxSim
//!
//! ```text
//! score(Q, P) = Σ_i max_j  q_i · p_j
//! ```
//!
//! A document scores as its best passage. Embedding-space pseudo-relevance
//! feedback and a TREC-style evaluation harness sit on top.
//!
//! ```
//! use latesearch::encoder::{EncoderConfig, ReferenceEncoder};
//! use latesearch::index::{build_index, BuildOptions};
//! use latesearch::retrieval::{RetrievalParams, Searcher};
//! use latesearch::segmenter::DocumentRecord;
//!
//! let docs = vec![
//!     DocumentRecord::new("d1", "an oil spill off the coast"),
//!     DocumentRecord::new("d2", "spring floods along the river"),
//! ];
//! let cfg = EncoderConfig::default();
//! let encoder = ReferenceEncoder::new(cfg.dim, 7)?;
//! let index = build_index(&docs, &encoder, &BuildOptions::default())?;
//!
//! let searcher = Searcher::new(&index, &encoder, cfg.query_maxlen)?;
//! let ranked = searcher.retrieve("q1", "oil spill", &RetrievalParams::default())?;
//! assert_eq!(ranked.entries[0].doc_id, "d1");
//! # Ok::<(), latesearch::Error>(())
//! ```

pub mod encoder;
mod error;
pub mod eval;
pub mod index;
pub mod kmeans;
pub mod linalg;
pub mod prf;
pub mod queryprep;
pub mod retrieval;
pub mod seed;
pub mod segmenter;

pub use error::{Error, Result};
