//! On-disk layout of a [`TokenIndex`] directory.
//!
//! | file             | contents                                                             |
//! |------------------|----------------------------------------------------------------------|
//! | `manifest`       | `key=value` lines                                                    |
//! | `embeddings.bin` | `LSX1`, u32 version, u32 dim, u64 count, count x dim binary16        |
//! | `postings.bin`   | count x (u32 passage_id, u32 position, u32 token_id)                 |
//! | `passages.tsv`   | `passage_id \t doc_id \t offset \t n_tokens`                         |
//! | `ivf.bin`        | u32 n_clusters, n_clusters x dim f32 centroids, count x u32 clusters |
//! | `stats.bin`      | u64 n_passages, then (u32 token_id, u32 df) pairs                    |
//! | `vocab.tsv`      | `token_id \t token`                                                  |
//!
//! All integers and floats are little-endian.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use half::f16;

use super::{EncoderProvenance, FrequencyStats, IvfIndex, PassageMeta, TokenIndex, TokenPosting};
use crate::encoder::{EncoderConfig, Vocabulary};
use crate::error::{Error, Result};
use crate::segmenter::SegmenterConfig;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"LSX1";

const MANIFEST: &str = "manifest";
const EMBEDDINGS: &str = "embeddings.bin";
const POSTINGS: &str = "postings.bin";
const PASSAGES: &str = "passages.tsv";
const IVF: &str = "ivf.bin";
const STATS: &str = "stats.bin";
const VOCAB: &str = "vocab.tsv";

/// Summary of an index and its storage footprint.
///
/// `storage_bytes` is the embedding payload alone: `total_tokens * dim * 2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexManifest {
    pub format_version: u32,
    pub dim: usize,
    pub total_tokens: usize,
    pub n_passages: usize,
    pub n_docs: usize,
    pub n_clusters: usize,
    pub storage_bytes: u64,
    /// Postings, passage table, frequency stats and vocabulary.
    pub metadata_bytes: u64,
    pub ivf_bytes: u64,
    pub encoder: EncoderConfig,
    pub seed: u64,
    pub segmenter: SegmenterConfig,
}

impl fmt::Display for IndexManifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "format_version={}", self.format_version)?;
        writeln!(f, "dim={}", self.dim)?;
        writeln!(f, "total_tokens={}", self.total_tokens)?;
        writeln!(f, "n_passages={}", self.n_passages)?;
        writeln!(f, "n_docs={}", self.n_docs)?;
        writeln!(f, "n_clusters={}", self.n_clusters)?;
        writeln!(f, "storage_bytes={}", self.storage_bytes)?;
        writeln!(f, "metadata_bytes={}", self.metadata_bytes)?;
        writeln!(f, "ivf_bytes={}", self.ivf_bytes)?;
        writeln!(f, "encoder_mode={}", self.encoder.mode)?;
        writeln!(f, "query_maxlen={}", self.encoder.query_maxlen)?;
        writeln!(f, "seed={}", self.seed)?;
        writeln!(f, "window_len={}", self.segmenter.window_len)?;
        writeln!(f, "stride={}", self.segmenter.stride)
    }
}

impl IndexManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, reason: String| Error::Parse {
            what: "manifest",
            line,
            reason,
        };
        let mut kv = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(i + 1, format!("expected key=value, got {line:?}")))?;
            kv.insert(k.trim().to_owned(), v.trim().to_owned());
        }
        fn get<T: std::str::FromStr>(kv: &BTreeMap<String, String>, key: &str) -> Result<T> {
            let raw = kv.get(key).ok_or_else(|| Error::Parse {
                what: "manifest",
                line: 0,
                reason: format!("missing key {key}"),
            })?;
            raw.parse().map_err(|_| Error::Parse {
                what: "manifest",
                line: 0,
                reason: format!("bad value {raw:?} for {key}"),
            })
        }
        let mode: String = get(&kv, "encoder_mode")?;
        Ok(IndexManifest {
            format_version: get(&kv, "format_version")?,
            dim: get(&kv, "dim")?,
            total_tokens: get(&kv, "total_tokens")?,
            n_passages: get(&kv, "n_passages")?,
            n_docs: get(&kv, "n_docs")?,
            n_clusters: get(&kv, "n_clusters")?,
            storage_bytes: get(&kv, "storage_bytes")?,
            metadata_bytes: get(&kv, "metadata_bytes")?,
            ivf_bytes: get(&kv, "ivf_bytes")?,
            encoder: EncoderConfig {
                dim: get(&kv, "dim")?,
                query_maxlen: get(&kv, "query_maxlen")?,
                mode: mode.parse()?,
            },
            seed: get(&kv, "seed")?,
            segmenter: SegmenterConfig {
                window_len: get(&kv, "window_len")?,
                stride: get(&kv, "stride")?,
            },
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse(&text)
    }
}

fn embeddings_bytes(idx: &TokenIndex) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + idx.stored.len() * 2);
    out.extend_from_slice(MAGIC);
    out.write_u32::<LE>(FORMAT_VERSION).unwrap();
    out.write_u32::<LE>(idx.dim as u32).unwrap();
    out.write_u64::<LE>(idx.postings.len() as u64).unwrap();
    for x in &idx.stored {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn postings_bytes(idx: &TokenIndex) -> Vec<u8> {
    let mut out = Vec::with_capacity(idx.postings.len() * 12);
    for p in &idx.postings {
        out.write_u32::<LE>(p.passage_id).unwrap();
        out.write_u32::<LE>(p.position).unwrap();
        out.write_u32::<LE>(p.token_id).unwrap();
    }
    out
}

fn passages_tsv(idx: &TokenIndex) -> Vec<u8> {
    let mut out = String::new();
    for p in &idx.passages {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            p.passage_id,
            p.doc_id,
            p.offset,
            p.tokens.len()
        ));
    }
    out.into_bytes()
}

fn ivf_bytes(idx: &TokenIndex) -> Vec<u8> {
    let ivf = &idx.ivf;
    let mut out = Vec::with_capacity(4 + ivf.centroids.len() * 4 + ivf.assignments.len() * 4);
    out.write_u32::<LE>(ivf.n_clusters() as u32).unwrap();
    for &x in &ivf.centroids {
        out.write_f32::<LE>(x).unwrap();
    }
    for &a in &ivf.assignments {
        out.write_u32::<LE>(a).unwrap();
    }
    out
}

fn stats_bytes(idx: &TokenIndex) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + idx.stats.df.len() * 8);
    out.write_u64::<LE>(idx.stats.n_passages).unwrap();
    for (&t, &df) in &idx.stats.df {
        out.write_u32::<LE>(t).unwrap();
        out.write_u32::<LE>(df).unwrap();
    }
    out
}

fn vocab_tsv(idx: &TokenIndex) -> Vec<u8> {
    let mut out = String::new();
    for (i, t) in idx.vocab.tokens().iter().enumerate() {
        out.push_str(&format!("{i}\t{t}\n"));
    }
    out.into_bytes()
}

pub(super) fn manifest_of(idx: &TokenIndex) -> IndexManifest {
    let metadata = postings_bytes(idx).len()
        + passages_tsv(idx).len()
        + stats_bytes(idx).len()
        + vocab_tsv(idx).len();
    IndexManifest {
        format_version: FORMAT_VERSION,
        dim: idx.dim,
        total_tokens: idx.postings.len(),
        n_passages: idx.passages.len(),
        n_docs: idx.n_docs,
        n_clusters: idx.ivf.n_clusters(),
        storage_bytes: (idx.stored.len() * 2) as u64,
        metadata_bytes: metadata as u64,
        ivf_bytes: (4 + idx.ivf.centroids.len() * 4 + idx.ivf.assignments.len() * 4) as u64,
        encoder: idx.provenance.config,
        seed: idx.provenance.seed,
        segmenter: idx.segmenter,
    }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

fn read_file(dir: &Path, name: &str) -> Result<Vec<u8>> {
    let path = dir.join(name);
    fs::read(&path).map_err(|e| Error::io(&path, e))
}

fn corrupt(file: &'static str, reason: impl Into<String>) -> Error {
    Error::CorruptIndex {
        file,
        reason: reason.into(),
    }
}

impl TokenIndex {
    /// Writes the index into `dir`.
    ///
    /// An existing non-empty directory is only replaced when `overwrite` is set.
    pub fn save(&self, dir: &Path, overwrite: bool) -> Result<()> {
        if dir.exists() {
            let non_empty = fs::read_dir(dir)
                .map_err(|e| Error::io(dir, e))?
                .next()
                .is_some();
            if non_empty {
                if !overwrite {
                    return Err(Error::IndexExists(dir.to_path_buf()));
                }
                fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
        }
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(dir, EMBEDDINGS, &embeddings_bytes(self))?;
        write_file(dir, POSTINGS, &postings_bytes(self))?;
        write_file(dir, PASSAGES, &passages_tsv(self))?;
        write_file(dir, IVF, &ivf_bytes(self))?;
        write_file(dir, STATS, &stats_bytes(self))?;
        write_file(dir, VOCAB, &vocab_tsv(self))?;
        write_file(dir, MANIFEST, self.footprint_report().to_string().as_bytes())
    }

    pub fn load(dir: &Path) -> Result<TokenIndex> {
        let manifest = IndexManifest::load(dir)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(corrupt(
                "manifest",
                format!("unsupported format version {}", manifest.format_version),
            ));
        }

        let (dim, stored) = read_embeddings(&read_file(dir, EMBEDDINGS)?)?;
        let count = stored.len() / dim;
        let postings = read_postings(&read_file(dir, POSTINGS)?, count)?;
        let passages = read_passages(&read_file(dir, PASSAGES)?, &postings)?;
        let ivf = read_ivf(&read_file(dir, IVF)?, dim, count)?;
        let stats = read_stats(&read_file(dir, STATS)?)?;
        let vocab = read_vocab(&read_file(dir, VOCAB)?)?;

        if manifest.dim != dim || manifest.total_tokens != count {
            return Err(corrupt("manifest", "dim or token count disagrees with embeddings.bin"));
        }
        if stats.n_passages != passages.len() as u64 {
            return Err(corrupt(STATS, "passage count disagrees with passages.tsv"));
        }
        let mut n_docs = 0;
        for (i, p) in passages.iter().enumerate() {
            if i == 0 || passages[i - 1].doc_id != p.doc_id {
                n_docs += 1;
            }
        }
        let vectors = stored.iter().map(|x| x.to_f32()).collect();
        Ok(TokenIndex {
            dim,
            stored,
            vectors,
            postings,
            passages,
            n_docs,
            ivf,
            stats,
            vocab,
            provenance: EncoderProvenance {
                config: manifest.encoder,
                seed: manifest.seed,
            },
            segmenter: manifest.segmenter,
        })
    }
}

fn read_embeddings(bytes: &[u8]) -> Result<(usize, Vec<f16>)> {
    let mut r = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| corrupt(EMBEDDINGS, "truncated header"))?;
    if &magic != MAGIC {
        return Err(corrupt(EMBEDDINGS, "bad magic"));
    }
    let header = (|| -> std::io::Result<(u32, u32, u64)> {
        Ok((r.read_u32::<LE>()?, r.read_u32::<LE>()?, r.read_u64::<LE>()?))
    })()
    .map_err(|_| corrupt(EMBEDDINGS, "truncated header"))?;
    let (version, dim, count) = header;
    if version != FORMAT_VERSION {
        return Err(corrupt(EMBEDDINGS, format!("unsupported version {version}")));
    }
    let dim = dim as usize;
    let payload = &bytes[20..];
    if dim == 0 || payload.len() as u64 != count * dim as u64 * 2 {
        return Err(corrupt(EMBEDDINGS, "payload length disagrees with header"));
    }
    let stored = payload
        .chunks_exact(2)
        .map(|b| f16::from_le_bytes([b[0], b[1]]))
        .collect();
    Ok((dim, stored))
}

fn read_postings(bytes: &[u8], count: usize) -> Result<Vec<TokenPosting>> {
    if bytes.len() != count * 12 {
        return Err(corrupt(POSTINGS, "length is not 12 bytes per stored token"));
    }
    Ok(bytes
        .chunks_exact(12)
        .map(|c| {
            let mut r = Cursor::new(c);
            TokenPosting {
                passage_id: r.read_u32::<LE>().unwrap(),
                position: r.read_u32::<LE>().unwrap(),
                token_id: r.read_u32::<LE>().unwrap(),
            }
        })
        .collect())
}

fn read_passages(bytes: &[u8], postings: &[TokenPosting]) -> Result<Vec<PassageMeta>> {
    let text = std::str::from_utf8(bytes).map_err(|_| corrupt(PASSAGES, "not UTF-8"))?;
    let mut passages: Vec<PassageMeta> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        let parsed = match fields.as_slice() {
            [pid, doc, off, n] => match (pid.parse::<u32>(), off.parse::<usize>(), n.parse::<usize>()) {
                (Ok(p), Ok(o), Ok(n)) => Some((p, *doc, o, n)),
                _ => None,
            },
            _ => None,
        };
        let (pid, doc, offset, n_tokens) =
            parsed.ok_or_else(|| corrupt(PASSAGES, format!("malformed line {}", i + 1)))?;
        if pid as usize != i {
            return Err(corrupt(PASSAGES, format!("passage ids not dense at line {}", i + 1)));
        }
        passages.push(PassageMeta {
            passage_id: pid,
            doc_id: doc.to_owned(),
            offset,
            tokens: 0..n_tokens,
        });
    }
    // Postings are grouped by passage with positions counting up from 0.
    let mut start = 0usize;
    for (pid, p) in passages.iter_mut().enumerate() {
        let mut end = start;
        while end < postings.len() && postings[end].passage_id as usize == pid {
            if postings[end].position as usize != end - start {
                return Err(corrupt(POSTINGS, format!("positions out of order in passage {pid}")));
            }
            end += 1;
        }
        if end == start {
            return Err(corrupt(POSTINGS, format!("passage {pid} has no tokens")));
        }
        if end - start != p.tokens.len() {
            return Err(corrupt(
                PASSAGES,
                format!("passage {pid} lists {} tokens, postings hold {}", p.tokens.len(), end - start),
            ));
        }
        p.tokens = start..end;
        start = end;
    }
    if start != postings.len() {
        return Err(corrupt(POSTINGS, "postings reference unknown passages"));
    }
    Ok(passages)
}

fn read_ivf(bytes: &[u8], dim: usize, count: usize) -> Result<IvfIndex> {
    let mut r = Cursor::new(bytes);
    let n = r
        .read_u32::<LE>()
        .map_err(|_| corrupt(IVF, "truncated header"))? as usize;
    if n == 0 || bytes.len() != 4 + n * dim * 4 + count * 4 {
        return Err(corrupt(IVF, "length disagrees with cluster and token counts"));
    }
    let mut centroids = vec![0f32; n * dim];
    r.read_f32_into::<LE>(&mut centroids).unwrap();
    let mut assignments = vec![0u32; count];
    r.read_u32_into::<LE>(&mut assignments).unwrap();
    if assignments.iter().any(|&a| a as usize >= n) {
        return Err(corrupt(IVF, "assignment to unknown cluster"));
    }
    Ok(IvfIndex::from_parts(dim, centroids, assignments))
}

fn read_stats(bytes: &[u8]) -> Result<FrequencyStats> {
    if bytes.len() < 8 || !(bytes.len() - 8).is_multiple_of(8) {
        return Err(corrupt(STATS, "bad length"));
    }
    let mut r = Cursor::new(bytes);
    let n_passages = r.read_u64::<LE>().unwrap();
    let mut df = BTreeMap::new();
    for _ in 0..(bytes.len() - 8) / 8 {
        let t = r.read_u32::<LE>().unwrap();
        let d = r.read_u32::<LE>().unwrap();
        if d == 0 || u64::from(d) > n_passages {
            return Err(corrupt(STATS, format!("df {d} out of range for token {t}")));
        }
        df.insert(t, d);
    }
    Ok(FrequencyStats { n_passages, df })
}

fn read_vocab(bytes: &[u8]) -> Result<Vocabulary> {
    let text = std::str::from_utf8(bytes).map_err(|_| corrupt(VOCAB, "not UTF-8"))?;
    let mut vocab = Vocabulary::new();
    for (i, line) in text.lines().enumerate() {
        let (id, tok) = line
            .split_once('\t')
            .ok_or_else(|| corrupt(VOCAB, format!("malformed line {}", i + 1)))?;
        if id.parse::<usize>().ok() != Some(i) || vocab.intern(tok) as usize != i {
            return Err(corrupt(VOCAB, format!("ids not dense at line {}", i + 1)));
        }
    }
    Ok(vocab)
}
