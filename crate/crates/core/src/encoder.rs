//! Token embeddings: the contract every scoring path consumes.
//!
//! An encoder turns a token string into a unit vector of fixed dimension.
//! Two implementations ship here. [`ReferenceEncoder`] derives a vector from a
//! seeded hash of the token, which is deterministic on every platform and
//! needs no model. [`EmbeddingTable`] serves vectors produced out of process
//! by a real encoder, read from a sidecar file.
//!
//! Queries are always padded to `query_maxlen` rows. Padding rows are exactly
//! zero, so they add nothing to a MaxSim score.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use half::f16;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg;

pub const DEFAULT_DIM: usize = 128;
pub const DEFAULT_QUERY_MAXLEN: usize = 32;
pub const MIN_DIM: usize = 8;

/// Row-per-token matrix of embeddings.
///
/// Rows are either unit vectors or all-zero mask rows.
#[derive(Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl fmt::Debug for EmbeddingMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EmbeddingMatrix")
            .field("dim", &self.dim)
            .field("rows", &self.rows())
            .finish()
    }
}

impl EmbeddingMatrix {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        EmbeddingMatrix {
            dim,
            data: Vec::new(),
        }
    }

    pub fn zeros(rows: usize, dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        EmbeddingMatrix {
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    /// Wraps row-major `data`; its length must be a multiple of `dim`.
    pub fn from_vec(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: data.len(),
            });
        }
        Ok(EmbeddingMatrix { dim, data })
    }

    pub fn from_rows<R: AsRef<[f32]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut m = EmbeddingMatrix::new(dim);
        for r in rows {
            m.push_row(r.as_ref())?;
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn push_row(&mut self, row: &[f32]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    /// Appends every row of `other`.
    pub fn extend(&mut self, other: &EmbeddingMatrix) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: other.dim,
            });
        }
        self.data.extend_from_slice(&other.data);
        Ok(())
    }

    pub fn is_mask_row(&self, i: usize) -> bool {
        linalg::is_zero(self.row(i))
    }

    /// Copy without the all-zero mask rows.
    pub fn without_mask_rows(&self) -> EmbeddingMatrix {
        let mut out = EmbeddingMatrix::new(self.dim);
        for r in self.iter_rows().filter(|r| !linalg::is_zero(r)) {
            out.data.extend_from_slice(r);
        }
        out
    }

    pub fn non_mask_rows(&self) -> usize {
        self.iter_rows().filter(|r| !linalg::is_zero(r)).count()
    }

    /// Keeps the first `rows` rows, then pads with zero rows up to `rows`.
    pub fn fit_rows(&mut self, rows: usize) {
        self.data.resize(rows * self.dim, 0.0);
    }

    /// True when every row is a mask row or has unit norm within `tol`.
    pub fn rows_are_unit_or_mask(&self, tol: f32) -> bool {
        self.iter_rows()
            .all(|r| linalg::is_zero(r) || (linalg::norm(r) - 1.0).abs() <= tol)
    }
}

/// Tokenized text with session-stable vocabulary ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub token_ids: Vec<u32>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens `[start, end)` as a new sequence.
    pub fn slice(&self, start: usize, end: usize) -> TokenSequence {
        TokenSequence {
            tokens: self.tokens[start..end].to_vec(),
            token_ids: self.token_ids[start..end].to_vec(),
        }
    }
}

/// Token string to id map, ids assigned densely in first-seen order.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    ids: HashMap<String, u32>,
    tokens: Vec<String>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = u32::try_from(self.tokens.len()).expect("vocabulary exceeds u32 ids");
        self.ids.insert(token.to_owned(), id);
        self.tokens.push(token.to_owned());
        id
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens in id order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

fn is_word_char(c: char) -> bool {
    // Combining diacritics stay attached to their base letter.
    c.is_alphanumeric() || ('\u{0300}'..='\u{036f}').contains(&c)
}

/// Lowercases `text` and splits it on whitespace and punctuation.
///
/// Every maximal run of alphanumeric characters becomes one token; all other
/// characters are separators and are dropped.
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if is_word_char(c) {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

pub fn tokenize(text: &str, vocab: &mut Vocabulary) -> TokenSequence {
    let tokens = split_words(text);
    let token_ids = tokens.iter().map(|t| vocab.intern(t)).collect();
    TokenSequence { tokens, token_ids }
}

/// Maps a token string to a unit embedding.
pub trait TokenEncoder: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes the unit embedding of `token` into `out` (length `dim`).
    fn embed_token(&self, token: &str, out: &mut [f32]) -> Result<()>;
}

/// Hash-seeded stand-in for a neural encoder.
///
/// The vector for a token is a pure function of `(token, seed, dim)`:
/// SHA-256 of the token bytes and the little-endian seed keys a ChaCha8
/// stream, whose uniform draws in `[-1, 1)` are L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceEncoder {
    dim: usize,
    seed: u64,
}

impl ReferenceEncoder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim < MIN_DIM {
            return Err(Error::InvalidParameter(format!(
                "dim must be at least {MIN_DIM}, got {dim}"
            )));
        }
        Ok(ReferenceEncoder { dim, seed })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl TokenEncoder for ReferenceEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_token(&self, token: &str, out: &mut [f32]) -> Result<()> {
        if out.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: out.len(),
            });
        }
        let mut hasher = Sha256::new();
        hasher.update(token.as_bytes());
        hasher.update(self.seed.to_le_bytes());
        let mut key = [0u8; 32];
        key.copy_from_slice(&hasher.finalize());
        let mut rng = ChaCha8Rng::from_seed(key);
        loop {
            for x in out.iter_mut() {
                *x = rng.random_range(-1.0f32..1.0);
            }
            if linalg::normalize(out) > 0.0 {
                return Ok(());
            }
        }
    }
}

/// Token embeddings loaded from a sidecar file.
///
/// The file starts with `dim=<int> count=<int>`, followed by one
/// `<token>\t<base64>` record per line, where the payload is `dim`
/// little-endian binary16 values. Vectors are normalized on load.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    vectors: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            index: HashMap::new(),
            vectors: Vec::new(),
        }
    }

    /// Adds (or replaces) the vector for `token`, normalizing it.
    pub fn insert(&mut self, token: &str, vector: &[f32]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        let mut v = vector.to_vec();
        if linalg::normalize(&mut v) == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "zero embedding for token {token:?}"
            )));
        }
        match self.index.get(token) {
            Some(&slot) => self.vectors[slot * self.dim..(slot + 1) * self.dim].copy_from_slice(&v),
            None => {
                self.index.insert(token.to_owned(), self.index.len());
                self.vectors.extend_from_slice(&v);
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.index
            .get(token)
            .map(|&slot| &self.vectors[slot * self.dim..(slot + 1) * self.dim])
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(file)
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        const WHAT: &str = "embedding file";
        let bad = |line: usize, reason: String| Error::Parse {
            what: WHAT,
            line,
            reason,
        };
        let mut lines = BufReader::new(reader).lines();
        let header = match lines.next() {
            Some(l) => l.map_err(|e| bad(1, e.to_string()))?,
            None => return Err(bad(1, "missing header".into())),
        };
        let (dim, count) = parse_header(&header).ok_or_else(|| {
            bad(1, format!("expected `dim=<int> count=<int>`, got {header:?}"))
        })?;
        if dim == 0 {
            return Err(bad(1, "dim must be positive".into()));
        }
        let mut table = EmbeddingTable::new(dim);
        let mut seen = 0usize;
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let line = line.map_err(|e| bad(lineno, e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let (token, payload) = line
                .split_once('\t')
                .ok_or_else(|| bad(lineno, "missing tab separator".into()))?;
            let bytes = BASE64
                .decode(payload.trim_end())
                .map_err(|e| bad(lineno, e.to_string()))?;
            if bytes.len() != dim * 2 {
                return Err(bad(
                    lineno,
                    format!("expected {} payload bytes, got {}", dim * 2, bytes.len()),
                ));
            }
            let v: Vec<f32> = bytes
                .chunks_exact(2)
                .map(|b| f16::from_le_bytes([b[0], b[1]]).to_f32())
                .collect();
            table
                .insert(token, &v)
                .map_err(|e| bad(lineno, e.to_string()))?;
            seen += 1;
        }
        if seen != count {
            return Err(bad(1, format!("header count {count}, found {seen} records")));
        }
        Ok(table)
    }

    /// Writes the table in sidecar format, tokens in sorted order.
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "dim={} count={}", self.dim, self.len())?;
        let mut tokens: Vec<(&String, &usize)> = self.index.iter().collect();
        tokens.sort();
        let mut payload = Vec::with_capacity(self.dim * 2);
        for (token, &slot) in tokens {
            payload.clear();
            for &x in &self.vectors[slot * self.dim..(slot + 1) * self.dim] {
                payload.extend_from_slice(&f16::from_f32(x).to_le_bytes());
            }
            writeln!(w, "{token}\t{}", BASE64.encode(&payload))?;
        }
        Ok(())
    }
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut dim = None;
    let mut count = None;
    for field in line.split_whitespace() {
        let (k, v) = field.split_once('=')?;
        match k {
            "dim" => dim = Some(v.parse().ok()?),
            "count" => count = Some(v.parse().ok()?),
            _ => return None,
        }
    }
    Some((dim?, count?))
}

impl TokenEncoder for EmbeddingTable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_token(&self, token: &str, out: &mut [f32]) -> Result<()> {
        let v = self
            .get(token)
            .ok_or_else(|| Error::MissingEmbedding(token.to_owned()))?;
        out.copy_from_slice(v);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderMode {
    Reference,
    File,
}

impl std::str::FromStr for EncoderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reference" => Ok(EncoderMode::Reference),
            "file" => Ok(EncoderMode::File),
            other => Err(Error::InvalidParameter(format!(
                "unknown encoder mode {other:?} (expected reference or file)"
            ))),
        }
    }
}

impl fmt::Display for EncoderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderMode::Reference => "reference",
            EncoderMode::File => "file",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub dim: usize,
    pub query_maxlen: usize,
    pub mode: EncoderMode,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            dim: DEFAULT_DIM,
            query_maxlen: DEFAULT_QUERY_MAXLEN,
            mode: EncoderMode::Reference,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < MIN_DIM {
            return Err(Error::InvalidParameter(format!(
                "dim must be at least {MIN_DIM}, got {}",
                self.dim
            )));
        }
        if self.query_maxlen == 0 {
            return Err(Error::InvalidParameter("query_maxlen must be at least 1".into()));
        }
        Ok(())
    }
}

/// Builds the encoder described by `cfg`.
///
/// Reference mode derives its hash seed from the `encoder` stream of `seed`.
/// File mode loads `sidecar` and checks its dimension against `cfg.dim`.
pub fn build_encoder(
    cfg: &EncoderConfig,
    seed: u64,
    sidecar: Option<&Path>,
) -> Result<Box<dyn TokenEncoder>> {
    cfg.validate()?;
    match cfg.mode {
        EncoderMode::Reference => Ok(Box::new(ReferenceEncoder::new(
            cfg.dim,
            crate::seed::stream_seed(seed, crate::seed::ENCODER_STREAM),
        )?)),
        EncoderMode::File => {
            let path = sidecar.ok_or_else(|| {
                Error::InvalidParameter("file encoder mode needs an embeddings path".into())
            })?;
            let table = EmbeddingTable::load(path)?;
            if table.dim() != cfg.dim {
                return Err(Error::DimensionMismatch {
                    expected: cfg.dim,
                    actual: table.dim(),
                });
            }
            Ok(Box::new(table))
        }
    }
}

/// Encodes each token of `seq` into one row.
pub fn encode_tokens(seq: &[String], encoder: &dyn TokenEncoder) -> Result<EmbeddingMatrix> {
    let mut m = EmbeddingMatrix::zeros(seq.len(), encoder.dim());
    for (i, tok) in seq.iter().enumerate() {
        encoder.embed_token(tok, m.row_mut(i))?;
    }
    Ok(m)
}

/// Tokenizes, truncates to `query_maxlen`, encodes, and pads with zero rows
/// to exactly `query_maxlen` rows.
pub fn encode_query(
    text: &str,
    encoder: &dyn TokenEncoder,
    query_maxlen: usize,
) -> Result<EmbeddingMatrix> {
    let mut words = split_words(text);
    words.truncate(query_maxlen);
    let mut m = encode_tokens(&words, encoder)?;
    m.fit_rows(query_maxlen);
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enc() -> ReferenceEncoder {
        ReferenceEncoder::new(DEFAULT_DIM, 42).unwrap()
    }

    #[test]
    fn tokenize_lowercases_and_drops_punctuation() {
        assert_eq!(split_words("Oil Spills!"), vec!["oil", "spills"]);
        assert!(split_words("").is_empty());
        assert_eq!(split_words("a  b"), vec!["a", "b"]);
        assert_eq!(split_words("--- ... !!"), Vec::<String>::new());
        assert_eq!(split_words("Émile's café\tÜBER"), vec!["émile", "s", "café", "über"]);
    }

    #[test]
    fn vocabulary_ids_are_stable() {
        let mut vocab = Vocabulary::new();
        let a = tokenize("the cat the dog", &mut vocab);
        assert_eq!(a.token_ids, vec![0, 1, 0, 2]);
        let b = tokenize("dog cat", &mut vocab);
        assert_eq!(b.token_ids, vec![2, 1]);
        assert_eq!(vocab.token(1), Some("cat"));
    }

    #[test]
    fn reference_rows_are_unit_and_repeatable() {
        let seq = vec!["x".to_string(), "x".to_string(), "oil".to_string()];
        let m = encode_tokens(&seq, &enc()).unwrap();
        assert_eq!(m.row(0), m.row(1));
        assert_ne!(m.row(0), m.row(2));
        assert!(m.rows_are_unit_or_mask(1e-4));
        assert!(m.iter_rows().all(|r| (linalg::norm(r) - 1.0).abs() < 1e-4));
        let other_seed = ReferenceEncoder::new(DEFAULT_DIM, 43).unwrap();
        let mut v = vec![0.0; DEFAULT_DIM];
        other_seed.embed_token("x", &mut v).unwrap();
        assert_ne!(m.row(0), &v[..]);
    }

    #[test]
    fn reference_encoder_rejects_tiny_dim() {
        assert!(ReferenceEncoder::new(4, 0).is_err());
    }

    #[test]
    fn empty_query_is_all_padding() {
        let q = encode_query("", &enc(), 32).unwrap();
        assert_eq!(q.rows(), 32);
        assert!(q.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn long_query_is_truncated() {
        let text: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
        let q = encode_query(&text.join(" "), &enc(), 32).unwrap();
        assert_eq!(q.rows(), 32);
        assert_eq!(q.non_mask_rows(), 32);
        let direct = encode_tokens(&text[..32], &enc()).unwrap();
        assert_eq!(q, direct);
    }

    #[test]
    fn short_query_is_padded() {
        let q = encode_query("oil spills", &enc(), 32).unwrap();
        assert_eq!(q.rows(), 32);
        assert_eq!(q.non_mask_rows(), 2);
        assert!((2..32).all(|i| q.is_mask_row(i)));
    }

    #[test]
    fn file_mode_names_missing_token() {
        let mut table = EmbeddingTable::new(8);
        table.insert("oil", &[1.0; 8]).unwrap();
        let err = encode_tokens(&["oil".into(), "gas".into()], &table).unwrap_err();
        assert!(matches!(err, Error::MissingEmbedding(ref t) if t == "gas"), "{err}");
    }

    #[test]
    fn sidecar_round_trip_keeps_vectors() {
        let mut table = EmbeddingTable::new(8);
        table.insert("oil", &[1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0]).unwrap();
        table.insert("spill", &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0]).unwrap();
        let mut buf = Vec::new();
        table.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("dim=8 count=2\n"));
        let back = EmbeddingTable::read(&buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.get("spill").unwrap()[7], -1.0);
        let oil = back.get("oil").unwrap();
        assert!((oil[1] - 2.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn sidecar_rejects_bad_payloads() {
        let short = "dim=8 count=1\noil\tAAAA\n";
        assert!(matches!(
            EmbeddingTable::read(short.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        let miscounted = "dim=8 count=3\n";
        assert!(EmbeddingTable::read(miscounted.as_bytes()).is_err());
        assert!(EmbeddingTable::read("dims=8\n".as_bytes()).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(EncoderConfig::default().validate().is_ok());
        let bad = EncoderConfig {
            query_maxlen: 0,
            ..EncoderConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!("file".parse::<EncoderMode>().unwrap(), EncoderMode::File);
        assert!("neural".parse::<EncoderMode>().is_err());
    }
}
