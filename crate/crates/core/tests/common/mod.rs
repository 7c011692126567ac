//! Randomized corpora and independent oracles shared by the integration tests.
//!
//! Nothing here calls the library's scoring, search, clustering or statistics
//! code; each oracle is a straight-line reimplementation of the stated rule.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeMap;

use latesearch::encoder::{EncoderConfig, ReferenceEncoder};
use latesearch::index::{build_index, BuildOptions, TokenIndex};
use latesearch::segmenter::{DocumentRecord, SegmenterConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy)]
pub struct CorpusShape {
    pub max_docs: usize,
    pub max_tokens: usize,
    pub max_vocab: usize,
}

impl Default for CorpusShape {
    fn default() -> Self {
        CorpusShape {
            max_docs: 200,
            max_tokens: 400,
            max_vocab: 100,
        }
    }
}

/// Random corpus over a vocabulary of `w<i>` words. Some documents may be
/// empty; at least one is not.
pub fn random_corpus(rng: &mut ChaCha8Rng, shape: CorpusShape) -> (Vec<DocumentRecord>, usize) {
    let n_docs = rng.random_range(1..=shape.max_docs);
    let vocab = rng.random_range(2..=shape.max_vocab);
    let mut docs = Vec::with_capacity(n_docs);
    for d in 0..n_docs {
        let len = if d == 0 {
            rng.random_range(1..=shape.max_tokens)
        } else {
            rng.random_range(0..=shape.max_tokens)
        };
        let words: Vec<String> = (0..len)
            .map(|_| format!("w{}", rng.random_range(0..vocab)))
            .collect();
        docs.push(DocumentRecord::new(format!("doc{d:03}"), words.join(" ")));
    }
    (docs, vocab)
}

/// Random query text of 1..=max_len vocabulary words, sometimes with an
/// out-of-vocabulary word.
pub fn random_query(rng: &mut ChaCha8Rng, vocab: usize, max_len: usize) -> String {
    let len = rng.random_range(1..=max_len);
    (0..len)
        .map(|_| {
            if rng.random_bool(0.1) {
                format!("oov{}", rng.random_range(0..1000))
            } else {
                format!("w{}", rng.random_range(0..vocab))
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let n = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.iter().map(|x| (*x as f64 / n) as f32).collect();
        }
    }
}

pub fn build(
    docs: &[DocumentRecord],
    dim: usize,
    n_clusters: Option<usize>,
    seed: u64,
    segmenter: SegmenterConfig,
) -> (TokenIndex, ReferenceEncoder) {
    let encoder = ReferenceEncoder::new(dim, seed).unwrap();
    let opts = BuildOptions {
        encoder: EncoderConfig {
            dim,
            ..EncoderConfig::default()
        },
        segmenter,
        n_clusters,
        seed,
    };
    (build_index(docs, &encoder, &opts).unwrap(), encoder)
}

/// Plain sequential dot product.
pub fn naive_dot(a: &[f32], b: &[f32]) -> f32 {
    let mut s = 0.0f32;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Double-loop MaxSim over every query row, mask rows included.
pub fn oracle_maxsim(query: &[Vec<f32>], doc: &[Vec<f32>]) -> f32 {
    let mut total = 0.0f32;
    for q in query {
        let mut best = f32::NEG_INFINITY;
        for d in doc {
            let s = naive_dot(q, d);
            if s > best {
                best = s;
            }
        }
        total += best;
    }
    total
}

pub fn rows_of(flat: &[f32], dim: usize) -> Vec<Vec<f32>> {
    flat.chunks(dim).map(|c| c.to_vec()).collect()
}

/// Stored rows of every passage, regrouped by walking the postings table.
pub fn passages_by_postings(index: &TokenIndex) -> Vec<Vec<Vec<f32>>> {
    let mut out: Vec<Vec<Vec<f32>>> = vec![Vec::new(); index.n_passages()];
    for (i, p) in index.postings().iter().enumerate() {
        out[p.passage_id as usize].push(index.vector(i).to_vec());
    }
    out
}

/// Scores every passage of every document and ranks documents by their best
/// passage: score descending, then doc id ascending.
pub fn exhaustive_ranking(index: &TokenIndex, query: &[Vec<f32>]) -> Vec<(String, f32)> {
    let passages = passages_by_postings(index);
    let mut best: BTreeMap<String, f32> = BTreeMap::new();
    for (pid, rows) in passages.iter().enumerate() {
        let s = oracle_maxsim(query, rows);
        let doc = index.passages()[pid].doc_id.clone();
        let e = best.entry(doc).or_insert(f32::NEG_INFINITY);
        if s > *e {
            *e = s;
        }
    }
    let mut v: Vec<(String, f32)> = best.into_iter().collect();
    v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    v
}

/// Nested-loop top-k over all stored tokens, descending score then index.
pub fn brute_top_k(index: &TokenIndex, q: &[f32], k: usize) -> Vec<(u32, f32)> {
    if q.iter().all(|&x| x == 0.0) {
        return Vec::new();
    }
    let mut all: Vec<(u32, f32)> = (0..index.total_tokens())
        .map(|i| (i as u32, crate_dot(q, index.vector(i))))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Scores via the library kernel so ties and values line up bit-for-bit
/// with search results; only the selection logic is independent.
fn crate_dot(a: &[f32], b: &[f32]) -> f32 {
    latesearch::linalg::dot(a, b)
}

/// Reference Lloyd's k-means in f64 sharing only the RNG-driven seed
/// selection with the library.
pub struct OracleKMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn oracle_lloyd(rows: &[Vec<f32>], k: usize, iterations: usize, rng: &mut ChaCha8Rng) -> OracleKMeans {
    let data: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().map(|&x| x as f64).collect())
        .collect();
    let n = data.len();
    let picks = rand::seq::index::sample(rng, n, k);
    let mut centroids: Vec<Vec<f64>> = picks.iter().map(|i| data[i].clone()).collect();
    let mut assignments = vec![0usize; n];
    for _ in 0..iterations {
        // Assign: nearest centroid, lowest index on ties.
        for (i, x) in data.iter().enumerate() {
            let mut best = 0;
            for c in 1..k {
                if dist2(x, &centroids[c]) < dist2(x, &centroids[best]) {
                    best = c;
                }
            }
            assignments[i] = best;
        }
        // Repair: split the largest cluster into each empty one.
        for e in 0..k {
            let size = |c: usize, a: &[usize]| a.iter().filter(|&&x| x == c).count();
            if size(e, &assignments) > 0 {
                continue;
            }
            let mut largest = 0;
            for c in 1..k {
                if size(c, &assignments) > size(largest, &assignments) {
                    largest = c;
                }
            }
            let mut members: Vec<usize> = (0..n).filter(|&i| assignments[i] == largest).collect();
            members.sort_by(|&a, &b| {
                let da = dist2(&data[a], &centroids[largest]);
                let db = dist2(&data[b], &centroids[largest]);
                db.partial_cmp(&da).unwrap().then(a.cmp(&b))
            });
            let half = members.len() / 2;
            for &i in &members[..half] {
                assignments[i] = e;
            }
        }
        // Update: mean of members.
        for c in 0..k {
            let members: Vec<&Vec<f64>> = (0..n).filter(|&i| assignments[i] == c).map(|i| &data[i]).collect();
            let mut mean = vec![0.0; data[0].len()];
            for m in &members {
                for (s, x) in mean.iter_mut().zip(m.iter()) {
                    *s += x;
                }
            }
            for s in mean.iter_mut() {
                *s /= members.len() as f64;
            }
            centroids[c] = mean;
        }
    }
    OracleKMeans {
        centroids,
        assignments,
    }
}

/// Student-t density with `nu` degrees of freedom.
fn t_density(x: f64, nu: f64) -> f64 {
    let ln_c = ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * std::f64::consts::PI).ln();
    (ln_c - (nu + 1.0) / 2.0 * (1.0 + x * x / nu).ln()).exp()
}

/// Lanczos approximation (g = 7, n = 9), accurate to ~1e-15.
fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 1 { n + 1 } else { n };
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    s * h / 3.0
}

/// Two-sided p-value `2 * P(T > |t|)` by quadrature of the density over
/// `[0, |t|]`: `p = 1 - 2 * ∫_0^|t| f`.
pub fn oracle_two_sided_p(t: f64, nu: f64) -> f64 {
    let f = |x: f64| t_density(x, nu);
    1.0 - 2.0 * simpson(&f, 0.0, t.abs(), 200_000)
}

/// Step-down Holm by explicit enumeration of the ordered family.
pub fn oracle_holm(pvals: &[f64], alpha: f64) -> Vec<bool> {
    let m = pvals.len();
    let mut sorted: Vec<f64> = pvals.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pvals
        .iter()
        .map(|&p| {
            // Rank of p: the last sorted position holding this value.
            let i = sorted.iter().rposition(|&s| s == p).unwrap();
            (0..=i).all(|j| sorted[j] <= alpha / (m - j) as f64)
        })
        .collect()
}
