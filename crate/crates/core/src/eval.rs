//! TREC-style evaluation: average precision, MAP, paired t-tests and
//! Holm-Bonferroni correction.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::retrieval::{RankedEntry, RankedList};

/// Relevance judgments; a grade of 1 or more is relevant.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QrelSet {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl QrelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: u32) {
        self.judgments
            .entry(query_id.to_owned())
            .or_default()
            .insert(doc_id.to_owned(), grade);
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.judgments
            .get(query_id)
            .and_then(|q| q.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn is_relevant(&self, query_id: &str, doc_id: &str) -> bool {
        self.grade(query_id, doc_id) >= 1
    }

    pub fn relevant_count(&self, query_id: &str) -> usize {
        self.judgments
            .get(query_id)
            .map(|q| q.values().filter(|&&g| g >= 1).count())
            .unwrap_or(0)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }
}

/// Parses `<query_id> <iteration> <doc_id> <grade>` lines.
pub fn read_qrels<R: Read>(reader: R) -> Result<QrelSet> {
    let mut qrels = QrelSet::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let bad = |reason: String| Error::Parse {
            what: "qrels",
            line: i + 1,
            reason,
        };
        let line = line.map_err(|e| bad(e.to_string()))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [] => continue,
            [qid, _, doc, grade] => {
                let g: i64 = grade
                    .parse()
                    .map_err(|_| bad(format!("bad grade {grade:?}")))?;
                // Negative grades mark unjudged or non-relevant documents.
                qrels.insert(qid, doc, g.max(0) as u32);
            }
            _ => return Err(bad(format!("expected 4 fields, got {}", fields.len()))),
        }
    }
    Ok(qrels)
}

pub fn load_qrels(path: &Path) -> Result<QrelSet> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_qrels(file)
}

/// Parses a TREC run; each query's entries are ordered by their rank column.
pub fn read_run<R: Read>(reader: R) -> Result<BTreeMap<String, RankedList>> {
    let mut runs: BTreeMap<String, RankedList> = BTreeMap::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let bad = |reason: String| Error::Parse {
            what: "run",
            line: i + 1,
            reason,
        };
        let line = line.map_err(|e| bad(e.to_string()))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [] => continue,
            [qid, _, doc, rank, score, ..] => {
                let rank: usize = rank.parse().map_err(|_| bad(format!("bad rank {rank:?}")))?;
                let score: f32 = score.parse().map_err(|_| bad(format!("bad score {score:?}")))?;
                runs.entry((*qid).to_owned())
                    .or_insert_with(|| RankedList::empty(*qid))
                    .entries
                    .push(RankedEntry {
                        doc_id: (*doc).to_owned(),
                        score,
                        rank,
                    });
            }
            _ => return Err(bad(format!("expected at least 5 fields, got {}", fields.len()))),
        }
    }
    for list in runs.values_mut() {
        list.entries.sort_by_key(|e| e.rank);
    }
    Ok(runs)
}

pub fn load_run(path: &Path) -> Result<BTreeMap<String, RankedList>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_run(file)
}

/// Average precision of one ranked list over its full depth.
///
/// A query without relevant documents scores 0 with a warning. A document
/// listed twice is an error.
pub fn average_precision(run: &RankedList, qrels: &QrelSet) -> Result<f64> {
    let mut seen = HashSet::with_capacity(run.entries.len());
    for e in &run.entries {
        if !seen.insert(e.doc_id.as_str()) {
            return Err(Error::DuplicateRunEntry {
                query_id: run.query_id.clone(),
                doc_id: e.doc_id.clone(),
            });
        }
    }
    let total_relevant = qrels.relevant_count(&run.query_id);
    if total_relevant == 0 {
        log::warn!("query {:?} has no relevant documents; AP is 0", run.query_id);
        return Ok(0.0);
    }
    let mut hits = 0usize;
    let mut sum = 0.0f64;
    for (i, e) in run.entries.iter().enumerate() {
        if qrels.is_relevant(&run.query_id, &e.doc_id) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / total_relevant as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapReport {
    pub map: f64,
    /// AP for every query in the qrels.
    pub per_query: BTreeMap<String, f64>,
    /// Queries in the qrels with no relevant document.
    pub zero_relevant: Vec<String>,
}

/// Unweighted mean of AP over every query in `qrels`; a query missing from
/// the run scores 0. Run queries absent from the qrels are ignored.
pub fn mean_average_precision(
    runs: &BTreeMap<String, RankedList>,
    qrels: &QrelSet,
) -> Result<MapReport> {
    if qrels.is_empty() {
        return Err(Error::InvalidParameter("qrels contain no queries".into()));
    }
    let mut per_query = BTreeMap::new();
    let mut zero_relevant = Vec::new();
    for qid in qrels.query_ids() {
        if qrels.relevant_count(qid) == 0 {
            zero_relevant.push(qid.to_owned());
        }
        let ap = match runs.get(qid) {
            Some(list) => average_precision(list, qrels)?,
            None => 0.0,
        };
        per_query.insert(qid.to_owned(), ap);
    }
    let map = per_query.values().sum::<f64>() / per_query.len() as f64;
    Ok(MapReport {
        map,
        per_query,
        zero_relevant,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub n: usize,
    pub mean_difference: f64,
    pub t: f64,
    /// Two-sided.
    pub p_value: f64,
    /// Set when the differences are constant and non-zero: `t` is infinite
    /// and `p_value` is reported as 0.
    pub zero_variance: bool,
}

/// Two-sided paired Student's t-test on `a - b`.
///
/// All-zero differences give `p = 1`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::UnpairedSamples(format!(
            "{} scores against {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "paired t-test needs at least two pairs".into(),
        ));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if sd == 0.0 {
        return Ok(if mean == 0.0 {
            TTest {
                n,
                mean_difference: 0.0,
                t: 0.0,
                p_value: 1.0,
                zero_variance: false,
            }
        } else {
            TTest {
                n,
                mean_difference: mean,
                t: f64::INFINITY.copysign(mean),
                p_value: 0.0,
                zero_variance: true,
            }
        });
    }
    let t = mean / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("dof >= 1");
    let p_value = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest {
        n,
        mean_difference: mean,
        t,
        p_value,
        zero_variance: false,
    })
}

/// Paired t-test over per-query scores; both maps must cover the same
/// queries.
pub fn paired_t_test_by_query(
    a: &BTreeMap<String, f64>,
    b: &BTreeMap<String, f64>,
) -> Result<TTest> {
    if a.len() != b.len() || a.keys().zip(b.keys()).any(|(x, y)| x != y) {
        let only_a: Vec<&String> = a.keys().filter(|k| !b.contains_key(*k)).collect();
        let only_b: Vec<&String> = b.keys().filter(|k| !a.contains_key(*k)).collect();
        return Err(Error::UnpairedSamples(format!(
            "queries only in first: {only_a:?}; only in second: {only_b:?}"
        )));
    }
    let xs: Vec<f64> = a.values().copied().collect();
    let ys: Vec<f64> = b.values().copied().collect();
    paired_t_test(&xs, &ys)
}

/// Holm's step-down procedure. Returns, in input order, whether each
/// hypothesis is rejected at family-wise level `alpha`.
pub fn holm_bonferroni(pvals: &[f64], alpha: f64) -> Vec<bool> {
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| pvals[i].total_cmp(&pvals[j]).then(i.cmp(&j)));
    let mut reject = vec![false; m];
    for (step, &i) in order.iter().enumerate() {
        if pvals[i] <= alpha / (m - step) as f64 {
            reject[i] = true;
        } else {
            break;
        }
    }
    reject
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairComparison {
    pub first: String,
    pub second: String,
    pub test: TTest,
    pub reject: bool,
}

/// Paired t-tests over every pair of runs with Holm correction across the
/// whole family.
#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceReport {
    pub alpha: f64,
    pub pairs: Vec<PairComparison>,
}

/// Compares all pairs of named per-query score tables.
pub fn compare_runs(
    runs: &[(String, BTreeMap<String, f64>)],
    alpha: f64,
) -> Result<SignificanceReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut pairs = Vec::new();
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            let test = paired_t_test_by_query(&runs[i].1, &runs[j].1)?;
            pairs.push(PairComparison {
                first: runs[i].0.clone(),
                second: runs[j].0.clone(),
                test,
                reject: false,
            });
        }
    }
    let pvals: Vec<f64> = pairs.iter().map(|p| p.test.p_value).collect();
    for (pair, reject) in pairs.iter_mut().zip(holm_bonferroni(&pvals, alpha)) {
        pair.reject = reject;
    }
    Ok(SignificanceReport { alpha, pairs })
}

impl fmt::Display for SignificanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<24} {:<24} {:>10} {:>10} {:>8}",
            "run_a", "run_b", "t", "p", "reject"
        )?;
        for p in &self.pairs {
            writeln!(
                f,
                "{:<24} {:<24} {:>10.4} {:>10.6} {:>8}",
                p.first, p.second, p.test.t, p.test.p_value, p.reject
            )?;
        }
        Ok(())
    }
}
