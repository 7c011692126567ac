use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use latesearch::encoder::build_encoder;
use latesearch::eval::{compare_runs, load_qrels, load_run, mean_average_precision};
use latesearch::index::{build_index, BuildOptions, IndexManifest, TokenIndex};
use latesearch::prf::prf_retrieve;
use latesearch::queryprep::{compose, load_topics, strip_stop_structures, QueryForm, StopStructureList};
use latesearch::retrieval::Searcher;
use latesearch::segmenter::load_corpus;

use crate::config::{must_exist, required, RunConfig};
use crate::error::CliError;
use crate::ConfigArgs;

/// Config file, then `--set` overrides, then dedicated flags.
pub fn resolve(args: &ConfigArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            must_exist(path)?;
            RunConfig::load(path)?
        }
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&args.set)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(p) = &args.index {
        cfg.paths.index = Some(p.clone());
    }
    Ok(cfg)
}

fn optional_existing(p: &Option<PathBuf>) -> Result<Option<&Path>, CliError> {
    match p.as_deref() {
        Some(path) => {
            must_exist(path)?;
            Ok(Some(path))
        }
        None => Ok(None),
    }
}

pub fn index(cfg: &RunConfig, overwrite: bool) -> Result<(), CliError> {
    let corpus_path = required(&cfg.paths.corpus, "paths.corpus")?;
    let dir = required(&cfg.paths.index, "paths.index")?;
    must_exist(corpus_path)?;
    let sidecar = optional_existing(&cfg.paths.embeddings)?;
    cfg.encoder.validate().map_err(CliError::usage)?;
    cfg.segmenter.validate().map_err(CliError::usage)?;
    if cfg.n_clusters == Some(0) {
        return Err(CliError::Usage("index.n_clusters must be at least 1".into()));
    }
    if dir.exists() && !overwrite {
        return Err(latesearch::Error::IndexExists(dir.to_path_buf()).into());
    }

    let encoder = build_encoder(&cfg.encoder, cfg.seed, sidecar)?;
    let corpus = load_corpus(corpus_path)?;
    let opts = BuildOptions {
        encoder: cfg.encoder,
        segmenter: cfg.segmenter,
        n_clusters: cfg.n_clusters,
        seed: cfg.seed,
    };
    let index = build_index(&corpus, encoder.as_ref(), &opts)?;
    index.save(dir, overwrite)?;
    print!("{}", index.footprint_report());
    Ok(())
}

pub fn search(
    cfg: &RunConfig,
    form: QueryForm,
    prf: bool,
    out: Option<&Path>,
    tag: &str,
) -> Result<(), CliError> {
    let dir = required(&cfg.paths.index, "paths.index")?;
    let topics_path = required(&cfg.paths.topics, "paths.topics")?;
    must_exist(dir)?;
    must_exist(topics_path)?;
    let stop_path = optional_existing(&cfg.paths.stop_structures)?;
    let sidecar = optional_existing(&cfg.paths.embeddings)?;
    cfg.retrieval.validate().map_err(CliError::usage)?;
    if prf {
        cfg.prf.validate().map_err(CliError::usage)?;
    }
    if tag.is_empty() || tag.contains(char::is_whitespace) {
        return Err(CliError::Usage(format!("run tag {tag:?} must be one non-empty word")));
    }

    let index = TokenIndex::load(dir)?;
    // Queries must be encoded exactly as the stored tokens were.
    let prov = index.encoder_provenance();
    let encoder = build_encoder(&prov.config, prov.seed, sidecar)?;
    let searcher = Searcher::new(&index, encoder.as_ref(), prov.config.query_maxlen)?;
    let topics = load_topics(topics_path)?;
    let stops = match stop_path {
        Some(p) => StopStructureList::load(p)?,
        None => StopStructureList::default(),
    };

    let mut sink: Box<dyn Write> = match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| latesearch::Error::Io {
                path: p.to_path_buf(),
                source: e,
            })?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let write_err = |e: io::Error| latesearch::Error::Io {
        path: out.map(Path::to_path_buf).unwrap_or_else(|| "<stdout>".into()),
        source: e,
    };
    for topic in &topics {
        let mut text = compose(topic, form)?;
        if form != QueryForm::Title {
            text = strip_stop_structures(&text, &stops);
        }
        let list = if prf {
            prf_retrieve(&searcher, &topic.query_id, &text, &cfg.retrieval, &cfg.prf, cfg.seed)?.list
        } else {
            searcher.retrieve(&topic.query_id, &text, &cfg.retrieval)?
        };
        list.write_trec(&mut sink, tag).map_err(write_err)?;
    }
    sink.flush().map_err(write_err)?;
    Ok(())
}

pub fn eval(qrels_path: &Path, alpha: f64, runs: &[PathBuf]) -> Result<(), CliError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Usage(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    must_exist(qrels_path)?;
    for r in runs {
        must_exist(r)?;
    }
    let qrels = load_qrels(qrels_path)?;
    let mut named: Vec<(String, BTreeMap<String, f64>)> = Vec::with_capacity(runs.len());
    let mut maps = Vec::with_capacity(runs.len());
    for path in runs {
        let report = mean_average_precision(&load_run(path)?, &qrels)?;
        maps.push(report.map);
        named.push((path.display().to_string(), report.per_query));
    }

    let width = named.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(3);
    println!("{:<width$}  {:>8}", "run", "MAP");
    for ((name, _), map) in named.iter().zip(&maps) {
        println!("{name:<width$}  {map:>8.4}");
    }
    let report = if named.len() >= 2 {
        let r = compare_runs(&named, alpha)?;
        println!();
        print!("{r}");
        Some(r)
    } else {
        None
    };

    println!();
    for ((name, _), map) in named.iter().zip(&maps) {
        println!("map[{name}]={map:.6}");
    }
    if let Some(r) = report {
        println!("alpha={}", r.alpha);
        println!("pairs={}", r.pairs.len());
        for p in &r.pairs {
            println!("p[{}|{}]={:.6e}", p.first, p.second, p.test.p_value);
            println!("reject[{}|{}]={}", p.first, p.second, p.reject);
        }
    }
    Ok(())
}

pub fn footprint(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = required(&cfg.paths.index, "paths.index")?;
    must_exist(dir)?;
    let m = IndexManifest::load(dir)?;
    print!("{m}");
    let per_token = if m.total_tokens == 0 {
        0
    } else {
        m.storage_bytes / m.total_tokens as u64
    };
    println!("bytes_per_token={per_token}");
    println!("total_bytes={}", m.storage_bytes + m.metadata_bytes + m.ivf_bytes);
    Ok(())
}
