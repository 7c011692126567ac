//! Run configuration: `key = value` lines grouped under `[section]` headers.
//!
//! ```text
//! seed = 7
//!
//! [paths]
//! corpus = data/docs.jsonl
//! index = out/index
//!
//! [retrieval]
//! nprobe = 16
//! ```
//!
//! Keys before the first header are top-level. `#` starts a comment line.
//! Values set on the command line with `--set section.key=value` (or the
//! dedicated flags) replace file values.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use latesearch::encoder::EncoderConfig;
use latesearch::prf::PrfParams;
use latesearch::retrieval::RetrievalParams;
use latesearch::segmenter::SegmenterConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub topics: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub stop_structures: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub paths: Paths,
    pub encoder: EncoderConfig,
    pub segmenter: SegmenterConfig,
    pub n_clusters: Option<usize>,
    pub retrieval: RetrievalParams,
    pub prf: PrfParams,
    pub seed: u64,
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T, CliError> {
    raw.parse()
        .map_err(|_| CliError::Usage(format!("bad value {raw:?} for {key}")))
}

impl RunConfig {
    /// Sets one `section.key` (or bare top-level `key`).
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), CliError> {
        let raw = raw.trim();
        match key {
            "seed" => self.seed = value(key, raw)?,
            "paths.corpus" => self.paths.corpus = Some(raw.into()),
            "paths.topics" => self.paths.topics = Some(raw.into()),
            "paths.index" => self.paths.index = Some(raw.into()),
            "paths.stop_structures" => self.paths.stop_structures = Some(raw.into()),
            "paths.embeddings" => self.paths.embeddings = Some(raw.into()),
            "encoder.mode" => self.encoder.mode = value(key, raw)?,
            "encoder.dim" => self.encoder.dim = value(key, raw)?,
            "encoder.query_maxlen" => self.encoder.query_maxlen = value(key, raw)?,
            "segmenter.window_len" => self.segmenter.window_len = value(key, raw)?,
            "segmenter.stride" => self.segmenter.stride = value(key, raw)?,
            "index.n_clusters" => self.n_clusters = Some(value(key, raw)?),
            "retrieval.ann_k" => self.retrieval.ann_k = value(key, raw)?,
            "retrieval.nprobe" => self.retrieval.nprobe = value(key, raw)?,
            "retrieval.top_docs" => self.retrieval.top_docs = value(key, raw)?,
            "retrieval.exact_mode" => self.retrieval.exact_mode = value(key, raw)?,
            "prf.fb_docs" => self.prf.fb_docs = value(key, raw)?,
            "prf.k_clusters" => self.prf.k_clusters = value(key, raw)?,
            "prf.n_fb_embs" => self.prf.n_fb_embs = value(key, raw)?,
            "prf.beta" => self.prf.beta = value(key, raw)?,
            _ => return Err(CliError::Usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies the lines of a config file on top of `self`.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        let mut section = String::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = |msg: String| CliError::Usage(format!("{origin}:{}: {msg}", i + 1));
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| at(format!("unterminated section header {line:?}")))?;
                section = name.trim().to_owned();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected key = value, got {line:?}")))?;
            let key = if section.is_empty() {
                k.trim().to_owned()
            } else {
                format!("{section}.{}", k.trim())
            };
            self.set(&key, v).map_err(|e| at(e.to_string()))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    /// Applies `section.key=value` overrides.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<(), CliError> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }
}

/// Returns the path or a usage error naming the missing setting.
pub fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    p.as_deref()
        .ok_or_else(|| CliError::Usage(format!("{key} is not set (config file or flag)")))
}

/// Fails with a usage error naming `path` when it does not exist.
pub fn must_exist(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("path does not exist: {}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use latesearch::encoder::EncoderMode;

    #[test]
    fn sections_and_top_level_keys() {
        let mut c = RunConfig::default();
        c.apply_text(
            "seed = 9\n# comment\n[paths]\ncorpus = a b.jsonl\n[encoder]\nmode = file\ndim=64\n[retrieval]\nexact_mode = true\n[prf]\nbeta = 0.25\n",
            "t",
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.paths.corpus.as_deref(), Some(Path::new("a b.jsonl")));
        assert_eq!(c.encoder.mode, EncoderMode::File);
        assert_eq!(c.encoder.dim, 64);
        assert!(c.retrieval.exact_mode);
        assert_eq!(c.prf.beta, 0.25);
        assert_eq!(c.retrieval.nprobe, RetrievalParams::default().nprobe);
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut c = RunConfig::default();
        c.apply_text("[index]\nn_clusters = 4\n", "t").unwrap();
        c.apply_overrides(&["index.n_clusters=9".into(), "seed=3".into()]).unwrap();
        assert_eq!(c.n_clusters, Some(9));
        assert_eq!(c.seed, 3);
    }

    #[test]
    fn errors_name_the_line() {
        let mut c = RunConfig::default();
        let e = c.apply_text("[paths]\nnope = 1\n", "cfg").unwrap_err();
        assert!(e.to_string().contains("cfg:2"), "{e}");
        assert!(c.apply_text("[encoder]\ndim = many\n", "cfg").is_err());
        assert!(c.apply_text("[paths\n", "cfg").is_err());
        assert!(c.apply_text("just words\n", "cfg").is_err());
    }
}
