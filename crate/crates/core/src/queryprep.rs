//! Topic handling: query form composition and stop-structure removal.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Starter stop-structure list shipped with the crate.
pub const DEFAULT_STOP_STRUCTURES: &str = include_str!("../data/stop_structures.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicRecord {
    pub query_id: String,
    pub title: String,
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryForm {
    Title,
    Description,
    TitleDescription,
}

impl FromStr for QueryForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t" => Ok(QueryForm::Title),
            "d" => Ok(QueryForm::Description),
            "td" => Ok(QueryForm::TitleDescription),
            other => Err(Error::InvalidParameter(format!(
                "unknown query form {other:?} (expected t, d or td)"
            ))),
        }
    }
}

impl fmt::Display for QueryForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryForm::Title => "t",
            QueryForm::Description => "d",
            QueryForm::TitleDescription => "td",
        })
    }
}

/// Query text for `form`. A requested field that is blank is an error.
pub fn compose(topic: &TopicRecord, form: QueryForm) -> Result<String> {
    let need = |field: &'static str, value: &str| {
        if value.trim().is_empty() {
            Err(Error::EmptyTopicField {
                query_id: topic.query_id.clone(),
                field,
            })
        } else {
            Ok(())
        }
    };
    match form {
        QueryForm::Title => {
            need("title", &topic.title)?;
            Ok(topic.title.clone())
        }
        QueryForm::Description => {
            need("description", &topic.description)?;
            Ok(topic.description.clone())
        }
        QueryForm::TitleDescription => {
            need("title", &topic.title)?;
            need("description", &topic.description)?;
            Ok(format!("{} {}", topic.title, topic.description))
        }
    }
}

/// Reads `query_id \t title \t description` lines. A missing description
/// column reads as empty.
pub fn read_topics<R: Read>(reader: R) -> Result<Vec<TopicRecord>> {
    let mut topics = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let bad = |reason: String| Error::Parse {
            what: "topics",
            line: i + 1,
            reason,
        };
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let query_id = fields.next().unwrap_or_default().trim().to_owned();
        let title = fields.next().unwrap_or_default().trim().to_owned();
        let description = fields.next().unwrap_or_default().trim().to_owned();
        if query_id.is_empty() || query_id.contains(char::is_whitespace) {
            return Err(bad(format!("invalid query id {query_id:?}")));
        }
        if title.is_empty() && description.is_empty() {
            return Err(bad(format!("topic {query_id:?} has neither title nor description")));
        }
        if !seen.insert(query_id.clone()) {
            return Err(bad(format!("duplicate query id {query_id:?}")));
        }
        topics.push(TopicRecord {
            query_id,
            title,
            description,
        });
    }
    Ok(topics)
}

pub fn load_topics(path: &Path) -> Result<Vec<TopicRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_topics(file)
}

/// Stop-structure phrases, lowercase, longest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopStructureList {
    phrases: Vec<Vec<String>>,
}

impl Default for StopStructureList {
    fn default() -> Self {
        StopStructureList::parse(DEFAULT_STOP_STRUCTURES)
    }
}

impl StopStructureList {
    /// One phrase per line; `#` starts a comment; blank lines are skipped.
    pub fn parse(text: &str) -> Self {
        let phrases = text.lines().map(|l| match l.find('#') {
            Some(i) => &l[..i],
            None => l,
        });
        Self::from_phrases(phrases)
    }

    pub fn from_phrases<I, S>(phrases: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out: Vec<Vec<String>> = phrases
            .into_iter()
            .map(|p| p.as_ref().split_whitespace().map(normalize_word).collect::<Vec<_>>())
            .filter(|p: &Vec<String>| !p.is_empty() && p.iter().all(|w| !w.is_empty()))
            .collect();
        // Longest first: more words, then more characters, then lexical.
        out.sort_by(|a, b| {
            b.len()
                .cmp(&a.len())
                .then_with(|| b.concat().len().cmp(&a.concat().len()))
                .then_with(|| a.cmp(b))
        });
        out.dedup();
        StopStructureList { phrases: out }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    pub fn phrases(&self) -> impl Iterator<Item = String> + '_ {
        self.phrases.iter().map(|p| p.join(" "))
    }
}

/// Lowercases a word and trims punctuation from both ends.
fn normalize_word(w: &str) -> String {
    w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

/// Removes stop structures from `text`.
///
/// Words are whitespace-separated and compared case-insensitively with
/// surrounding punctuation ignored. While any phrase matches a run of
/// consecutive words, the longest such phrase (its leftmost occurrence) is
/// deleted. Surviving words are joined by single spaces.
pub fn strip_stop_structures(text: &str, list: &StopStructureList) -> String {
    let mut words: Vec<&str> = text.split_whitespace().collect();
    let mut keys: Vec<String> = words.iter().map(|w| normalize_word(w)).collect();
    'search: loop {
        for phrase in &list.phrases {
            if phrase.len() > keys.len() {
                continue;
            }
            if let Some(at) = keys.windows(phrase.len()).position(|w| w == phrase.as_slice()) {
                words.drain(at..at + phrase.len());
                keys.drain(at..at + phrase.len());
                continue 'search;
            }
        }
        break;
    }
    words.join(" ")
}
