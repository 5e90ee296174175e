//! Corpus records, JSON-lines ingestion and document-frequency statistics.
//!
//! A corpus file holds one JSON object per line:
//!
//! ```text
//! {"id": "biblio-1000005", "title": "...", "abstractText": "...", "journal": "...", "db": "LILACS", "decsCodes": ["9562", "8650"]}
//! ```
//!
//! `journal`, `db` and `decsCodes` may be omitted. Training corpora are
//! loaded with `require_labels`, which drops records without any code.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textproc::TermStream;

/// Separator joining the two halves of a meta-label code.
pub const META_SEPARATOR: char = '.';

/// A descriptor code.
///
/// Codes order numerically when they are plain integers, so
/// `"331" < "9062" < "21030"`; see [`compare_codes`]. Meta-label codes
/// (`"21030.21034"`) are also carried by this type; [`LabelCode::is_meta`]
/// tells them apart.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LabelCode(String);

impl LabelCode {
    /// Builds a code, rejecting empty strings and surrounding whitespace.
    pub fn new(code: impl Into<String>) -> Result<Self> {
        let code = code.into();
        if code.is_empty() || code.trim() != code {
            return Err(Error::InvalidLabel(code));
        }
        Ok(LabelCode(code))
    }

    /// Builds a base code: like [`LabelCode::new`] but also rejects the
    /// meta-label separator.
    pub fn base(code: impl Into<String>) -> Result<Self> {
        let code = Self::new(code)?;
        if code.is_meta() {
            return Err(Error::InvalidLabel(code.0));
        }
        Ok(code)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_meta(&self) -> bool {
        self.0.contains(META_SEPARATOR)
    }
}

impl TryFrom<String> for LabelCode {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        LabelCode::new(value)
    }
}

impl From<LabelCode> for String {
    fn from(code: LabelCode) -> String {
        code.0
    }
}

impl fmt::Display for LabelCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for LabelCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl Ord for LabelCode {
    fn cmp(&self, other: &Self) -> Ordering {
        compare_codes(&self.0, &other.0)
    }
}

impl PartialOrd for LabelCode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Total order on codes: segment by segment (split on the meta separator),
/// integer segments numerically and ahead of any other segment, the rest in
/// byte order. A shorter code that prefixes a longer one sorts first.
pub fn compare_codes(a: &str, b: &str) -> Ordering {
    let mut xs = a.split(META_SEPARATOR);
    let mut ys = b.split(META_SEPARATOR);
    loop {
        match (xs.next(), ys.next()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(x), Some(y)) => {
                let ord = match (x.parse::<u64>(), y.parse::<u64>()) {
                    (Ok(p), Ok(q)) => p.cmp(&q).then_with(|| x.cmp(y)),
                    (Ok(_), Err(_)) => Ordering::Less,
                    (Err(_), Ok(_)) => Ordering::Greater,
                    _ => x.cmp(y),
                };
                if ord != Ordering::Equal {
                    return ord;
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub journal: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub db: Option<String>,
    #[serde(default)]
    pub title: String,
    #[serde(rename = "abstractText", default)]
    pub abstract_text: String,
    #[serde(rename = "decsCodes", default)]
    pub labels: BTreeSet<LabelCode>,
}

impl Record {
    /// Text that feeds term extraction.
    pub fn text(&self, include_title: bool) -> String {
        if include_title && !self.title.is_empty() {
            format!("{}\n{}", self.title, self.abstract_text)
        } else {
            self.abstract_text.clone()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub records: Vec<Record>,
}

impl Corpus {
    pub fn new(records: Vec<Record>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            if r.id.is_empty() {
                return Err(Error::InvalidArgument(format!("record {i} has an empty id")));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId {
                    id: r.id.clone(),
                    line: i + 1,
                });
            }
        }
        Ok(Corpus { records })
    }

    pub fn n_docs(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn labels(&self) -> Vec<BTreeSet<LabelCode>> {
        self.records.iter().map(|r| r.labels.clone()).collect()
    }
}

/// Result of [`load_corpus`]: the corpus plus how many records the label
/// filter dropped.
#[derive(Debug)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub dropped: usize,
}

/// Reads a JSON-lines corpus. Blank lines are skipped.
pub fn load_corpus(path: impl AsRef<Path>, require_labels: bool) -> Result<LoadedCorpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file), path, require_labels)
}

pub(crate) fn read_corpus<R: BufRead>(
    reader: R,
    path: &Path,
    require_labels: bool,
) -> Result<LoadedCorpus> {
    let mut records = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut dropped = 0;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        if record.id.is_empty() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                line: line_no,
                message: "empty id".into(),
            });
        }
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId {
                id: record.id,
                line: line_no,
            });
        }
        if require_labels && record.labels.is_empty() {
            dropped += 1;
            continue;
        }
        records.push(record);
    }
    if dropped > 0 {
        log::info!("{}: dropped {dropped} records without codes", path.display());
    }
    Ok(LoadedCorpus {
        corpus: Corpus { records },
        dropped,
    })
}

/// Writes a corpus back out as JSON lines in record order.
pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in &corpus.records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Document frequencies over a set of term streams plus the keep rule.
///
/// A term is kept iff `df > min_df` and `df <= max_df_ratio * n_docs`.
#[derive(Clone, Debug)]
pub struct DfStats {
    pub df: HashMap<String, u32>,
    pub n_docs: usize,
    pub min_df: u32,
    pub max_df_ratio: f64,
}

impl DfStats {
    pub fn is_kept(&self, term: &str) -> bool {
        self.df.get(term).is_some_and(|&df| self.keeps(df))
    }

    /// Applies the keep rule to a raw document frequency.
    pub fn keeps(&self, df: u32) -> bool {
        df > self.min_df && f64::from(df) <= self.max_df_ratio * self.n_docs as f64
    }

    /// Kept terms in byte order.
    pub fn kept_terms(&self) -> Vec<&str> {
        let mut kept: Vec<&str> = self
            .df
            .iter()
            .filter(|(_, &df)| self.keeps(df))
            .map(|(t, _)| t.as_str())
            .collect();
        kept.sort_unstable();
        kept
    }

    /// TSV export: `term \t df \t kept(0|1)`, sorted by term.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut rows: Vec<(&String, &u32)> = self.df.iter().collect();
        rows.sort_unstable_by(|a, b| a.0.cmp(b.0));
        for (term, &df) in rows {
            writeln!(out, "{term}\t{df}\t{}", u8::from(self.keeps(df)))?;
        }
        Ok(())
    }
}

/// Counts, for every term, the number of streams containing it.
pub fn compute_df(streams: &[TermStream], min_df: u32, max_df_ratio: f64) -> Result<DfStats> {
    if !(max_df_ratio > 0.0 && max_df_ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "max_df_ratio must lie in (0, 1], got {max_df_ratio}"
        )));
    }
    let mut df: HashMap<String, u32> = HashMap::new();
    for stream in streams {
        // stream terms are unique, so one increment per document
        for (term, _) in &stream.terms {
            match df.get_mut(term.as_str()) {
                Some(n) => *n += 1,
                None => {
                    df.insert(term.clone(), 1);
                }
            }
        }
    }
    Ok(DfStats {
        df,
        n_docs: streams.len(),
        min_df,
        max_df_ratio,
    })
}
