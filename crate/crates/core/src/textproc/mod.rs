//! Term extraction: records in, [`TermStream`]s out.
//!
//! Five representations are supported. Stems and dictionary concepts are
//! computed here; lemmas, noun phrases and dependency triples come from
//! precomputed TSV files produced by an external NLP toolkit. Several
//! representations can be combined into one stream, in which case every term
//! carries a namespace prefix (`stem:`, `lemma:`, `np:`, `dep:`, `decs:`).

mod concepts;
mod stem;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

pub use concepts::{match_concepts, ConceptDictionary, ConceptMatcher, ConceptSpan, CONCEPT_PREFIX};
pub use stem::stem_spanish;

use crate::corpus::Record;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Stems,
    Lemmas,
    Nps,
    Deps,
    Concepts,
    All,
}

impl Representation {
    /// The five concrete representations, in merge order.
    pub const COMPONENTS: [Representation; 5] = [
        Representation::Stems,
        Representation::Lemmas,
        Representation::Nps,
        Representation::Deps,
        Representation::Concepts,
    ];

    pub fn namespace(self) -> &'static str {
        match self {
            Representation::Stems => "stem:",
            Representation::Lemmas => "lemma:",
            Representation::Nps => "np:",
            Representation::Deps => "dep:",
            Representation::Concepts => CONCEPT_PREFIX,
            Representation::All => "",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Representation::Stems => "stems",
            Representation::Lemmas => "lemmas",
            Representation::Nps => "nps",
            Representation::Deps => "deps",
            Representation::Concepts => "concepts",
            Representation::All => "all",
        }
    }

    /// Whether terms for this representation come from external files.
    pub fn is_external(self) -> bool {
        matches!(
            self,
            Representation::Lemmas | Representation::Nps | Representation::Deps
        )
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "stems" => Representation::Stems,
            "lemmas" => Representation::Lemmas,
            "nps" => Representation::Nps,
            "deps" => Representation::Deps,
            "concepts" => Representation::Concepts,
            "all" => Representation::All,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown representation {other:?}"
                )))
            }
        })
    }
}

/// Bag of index terms for one document. Terms are unique, sorted, and carry
/// positive counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermStream {
    pub doc_id: String,
    pub representation: Representation,
    pub terms: Vec<(String, u32)>,
}

impl TermStream {
    /// Aggregates `terms`, summing repeated entries and dropping zero counts.
    pub fn new(
        doc_id: impl Into<String>,
        representation: Representation,
        terms: impl IntoIterator<Item = (String, u32)>,
    ) -> Self {
        let mut agg: BTreeMap<String, u32> = BTreeMap::new();
        for (t, c) in terms {
            if c > 0 {
                *agg.entry(t).or_default() += c;
            }
        }
        TermStream {
            doc_id: doc_id.into(),
            representation,
            terms: agg.into_iter().collect(),
        }
    }

    pub fn from_tokens(
        doc_id: impl Into<String>,
        representation: Representation,
        tokens: impl IntoIterator<Item = String>,
    ) -> Self {
        Self::new(doc_id, representation, tokens.into_iter().map(|t| (t, 1)))
    }

    pub fn empty(doc_id: impl Into<String>, representation: Representation) -> Self {
        TermStream {
            doc_id: doc_id.into(),
            representation,
            terms: Vec::new(),
        }
    }

    pub fn count(&self, term: &str) -> u32 {
        self.terms
            .binary_search_by(|(t, _)| t.as_str().cmp(term))
            .map(|i| self.terms[i].1)
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn total_count(&self) -> u64 {
        self.terms.iter().map(|(_, c)| u64::from(*c)).sum()
    }
}

/// Lowercases and strips diacritics (`"Resección"` → `"reseccion"`).
pub fn fold(text: &str) -> String {
    let lower: String = text.chars().flat_map(char::to_lowercase).collect();
    lower.nfd().filter(|c| !is_combining_mark(*c)).collect()
}

/// Lowercased tokens that still carry their accents. Token boundaries agree
/// with [`tokenize`].
fn raw_tokens(text: &str) -> Vec<String> {
    let lower: String = text.nfc().flat_map(char::to_lowercase).collect();
    lower
        .split(|c: char| !(c.is_alphanumeric() || is_combining_mark(c)))
        .filter(|t| t.chars().any(char::is_alphanumeric))
        .map(str::to_string)
        .collect()
}

/// Splits text into lowercased, accent-folded alphanumeric tokens.
///
/// ```
/// use simann::textproc::tokenize;
/// assert_eq!(tokenize("Tumores de Mediastino,"), ["tumores", "de", "mediastino"]);
/// assert_eq!(tokenize("resección quirúrgica"), ["reseccion", "quirurgica"]);
/// ```
pub fn tokenize(text: &str) -> Vec<String> {
    raw_tokens(text)
        .iter()
        .map(|t| fold(t))
        .filter(|t| !t.is_empty())
        .collect()
}

/// Stopword set, stored folded.
#[derive(Clone, Debug, Default)]
pub struct Stopwords(HashSet<String>);

const SPANISH_STOPWORDS: &str = include_str!("../../data/spanish_stopwords.txt");

impl Stopwords {
    /// The standard Snowball Spanish list shipped with the crate.
    pub fn spanish() -> Self {
        Self::parse(SPANISH_STOPWORDS)
    }

    pub fn parse(text: &str) -> Self {
        Stopwords(
            text.lines()
                .map(|l| l.split('|').next().unwrap_or("").trim())
                .filter(|l| !l.is_empty())
                .map(fold)
                .collect(),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, folded: &str) -> bool {
        self.0.contains(folded)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Stems every non-stopword token of `text`.
pub fn stems_of(doc_id: &str, text: &str, stopwords: &Stopwords) -> TermStream {
    let mut terms: HashMap<String, u32> = HashMap::new();
    for tok in raw_tokens(text) {
        let folded = fold(&tok);
        if folded.is_empty() || stopwords.contains(&folded) {
            continue;
        }
        let stem = fold(&stem_spanish(&tok));
        if !stem.is_empty() {
            *terms.entry(stem).or_default() += 1;
        }
    }
    TermStream::new(doc_id, Representation::Stems, terms)
}

/// Stem representation of a record (title included when requested).
pub fn extract_stems(record: &Record, stopwords: &Stopwords, include_title: bool) -> TermStream {
    stems_of(&record.id, &record.text(include_title), stopwords)
}

/// Reads a `doc_id \t term \t count` file into one stream per document, in
/// order of first appearance. Rows with zero count are ignored.
pub fn load_external_stream(
    path: impl AsRef<Path>,
    representation: Representation,
) -> Result<Vec<TermStream>> {
    let path = path.as_ref();
    if !representation.is_external() {
        return Err(Error::InvalidArgument(format!(
            "{representation} is not an externally computed representation"
        )));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(String, u32)>> = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Format {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let mut cols = line.split('\t');
        let (Some(doc), Some(term), Some(count), None) =
            (cols.next(), cols.next(), cols.next(), cols.next())
        else {
            return Err(bad("expected doc_id, term and count columns".into()));
        };
        let count: i64 = count
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad count {count:?}")))?;
        if count < 0 {
            return Err(bad(format!("negative count {count}")));
        }
        let count = u32::try_from(count).map_err(|_| bad(format!("count {count} too large")))?;
        let (doc, term) = (doc.trim(), term.trim());
        if doc.is_empty() || term.is_empty() {
            return Err(bad("empty doc_id or term".into()));
        }
        let entry = rows.entry(doc.to_string()).or_insert_with(|| {
            order.push(doc.to_string());
            Vec::new()
        });
        entry.push((term.to_string(), count));
    }
    Ok(order
        .into_iter()
        .map(|doc| {
            let terms = rows.remove(&doc).unwrap_or_default();
            TermStream::new(doc, representation, terms)
        })
        .collect())
}

fn namespaced(rep: Representation, term: &str) -> String {
    match rep {
        Representation::All => term.to_string(),
        Representation::Concepts if term.starts_with(CONCEPT_PREFIX) => term.to_string(),
        _ => format!("{}{term}", rep.namespace()),
    }
}

/// Namespaced union of streams that describe the same document.
pub fn merge_streams(streams: &[TermStream]) -> Result<TermStream> {
    let Some(first) = streams.first() else {
        return Err(Error::InvalidArgument("no streams to merge".into()));
    };
    for s in &streams[1..] {
        if s.doc_id != first.doc_id {
            return Err(Error::DocIdMismatch {
                expected: first.doc_id.clone(),
                found: s.doc_id.clone(),
            });
        }
    }
    let terms = streams.iter().flat_map(|s| {
        s.terms
            .iter()
            .map(move |(t, c)| (namespaced(s.representation, t), *c))
    });
    Ok(TermStream::new(
        first.doc_id.clone(),
        Representation::All,
        terms,
    ))
}

/// Which representations to extract, and from which part of a record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub components: Vec<Representation>,
    pub include_title: bool,
}

impl PipelineSpec {
    /// `All` expands to the five components; duplicates are removed.
    pub fn new(reps: &[Representation], include_title: bool) -> Self {
        let mut components: Vec<Representation> = reps
            .iter()
            .flat_map(|r| match r {
                Representation::All => Representation::COMPONENTS.to_vec(),
                other => vec![*other],
            })
            .collect();
        components.sort();
        components.dedup();
        PipelineSpec {
            components,
            include_title,
        }
    }

    /// Parses a comma-separated list such as `stems,concepts` or `all`.
    pub fn parse(reps: &str, include_title: bool) -> Result<Self> {
        let reps = reps
            .split(',')
            .map(|r| r.trim().parse())
            .collect::<Result<Vec<Representation>>>()?;
        if reps.is_empty() {
            return Err(Error::InvalidArgument("empty representation list".into()));
        }
        Ok(Self::new(&reps, include_title))
    }

    pub fn is_merged(&self) -> bool {
        self.components.len() > 1
    }

    pub fn needs(&self, rep: Representation) -> bool {
        self.components.contains(&rep)
    }

    pub fn label(&self) -> String {
        if self.components == Representation::COMPONENTS {
            "all".into()
        } else {
            self.components
                .iter()
                .map(|r| r.name())
                .collect::<Vec<_>>()
                .join(",")
        }
    }
}

/// Files backing a pipeline.
#[derive(Clone, Debug, Default)]
pub struct Resources {
    pub stopwords: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub external: BTreeMap<Representation, Vec<PathBuf>>,
}

impl Resources {
    /// Every file this resource set points at, in a stable order.
    pub fn files(&self) -> Vec<&Path> {
        let mut out: Vec<&Path> = Vec::new();
        out.extend(self.stopwords.as_deref());
        out.extend(self.dictionary.as_deref());
        for files in self.external.values() {
            out.extend(files.iter().map(PathBuf::as_path));
        }
        out
    }
}

/// A ready-to-run extractor: turns records into the configured stream.
pub struct Pipeline {
    spec: PipelineSpec,
    stopwords: Stopwords,
    matcher: Option<ConceptMatcher>,
    external: HashMap<Representation, HashMap<String, TermStream>>,
}

impl Pipeline {
    pub fn load(spec: PipelineSpec, resources: &Resources) -> Result<Self> {
        let stopwords = match &resources.stopwords {
            Some(p) => Stopwords::load(p)?,
            None => Stopwords::spanish(),
        };
        let mut missing: Vec<String> = Vec::new();
        if spec.needs(Representation::Concepts) && resources.dictionary.is_none() {
            missing.push("concepts (code\\tsurface_form dictionary TSV)".into());
        }
        missing.extend(
            spec.components
                .iter()
                .filter(|r| r.is_external())
                .filter(|r| resources.external.get(r).map_or(true, Vec::is_empty))
                .map(|r| format!("{r} (doc_id\\tterm\\tcount TSV)")),
        );
        if !missing.is_empty() {
            return Err(Error::MissingStreams(missing));
        }
        let matcher = match (&resources.dictionary, spec.needs(Representation::Concepts)) {
            (Some(path), true) => Some(ConceptMatcher::new(&ConceptDictionary::load(path)?)?),
            _ => None,
        };
        let mut external = HashMap::new();
        for rep in spec.components.iter().filter(|r| r.is_external()) {
            let mut by_doc: HashMap<String, TermStream> = HashMap::new();
            for path in &resources.external[rep] {
                for s in load_external_stream(path, *rep)? {
                    match by_doc.remove(&s.doc_id) {
                        Some(prev) => {
                            let terms = prev.terms.into_iter().chain(s.terms);
                            by_doc.insert(s.doc_id.clone(), TermStream::new(s.doc_id, *rep, terms));
                        }
                        None => {
                            by_doc.insert(s.doc_id.clone(), s);
                        }
                    }
                }
            }
            external.insert(*rep, by_doc);
        }
        Ok(Pipeline {
            spec,
            stopwords,
            matcher,
            external,
        })
    }

    /// Pipeline over stems only, with the built-in stopword list.
    pub fn stems(include_title: bool) -> Self {
        Pipeline {
            spec: PipelineSpec::new(&[Representation::Stems], include_title),
            stopwords: Stopwords::spanish(),
            matcher: None,
            external: HashMap::new(),
        }
    }

    pub fn spec(&self) -> &PipelineSpec {
        &self.spec
    }

    pub fn matcher(&self) -> Option<&ConceptMatcher> {
        self.matcher.as_ref()
    }

    /// Extracts one record. A single component yields its own
    /// un-namespaced stream; several are merged.
    pub fn extract(&self, record: &Record) -> TermStream {
        let parts: Vec<TermStream> = self
            .spec
            .components
            .iter()
            .map(|rep| self.component(record, *rep))
            .collect();
        if parts.len() == 1 {
            return parts.into_iter().next().expect("one component");
        }
        merge_streams(&parts).expect("components share the record id")
    }

    fn component(&self, record: &Record, rep: Representation) -> TermStream {
        match rep {
            Representation::Stems => {
                extract_stems(record, &self.stopwords, self.spec.include_title)
            }
            Representation::Concepts => self
                .matcher
                .as_ref()
                .expect("matcher loaded for concepts")
                .match_record(record, self.spec.include_title),
            Representation::All => unreachable!("All is expanded at construction"),
            ext => match self.external.get(&ext).and_then(|m| m.get(&record.id)) {
                Some(s) => s.clone(),
                None => {
                    log::debug!("no {ext} stream for {}", record.id);
                    TermStream::empty(&record.id, ext)
                }
            },
        }
    }

    /// Extracts every record, in parallel, preserving order.
    pub fn extract_all(&self, records: &[Record]) -> Vec<TermStream> {
        records.par_iter().map(|r| self.extract(r)).collect()
    }

    /// Warns about external streams whose doc_id matches no record; returns
    /// how many were skipped.
    pub fn report_unknown_external(&self, records: &[Record]) -> usize {
        let ids: HashSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
        let mut skipped = 0;
        for (rep, streams) in &self.external {
            let unknown = streams.keys().filter(|d| !ids.contains(d.as_str())).count();
            if unknown > 0 {
                log::warn!("{unknown} {rep} streams name unknown documents; skipped");
            }
            skipped += unknown;
        }
        skipped
    }
}
