//! Dictionary concept matching over token sequences.
//!
//! Surface forms are tokenized and folded like document text, then compiled
//! into one multi-pattern automaton. Each token is encoded as
//! `0x00 <id digits> 0x01`, with digits drawn from bytes `2..=255`, so every
//! match starts and ends on a token boundary and leftmost-longest over bytes
//! is leftmost-longest over tokens.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use aho_corasick::{AhoCorasick, AhoCorasickBuilder, MatchKind};

use super::{tokenize, Representation, TermStream};
use crate::corpus::{LabelCode, Record};
use crate::error::{Error, Result};

/// Namespace of concept terms inside a term stream.
pub const CONCEPT_PREFIX: &str = "decs:";

const TOKEN_START: u8 = 0x00;
const TOKEN_END: u8 = 0x01;

/// Codes with their synonyms, folded and whitespace-normalized.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConceptDictionary {
    pub entries: Vec<(LabelCode, Vec<String>)>,
}

impl ConceptDictionary {
    /// Builds a dictionary from `(code, surface form)` pairs. Repeated codes
    /// accumulate synonyms; forms with no tokens are ignored.
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S)>,
        S: AsRef<str>,
    {
        let mut order: Vec<LabelCode> = Vec::new();
        let mut forms: HashMap<LabelCode, Vec<String>> = HashMap::new();
        for (code, form) in pairs {
            let code = LabelCode::base(code.as_ref().trim())?;
            let norm = tokenize(form.as_ref()).join(" ");
            if norm.is_empty() {
                continue;
            }
            let slot = forms.entry(code.clone()).or_insert_with(|| {
                order.push(code);
                Vec::new()
            });
            if !slot.contains(&norm) {
                slot.push(norm);
            }
        }
        let entries = order
            .into_iter()
            .map(|c| {
                let f = forms.remove(&c).unwrap_or_default();
                (c, f)
            })
            .collect();
        Ok(ConceptDictionary { entries })
    }

    /// Reads a `code \t surface_form` TSV file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let Some((code, form)) = line.split_once('\t') else {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: "expected code \\t surface_form".into(),
                });
            };
            pairs.push((code.to_string(), form.to_string()));
        }
        Self::from_pairs(pairs)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

/// Compiled dictionary.
pub struct ConceptMatcher {
    vocab: HashMap<String, u32>,
    /// Codes sharing each distinct surface form, indexed by pattern id.
    codes: Vec<Vec<LabelCode>>,
    lengths: Vec<usize>,
    automaton: AhoCorasick,
}

/// One dictionary hit in a token sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConceptSpan {
    pub start: usize,
    pub len: usize,
    pub codes: Vec<LabelCode>,
}

fn encode_token(id: Option<u32>, out: &mut Vec<u8>) {
    out.push(TOKEN_START);
    if let Some(mut id) = id {
        loop {
            out.push(2 + (id % 254) as u8);
            id /= 254;
            if id == 0 {
                break;
            }
        }
    }
    out.push(TOKEN_END);
}

impl ConceptMatcher {
    pub fn new(dict: &ConceptDictionary) -> Result<Self> {
        if dict.is_empty() {
            return Err(Error::InvalidArgument("concept dictionary is empty".into()));
        }
        let mut vocab: HashMap<String, u32> = HashMap::new();
        let mut by_form: BTreeMap<&str, Vec<LabelCode>> = BTreeMap::new();
        for (code, forms) in &dict.entries {
            for f in forms {
                by_form.entry(f.as_str()).or_default().push(code.clone());
            }
        }
        let mut patterns: Vec<Vec<u8>> = Vec::with_capacity(by_form.len());
        let mut codes = Vec::with_capacity(by_form.len());
        let mut lengths = Vec::with_capacity(by_form.len());
        for (form, mut cs) in by_form {
            let mut bytes = Vec::new();
            let mut n = 0;
            for tok in form.split(' ') {
                let next = vocab.len() as u32;
                let id = *vocab.entry(tok.to_string()).or_insert(next);
                encode_token(Some(id), &mut bytes);
                n += 1;
            }
            cs.sort();
            cs.dedup();
            patterns.push(bytes);
            codes.push(cs);
            lengths.push(n);
        }
        let automaton = AhoCorasickBuilder::new()
            .match_kind(MatchKind::LeftmostLongest)
            .build(&patterns)
            .map_err(|e| Error::InvalidArgument(format!("concept automaton: {e}")))?;
        Ok(ConceptMatcher {
            vocab,
            codes,
            lengths,
            automaton,
        })
    }

    /// Leftmost-longest, non-overlapping hits over folded tokens.
    pub fn spans(&self, tokens: &[String]) -> Vec<ConceptSpan> {
        let mut haystack = Vec::with_capacity(tokens.len() * 4);
        let mut offsets = Vec::with_capacity(tokens.len());
        for t in tokens {
            offsets.push(haystack.len());
            encode_token(self.vocab.get(t.as_str()).copied(), &mut haystack);
        }
        self.automaton
            .find_iter(&haystack)
            .map(|m| {
                let pid = m.pattern().as_usize();
                let start = offsets
                    .binary_search(&m.start())
                    .expect("matches begin at token starts");
                ConceptSpan {
                    start,
                    len: self.lengths[pid],
                    codes: self.codes[pid].clone(),
                }
            })
            .collect()
    }

    /// Occurrence count per code for a piece of text.
    pub fn counts(&self, text: &str) -> BTreeMap<LabelCode, u32> {
        let mut out: BTreeMap<LabelCode, u32> = BTreeMap::new();
        for span in self.spans(&tokenize(text)) {
            for code in span.codes {
                *out.entry(code).or_default() += 1;
            }
        }
        out
    }

    /// Concept stream for a record: one `decs:<code>` term per hit.
    pub fn match_record(&self, record: &Record, include_title: bool) -> TermStream {
        let terms = self
            .counts(&record.text(include_title))
            .into_iter()
            .map(|(code, n)| (format!("{CONCEPT_PREFIX}{code}"), n));
        TermStream::new(record.id.clone(), Representation::Concepts, terms)
    }
}

/// Concept stream of a record against a compiled dictionary.
pub fn match_concepts(record: &Record, matcher: &ConceptMatcher, include_title: bool) -> TermStream {
    matcher.match_record(record, include_title)
}
