//! Immutable inverted index with TF-IDF scoring.
//!
//! Scoring of a document `d` against a bag-of-terms query `q`:
//!
//! ```text
//! score(q, d) = Σ_{t ∈ q ∩ d}  qcount(t) · sqrt(dcount(t)) · idf(t)² · norm(d)
//! idf(t)      = 1 + ln(N / (df(t) + 1))
//! norm(d)     = 1 / sqrt(number of kept-term tokens in d)
//! ```
//!
//! Each term contribution is evaluated left to right in that order, and the
//! sum runs over query terms in byte order of the term string, so scores are
//! reproducible bit for bit. Ties rank by ascending document id.

mod io;

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use io::{FORMAT_VERSION, MAGIC};

use crate::corpus::{DfStats, LabelCode};
use crate::error::{Error, Result};
use crate::textproc::{PipelineSpec, TermStream};

/// What the indexed documents are.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    #[default]
    Documents,
    Profiles,
}

/// Provenance stored alongside the postings.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub kind: IndexKind,
    pub pipeline: Option<PipelineSpec>,
    pub min_df: u32,
    pub max_df_ratio: f64,
}

/// One search hit.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredDoc {
    pub ordinal: u32,
    pub doc_id: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvertedIndex {
    pub meta: IndexMeta,
    terms: Vec<String>,
    term_ids: HashMap<String, u32>,
    df: Vec<u32>,
    idf: Vec<f64>,
    /// CSR layout: postings of term `t` live at `offsets[t]..offsets[t + 1]`.
    offsets: Vec<u64>,
    post_docs: Vec<u32>,
    post_counts: Vec<u32>,
    doc_ids: Vec<String>,
    doc_norm: Vec<f64>,
    doc_labels: Vec<Vec<LabelCode>>,
    /// Position of each document in ascending doc-id order, for tie-breaks.
    doc_rank: Vec<u32>,
    ordinals: HashMap<String, u32>,
}

pub fn idf(n_docs: usize, df: u32) -> f64 {
    1.0 + (n_docs as f64 / (f64::from(df) + 1.0)).ln()
}

/// Builds an index over `streams`, keeping only the terms `df` keeps.
///
/// `labels[i]` belongs to `streams[i]`; `df` must have been computed over the
/// same streams.
pub fn build_index(
    streams: &[TermStream],
    labels: &[BTreeSet<LabelCode>],
    df: &DfStats,
) -> Result<InvertedIndex> {
    if streams.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} streams but {} label sets",
            streams.len(),
            labels.len()
        )));
    }
    if df.n_docs != streams.len() {
        return Err(Error::InvalidArgument(format!(
            "document frequencies cover {} documents, got {} streams",
            df.n_docs,
            streams.len()
        )));
    }
    let terms: Vec<String> = df.kept_terms().into_iter().map(str::to_string).collect();
    if terms.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let term_ids: HashMap<String, u32> = terms
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i as u32))
        .collect();

    let mut ordinals = HashMap::with_capacity(streams.len());
    for (i, s) in streams.iter().enumerate() {
        if ordinals.insert(s.doc_id.clone(), i as u32).is_some() {
            return Err(Error::DuplicateId {
                id: s.doc_id.clone(),
                line: i + 1,
            });
        }
    }

    // per-document kept postings, resolved in parallel
    let per_doc: Vec<Vec<(u32, u32)>> = streams
        .par_iter()
        .map(|s| {
            s.terms
                .iter()
                .filter_map(|(t, c)| term_ids.get(t.as_str()).map(|&id| (id, *c)))
                .collect()
        })
        .collect();

    let mut lengths = vec![0u64; terms.len()];
    for doc in &per_doc {
        for &(t, _) in doc {
            lengths[t as usize] += 1;
        }
    }
    let mut offsets = Vec::with_capacity(terms.len() + 1);
    offsets.push(0u64);
    for len in &lengths {
        offsets.push(offsets.last().unwrap() + len);
    }
    let total = *offsets.last().unwrap() as usize;
    let mut post_docs = vec![0u32; total];
    let mut post_counts = vec![0u32; total];
    let mut cursor: Vec<u64> = offsets[..terms.len()].to_vec();
    let mut doc_norm = Vec::with_capacity(streams.len());
    for (d, doc) in per_doc.iter().enumerate() {
        let mut tokens = 0u64;
        for &(t, c) in doc {
            let slot = &mut cursor[t as usize];
            post_docs[*slot as usize] = d as u32;
            post_counts[*slot as usize] = c;
            *slot += 1;
            tokens += u64::from(c);
        }
        // documents without kept terms never score; any positive norm will do
        doc_norm.push(if tokens == 0 {
            1.0
        } else {
            1.0 / (tokens as f64).sqrt()
        });
    }

    let df_kept: Vec<u32> = terms.iter().map(|t| df.df[t]).collect();
    let idf_vals: Vec<f64> = df_kept.iter().map(|&f| idf(streams.len(), f)).collect();
    let doc_ids: Vec<String> = streams.iter().map(|s| s.doc_id.clone()).collect();
    let doc_rank = rank_ids(&doc_ids);

    Ok(InvertedIndex {
        meta: IndexMeta {
            kind: IndexKind::Documents,
            pipeline: None,
            min_df: df.min_df,
            max_df_ratio: df.max_df_ratio,
        },
        terms,
        term_ids,
        df: df_kept,
        idf: idf_vals,
        offsets,
        post_docs,
        post_counts,
        doc_ids,
        doc_norm,
        doc_labels: labels.iter().map(|l| l.iter().cloned().collect()).collect(),
        doc_rank,
        ordinals,
    })
}

fn rank_ids(ids: &[String]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..ids.len() as u32).collect();
    order.sort_by(|&a, &b| ids[a as usize].cmp(&ids[b as usize]));
    let mut rank = vec![0u32; ids.len()];
    for (r, &d) in order.iter().enumerate() {
        rank[d as usize] = r as u32;
    }
    rank
}

/// One term's share of a document score, evaluated left to right.
#[inline]
pub fn term_contribution(qcount: f64, dcount: u32, idf2: f64, norm: f64) -> f64 {
    qcount * f64::from(dcount).sqrt() * idf2 * norm
}

#[derive(Clone, Copy)]
struct Candidate {
    score: f64,
    rank: u32,
    doc: u32,
}

impl Candidate {
    /// `Greater` means ranked higher.
    fn better(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.rank.cmp(&self.rank))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.better(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.better(other)
    }
}

impl InvertedIndex {
    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn n_postings(&self) -> usize {
        self.post_docs.len()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn contains_term(&self, term: &str) -> bool {
        self.term_ids.contains_key(term)
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.term_ids.get(term).map(|&t| self.idf[t as usize])
    }

    pub fn df(&self, term: &str) -> Option<u32> {
        self.term_ids.get(term).map(|&t| self.df[t as usize])
    }

    /// `(doc ordinal, count)` pairs for a term, ascending by ordinal.
    pub fn postings(&self, term: &str) -> Vec<(u32, u32)> {
        match self.term_ids.get(term) {
            Some(&t) => {
                let r = self.range(t);
                self.post_docs[r.clone()]
                    .iter()
                    .copied()
                    .zip(self.post_counts[r].iter().copied())
                    .collect()
            }
            None => Vec::new(),
        }
    }

    fn range(&self, t: u32) -> std::ops::Range<usize> {
        self.offsets[t as usize] as usize..self.offsets[t as usize + 1] as usize
    }

    pub fn doc_id(&self, ordinal: u32) -> &str {
        &self.doc_ids[ordinal as usize]
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn ordinal(&self, doc_id: &str) -> Option<u32> {
        self.ordinals.get(doc_id).copied()
    }

    pub fn doc_norm(&self, ordinal: u32) -> f64 {
        self.doc_norm[ordinal as usize]
    }

    pub fn doc_labels(&self, ordinal: u32) -> &[LabelCode] {
        &self.doc_labels[ordinal as usize]
    }

    pub fn doc_label_count(&self, ordinal: u32) -> usize {
        self.doc_labels[ordinal as usize].len()
    }

    /// Number of query terms that survive the vocabulary filter.
    pub fn kept_query_terms(&self, query: &TermStream) -> usize {
        query
            .terms
            .iter()
            .filter(|(t, _)| self.term_ids.contains_key(t.as_str()))
            .count()
    }

    /// Disjunctive top-k search. Returns at most `top_k` documents with a
    /// positive score, best first.
    pub fn search(&self, query: &TermStream, top_k: usize) -> Vec<ScoredDoc> {
        if top_k == 0 {
            return Vec::new();
        }
        let mut acc = vec![0.0f64; self.n_docs()];
        let mut touched: Vec<u32> = Vec::new();
        // query terms are sorted, and term ids follow byte order
        for (term, qcount) in &query.terms {
            let Some(&t) = self.term_ids.get(term.as_str()) else {
                continue;
            };
            let idf2 = self.idf[t as usize] * self.idf[t as usize];
            let q = f64::from(*qcount);
            let r = self.range(t);
            for (&d, &c) in self.post_docs[r.clone()].iter().zip(&self.post_counts[r]) {
                let slot = &mut acc[d as usize];
                if *slot == 0.0 {
                    touched.push(d);
                }
                *slot += term_contribution(q, c, idf2, self.doc_norm[d as usize]);
            }
        }

        let mut heap: BinaryHeap<Reverse<Candidate>> = BinaryHeap::with_capacity(top_k + 1);
        for d in touched {
            let cand = Candidate {
                score: acc[d as usize],
                rank: self.doc_rank[d as usize],
                doc: d,
            };
            if heap.len() < top_k {
                heap.push(Reverse(cand));
            } else if cand > heap.peek().expect("heap is full").0 {
                heap.pop();
                heap.push(Reverse(cand));
            }
        }
        let mut best: Vec<Candidate> = heap.into_iter().map(|Reverse(c)| c).collect();
        best.sort_unstable_by(|a, b| b.cmp(a));
        best.into_iter()
            .map(|c| ScoredDoc {
                ordinal: c.doc,
                doc_id: self.doc_ids[c.doc as usize].clone(),
                score: c.score,
            })
            .collect()
    }
}
