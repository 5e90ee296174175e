//! Multi-label evaluation and run ensembles.
//!
//! Per document, with gold set `Y` and predicted set `Z`:
//!
//! ```text
//! P = |Y∩Z| / |Z|     R = |Y∩Z| / |Y|     F = 2PR / (P+R)     Acc = |Y∩Z| / |Y∪Z|
//! ```
//!
//! An empty `Z` scores P=1 only when `Y` is also empty (likewise R for an empty
//! `Y`), and two empty sets have Acc=1. Micro measures pool (doc, label)
//! decisions; macro measures average per-label scores over the labels that
//! occur in gold.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, LabelCode};
use crate::error::{Error, Result};
use crate::knn::Prediction;
use crate::textproc::ConceptMatcher;

/// Gold label sets in corpus order.
pub type Gold = IndexMap<String, BTreeSet<LabelCode>>;

pub fn gold_from_corpus(corpus: &Corpus) -> Gold {
    corpus
        .records
        .iter()
        .map(|r| (r.id.clone(), r.labels.clone()))
        .collect()
}

/// Ranked labels per document, in input order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunOutput {
    pub predictions: IndexMap<String, Vec<LabelCode>>,
}

#[derive(Serialize, Deserialize)]
struct Submission {
    documents: Vec<SubmissionDoc>,
}

#[derive(Serialize, Deserialize)]
struct SubmissionDoc {
    id: String,
    labels: Vec<LabelCode>,
}

impl RunOutput {
    /// Builds a run, dropping repeated labels within a document.
    pub fn new<I>(docs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<LabelCode>)>,
    {
        let mut predictions = IndexMap::new();
        for (id, labels) in docs {
            let mut seen = HashSet::new();
            let labels: Vec<LabelCode> = labels.into_iter().filter(|l| seen.insert(l.clone())).collect();
            if predictions.insert(id.clone(), labels).is_some() {
                return Err(Error::InvalidArgument(format!("document {id} appears twice in run")));
            }
        }
        Ok(RunOutput { predictions })
    }

    pub fn from_predictions(preds: &[Prediction]) -> Result<Self> {
        Self::new(preds.iter().map(|p| (p.doc_id.clone(), p.chosen.clone())))
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[LabelCode]> {
        self.predictions.get(id).map(Vec::as_slice)
    }

    pub fn to_json(&self) -> String {
        let sub = Submission {
            documents: self
                .predictions
                .iter()
                .map(|(id, labels)| SubmissionDoc {
                    id: id.clone(),
                    labels: labels.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&sub).expect("run serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let sub: Submission = serde_json::from_str(text)?;
        Self::new(sub.documents.into_iter().map(|d| (d.id, d.labels)))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let sub: Submission = serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        Self::new(sub.documents.into_iter().map(|d| (d.id, d.labels)))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub mip: f64,
    pub mir: f64,
    pub mif: f64,
    pub ebp: f64,
    pub ebr: f64,
    pub ebf: f64,
    pub map: f64,
    pub mar: f64,
    pub maf: f64,
    pub acc: f64,
    pub n_docs: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Example-based scores of one document: `(P, R, F, Acc)`.
pub fn doc_scores(gold: &BTreeSet<LabelCode>, pred: &BTreeSet<LabelCode>) -> (f64, f64, f64, f64) {
    let tp = gold.intersection(pred).count();
    let p = if pred.is_empty() {
        if gold.is_empty() { 1.0 } else { 0.0 }
    } else {
        ratio(tp, pred.len())
    };
    let r = if gold.is_empty() {
        if pred.is_empty() { 1.0 } else { 0.0 }
    } else {
        ratio(tp, gold.len())
    };
    let union = gold.len() + pred.len() - tp;
    let acc = if union == 0 { 1.0 } else { ratio(tp, union) };
    (p, r, harmonic(p, r), acc)
}

#[derive(Default)]
struct Confusion {
    tp: usize,
    fp: usize,
    fn_: usize,
}

pub fn evaluate(gold: &Gold, pred: &RunOutput) -> Result<MetricsReport> {
    if let Some(id) = pred.predictions.keys().find(|id| !gold.contains_key(*id)) {
        return Err(Error::UnknownDocument(id.clone()));
    }
    let n = gold.len();
    let mut micro = Confusion::default();
    let mut per_label: BTreeMap<&LabelCode, Confusion> = BTreeMap::new();
    for labels in gold.values() {
        for l in labels {
            per_label.entry(l).or_default();
        }
    }
    let (mut sp, mut sr, mut sf, mut sa) = (0.0, 0.0, 0.0, 0.0);
    let empty = Vec::new();
    for (id, y) in gold {
        let z: BTreeSet<LabelCode> = pred.predictions.get(id).unwrap_or(&empty).iter().cloned().collect();
        let (p, r, f, a) = doc_scores(y, &z);
        sp += p;
        sr += r;
        sf += f;
        sa += a;
        for l in &z {
            let hit = y.contains(l);
            if hit {
                micro.tp += 1;
            } else {
                micro.fp += 1;
            }
            if let Some(c) = per_label.get_mut(l) {
                if hit {
                    c.tp += 1;
                } else {
                    c.fp += 1;
                }
            }
        }
        for l in y.difference(&z) {
            micro.fn_ += 1;
            per_label.get_mut(l).expect("gold labels registered").fn_ += 1;
        }
    }

    let mip = ratio(micro.tp, micro.tp + micro.fp);
    let mir = ratio(micro.tp, micro.tp + micro.fn_);
    let (mut map, mut mar, mut maf) = (0.0, 0.0, 0.0);
    for c in per_label.values() {
        let p = ratio(c.tp, c.tp + c.fp);
        let r = ratio(c.tp, c.tp + c.fn_);
        map += p;
        mar += r;
        maf += harmonic(p, r);
    }
    let nl = per_label.len().max(1) as f64;
    let nd = n.max(1) as f64;
    Ok(MetricsReport {
        mip,
        mir,
        mif: harmonic(mip, mir),
        ebp: sp / nd,
        ebr: sr / nd,
        ebf: sf / nd,
        map: map / nl,
        mar: mar / nl,
        maf: maf / nl,
        acc: sa / nd,
        n_docs: n,
    })
}

impl MetricsReport {
    pub const HEADER: &'static str = "MiF\tEBP\tEBR\tEBF\tMaP\tMaR\tMaF\tMiP\tMiR\tAcc";

    pub fn values(&self) -> [f64; 10] {
        [
            self.mif, self.ebp, self.ebr, self.ebf, self.map, self.mar, self.maf, self.mip, self.mir, self.acc,
        ]
    }

    /// Header plus one row of the ten measures.
    pub fn to_tsv(&self) -> String {
        let row: Vec<String> = self.values().iter().map(|v| format!("{v:.4}")).collect();
        format!("{}\n{}\n", Self::HEADER, row.join("\t"))
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        out.write_all(self.to_tsv().as_bytes())
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_tsv())
    }
}

fn check_keys(runs: &[&RunOutput]) -> Result<()> {
    let first: BTreeSet<&String> = runs[0].predictions.keys().collect();
    for r in &runs[1..] {
        let other: BTreeSet<&String> = r.predictions.keys().collect();
        if other != first {
            let diff = first.symmetric_difference(&other).map(|s| s.to_string()).collect();
            return Err(Error::KeyMismatch(diff));
        }
    }
    Ok(())
}

/// Labels present in both runs, in `a`'s order.
pub fn intersect_runs(a: &RunOutput, b: &RunOutput) -> Result<RunOutput> {
    check_keys(&[a, b])?;
    let predictions = a
        .predictions
        .iter()
        .map(|(id, la)| {
            let lb: HashSet<&LabelCode> = b.predictions[id].iter().collect();
            (id.clone(), la.iter().filter(|l| lb.contains(l)).cloned().collect())
        })
        .collect();
    Ok(RunOutput { predictions })
}

/// `base` followed by each addition's new labels, additions applied in turn.
pub fn union_add(base: &RunOutput, additions: &[RunOutput]) -> Result<RunOutput> {
    let mut all = vec![base];
    all.extend(additions);
    check_keys(&all)?;
    let predictions = base
        .predictions
        .iter()
        .map(|(id, labels)| {
            let mut out = labels.clone();
            let mut seen: HashSet<LabelCode> = out.iter().cloned().collect();
            for add in additions {
                for l in &add.predictions[id] {
                    if seen.insert(l.clone()) {
                        out.push(l.clone());
                    }
                }
            }
            (id.clone(), out)
        })
        .collect();
    Ok(RunOutput { predictions })
}

/// Codes whose surface forms occur in each record, most frequent first.
pub fn concept_match_run(corpus: &Corpus, matcher: &ConceptMatcher, include_title: bool) -> RunOutput {
    use rayon::prelude::*;
    let rows: Vec<(String, Vec<LabelCode>)> = corpus
        .records
        .par_iter()
        .map(|r| {
            let mut hits: Vec<(LabelCode, u32)> = matcher.counts(&r.text(include_title)).into_iter().collect();
            // stable over code order
            hits.sort_by(|a, b| b.1.cmp(&a.1));
            (r.id.clone(), hits.into_iter().map(|(c, _)| c).collect())
        })
        .collect();
    RunOutput {
        predictions: rows.into_iter().collect(),
    }
}
