//! Meta-labels: fusing strongly co-occurring label pairs into one code.
//!
//! Pair affinity is normalized pointwise mutual information over the
//! training documents (natural log):
//!
//! ```text
//! pmi  = ln( joint·n / (count_a·count_b) )
//! npmi = pmi / -ln(joint / n)
//! ```
//!
//! Pairs at or above a threshold get a meta code `"a.b"`. Training label sets
//! are rewritten greedily, strongest pair first, each base label used at most
//! once; predictions are expanded back to base labels before scoring.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{Corpus, LabelCode, Record, META_SEPARATOR};
use crate::error::{Error, Result};
use crate::knn::{predict_label_count, Prediction};

#[derive(Clone, Debug, PartialEq)]
pub struct PairStats {
    /// `pair.0 < pair.1` in code order.
    pub pair: (LabelCode, LabelCode),
    pub count_joint: u32,
    pub count_a: u32,
    pub count_b: u32,
    pub n_docs: u32,
    pub pmi: f64,
    pub npmi: f64,
}

pub fn pmi(count_joint: u32, count_a: u32, count_b: u32, n_docs: u32) -> f64 {
    if count_joint == 0 {
        return f64::NEG_INFINITY;
    }
    ((count_joint as f64 * n_docs as f64) / (count_a as f64 * count_b as f64)).ln()
}

pub fn npmi(count_joint: u32, count_a: u32, count_b: u32, n_docs: u32) -> f64 {
    if count_joint == 0 {
        return -1.0;
    }
    if count_joint == count_a && count_joint == count_b {
        return 1.0;
    }
    let p = pmi(count_joint, count_a, count_b, n_docs);
    (p / -(count_joint as f64 / n_docs as f64).ln()).clamp(-1.0, 1.0)
}

impl PairStats {
    pub fn new(pair: (LabelCode, LabelCode), count_joint: u32, count_a: u32, count_b: u32, n_docs: u32) -> Self {
        PairStats {
            pair,
            count_joint,
            count_a,
            count_b,
            n_docs,
            pmi: pmi(count_joint, count_a, count_b, n_docs),
            npmi: npmi(count_joint, count_a, count_b, n_docs),
        }
    }
}

type PairCounts = HashMap<(u32, u32), u32>;

/// Statistics for every label pair that co-occurs in at least one document,
/// sorted by pair.
pub fn compute_pair_stats(corpus: &Corpus) -> Vec<PairStats> {
    let inventory: Vec<LabelCode> = corpus
        .records
        .iter()
        .flat_map(|r| r.labels.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let ids: HashMap<&LabelCode, u32> = inventory
        .iter()
        .enumerate()
        .map(|(i, c)| (c, i as u32))
        .collect();

    let mut single = vec![0u32; inventory.len()];
    for r in &corpus.records {
        for l in &r.labels {
            single[ids[l] as usize] += 1;
        }
    }

    let joint: PairCounts = corpus
        .records
        .par_iter()
        .fold(PairCounts::new, |mut acc, r| {
            // BTreeSet order matches inventory order, so a < b below
            let doc: Vec<u32> = r.labels.iter().map(|l| ids[l]).collect();
            for (i, &a) in doc.iter().enumerate() {
                for &b in &doc[i + 1..] {
                    *acc.entry((a, b)).or_default() += 1;
                }
            }
            acc
        })
        .reduce(PairCounts::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            a
        });

    let n = corpus.n_docs() as u32;
    let mut pairs: Vec<((u32, u32), u32)> = joint.into_iter().collect();
    pairs.sort_unstable();
    pairs
        .into_iter()
        .map(|((a, b), j)| {
            PairStats::new(
                (inventory[a as usize].clone(), inventory[b as usize].clone()),
                j,
                single[a as usize],
                single[b as usize],
                n,
            )
        })
        .collect()
}

const TSV_HEADER: &str = "code_a\tcode_b\tcount_joint\tcount_a\tcount_b\tpmi\tnpmi";

pub fn write_pair_stats<W: Write>(stats: &[PairStats], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TSV_HEADER}")?;
    for s in stats {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            s.pair.0, s.pair.1, s.count_joint, s.count_a, s.count_b, s.pmi, s.npmi
        )?;
    }
    out.flush()
}

/// Reads a table written by [`write_pair_stats`]. `n_docs` is not stored,
/// so it comes back as 0.
pub fn read_pair_stats(path: impl AsRef<Path>) -> Result<Vec<PairStats>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || (i == 0 && line.starts_with("code_a")) {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 7 {
            return Err(bad(i + 1, format!("expected 7 columns, found {}", f.len())));
        }
        let count = |s: &str| s.parse::<u32>().map_err(|e| bad(i + 1, format!("{s:?}: {e}")));
        let real = |s: &str| s.parse::<f64>().map_err(|e| bad(i + 1, format!("{s:?}: {e}")));
        let a = LabelCode::base(f[0])?;
        let b = LabelCode::base(f[1])?;
        if a >= b {
            return Err(bad(i + 1, format!("pair {a}, {b} is not in ascending order")));
        }
        let npmi = real(f[6])?;
        if !(-1.0..=1.0).contains(&npmi) {
            return Err(bad(i + 1, format!("npmi {npmi} outside [-1, 1]")));
        }
        out.push(PairStats {
            pair: (a, b),
            count_joint: count(f[2])?,
            count_a: count(f[3])?,
            count_b: count(f[4])?,
            n_docs: 0,
            pmi: real(f[5])?,
            npmi,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaEntry {
    pub meta_code: LabelCode,
    pub npmi: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetaLabelTable {
    pub threshold: f64,
    pub entries: BTreeMap<(LabelCode, LabelCode), MetaEntry>,
    pub reverse: BTreeMap<LabelCode, (LabelCode, LabelCode)>,
}

pub fn meta_code(a: &LabelCode, b: &LabelCode) -> LabelCode {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    LabelCode::new(format!("{a}{META_SEPARATOR}{b}")).expect("joined codes are non-empty")
}

/// Keeps pairs with `npmi >= threshold`.
pub fn build_table(stats: &[PairStats], threshold: f64) -> Result<MetaLabelTable> {
    if !(threshold > -1.0 && threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "npmi threshold {threshold} outside (-1, 1]"
        )));
    }
    let mut table = MetaLabelTable {
        threshold,
        ..Default::default()
    };
    for s in stats.iter().filter(|s| s.npmi >= threshold) {
        let code = meta_code(&s.pair.0, &s.pair.1);
        table.reverse.insert(code.clone(), s.pair.clone());
        table.entries.insert(
            s.pair.clone(),
            MetaEntry {
                meta_code: code,
                npmi: s.npmi,
            },
        );
    }
    Ok(table)
}

impl MetaLabelTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, a: &LabelCode, b: &LabelCode) -> Option<&MetaEntry> {
        if a <= b {
            self.entries.get(&(a.clone(), b.clone()))
        } else {
            self.entries.get(&(b.clone(), a.clone()))
        }
    }

    pub fn components(&self, meta: &LabelCode) -> Option<&(LabelCode, LabelCode)> {
        self.reverse.get(meta)
    }
}

/// Greedily replaces qualifying pairs by their meta codes.
pub fn rewrite_labels(labels: &BTreeSet<LabelCode>, table: &MetaLabelTable) -> BTreeSet<LabelCode> {
    let codes: Vec<&LabelCode> = labels.iter().collect();
    let mut candidates: Vec<(usize, usize, &MetaEntry)> = Vec::new();
    for i in 0..codes.len() {
        for j in i + 1..codes.len() {
            if let Some(e) = table.get(codes[i], codes[j]) {
                candidates.push((i, j, e));
            }
        }
    }
    candidates.sort_by(|x, y| {
        y.2.npmi
            .total_cmp(&x.2.npmi)
            .then_with(|| x.2.meta_code.cmp(&y.2.meta_code))
    });
    let mut used = vec![false; codes.len()];
    let mut out = BTreeSet::new();
    for (i, j, e) in candidates {
        if !used[i] && !used[j] {
            used[i] = true;
            used[j] = true;
            out.insert(e.meta_code.clone());
        }
    }
    for (i, c) in codes.into_iter().enumerate() {
        if !used[i] {
            out.insert(c.clone());
        }
    }
    out
}

/// Copy of the corpus with every label set rewritten.
pub fn rewrite_corpus(corpus: &Corpus, table: &MetaLabelTable) -> Corpus {
    let records = corpus
        .records
        .par_iter()
        .map(|r| Record {
            labels: rewrite_labels(&r.labels, table),
            ..r.clone()
        })
        .collect();
    Corpus { records }
}

/// Expands meta codes in order, keeping the first occurrence of each label.
pub fn expand_ordered<'a, I>(codes: I, table: &MetaLabelTable) -> Result<Vec<LabelCode>>
where
    I: IntoIterator<Item = &'a LabelCode>,
{
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut push = |c: &LabelCode| {
        if seen.insert(c.clone()) {
            out.push(c.clone());
        }
    };
    for c in codes {
        if c.is_meta() {
            let (a, b) = table
                .components(c)
                .ok_or_else(|| Error::UnknownMetaLabel(c.to_string()))?;
            push(a);
            push(b);
        } else {
            push(c);
        }
    }
    Ok(out)
}

pub fn expand_labels(codes: &BTreeSet<LabelCode>, table: &MetaLabelTable) -> Result<BTreeSet<LabelCode>> {
    Ok(expand_ordered(codes, table)?.into_iter().collect())
}

/// When a prediction's meta codes are expanded relative to the label-count cut.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExpandMode {
    /// Cut the ranked meta/base list first, then expand the chosen codes.
    AfterCut,
    /// Expand the ranked list and the neighbors' label sets first, then
    /// recompute the label count and cut.
    BeforeCut { multiplier: f64, fixed_n: Option<usize> },
}

/// Base labels of a prediction made over a meta-labeled index.
pub fn expand_prediction(pred: &Prediction, table: &MetaLabelTable, mode: ExpandMode) -> Result<Vec<LabelCode>> {
    match mode {
        ExpandMode::AfterCut => expand_ordered(&pred.chosen, table),
        ExpandMode::BeforeCut { multiplier, fixed_n } => {
            let ranked = expand_ordered(pred.ranked.iter().map(|(c, _)| c), table)?;
            let mut neighbors = pred.neighbors.neighbors.clone();
            for n in &mut neighbors {
                n.label_count = expand_ordered(&n.labels, table)?.len();
            }
            let n = fixed_n.unwrap_or_else(|| predict_label_count(&neighbors, multiplier));
            Ok(ranked.into_iter().take(n).collect())
        }
    }
}
