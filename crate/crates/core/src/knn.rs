//! Multi-label k-NN annotation over an [`InvertedIndex`].
//!
//! Retrieval scores have no fixed upper bound, so they are turned into
//! distances relative to the best score of the query, `score_max`:
//!
//! ```text
//! distance = clamp(1 - score / score_max, EPS_MIN, 1)
//! weight   = 1 / distance²
//! ```
//!
//! When the query document is itself indexed it comes back as a hit; it is
//! discarded, and its score serves as `score_max`. The number of labels to emit
//! is the weight-averaged label count of the neighbors (times a multiplier),
//! and labels are ranked by a vote where every neighbor adds its weight to the
//! labels it carries and subtracts it from those it lacks.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::corpus::{LabelCode, Record};
use crate::index::{InvertedIndex, ScoredDoc};
use crate::textproc::{Pipeline, TermStream};

/// Smallest distance a neighbor can have. Keeps exact duplicates of the
/// query finite.
pub const EPS_MIN: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Neighbor {
    pub doc_id: String,
    pub score: f64,
    pub distance: f64,
    pub weight: f64,
    pub labels: Vec<LabelCode>,
    pub label_count: usize,
}

impl Neighbor {
    /// Weighs a hit relative to the query's best score. `labels` must be
    /// sorted.
    pub fn new(doc_id: impl Into<String>, score: f64, score_max: f64, labels: Vec<LabelCode>) -> Self {
        let d = distance(score, score_max);
        Neighbor {
            doc_id: doc_id.into(),
            score,
            distance: d,
            weight: weight(d),
            label_count: labels.len(),
            labels,
        }
    }
}

/// Neighbors of one query plus how they were normalized.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NeighborSet {
    pub neighbors: Vec<Neighbor>,
    pub score_max: f64,
    /// The query document was among the hits and was dropped.
    pub self_hit: bool,
}

pub fn distance(score: f64, score_max: f64) -> f64 {
    (1.0 - score / score_max).clamp(EPS_MIN, 1.0)
}

pub fn weight(distance: f64) -> f64 {
    1.0 / (distance * distance)
}

/// Turns ranked hits into at most `k` weighted neighbors.
///
/// `score_max` is the top hit's score. Any hit whose id equals `self_id` is
/// dropped; otherwise the top hit stays and lands at distance [`EPS_MIN`].
pub fn normalize_neighbors(
    results: &[ScoredDoc],
    self_id: Option<&str>,
    k: usize,
    index: &InvertedIndex,
) -> NeighborSet {
    let Some(top) = results.first() else {
        return NeighborSet::default();
    };
    let score_max = top.score;
    let mut self_hit = false;
    let neighbors = results
        .iter()
        .filter(|r| {
            let is_self = self_id == Some(r.doc_id.as_str());
            self_hit |= is_self;
            !is_self
        })
        .take(k)
        .map(|r| Neighbor::new(&r.doc_id, r.score, score_max, index.doc_labels(r.ordinal).to_vec()))
        .collect();
    NeighborSet {
        neighbors,
        score_max,
        self_hit,
    }
}

/// Half-up rounding that absorbs floating-point noise just below `.5`.
fn round_half_up(x: f64) -> f64 {
    (x + 0.5 + 1e-9).floor()
}

/// Weighted mean of the neighbors' label counts.
pub fn weighted_label_count(neighbors: &[Neighbor]) -> f64 {
    let total: f64 = neighbors.iter().map(|n| n.weight).sum();
    let mass: f64 = neighbors
        .iter()
        .map(|n| n.weight * n.label_count as f64)
        .sum();
    mass / total
}

/// `round(multiplier · weighted mean count)`, at least 1.
pub fn predict_label_count(neighbors: &[Neighbor], multiplier: f64) -> usize {
    if neighbors.is_empty() {
        return 0;
    }
    let n = round_half_up(multiplier * weighted_label_count(neighbors));
    (n as usize).max(1)
}

/// Ranked candidate labels with their net votes, best first; equal votes
/// order by code.
pub fn vote_labels(neighbors: &[Neighbor]) -> Vec<(LabelCode, f64)> {
    let candidates: BTreeSet<&LabelCode> = neighbors.iter().flat_map(|n| &n.labels).collect();
    let mut ranked: Vec<(LabelCode, f64)> = candidates
        .into_iter()
        .map(|c| {
            let mut pos = 0.0;
            let mut neg = 0.0;
            for n in neighbors {
                if n.labels.binary_search(c).is_ok() {
                    pos += n.weight;
                } else {
                    neg += n.weight;
                }
            }
            (c.clone(), pos - neg)
        })
        .collect();
    // stable: ties keep code order
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranked
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KnnParams {
    pub k: usize,
    pub multiplier: f64,
    pub fixed_n: Option<usize>,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams {
            k: 30,
            multiplier: 1.1,
            fixed_n: None,
        }
    }
}

/// Why a prediction came out empty, if it did.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub no_query_terms: bool,
    pub no_neighbors: bool,
    /// The query document was found in the index and excluded.
    pub self_hit: bool,
}

impl Diagnostics {
    pub fn is_empty_prediction(&self) -> bool {
        self.no_query_terms || self.no_neighbors
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub doc_id: String,
    pub ranked: Vec<(LabelCode, f64)>,
    pub n_predicted: usize,
    pub chosen: Vec<LabelCode>,
    pub neighbors: NeighborSet,
    pub diagnostics: Diagnostics,
}

impl Prediction {
    fn empty(doc_id: &str, diagnostics: Diagnostics) -> Self {
        Prediction {
            doc_id: doc_id.to_string(),
            ranked: Vec::new(),
            n_predicted: 0,
            chosen: Vec::new(),
            neighbors: NeighborSet::default(),
            diagnostics,
        }
    }

    /// Builds a prediction from normalized neighbors.
    pub fn from_neighbors(doc_id: &str, set: NeighborSet, params: &KnnParams) -> Self {
        let diagnostics = Diagnostics {
            self_hit: set.self_hit,
            no_neighbors: set.neighbors.is_empty(),
            ..Default::default()
        };
        if set.neighbors.is_empty() {
            return Prediction::empty(doc_id, diagnostics);
        }
        let ranked = vote_labels(&set.neighbors);
        let n_predicted = params
            .fixed_n
            .unwrap_or_else(|| predict_label_count(&set.neighbors, params.multiplier));
        let chosen = ranked
            .iter()
            .take(n_predicted)
            .map(|(c, _)| c.clone())
            .collect();
        Prediction {
            doc_id: doc_id.to_string(),
            ranked,
            n_predicted,
            chosen,
            neighbors: set,
            diagnostics,
        }
    }

    /// Tab-separated neighbor and vote breakdown.
    ///
    /// Neighbor rows: `doc_id neighbor <id> <score> <distance> <weight>`;
    /// vote rows: `doc_id vote <label> <vote> <chosen 0|1>`.
    pub fn explain(&self) -> String {
        let mut out = String::new();
        for n in &self.neighbors.neighbors {
            let _ = writeln!(
                out,
                "{}\tneighbor\t{}\t{}\t{}\t{}",
                self.doc_id, n.doc_id, n.score, n.distance, n.weight
            );
        }
        for (i, (label, vote)) in self.ranked.iter().enumerate() {
            let _ = writeln!(
                out,
                "{}\tvote\t{}\t{}\t{}",
                self.doc_id,
                label,
                vote,
                u8::from(i < self.chosen.len())
            );
        }
        out
    }
}

/// Annotates a precomputed query stream. `self_id` names the query document
/// when it may be present in the index.
pub fn annotate_stream(
    query: &TermStream,
    self_id: Option<&str>,
    index: &InvertedIndex,
    params: &KnnParams,
) -> Prediction {
    if index.kept_query_terms(query) == 0 {
        return Prediction::empty(
            &query.doc_id,
            Diagnostics {
                no_query_terms: true,
                ..Default::default()
            },
        );
    }
    let hits = index.search(query, params.k + 1);
    let set = normalize_neighbors(&hits, self_id, params.k, index);
    Prediction::from_neighbors(&query.doc_id, set, params)
}

/// Extracts `record` with `pipeline` and annotates it against `index`.
pub fn annotate(
    record: &Record,
    index: &InvertedIndex,
    pipeline: &Pipeline,
    params: &KnnParams,
) -> Prediction {
    let query = pipeline.extract(record);
    annotate_stream(&query, Some(&record.id), index, params)
}

/// Annotates many records in parallel; output order follows input order.
pub fn annotate_batch(
    records: &[Record],
    index: &InvertedIndex,
    pipeline: &Pipeline,
    params: &KnnParams,
) -> Vec<Prediction> {
    records
        .par_iter()
        .map(|r| annotate(r, index, pipeline, params))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(c: &str) -> LabelCode {
        LabelCode::new(c).unwrap()
    }

    fn neighbor(distance: f64, labels: &[&str]) -> Neighbor {
        let mut labels: Vec<LabelCode> = labels.iter().map(|c| code(c)).collect();
        labels.sort();
        Neighbor {
            doc_id: String::new(),
            score: 0.0,
            distance,
            weight: weight(distance),
            label_count: labels.len(),
            labels,
        }
    }

    fn with_count(distance: f64, count: usize) -> Neighbor {
        let labels: Vec<String> = (0..count).map(|i| i.to_string()).collect();
        let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
        neighbor(distance, &refs)
    }

    #[test]
    fn distance_and_weight_hand_values() {
        let d = distance(2.0, 8.0);
        assert_eq!(d, 0.75);
        assert!((weight(d) - 1.0 / 0.5625).abs() < 1e-12);
        assert_eq!(distance(5.0, 5.0), EPS_MIN);
        assert!((weight(EPS_MIN) - 1e12).abs() < 1.0);
    }

    #[test]
    fn label_count_regression() {
        let ns = [with_count(0.5, 4), with_count(1.0, 6)];
        assert!((weighted_label_count(&ns) - 4.4).abs() < 1e-12);
        assert_eq!(predict_label_count(&ns, 1.0), 4);
        assert_eq!(predict_label_count(&ns, 1.1), 5);
        for d in [EPS_MIN, 0.3, 1.0] {
            assert_eq!(predict_label_count(&[with_count(d, 7)], 1.0), 7);
        }
    }

    #[test]
    fn count_never_below_one() {
        assert_eq!(predict_label_count(&[with_count(0.5, 0)], 1.0), 1);
    }

    #[test]
    fn half_rounds_up() {
        let ns = [with_count(1.0, 4), with_count(1.0, 5)];
        assert_eq!(predict_label_count(&ns, 1.0), 5);
    }

    #[test]
    fn votes_hand_example() {
        let ns = [neighbor(0.5, &["X", "Y"]), neighbor(1.0, &["Y", "Z"])];
        let v = vote_labels(&ns);
        let got: Vec<(&str, f64)> = v.iter().map(|(c, x)| (c.as_str(), *x)).collect();
        assert_eq!(got, [("Y", 5.0), ("X", 3.0), ("Z", -3.0)]);
    }

    #[test]
    fn shared_label_gets_full_mass() {
        let ns = [neighbor(0.5, &["A", "B"]), neighbor(1.0, &["A"]), neighbor(0.25, &["A", "C"])];
        let v = vote_labels(&ns);
        assert_eq!(v[0].0.as_str(), "A");
        assert_eq!(v[0].1, 4.0 + 1.0 + 16.0);
    }

    #[test]
    fn single_neighbor_orders_by_code() {
        let v = vote_labels(&[neighbor(0.5, &["30", "4", "100"])]);
        let codes: Vec<&str> = v.iter().map(|(c, _)| c.as_str()).collect();
        assert_eq!(codes, ["4", "30", "100"]);
        assert!(v.iter().all(|(_, x)| *x == 4.0));
    }

    #[test]
    fn fixed_n_overrides_regression() {
        let set = NeighborSet {
            neighbors: vec![neighbor(0.5, &["1", "2", "3"])],
            score_max: 1.0,
            self_hit: false,
        };
        let p = Prediction::from_neighbors(
            "q",
            set,
            &KnnParams {
                k: 5,
                multiplier: 1.0,
                fixed_n: Some(2),
            },
        );
        assert_eq!(p.n_predicted, 2);
        assert_eq!(p.chosen, vec![code("1"), code("2")]);
        assert!(p.explain().contains("q\tvote\t3\t4\t0"));
    }
}
