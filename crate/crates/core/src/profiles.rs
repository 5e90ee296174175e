//! Label profiles: one synthetic document per label.
//!
//! A profile holds the summed term counts of every training document carrying
//! its label. Profiles are indexed like ordinary documents (each labeled with
//! its own code), and a new record is annotated with the labels of the most
//! similar profiles.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;

use crate::corpus::{compute_df, LabelCode, Record};
use crate::error::{Error, Result};
use crate::index::{build_index, IndexKind, IndexMeta, InvertedIndex};
use crate::knn::{annotate_stream, KnnParams, Prediction};
use crate::textproc::{Pipeline, PipelineSpec, TermStream};

#[derive(Clone, Debug, PartialEq)]
pub struct LabelProfile {
    pub label: LabelCode,
    pub terms: TermStream,
    pub n_members: u32,
}

/// One profile per label, in code order.
pub fn build_profiles(streams: &[TermStream], labels: &[BTreeSet<LabelCode>]) -> Result<Vec<LabelProfile>> {
    if streams.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} term streams but {} label sets",
            streams.len(),
            labels.len()
        )));
    }
    let mut members: BTreeMap<&LabelCode, Vec<usize>> = BTreeMap::new();
    for (i, ls) in labels.iter().enumerate() {
        for l in ls {
            members.entry(l).or_default().push(i);
        }
    }
    let representation = streams.first().map(|s| s.representation);
    Ok(members
        .into_par_iter()
        .map(|(label, docs)| {
            let mut sum: HashMap<&str, u32> = HashMap::new();
            for &d in &docs {
                for (t, c) in &streams[d].terms {
                    *sum.entry(t.as_str()).or_default() += c;
                }
            }
            let terms = sum.into_iter().map(|(t, c)| (t.to_string(), c));
            LabelProfile {
                label: label.clone(),
                terms: TermStream::new(
                    label.to_string(),
                    representation.expect("labels imply documents"),
                    terms,
                ),
                n_members: docs.len() as u32,
            }
        })
        .collect())
}

/// Indexes profiles, recomputing document frequencies over the profiles.
pub fn build_profile_index(
    profiles: &[LabelProfile],
    min_df: u32,
    max_df_ratio: f64,
    pipeline: Option<PipelineSpec>,
) -> Result<InvertedIndex> {
    let streams: Vec<TermStream> = profiles.iter().map(|p| p.terms.clone()).collect();
    let labels: Vec<BTreeSet<LabelCode>> = profiles
        .iter()
        .map(|p| BTreeSet::from([p.label.clone()]))
        .collect();
    let df = compute_df(&streams, min_df, max_df_ratio)?;
    let mut index = build_index(&streams, &labels, &df)?;
    index.meta = IndexMeta {
        kind: IndexKind::Profiles,
        pipeline,
        min_df,
        max_df_ratio,
    };
    Ok(index)
}

/// Top `fixed_n` labels voted by the `k` most similar profiles.
pub fn annotate_profiles(
    record: &Record,
    profile_index: &InvertedIndex,
    pipeline: &Pipeline,
    k: usize,
    fixed_n: usize,
) -> Prediction {
    let query = pipeline.extract(record);
    let params = KnnParams {
        k,
        multiplier: 1.0,
        fixed_n: Some(fixed_n),
    };
    // profile ids are label codes, never document ids
    annotate_stream(&query, None, profile_index, &params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::Representation;

    fn code(c: &str) -> LabelCode {
        LabelCode::new(c).unwrap()
    }

    fn stream(id: &str, terms: &[(&str, u32)]) -> TermStream {
        TermStream::new(
            id,
            Representation::Stems,
            terms.iter().map(|(t, c)| (t.to_string(), *c)),
        )
    }

    #[test]
    fn aggregation_hand_example() {
        let streams = [stream("doc1", &[("t1", 2)]), stream("doc2", &[("t1", 1), ("t2", 3)])];
        let labels = [BTreeSet::from([code("A")]), BTreeSet::from([code("A"), code("B")])];
        let p = build_profiles(&streams, &labels).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].label, code("A"));
        assert_eq!(p[0].terms.terms, vec![("t1".into(), 3), ("t2".into(), 3)]);
        assert_eq!(p[0].n_members, 2);
        assert_eq!(p[1].terms.terms, vec![("t1".into(), 1), ("t2".into(), 3)]);
        assert_eq!(p[1].terms.doc_id, "B");
    }

    #[test]
    fn single_member_profile_is_the_document() {
        let s = stream("d", &[("x", 4), ("y", 1)]);
        let p = build_profiles(&[s.clone()], &[BTreeSet::from([code("7")])]).unwrap();
        assert_eq!(p[0].terms.terms, s.terms);
        assert!(build_profiles(&[], &[]).unwrap().is_empty());
    }

    #[test]
    fn profile_index_recomputes_df() {
        let streams = [
            stream("1", &[("a", 1), ("b", 1)]),
            stream("2", &[("a", 1), ("c", 1)]),
            stream("3", &[("a", 1), ("d", 1)]),
        ];
        // one label over all docs: a single profile, every term df=1
        let labels = vec![BTreeSet::from([code("L")]); 3];
        let p = build_profiles(&streams, &labels).unwrap();
        let idx = build_profile_index(&p, 0, 1.0, None).unwrap();
        assert_eq!(idx.meta.kind, IndexKind::Profiles);
        assert_eq!(idx.df("a"), Some(1));
        assert_eq!(idx.doc_labels(0), &[code("L")]);
    }
}
