mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{brute_metrics, code, random_instance};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simann::evalens::{evaluate, intersect_runs, union_add, doc_scores, Gold, RunOutput};

fn to_run(pred: &BTreeMap<String, Vec<String>>) -> RunOutput {
    RunOutput::new(pred.iter().map(|(id, l)| (id.clone(), l.iter().map(|c| code(c)).collect()))).unwrap()
}

fn to_gold(gold: &[(String, BTreeSet<String>)]) -> Gold {
    gold.iter().map(|(id, y)| (id.clone(), y.iter().map(|c| code(c)).collect())).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metrics_match_confusion_recount(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (gold, pred) = random_instance(&mut rng);
        let m = evaluate(&to_gold(&gold), &to_run(&pred)).unwrap();
        let want = brute_metrics(&gold, &pred);
        for (g, w) in m.values().iter().zip(want) {
            prop_assert!((g - w).abs() <= 1e-12, "{:?} vs {:?}", m.values(), want);
        }
        prop_assert!(m.mir <= 1.0);
        let expected_mif = if m.mip + m.mir == 0.0 { 0.0 } else { 2.0 * m.mip * m.mir / (m.mip + m.mir) };
        prop_assert_eq!(m.mif, expected_mif);
        prop_assert!(m.ebf <= (m.ebp + m.ebr) / 2.0 + 1e-12);
        for (id, y) in to_gold(&gold) {
            let z = to_run(&pred).get(&id).map(|l| l.iter().cloned().collect()).unwrap_or_default();
            let (p, r, f, _) = doc_scores(&y, &z);
            prop_assert!(f <= (p + r) / 2.0 + 1e-12);
        }
    }

    #[test]
    fn ensemble_laws(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (gold, p1) = random_instance(&mut rng);
        let ids: Vec<String> = gold.iter().map(|(id, _)| id.clone()).collect();
        let fill = |p: &BTreeMap<String, Vec<String>>| -> RunOutput {
            let mut full = p.clone();
            for id in &ids {
                full.entry(id.clone()).or_default();
            }
            to_run(&full)
        };
        let a = fill(&p1);
        let (_, p2) = random_instance(&mut rng);
        let p2: BTreeMap<String, Vec<String>> = p2.into_iter().filter(|(id, _)| ids.contains(id)).collect();
        let b = fill(&p2);
        let ab = intersect_runs(&a, &b).unwrap();
        let ba = intersect_runs(&b, &a).unwrap();
        for id in &ids {
            let x: BTreeSet<_> = ab.get(id).unwrap().iter().collect();
            let y: BTreeSet<_> = ba.get(id).unwrap().iter().collect();
            prop_assert_eq!(x, y);
        }
        prop_assert_eq!(intersect_runs(&ab, &ab).unwrap(), ab.clone());
        prop_assert_eq!(union_add(&a, &[ab.clone()]).unwrap(), a.clone());
        let u = union_add(&a, &[b.clone()]).unwrap();
        for id in &ids {
            prop_assert_eq!(&u.get(id).unwrap()[..a.get(id).unwrap().len()], a.get(id).unwrap());
        }
    }
}
