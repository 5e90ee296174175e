//! Independent brute-force oracles and synthetic data shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use simann::corpus::{LabelCode, Record};
use simann::textproc::{tokenize, Representation, TermStream};

pub fn code(c: &str) -> LabelCode {
    LabelCode::new(c).unwrap()
}

pub fn random_streams<R: Rng>(rng: &mut R, n_docs: usize, vocab: usize, max_len: usize) -> Vec<TermStream> {
    (0..n_docs)
        .map(|i| {
            let len = rng.gen_range(1..=max_len);
            // skewed draw so some terms are common and some rare
            let terms: Vec<(String, u32)> = (0..len)
                .map(|_| {
                    let t = (rng.gen::<f64>().powi(2) * vocab as f64) as usize;
                    (format!("w{t:03}"), rng.gen_range(1..4))
                })
                .collect();
            TermStream::new(format!("doc{i:04}"), Representation::Stems, terms)
        })
        .collect()
}

/// Scores every document directly from the raw streams, best first, ties by
/// id. Only documents sharing a kept term with the query are returned.
pub fn brute_search(
    streams: &[TermStream],
    min_df: u32,
    max_df_ratio: f64,
    query: &TermStream,
    top_k: usize,
) -> Vec<(String, f64)> {
    let n = streams.len();
    let mut df: HashMap<&str, u32> = HashMap::new();
    for s in streams {
        for (t, _) in &s.terms {
            *df.entry(t).or_default() += 1;
        }
    }
    let kept = |t: &str| {
        df.get(t)
            .is_some_and(|&d| d > min_df && f64::from(d) <= max_df_ratio * n as f64)
    };
    let mut out: Vec<(String, f64)> = Vec::new();
    for s in streams {
        let kept_tokens: u64 = s.terms.iter().filter(|(t, _)| kept(t)).map(|(_, c)| u64::from(*c)).sum();
        let norm = if kept_tokens == 0 { 1.0 } else { 1.0 / (kept_tokens as f64).sqrt() };
        let mut score = 0.0;
        let mut hit = false;
        for (t, q) in &query.terms {
            if !kept(t) {
                continue;
            }
            let c = s.count(t);
            if c == 0 {
                continue;
            }
            hit = true;
            let idf = 1.0 + (n as f64 / (f64::from(df[t.as_str()]) + 1.0)).ln();
            score += f64::from(*q) * f64::from(c).sqrt() * (idf * idf) * norm;
        }
        if hit {
            out.push((s.doc_id.clone(), score));
        }
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out.truncate(top_k);
    out
}

/// Leftmost-longest matching by trying every offset and every form.
pub fn brute_spans(tokens: &[String], dict: &[(String, String)]) -> Vec<(usize, usize, Vec<String>)> {
    let forms: Vec<(Vec<String>, &str)> = dict
        .iter()
        .map(|(c, f)| (tokenize(f), c.as_str()))
        .filter(|(f, _)| !f.is_empty())
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let best = forms
            .iter()
            .filter(|(f, _)| tokens[i..].starts_with(f))
            .map(|(f, _)| f.len())
            .max();
        match best {
            Some(len) => {
                let mut codes: Vec<String> = forms
                    .iter()
                    .filter(|(f, _)| f.len() == len && tokens[i..].starts_with(f))
                    .map(|(_, c)| c.to_string())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                codes.sort_by(|a, b| code(a).cmp(&code(b)));
                out.push((i, len, codes));
                i += len;
            }
            None => i += 1,
        }
    }
    out
}

/// The ten measures recomputed from a full (doc × label) confusion table,
/// in report order: MiF EBP EBR EBF MaP MaR MaF MiP MiR Acc.
pub fn brute_metrics(gold: &[(String, BTreeSet<String>)], pred: &BTreeMap<String, Vec<String>>) -> [f64; 10] {
    let universe: BTreeSet<&String> = gold.iter().flat_map(|(_, y)| y).collect();
    let all_labels: BTreeSet<&String> = universe
        .iter()
        .copied()
        .chain(pred.values().flatten())
        .collect();
    let empty = Vec::new();
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    let mut per: BTreeMap<&String, [usize; 3]> = BTreeMap::new();
    let (mut sp, mut sr, mut sf, mut sa) = (0.0, 0.0, 0.0, 0.0);
    for (id, y) in gold {
        let z: BTreeSet<&String> = pred.get(id).unwrap_or(&empty).iter().collect();
        let (mut dtp, mut dfp, mut dfn) = (0usize, 0usize, 0usize);
        for l in &all_labels {
            let in_y = y.contains(*l);
            let in_z = z.contains(l);
            let cell = per.entry(l).or_default();
            match (in_y, in_z) {
                (true, true) => {
                    dtp += 1;
                    cell[0] += 1;
                }
                (false, true) => {
                    dfp += 1;
                    cell[1] += 1;
                }
                (true, false) => {
                    dfn += 1;
                    cell[2] += 1;
                }
                (false, false) => {}
            }
        }
        tp += dtp;
        fp += dfp;
        fn_ += dfn;
        let p = if dtp + dfp == 0 { if dfn == 0 { 1.0 } else { 0.0 } } else { dtp as f64 / (dtp + dfp) as f64 };
        let r = if dtp + dfn == 0 { if dfp == 0 { 1.0 } else { 0.0 } } else { dtp as f64 / (dtp + dfn) as f64 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        let a = if dtp + dfp + dfn == 0 { 1.0 } else { dtp as f64 / (dtp + dfp + dfn) as f64 };
        sp += p;
        sr += r;
        sf += f;
        sa += a;
    }
    let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let hm = |p: f64, r: f64| if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    let mip = div(tp, tp + fp);
    let mir = div(tp, tp + fn_);
    let (mut map, mut mar, mut maf) = (0.0, 0.0, 0.0);
    for l in &universe {
        let [t, f_p, f_n] = per.get(l).copied().unwrap_or_default();
        let p = div(t, t + f_p);
        let r = div(t, t + f_n);
        map += p;
        mar += r;
        maf += hm(p, r);
    }
    let nl = universe.len().max(1) as f64;
    let nd = gold.len().max(1) as f64;
    [hm(mip, mir), sp / nd, sr / nd, sf / nd, map / nl, mar / nl, maf / nl, mip, mir, sa / nd]
}

/// Topic vocabularies for the synthetic corpus: each topic has words and a
/// cluster of labels.
const TOPICS: &[(&[&str], &[&str])] = &[
    (
        &["tumor", "mediastino", "reseccion", "quirurgica", "oncologico", "toracico", "biopsia", "maligno"],
        &["9562", "8650", "21030", "21034"],
    ),
    (
        &["diabetes", "insulina", "glucosa", "pacientes", "tratamiento", "control", "metabolico", "obesidad"],
        &["3920", "7520", "6213"],
    ),
    (
        &["embarazo", "mujeres", "prenatal", "parto", "gestacion", "materna", "neonatal", "cesarea"],
        &["11451", "4731", "9062", "28612"],
    ),
    (
        &["vacunacion", "cobertura", "infantil", "sarampion", "inmunizacion", "poblacion", "campana", "salud"],
        &["14920", "3304", "331"],
    ),
    (
        &["hospital", "urgencias", "ingreso", "estancia", "costes", "gestion", "calidad", "servicio"],
        &["6598", "18227", "1015"],
    ),
];

const FILLER: &[&str] = &["estudio", "resultados", "analisis", "metodo", "objetivo", "datos", "grupo", "casos"];

/// Records with topic-correlated text and labels. Every fourth record of
/// topic 0 carries the strongly paired codes 21030 and 21034 together.
pub fn synthetic_records<R: Rng>(rng: &mut R, n: usize, prefix: &str) -> Vec<Record> {
    (0..n)
        .map(|i| {
            let t = rng.gen_range(0..TOPICS.len());
            let (words, labels) = TOPICS[t];
            let len = rng.gen_range(20..60);
            let mut text: Vec<&str> = (0..len)
                .map(|_| {
                    if rng.gen_bool(0.7) {
                        *words.choose(rng).unwrap()
                    } else {
                        *FILLER.choose(rng).unwrap()
                    }
                })
                .collect();
            if rng.gen_bool(0.2) {
                let (w2, _) = TOPICS[(t + 1) % TOPICS.len()];
                text.extend(w2.choose_multiple(rng, 3));
            }
            let n_labels = rng.gen_range(1..=2);
            let mut codes: BTreeSet<LabelCode> = labels
                .choose_multiple(rng, n_labels)
                .map(|c| code(c))
                .collect();
            if t == 0 && i % 4 == 0 {
                codes.insert(code("21030"));
                codes.insert(code("21034"));
            }
            Record {
                id: format!("{prefix}{i:05}"),
                journal: None,
                db: Some("LILACS".into()),
                title: text[..3].join(" "),
                abstract_text: text.join(" "),
                labels: codes,
            }
        })
        .collect()
}

pub const DICTIONARY: &str = "9562\ttumores\n9562\ttumor\n8650\tmediastino\n3920\tdiabetes\n11451\tembarazo\n14920\tvacunación\n6598\thospital\n7520\tinsulina\n";

/// Crude external streams standing in for lemmas, noun phrases and
/// dependencies: token, adjacent pair and skip pair counts.
pub fn write_external(records: &[Record], dir: &Path) -> [std::path::PathBuf; 3] {
    let mut lemmas = String::new();
    let mut nps = String::new();
    let mut deps = String::new();
    for r in records {
        let toks = tokenize(&r.text(true));
        let mut l: BTreeMap<&str, u32> = BTreeMap::new();
        for t in &toks {
            *l.entry(t).or_default() += 1;
        }
        for (t, c) in l {
            lemmas += &format!("{}\t{t}\t{c}\n", r.id);
        }
        let mut p: BTreeMap<String, u32> = BTreeMap::new();
        for w in toks.windows(2) {
            *p.entry(format!("{}_{}", w[0], w[1])).or_default() += 1;
        }
        for (t, c) in p {
            nps += &format!("{}\t{t}\t{c}\n", r.id);
        }
        let mut d: BTreeMap<String, u32> = BTreeMap::new();
        for w in toks.windows(3) {
            *d.entry(format!("{}>{}", w[0], w[2])).or_default() += 1;
        }
        for (t, c) in d {
            deps += &format!("{}\t{t}\t{c}\n", r.id);
        }
    }
    let paths = [dir.join("lemmas.tsv"), dir.join("nps.tsv"), dir.join("deps.tsv")];
    for (p, text) in paths.iter().zip([lemmas, nps, deps]) {
        std::fs::write(p, text).unwrap();
    }
    paths
}

type Instance = (Vec<(String, BTreeSet<String>)>, BTreeMap<String, Vec<String>>);

pub fn random_instance<R: Rng>(rng: &mut R) -> Instance {
    let n_docs = rng.gen_range(1..=50);
    let n_labels = rng.gen_range(1..=30);
    let labels: Vec<String> = (0..n_labels).map(|i| (i * 7 + 3).to_string()).collect();
    let mut gold = Vec::new();
    let mut pred = BTreeMap::new();
    for d in 0..n_docs {
        let id = format!("doc{d}");
        let ny = rng.gen_range(0..6.min(n_labels + 1));
        let y: BTreeSet<String> = labels.choose_multiple(rng, ny).cloned().collect();
        if rng.gen_bool(0.9) {
            let nz = rng.gen_range(0..6.min(n_labels + 1));
            let z: Vec<String> = labels.choose_multiple(rng, nz).cloned().collect();
            pred.insert(id.clone(), z);
        }
        gold.push((id, y));
    }
    (gold, pred)
}


const WORDS: &[&str] = &["persona", "de", "mediana", "edad", "tumor", "del", "mediastino", "cáncer", "Pulmón", "alto", "riesgo"];

/// A dictionary whose forms are often prefixes or infixes of each other.
pub fn random_dictionary<R: Rng>(rng: &mut R) -> Vec<(String, String)> {
    (0..rng.gen_range(1..25))
        .map(|_| {
            let len = rng.gen_range(1..4);
            let form: Vec<&str> = (0..len).map(|_| *WORDS.choose(rng).unwrap()).collect();
            (rng.gen_range(1..40).to_string(), form.join(" "))
        })
        .collect()
}

pub fn random_text<R: Rng>(rng: &mut R) -> String {
    let len = rng.gen_range(0..60);
    (0..len).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}


/// Train and test corpora plus every resource file the presets need.
pub struct Fixture {
    pub train: std::path::PathBuf,
    pub test: std::path::PathBuf,
    pub resources: simann::textproc::Resources,
}

pub fn write_fixture(dir: &Path, n_train: usize, n_test: usize, seed: u64) -> Fixture {
    use rand::SeedableRng;
    use simann::corpus::{write_corpus, Corpus};
    use simann::textproc::Resources;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let train = synthetic_records(&mut rng, n_train, "tr");
    let test = synthetic_records(&mut rng, n_test, "te");
    let paths = (dir.join("train.jsonl"), dir.join("test.jsonl"));
    write_corpus(&Corpus::new(train.clone()).unwrap(), &paths.0).unwrap();
    write_corpus(&Corpus::new(test.clone()).unwrap(), &paths.1).unwrap();
    let all: Vec<Record> = train.into_iter().chain(test).collect();
    let [lemmas, nps, deps] = write_external(&all, dir);
    let dictionary = dir.join("dict.tsv");
    std::fs::write(&dictionary, DICTIONARY).unwrap();
    let mut resources = Resources {
        dictionary: Some(dictionary),
        ..Default::default()
    };
    resources.external.insert(Representation::Lemmas, vec![lemmas]);
    resources.external.insert(Representation::Nps, vec![nps]);
    resources.external.insert(Representation::Deps, vec![deps]);
    Fixture {
        train: paths.0,
        test: paths.1,
        resources,
    }
}
