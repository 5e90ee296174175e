//! Run recipes: declarative end-to-end configurations.
//!
//! A recipe is a small TOML file. Single runs pick a representation, DF
//! filter and k-NN settings, and optionally meta-labels (`npmi_threshold`),
//! label profiles (`use_profiles`) or plain dictionary matching
//! (`concept_match`). Ensemble recipes combine other recipes by name:
//!
//! ```toml
//! name = "iria3"
//!
//! [ensemble]
//! op = "intersect"
//! runs = ["iria1", "iria2"]
//! ```
//!
//! Every intermediate index and every run is cached in the work directory
//! under a SHA-256 key of the input files, resources and recipe.

use std::cell::OnceCell;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{compute_df, load_corpus, Corpus};
use crate::error::{Error, Result};
use crate::evalens::{concept_match_run, evaluate, gold_from_corpus, intersect_runs, union_add, MetricsReport, RunOutput};
use crate::index::{build_index, IndexKind, IndexMeta, InvertedIndex};
use crate::knn::{annotate_batch, KnnParams, Prediction};
use crate::metalabels::{build_table, compute_pair_stats, expand_prediction, rewrite_corpus, ExpandMode, MetaLabelTable};
use crate::profiles::{annotate_profiles, build_profile_index, build_profiles};
use crate::textproc::{ConceptDictionary, ConceptMatcher, Pipeline, PipelineSpec, Resources};

const CACHE_VERSION: &str = "simann-cache-1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleOp {
    Intersect,
    UnionAdd,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub op: EnsembleOp,
    pub runs: Vec<String>,
}

fn default_representation() -> String {
    "all".into()
}
fn default_min_df() -> u32 {
    5
}
fn default_max_df_ratio() -> f64 {
    0.5
}
fn default_k() -> usize {
    30
}
fn default_multiplier() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecipe {
    pub name: String,
    #[serde(default = "default_representation")]
    pub representation: String,
    #[serde(default = "yes")]
    pub include_title: bool,
    #[serde(default = "default_min_df")]
    pub min_df: u32,
    #[serde(default = "default_max_df_ratio")]
    pub max_df_ratio: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_multiplier")]
    pub multiplier: f64,
    #[serde(default)]
    pub fixed_n: Option<usize>,
    #[serde(default)]
    pub npmi_threshold: Option<f64>,
    #[serde(default)]
    pub use_profiles: bool,
    #[serde(default)]
    pub concept_match: bool,
    #[serde(default)]
    pub expand_before_cut: bool,
    #[serde(default)]
    pub ensemble: Option<EnsembleSpec>,
}

impl RunRecipe {
    pub fn parse(text: &str) -> Result<Self> {
        let r: RunRecipe = toml::from_str(text).map_err(|e| Error::Recipe(e.to_string()))?;
        r.validate()?;
        Ok(r)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Recipe(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("recipe serializes")
    }

    pub fn pipeline_spec(&self) -> Result<PipelineSpec> {
        PipelineSpec::parse(&self.representation, self.include_title)
            .map_err(|e| Error::Recipe(format!("recipe {}: {e}", self.name)))
    }

    pub fn knn_params(&self) -> KnnParams {
        KnnParams {
            k: self.k,
            multiplier: self.multiplier,
            fixed_n: self.fixed_n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Recipe(format!("recipe {}: {m}", self.name)));
        if self.name.trim().is_empty() {
            return Err(Error::Recipe("recipe without a name".into()));
        }
        if let Some(e) = &self.ensemble {
            if e.runs.len() < 2 {
                return bad("an ensemble needs at least two runs".into());
            }
            if e.op == EnsembleOp::Intersect && e.runs.len() != 2 {
                return bad("intersect takes exactly two runs".into());
            }
            return Ok(());
        }
        if self.concept_match {
            return Ok(());
        }
        self.pipeline_spec()?;
        if self.k == 0 {
            return bad("k must be positive".into());
        }
        if !(self.multiplier > 0.0 && self.multiplier.is_finite()) {
            return bad(format!("multiplier {} must be positive", self.multiplier));
        }
        if self.fixed_n == Some(0) {
            return bad("fixed_n must be positive".into());
        }
        if self.use_profiles && self.fixed_n.is_none() {
            return bad("profile runs need fixed_n".into());
        }
        if !(self.max_df_ratio > 0.0 && self.max_df_ratio <= 1.0) {
            return bad(format!("max_df_ratio {} outside (0, 1]", self.max_df_ratio));
        }
        if let Some(t) = self.npmi_threshold {
            if !(t > -1.0 && t <= 1.0) {
                return bad(format!("npmi_threshold {t} outside (-1, 1]"));
            }
        }
        Ok(())
    }
}

/// Shipped presets, as TOML text.
pub const PRESETS: &[(&str, &str)] = &[
    ("iria1", include_str!("../presets/iria1.toml")),
    ("iria2", include_str!("../presets/iria2.toml")),
    ("iria3", include_str!("../presets/iria3.toml")),
    ("iria4", include_str!("../presets/iria4.toml")),
    ("concept-match", include_str!("../presets/concept-match.toml")),
    ("iria-mix", include_str!("../presets/iria-mix.toml")),
];

/// Named recipes that ensembles can refer to.
#[derive(Clone, Debug, Default)]
pub struct RecipeBook {
    recipes: BTreeMap<String, RunRecipe>,
}

impl RecipeBook {
    pub fn presets() -> Self {
        let mut book = RecipeBook::default();
        for (name, text) in PRESETS {
            let r = RunRecipe::parse(text).expect("shipped presets are valid");
            debug_assert_eq!(&r.name, name);
            book.insert(r);
        }
        book
    }

    /// Adds or replaces a recipe by name.
    pub fn insert(&mut self, recipe: RunRecipe) {
        self.recipes.insert(recipe.name.clone(), recipe);
    }

    pub fn get(&self, name: &str) -> Result<&RunRecipe> {
        self.recipes.get(name).ok_or_else(|| {
            let known: Vec<&str> = self.recipes.keys().map(String::as_str).collect();
            Error::Recipe(format!("unknown recipe {name:?} (known: {})", known.join(", ")))
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.recipes.keys().map(String::as_str)
    }
}

#[derive(Clone, Debug)]
pub struct RunInputs {
    pub train: PathBuf,
    pub test: PathBuf,
    pub resources: Resources,
    pub workdir: PathBuf,
    /// Forces meta-label expansion before the label-count cut for every run.
    pub expand_before_cut: bool,
}

#[derive(Clone, Debug)]
pub struct RecipeOutput {
    pub run: RunOutput,
    /// Present when the test records carry labels.
    pub metrics: Option<MetricsReport>,
    pub cache_hit: bool,
}

fn hash_file(h: &mut Sha256, path: &Path) -> Result<()> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = vec![0u8; 1 << 16];
    let mut inner = Sha256::new();
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        inner.update(&buf[..n]);
    }
    h.update(inner.finalize());
    Ok(())
}

fn hex_key(h: Sha256) -> String {
    hex::encode(&h.finalize()[..12])
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

struct Runner<'a> {
    book: &'a RecipeBook,
    inputs: &'a RunInputs,
    train_digest: [u8; 32],
    inputs_digest: [u8; 32],
    train: OnceCell<Corpus>,
    test: Corpus,
}

impl Runner<'_> {
    fn train(&self) -> Result<&Corpus> {
        if self.train.get().is_none() {
            let loaded = load_corpus(&self.inputs.train, true)?;
            if loaded.dropped > 0 {
                log::warn!("{} training records without labels dropped", loaded.dropped);
            }
            let _ = self.train.set(loaded.corpus);
        }
        Ok(self.train.get().expect("just set"))
    }

    fn key(&self, parts: &[&[u8]], use_inputs: bool) -> String {
        let mut h = Sha256::new();
        h.update(CACHE_VERSION);
        h.update(if use_inputs { self.inputs_digest } else { self.train_digest });
        for p in parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p);
        }
        hex_key(h)
    }

    fn dir(&self, sub: &str) -> Result<PathBuf> {
        let d = self.inputs.workdir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        Ok(d)
    }

    fn run(&self, name: &str, stack: &mut Vec<String>) -> Result<(RunOutput, String, bool)> {
        if stack.iter().any(|s| s == name) {
            stack.push(name.to_string());
            return Err(Error::Recipe(format!("recipe cycle: {}", stack.join(" -> "))));
        }
        let recipe = self.book.get(name)?;
        stack.push(name.to_string());

        let mut parts: Vec<Vec<u8>> = vec![serde_json::to_vec(recipe)?];
        parts.push(vec![u8::from(self.inputs.expand_before_cut)]);
        let mut children = Vec::new();
        if let Some(e) = &recipe.ensemble {
            for sub in &e.runs {
                let (out, key, _) = self.run(sub, stack)?;
                parts.push(key.clone().into_bytes());
                children.push(out);
            }
        }
        stack.pop();

        let refs: Vec<&[u8]> = parts.iter().map(Vec::as_slice).collect();
        let key = self.key(&refs, true);
        let path = self.dir("runs")?.join(format!("{}-{key}.json", file_stem(name)));
        if path.exists() {
            log::info!("{name}: cached run {}", path.display());
            return Ok((RunOutput::load(&path)?, key, true));
        }

        let out = match &recipe.ensemble {
            Some(e) => match e.op {
                EnsembleOp::Intersect => intersect_runs(&children[0], &children[1])?,
                EnsembleOp::UnionAdd => union_add(&children[0], &children[1..])?,
            },
            None if recipe.concept_match => self.concept_run(recipe.include_title)?,
            None => self.knn_run(recipe)?,
        };
        log::info!("{name}: {} documents annotated", out.len());
        out.save(&path)?;
        Ok((out, key, false))
    }

    fn concept_run(&self, include_title: bool) -> Result<RunOutput> {
        let Some(path) = &self.inputs.resources.dictionary else {
            return Err(Error::MissingStreams(vec!["concepts (code\\tsurface_form dictionary TSV)".into()]));
        };
        let matcher = ConceptMatcher::new(&ConceptDictionary::load(path)?)?;
        Ok(concept_match_run(&self.test, &matcher, include_title))
    }

    fn index(&self, recipe: &RunRecipe, pipeline: &Pipeline, train: &Corpus) -> Result<InvertedIndex> {
        let spec = pipeline.spec();
        let desc = serde_json::to_vec(&(
            spec,
            recipe.min_df,
            recipe.max_df_ratio,
            recipe.npmi_threshold,
            recipe.use_profiles,
        ))?;
        let key = self.key(&[&desc], false);
        let kind = if recipe.use_profiles { "profiles" } else { "docs" };
        let path = self.dir("indexes")?.join(format!("{kind}-{key}.idx"));
        if path.exists() {
            log::info!("cached index {}", path.display());
            return InvertedIndex::load(&path);
        }
        let streams = pipeline.extract_all(&train.records);
        let index = if recipe.use_profiles {
            let profiles = build_profiles(&streams, &train.labels())?;
            build_profile_index(&profiles, recipe.min_df, recipe.max_df_ratio, Some(spec.clone()))?
        } else {
            let df = compute_df(&streams, recipe.min_df, recipe.max_df_ratio)?;
            let mut index = build_index(&streams, &train.labels(), &df)?;
            index.meta = IndexMeta {
                kind: IndexKind::Documents,
                pipeline: Some(spec.clone()),
                min_df: recipe.min_df,
                max_df_ratio: recipe.max_df_ratio,
            };
            index
        };
        index.save(&path)?;
        Ok(index)
    }

    fn knn_run(&self, recipe: &RunRecipe) -> Result<RunOutput> {
        let pipeline = Pipeline::load(recipe.pipeline_spec()?, &self.inputs.resources)?;
        let base = self.train()?;
        let table: Option<MetaLabelTable> = match recipe.npmi_threshold {
            Some(t) => Some(build_table(&compute_pair_stats(base), t)?),
            None => None,
        };
        let rewritten;
        let train = match &table {
            Some(t) => {
                log::info!("{}: {} meta-labels at npmi >= {}", recipe.name, t.len(), t.threshold);
                rewritten = rewrite_corpus(base, t);
                &rewritten
            }
            None => base,
        };
        let index = self.index(recipe, &pipeline, train)?;
        let preds: Vec<Prediction> = if recipe.use_profiles {
            let fixed_n = recipe.fixed_n.expect("validated");
            self.test
                .records
                .par_iter()
                .map(|r| annotate_profiles(r, &index, &pipeline, recipe.k, fixed_n))
                .collect()
        } else {
            annotate_batch(&self.test.records, &index, &pipeline, &recipe.knn_params())
        };
        let empty = preds.iter().filter(|p| p.diagnostics.is_empty_prediction()).count();
        if empty > 0 {
            log::warn!("{}: {empty} documents got no prediction", recipe.name);
        }
        let Some(table) = table else {
            return RunOutput::from_predictions(&preds);
        };
        let mode = if recipe.expand_before_cut || self.inputs.expand_before_cut {
            ExpandMode::BeforeCut {
                multiplier: recipe.multiplier,
                fixed_n: recipe.fixed_n,
            }
        } else {
            ExpandMode::AfterCut
        };
        let rows = preds
            .par_iter()
            .map(|p| Ok((p.doc_id.clone(), expand_prediction(p, &table, mode)?)))
            .collect::<Result<Vec<_>>>()?;
        RunOutput::new(rows)
    }
}

/// Runs the named recipe (and anything it refers to) end to end.
pub fn run_recipe(book: &RecipeBook, name: &str, inputs: &RunInputs) -> Result<RecipeOutput> {
    let mut h = Sha256::new();
    hash_file(&mut h, &inputs.train)?;
    for (rep, files) in &inputs.resources.external {
        h.update(rep.name());
        for f in files {
            hash_file(&mut h, f)?;
        }
    }
    for (tag, f) in [("stopwords", &inputs.resources.stopwords), ("dictionary", &inputs.resources.dictionary)] {
        if let Some(f) = f {
            h.update(tag);
            hash_file(&mut h, f)?;
        }
    }
    let train_digest: [u8; 32] = h.finalize().into();
    let mut h = Sha256::new();
    h.update(train_digest);
    hash_file(&mut h, &inputs.test)?;
    let inputs_digest: [u8; 32] = h.finalize().into();

    let test = load_corpus(&inputs.test, false)?.corpus;
    let runner = Runner {
        book,
        inputs,
        train_digest,
        inputs_digest,
        train: OnceCell::new(),
        test,
    };
    let (run, _, cache_hit) = runner.run(name, &mut Vec::new())?;
    let metrics = if runner.test.records.iter().any(|r| !r.labels.is_empty()) {
        Some(evaluate(&gold_from_corpus(&runner.test), &run)?)
    } else {
        None
    };
    Ok(RecipeOutput {
        run,
        metrics,
        cache_hit,
    })
}
