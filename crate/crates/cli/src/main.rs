use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use simann::corpus::{compute_df, load_corpus, write_corpus, Corpus};
use simann::evalens::{
    concept_match_run, evaluate, gold_from_corpus, intersect_runs, union_add, RunOutput,
};
use simann::index::{build_index, IndexKind, IndexMeta, InvertedIndex};
use simann::knn::{annotate_batch, KnnParams, Prediction};
use simann::metalabels::{
    build_table, compute_pair_stats, expand_prediction, read_pair_stats, rewrite_corpus,
    write_pair_stats, ExpandMode, MetaLabelTable,
};
use simann::profiles::{annotate_profiles, build_profile_index, build_profiles};
use simann::recipe::{run_recipe, RecipeBook, RunInputs, RunRecipe, PRESETS};
use simann::textproc::{ConceptDictionary, ConceptMatcher, Pipeline, PipelineSpec, Representation, Resources};
use simann::{Error, Result};

/// Similarity-based descriptor annotation for Spanish biomedical abstracts.
#[derive(Parser)]
#[command(name = "simann", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Index a labeled training corpus.
    BuildIndex(BuildIndexArgs),
    /// Annotate records by k-NN voting over a document index.
    Annotate(AnnotateArgs),
    /// Label-pair NPMI statistics of a training corpus.
    Npmi {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rewrite training labels with meta-labels.
    Rewrite {
        #[arg(long)]
        corpus: PathBuf,
        /// NPMI table written by `npmi`.
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label-profile index and annotation.
    #[command(subcommand)]
    Profiles(ProfilesCommand),
    /// Dictionary matching as a run of its own.
    ConceptRun {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        dictionary: PathBuf,
        #[arg(long)]
        no_title: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Combine runs.
    Ensemble {
        #[arg(value_enum)]
        op: EnsembleArg,
        /// First run is the base; union-add appends the others in turn.
        #[arg(long, num_args = 2.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a run against gold labels.
    Evaluate {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute a run recipe end to end.
    Run(RunArgs),
    /// Print the shipped recipe presets.
    Presets,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnsembleArg {
    Intersect,
    UnionAdd,
}

#[derive(Args, Clone, Default)]
struct ResourceArgs {
    /// Stopword list replacing the built-in Spanish one.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Concept dictionary, `code \t surface form`.
    #[arg(long)]
    dictionary: Option<PathBuf>,
    /// Lemma streams, `doc_id \t term \t count`.
    #[arg(long, num_args = 1..)]
    lemmas: Vec<PathBuf>,
    /// Noun-phrase streams.
    #[arg(long, num_args = 1..)]
    nps: Vec<PathBuf>,
    /// Dependency-triple streams.
    #[arg(long, num_args = 1..)]
    deps: Vec<PathBuf>,
}

impl ResourceArgs {
    fn resources(&self) -> Resources {
        let mut r = Resources {
            stopwords: self.stopwords.clone(),
            dictionary: self.dictionary.clone(),
            ..Default::default()
        };
        for (rep, files) in [
            (Representation::Lemmas, &self.lemmas),
            (Representation::Nps, &self.nps),
            (Representation::Deps, &self.deps),
        ] {
            if !files.is_empty() {
                r.external.insert(rep, files.clone());
            }
        }
        r
    }
}

#[derive(Args)]
struct BuildIndexArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Comma-separated representations, or `all`.
    #[arg(long, default_value = "stems")]
    rep: String,
    #[arg(long)]
    no_title: bool,
    #[arg(long, default_value_t = 5)]
    min_df: u32,
    #[arg(long, default_value_t = 0.5)]
    max_df_ratio: f64,
    #[command(flatten)]
    resources: ResourceArgs,
    /// Also write the document-frequency table.
    #[arg(long)]
    df_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetaArgs {
    /// NPMI table used to expand meta-labels in the output.
    #[arg(long, requires = "threshold")]
    table: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    expand_before_cut: bool,
}

#[derive(Args)]
struct AnnotateArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 30)]
    k: usize,
    #[arg(long, default_value_t = 1.1)]
    multiplier: f64,
    #[arg(long)]
    fixed_n: Option<usize>,
    #[command(flatten)]
    meta: MetaArgs,
    #[command(flatten)]
    resources: ResourceArgs,
    /// Per-document neighbor and vote breakdown, TSV.
    #[arg(long)]
    explain: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum ProfilesCommand {
    /// Build a profile index from a (possibly meta-labeled) corpus.
    Build(BuildIndexArgs),
    Annotate {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 15)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        fixed_n: usize,
        #[command(flatten)]
        meta: MetaArgs,
        #[command(flatten)]
        resources: ResourceArgs,
        #[arg(long)]
        explain: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Preset name or path to a recipe TOML file.
    #[arg(long)]
    recipe: String,
    /// Extra recipe files that ensembles may refer to by name.
    #[arg(long, num_args = 1..)]
    with: Vec<PathBuf>,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value = "simann-work")]
    workdir: PathBuf,
    #[command(flatten)]
    resources: ResourceArgs,
    #[arg(long)]
    expand_before_cut: bool,
    /// Accepted for interface compatibility; the pipeline has no randomness.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Metrics TSV, written when the test records carry labels.
    #[arg(long)]
    metrics_out: Option<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?))
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn load_table(meta: &MetaArgs) -> Result<Option<MetaLabelTable>> {
    match (&meta.table, meta.threshold) {
        (Some(path), Some(t)) => Ok(Some(build_table(&read_pair_stats(path)?, t)?)),
        _ => Ok(None),
    }
}

fn finish_predictions(
    preds: &[Prediction],
    meta: &MetaArgs,
    multiplier: f64,
    fixed_n: Option<usize>,
    explain: Option<&Path>,
    out: &Path,
) -> Result<()> {
    if let Some(path) = explain {
        let mut w = create(path)?;
        for p in preds {
            w.write_all(p.explain().as_bytes()).map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))?;
    }
    let empty = preds.iter().filter(|p| p.diagnostics.is_empty_prediction()).count();
    if empty > 0 {
        log::warn!("{empty} documents got no prediction");
    }
    let run = match load_table(meta)? {
        Some(table) => {
            let mode = if meta.expand_before_cut {
                ExpandMode::BeforeCut { multiplier, fixed_n }
            } else {
                ExpandMode::AfterCut
            };
            let rows = preds
                .par_iter()
                .map(|p| Ok((p.doc_id.clone(), expand_prediction(p, &table, mode)?)))
                .collect::<Result<Vec<_>>>()?;
            RunOutput::new(rows)?
        }
        None => {
            if let Some(code) = preds.iter().flat_map(|p| &p.chosen).find(|c| c.is_meta()) {
                return Err(Error::InvalidArgument(format!(
                    "prediction contains meta-label {code}; pass --table and --threshold to expand it"
                )));
            }
            RunOutput::from_predictions(preds)?
        }
    };
    run.save(out)
}

fn build_pipeline(args: &BuildIndexArgs) -> Result<(Pipeline, Corpus)> {
    let spec = PipelineSpec::parse(&args.rep, !args.no_title)?;
    let pipeline = Pipeline::load(spec, &args.resources.resources())?;
    let loaded = load_corpus(&args.corpus, true)?;
    if loaded.dropped > 0 {
        log::warn!("{} records without labels dropped", loaded.dropped);
    }
    pipeline.report_unknown_external(&loaded.corpus.records);
    Ok((pipeline, loaded.corpus))
}

fn query_pipeline(index: &InvertedIndex, resources: &ResourceArgs) -> Result<Pipeline> {
    let spec = index
        .meta
        .pipeline
        .clone()
        .ok_or_else(|| Error::IndexFormat("index records no extraction pipeline".into()))?;
    Pipeline::load(spec, &resources.resources())
}

fn build_index_cmd(args: &BuildIndexArgs, profiles: bool) -> Result<()> {
    let (pipeline, corpus) = build_pipeline(args)?;
    let streams = pipeline.extract_all(&corpus.records);
    let spec = pipeline.spec().clone();
    let index = if profiles {
        let p = build_profiles(&streams, &corpus.labels())?;
        log::info!("{} label profiles", p.len());
        build_profile_index(&p, args.min_df, args.max_df_ratio, Some(spec))?
    } else {
        let df = compute_df(&streams, args.min_df, args.max_df_ratio)?;
        if let Some(path) = &args.df_out {
            let mut w = create(path)?;
            df.write_tsv(&mut w).map_err(|e| io_err(path, e))?;
        }
        let mut index = build_index(&streams, &corpus.labels(), &df)?;
        index.meta = IndexMeta {
            kind: IndexKind::Documents,
            pipeline: Some(spec),
            min_df: args.min_df,
            max_df_ratio: args.max_df_ratio,
        };
        index
    };
    log::info!(
        "{} documents, {} terms, {} postings",
        index.n_docs(),
        index.n_terms(),
        index.n_postings()
    );
    index.save(&args.out)
}

fn run_cmd(args: &RunArgs) -> Result<()> {
    if args.seed.is_some() {
        log::info!("--seed has no effect: the pipeline is deterministic");
    }
    let mut book = RecipeBook::presets();
    for path in &args.with {
        book.insert(RunRecipe::load(path)?);
    }
    let name = if Path::new(&args.recipe).is_file() {
        let r = RunRecipe::load(&args.recipe)?;
        let name = r.name.clone();
        book.insert(r);
        name
    } else {
        args.recipe.clone()
    };
    let inputs = RunInputs {
        train: args.train.clone(),
        test: args.test.clone(),
        resources: args.resources.resources(),
        workdir: args.workdir.clone(),
        expand_before_cut: args.expand_before_cut,
    };
    let out = run_recipe(&book, &name, &inputs)?;
    out.run.save(&args.out)?;
    if let Some(m) = &out.metrics {
        match &args.metrics_out {
            Some(path) => m.write_tsv(path)?,
            None => print!("{m}"),
        }
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildIndex(args) => build_index_cmd(&args, false),
        Command::Annotate(args) => {
            let index = InvertedIndex::load(&args.index)?;
            if index.meta.kind != IndexKind::Documents {
                return Err(Error::InvalidArgument(
                    "annotate needs a document index; use `profiles annotate` for profiles".into(),
                ));
            }
            let pipeline = query_pipeline(&index, &args.resources)?;
            let input = load_corpus(&args.input, false)?.corpus;
            let params = KnnParams {
                k: args.k,
                multiplier: args.multiplier,
                fixed_n: args.fixed_n,
            };
            if params.k == 0 {
                return Err(Error::InvalidArgument("--k must be positive".into()));
            }
            let preds = annotate_batch(&input.records, &index, &pipeline, &params);
            finish_predictions(
                &preds,
                &args.meta,
                args.multiplier,
                args.fixed_n,
                args.explain.as_deref(),
                &args.out,
            )
        }
        Command::Npmi { corpus, out } => {
            let corpus = load_corpus(&corpus, true)?.corpus;
            let stats = compute_pair_stats(&corpus);
            log::info!("{} co-occurring label pairs", stats.len());
            let w = create(&out)?;
            write_pair_stats(&stats, w).map_err(|e| io_err(&out, e))
        }
        Command::Rewrite {
            corpus,
            table,
            threshold,
            out,
        } => {
            let corpus = load_corpus(&corpus, true)?.corpus;
            let table = build_table(&read_pair_stats(&table)?, threshold)?;
            log::info!("{} meta-labels at npmi >= {threshold}", table.len());
            write_corpus(&rewrite_corpus(&corpus, &table), &out)
        }
        Command::Profiles(ProfilesCommand::Build(args)) => build_index_cmd(&args, true),
        Command::Profiles(ProfilesCommand::Annotate {
            index,
            input,
            k,
            fixed_n,
            meta,
            resources,
            explain,
            out,
        }) => {
            let index = InvertedIndex::load(&index)?;
            if index.meta.kind != IndexKind::Profiles {
                return Err(Error::InvalidArgument(
                    "profiles annotate needs an index built by `profiles build`".into(),
                ));
            }
            let pipeline = query_pipeline(&index, &resources)?;
            let input = load_corpus(&input, false)?.corpus;
            let preds: Vec<Prediction> = input
                .records
                .par_iter()
                .map(|r| annotate_profiles(r, &index, &pipeline, k, fixed_n))
                .collect();
            finish_predictions(&preds, &meta, 1.0, Some(fixed_n), explain.as_deref(), &out)
        }
        Command::ConceptRun {
            input,
            dictionary,
            no_title,
            out,
        } => {
            let input = load_corpus(&input, false)?.corpus;
            let matcher = ConceptMatcher::new(&ConceptDictionary::load(&dictionary)?)?;
            concept_match_run(&input, &matcher, !no_title).save(&out)
        }
        Command::Ensemble { op, runs, out } => {
            let runs = runs.iter().map(RunOutput::load).collect::<Result<Vec<_>>>()?;
            let mixed = match op {
                EnsembleArg::Intersect => {
                    let (first, rest) = runs.split_first().expect("at least two runs");
                    rest.iter().try_fold(first.clone(), |acc, r| intersect_runs(&acc, r))?
                }
                EnsembleArg::UnionAdd => union_add(&runs[0], &runs[1..])?,
            };
            mixed.save(&out)
        }
        Command::Evaluate { gold, pred, out } => {
            let gold = gold_from_corpus(&load_corpus(&gold, false)?.corpus);
            let report = evaluate(&gold, &RunOutput::load(&pred)?)?;
            match out {
                Some(path) => report.write_tsv(path),
                None => {
                    print!("{report}");
                    Ok(())
                }
            }
        }
        Command::Run(args) => run_cmd(&args),
        Command::Presets => {
            for (_, text) in PRESETS {
                println!("{}", text.trim_end());
                println!();
            }
            Ok(())
        }
    }
}

fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var("SIMANN_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("SIMANN_THREADS={value:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Invariant(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match init_threads().and_then(|_| execute(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
