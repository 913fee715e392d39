//! Command-line front end.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::angle_opt::{build_database, AngleDatabase, AngleRecord};
use crate::clustering::{
    default_standardize, kmeans_fit, AggregateStat, ClusterModel, RepresentativeRule,
};
use crate::error::{Error, Result};
use crate::evalharness::{
    default_grid, ecdf, run_cv, run_size_split, summarize, EvalInputs, MethodKind, RatioSample,
};
use crate::features::{instance_features, validate_collection, Encoding, EncodingSource};
use crate::instances::{
    generate_er_dataset, generate_paper_datasets, generate_qubo_dataset, ProblemInstance,
    ProblemKind,
};
use crate::ising::{solve_instance, ExactSolution};
use crate::recommend::{angle_encodings, recommend_and_evaluate, RecommendationSet};
use crate::rng::derive_seed;
use crate::rqaoa::{pool_traces, run_rqaoa_batch, trace_ratio, AngleStrategy, RqaoaTrace};
use crate::store::{
    load_exact_cache, read_csv, read_exact, read_json, read_jsonl, update_exact_cache, write_csv,
    write_exact, write_json, write_jsonl, write_run_config,
};

#[derive(Parser, Debug)]
#[command(
    name = "qaoa-angles",
    version,
    about = "QAOA angle databases, clustering-based recommendation and recursive QAOA"
)]
pub struct Cli {
    /// Base seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate benchmark instances.
    Gen(GenArgs),
    /// Brute-force optimum of every instance.
    SolveExact(SolveArgs),
    /// Build (or resume) the optimal-angle database.
    BuildDb(BuildDbArgs),
    /// Compute or import instance encodings.
    Encode(EncodeArgs),
    /// Fit K-means on encodings.
    Cluster(ClusterArgs),
    /// Freeze a recommendation set and evaluate it on test instances.
    Recommend(RecommendArgs),
    /// Cross-validated evaluation of one method.
    EvalCv(EvalCvArgs),
    /// Train on small instances, test on large ones.
    EvalSizeSplit(EvalSplitArgs),
    /// Recursive QAOA with recommended angles or a baseline.
    Rqaoa(RqaoaArgs),
    /// ECDF of ratio samples per method.
    ReportEcdf(EcdfArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
pub enum KindArg {
    Maxcut,
    Qubo,
}

#[derive(Args, Debug, Serialize)]
pub struct GenArgs {
    /// The 200 MaxCut + 100 QUBO benchmark set.
    #[arg(long, conflicts_with_all = ["kind", "nodes", "probs"])]
    pub paper_datasets: bool,
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    #[arg(long, value_delimiter = ',')]
    pub nodes: Vec<usize>,
    /// Edge probabilities (MaxCut only).
    #[arg(long, value_delimiter = ',')]
    pub probs: Vec<f64>,
    /// Instances per (nodes, probability) pair, or per node count for QUBOs.
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct SolveArgs {
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct BuildDbArgs {
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3])]
    pub depths: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    pub restarts: usize,
    /// Precomputed exact solutions.
    #[arg(long)]
    pub exact: Option<PathBuf>,
    /// Database file; existing records are kept and skipped.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
#[command(group(clap::ArgGroup::new("mode").required(true).args(["features", "angles", "import_embeddings"])))]
pub struct EncodeArgs {
    #[arg(long)]
    pub instances: PathBuf,
    /// Spectral instance features.
    #[arg(long)]
    pub features: bool,
    /// Drop the node/edge count features.
    #[arg(long, requires = "features")]
    pub exclude_counts: bool,
    /// Optimal angles from the database.
    #[arg(long, requires_all = ["angle_db", "depth"])]
    pub angles: bool,
    #[arg(long)]
    pub angle_db: Option<PathBuf>,
    #[arg(long)]
    pub depth: Option<usize>,
    /// External embedding file to validate against the instances.
    #[arg(long)]
    pub import_embeddings: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
pub enum RuleArg {
    Closest,
    Centroid,
}

impl From<RuleArg> for RepresentativeRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Closest => RepresentativeRule::ClosestPoint,
            RuleArg::Centroid => RepresentativeRule::Centroid,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
pub enum StandardizeArg {
    Auto,
    Yes,
    No,
}

#[derive(Args, Debug, Serialize)]
pub struct ClusterArgs {
    #[arg(long)]
    pub encodings: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = RuleArg::Closest)]
    pub rule: RuleArg,
    #[arg(long, value_enum, default_value_t = StandardizeArg::Auto)]
    pub standardize: StandardizeArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct RecommendArgs {
    #[arg(long, required_unless_present = "recset", requires_all = ["angle_db", "depth"])]
    pub cluster_model: Option<PathBuf>,
    /// Reuse a frozen recommendation set instead of a cluster model.
    #[arg(long, conflicts_with = "cluster_model")]
    pub recset: Option<PathBuf>,
    #[arg(long)]
    pub angle_db: Option<PathBuf>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub test: PathBuf,
    /// Outcomes, one JSON object per test instance.
    #[arg(long)]
    pub out: PathBuf,
    /// Where to freeze the set (default `<out>.recset.json`).
    #[arg(long)]
    pub recset_out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
pub enum MethodArg {
    Angles,
    Features,
    Embedding,
    Mean,
    Median,
}

#[derive(Args, Debug, Serialize)]
pub struct MethodOpts {
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value_t = RuleArg::Closest)]
    pub rule: RuleArg,
    /// Cluster counts to evaluate (ignored by mean/median).
    #[arg(long, value_delimiter = ',', default_values_t = [3])]
    pub k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3])]
    pub depths: Vec<usize>,
    /// Encoding file for the embedding method.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

impl MethodOpts {
    fn kinds(&self) -> Vec<MethodKind> {
        let cluster = |source| {
            self.k
                .iter()
                .map(|&k| MethodKind::Cluster {
                    source,
                    rule: self.rule.into(),
                    k,
                })
                .collect()
        };
        match self.method {
            MethodArg::Angles => cluster(EncodingSource::AngleValues),
            MethodArg::Features => cluster(EncodingSource::InstanceFeatures),
            MethodArg::Embedding => cluster(EncodingSource::ExternalEmbedding),
            MethodArg::Mean => vec![MethodKind::Aggregate {
                stat: AggregateStat::Mean,
            }],
            MethodArg::Median => vec![MethodKind::Aggregate {
                stat: AggregateStat::Median,
            }],
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct EvalCvArgs {
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long)]
    pub angle_db: PathBuf,
    #[command(flatten)]
    pub method: MethodOpts,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Plain random folds instead of node-count strata.
    #[arg(long)]
    pub no_stratify: bool,
    /// Ratio samples as CSV; a summary goes to `<out>.summary.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Fold assignment output (JSONL).
    #[arg(long)]
    pub fold_file: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalSplitArgs {
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long)]
    pub angle_db: PathBuf,
    #[command(flatten)]
    pub method: MethodOpts,
    #[arg(long, default_value_t = 0.6)]
    pub train_frac: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum, Serialize)]
pub enum BaselineArg {
    None,
    Random,
    Bfgs,
}

#[derive(Args, Debug, Serialize)]
pub struct RqaoaArgs {
    #[arg(long)]
    pub instances: PathBuf,
    /// Frozen recommendation sets; each runs as its own method.
    #[arg(long, value_delimiter = ',')]
    pub rec_sets: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = BaselineArg::None)]
    pub baseline: BaselineArg,
    /// Circuit budget per iteration for baselines.
    #[arg(long, default_value_t = 3)]
    pub budget: usize,
    /// QAOA depth for baselines.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Iterations (default: half the variable count, rounded up).
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub exact: Option<PathBuf>,
    /// Traces as JSONL; a summary goes to `<out>.summary.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct EcdfArgs {
    /// Ratio-sample CSV written by eval-cv or eval-size-split.
    #[arg(long, required = true, value_delimiter = ',')]
    pub samples: Vec<PathBuf>,
    /// Uniform grid size (default: every distinct sample value).
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Resolved<'a, T> {
    seed: u64,
    jobs: Option<usize>,
    args: &'a T,
}

fn record_config<T: Serialize>(cli: &Cli, name: &str, out: &Path, args: &T) -> Result<()> {
    write_run_config(
        out,
        name,
        &Resolved {
            seed: cli.seed,
            jobs: cli.jobs,
            args,
        },
    )
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_instances(path: &Path) -> Result<Vec<ProblemInstance>> {
    let v: Vec<ProblemInstance> = read_jsonl(path)?;
    let mut seen = HashSet::new();
    for i in &v {
        if !seen.insert(i.id.as_str()) {
            return Err(Error::Domain(format!(
                "{}: duplicate instance id {}",
                path.display(),
                i.id
            )));
        }
    }
    Ok(v)
}

fn load_db(path: &Path) -> Result<AngleDatabase> {
    Ok(AngleDatabase::new(read_jsonl::<AngleRecord>(path)?))
}

/// Exact solutions from `path` (if any) layered over the cache.
fn load_exact(path: Option<&Path>) -> Result<BTreeMap<String, ExactSolution>> {
    let mut all = load_exact_cache()?;
    if let Some(p) = path {
        all.extend(read_exact(p)?);
    }
    Ok(all)
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
        {
            warn!("could not size the worker pool: {e}");
        }
    }
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => gen(cli, a),
        Command::SolveExact(a) => solve_exact(cli, a),
        Command::BuildDb(a) => build_db(cli, a),
        Command::Encode(a) => encode(cli, a),
        Command::Cluster(a) => cluster(cli, a),
        Command::Recommend(a) => recommend(cli, a),
        Command::EvalCv(a) => eval_cv(cli, a),
        Command::EvalSizeSplit(a) => eval_size_split(cli, a),
        Command::Rqaoa(a) => rqaoa(cli, a),
        Command::ReportEcdf(a) => report_ecdf(cli, a),
    }
}

fn gen(cli: &Cli, a: &GenArgs) -> Result<()> {
    let instances = if a.paper_datasets {
        generate_paper_datasets(cli.seed)?
    } else {
        let kind = a.kind.ok_or_else(|| {
            Error::Parameter("--kind is required without --paper-datasets".into())
        })?;
        if a.nodes.is_empty() {
            return Err(Error::Parameter("--nodes is required".into()));
        }
        match kind {
            KindArg::Maxcut => {
                if a.probs.is_empty() {
                    return Err(Error::Parameter("--probs is required for maxcut".into()));
                }
                generate_er_dataset(&a.nodes, &a.probs, a.count, cli.seed)?
            }
            KindArg::Qubo => generate_qubo_dataset(&a.nodes, a.count, cli.seed)?,
        }
    };
    write_jsonl(&a.out, &instances)?;
    record_config(cli, "gen", &a.out, a)?;
    info!("wrote {} instances to {}", instances.len(), a.out.display());
    Ok(())
}

fn solve_exact(cli: &Cli, a: &SolveArgs) -> Result<()> {
    let instances = load_instances(&a.instances)?;
    let cached = load_exact(None)?;
    let solved: Vec<(String, ExactSolution)> = instances
        .par_iter()
        .map(|inst| match cached.get(&inst.id) {
            Some(s) => Ok((inst.id.clone(), s.clone())),
            None => solve_instance(inst).map(|s| (inst.id.clone(), s)),
        })
        .collect::<Result<_>>()?;
    let solved: BTreeMap<String, ExactSolution> = solved.into_iter().collect();
    write_exact(&a.out, &solved)?;
    update_exact_cache(&solved)?;
    record_config(cli, "solve-exact", &a.out, a)
}

fn build_db(cli: &Cli, a: &BuildDbArgs) -> Result<()> {
    let instances = load_instances(&a.instances)?;
    let exact = load_exact(a.exact.as_deref())?;
    let mut db = if a.out.exists() {
        load_db(&a.out)?
    } else {
        AngleDatabase::default()
    };
    let build = build_database(&instances, &a.depths, a.restarts, cli.seed, &exact, &db);
    info!(
        "{} new records, {} already present, {} errors",
        build.records.len(),
        build.skipped,
        build.errors.len()
    );
    for r in build.records {
        db.insert(r);
    }
    write_jsonl(&a.out, db.records())?;
    update_exact_cache(&build.new_exact)?;
    record_config(cli, "build-db", &a.out, a)?;
    if build.errors.is_empty() {
        Ok(())
    } else {
        let list: Vec<String> = build
            .errors
            .iter()
            .map(|(id, e)| format!("{id}: {e}"))
            .collect();
        Err(Error::Domain(format!(
            "{} instance(s) failed:\n  {}",
            list.len(),
            list.join("\n  ")
        )))
    }
}

/// Validates external encodings against an instance list.
pub fn import_embeddings(
    encodings: Vec<Encoding>,
    instances: &[ProblemInstance],
) -> Result<Vec<Encoding>> {
    if encodings.is_empty() {
        if instances.is_empty() {
            return Ok(encodings);
        }
        return Err(Error::Domain("embedding file is empty".into()));
    }
    let (source, _) = validate_collection(&encodings)?;
    if source != EncodingSource::ExternalEmbedding {
        return Err(Error::Domain(format!(
            "expected ExternalEmbedding encodings, found {source:?}"
        )));
    }
    let mut by_id: HashMap<String, Encoding> = HashMap::new();
    for e in encodings {
        if by_id.contains_key(&e.instance_id) {
            return Err(Error::Domain(format!(
                "duplicate embedding for {}",
                e.instance_id
            )));
        }
        by_id.insert(e.instance_id.clone(), e);
    }
    let missing: Vec<&str> = instances
        .iter()
        .map(|i| i.id.as_str())
        .filter(|id| !by_id.contains_key(*id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Domain(format!(
            "{} instance(s) have no embedding: {}",
            missing.len(),
            missing.join(", ")
        )));
    }
    let extra = by_id.len() - instances.len();
    if extra > 0 {
        warn!("{extra} embedding(s) do not match any instance and are dropped");
    }
    Ok(instances
        .iter()
        .map(|i| by_id.remove(&i.id).expect("checked above"))
        .collect())
}

fn encode(cli: &Cli, a: &EncodeArgs) -> Result<()> {
    let instances = load_instances(&a.instances)?;
    let out: Vec<Encoding> = if a.features {
        instances
            .iter()
            .filter_map(|inst| match instance_features(inst, a.exclude_counts) {
                Ok(e) => Some(e),
                Err(e) => {
                    warn!("skipping {}: {e}", inst.id);
                    None
                }
            })
            .collect()
    } else if a.angles {
        let db = load_db(a.angle_db.as_deref().expect("required by clap"))?;
        let depth = a.depth.expect("required by clap");
        angle_encodings(&db, instances.iter().map(|i| i.id.as_str()), depth)?
    } else {
        let path = a.import_embeddings.as_deref().expect("required by clap");
        import_embeddings(read_jsonl(path)?, &instances)?
    };
    write_jsonl(&a.out, &out)?;
    record_config(cli, "encode", &a.out, a)
}

fn cluster(cli: &Cli, a: &ClusterArgs) -> Result<()> {
    let encodings: Vec<Encoding> = read_jsonl(&a.encodings)?;
    let (source, _) = validate_collection(&encodings)?;
    let standardize = match a.standardize {
        StandardizeArg::Auto => default_standardize(source),
        StandardizeArg::Yes => true,
        StandardizeArg::No => false,
    };
    let model = kmeans_fit(&encodings, a.k, cli.seed, a.rule.into(), standardize)?;
    write_json(&a.out, &model)?;
    record_config(cli, "cluster", &a.out, a)
}

fn recommend(cli: &Cli, a: &RecommendArgs) -> Result<()> {
    let recs = match (&a.recset, &a.cluster_model) {
        (Some(path), _) => read_json::<RecommendationSet>(path)?,
        (None, Some(path)) => {
            let model: ClusterModel = read_json(path)?;
            let db = load_db(a.angle_db.as_deref().expect("required by clap"))?;
            let mut set = RecommendationSet::from_cluster_model(
                &model,
                &db,
                a.depth.expect("required by clap"),
            )?;
            set.provenance.cluster_model = Some(path.display().to_string());
            set
        }
        (None, None) => unreachable!("clap requires one of them"),
    };
    let test = load_instances(&a.test)?;
    let outcomes = recommend_and_evaluate(&recs, &test)?;
    let recset_out = a
        .recset_out
        .clone()
        .unwrap_or_else(|| with_suffix(&a.out, ".recset.json"));
    if a.recset.is_none() {
        write_json(&recset_out, &recs)?;
    }
    write_jsonl(&a.out, &outcomes)?;
    record_config(cli, "recommend", &a.out, a)
}

fn read_external(path: Option<&Path>) -> Result<Option<HashMap<String, Encoding>>> {
    path.map(|p| {
        let v: Vec<Encoding> = read_jsonl(p)?;
        validate_collection(&v)?;
        Ok(v.into_iter().map(|e| (e.instance_id.clone(), e)).collect())
    })
    .transpose()
}

#[derive(Serialize)]
struct EvalSummary {
    samples: usize,
    summaries: Vec<crate::evalharness::MethodSummary>,
}

fn write_samples(cli: &Cli, out: &Path, samples: &[RatioSample]) -> Result<()> {
    write_csv(out, samples)?;
    write_json(
        &with_suffix(out, ".summary.json"),
        &EvalSummary {
            samples: samples.len(),
            summaries: summarize(samples, cli.seed),
        },
    )
}

fn eval_cv(cli: &Cli, a: &EvalCvArgs) -> Result<()> {
    let instances = load_instances(&a.instances)?;
    let db = load_db(&a.angle_db)?;
    let external = read_external(a.method.embeddings.as_deref())?;
    let inputs = EvalInputs {
        instances: &instances,
        db: &db,
        external: external.as_ref(),
    };
    let mut samples = Vec::new();
    let mut folds = Vec::new();
    for method in a.method.kinds() {
        let run = run_cv(
            &method,
            &inputs,
            &a.method.depths,
            a.folds,
            cli.seed,
            !a.no_stratify,
        )?;
        if run.skipped_folds > 0 {
            warn!("{}: {} fold(s) skipped", method.name(), run.skipped_folds);
        }
        samples.extend(run.samples);
        folds = run.folds;
    }
    if let Some(path) = &a.fold_file {
        write_jsonl(path, &folds)?;
    }
    write_samples(cli, &a.out, &samples)?;
    record_config(cli, "eval-cv", &a.out, a)
}

fn eval_size_split(cli: &Cli, a: &EvalSplitArgs) -> Result<()> {
    let instances = load_instances(&a.instances)?;
    let db = load_db(&a.angle_db)?;
    let external = read_external(a.method.embeddings.as_deref())?;
    let inputs = EvalInputs {
        instances: &instances,
        db: &db,
        external: external.as_ref(),
    };
    let mut samples = Vec::new();
    for method in a.method.kinds() {
        samples.extend(run_size_split(
            &method,
            &inputs,
            &a.method.depths,
            a.train_frac,
            cli.seed,
        )?);
    }
    write_samples(cli, &a.out, &samples)?;
    record_config(cli, "eval-size-split", &a.out, a)
}

#[derive(Serialize)]
struct MethodRqaoaSummary {
    runs: usize,
    median_ratio: Option<f64>,
    min_ratio: Option<f64>,
    circuit_calls: usize,
    gradient_calls: usize,
}

#[derive(Serialize)]
struct RqaoaSummary {
    methods: BTreeMap<String, MethodRqaoaSummary>,
    pooled: Option<crate::rqaoa::PooledReport>,
}

fn rqaoa(cli: &Cli, a: &RqaoaArgs) -> Result<()> {
    let instances = load_instances(&a.instances)?;
    if let Some(q) = instances
        .iter()
        .find(|i| i.kind() != ProblemKind::MaxCutGraph)
    {
        return Err(Error::Domain(format!(
            "recursive QAOA runs on MaxCut instances only; {} is a QUBO",
            q.id
        )));
    }
    let sets: Vec<RecommendationSet> = a
        .rec_sets
        .iter()
        .map(|p| read_json(p))
        .collect::<Result<_>>()?;
    if sets.is_empty() && a.baseline == BaselineArg::None {
        return Err(Error::Parameter(
            "give --rec-sets, a --baseline, or both".into(),
        ));
    }
    let mut strategies: Vec<(String, AngleStrategy, bool)> = Vec::new();
    let mut names = HashSet::new();
    for (i, s) in sets.iter().enumerate() {
        let mut name = s.provenance.method.clone();
        if !names.insert(name.clone()) {
            name = format!("{name}-{i}");
            names.insert(name.clone());
        }
        strategies.push((name, AngleStrategy::Recommended(s), true));
    }
    if a.baseline != BaselineArg::None {
        let depth = a
            .depth
            .or_else(|| sets.first().map(|s| s.depth))
            .ok_or_else(|| {
                Error::Parameter("--depth is required for a baseline-only run".into())
            })?;
        let strategy = match a.baseline {
            BaselineArg::Random => AngleStrategy::RandomAngles {
                depth,
                budget: a.budget,
            },
            _ => AngleStrategy::BudgetedBfgs {
                depth,
                budget: a.budget,
            },
        };
        strategies.push((strategy.label(), strategy, false));
    }
    let mut exact = load_exact(a.exact.as_deref())?;
    let missing: Vec<&ProblemInstance> = instances
        .iter()
        .filter(|i| !exact.contains_key(&i.id))
        .collect();
    let solved: Vec<(String, ExactSolution)> = missing
        .par_iter()
        .map(|i| solve_instance(i).map(|s| (i.id.clone(), s)))
        .collect::<Result<_>>()?;
    let solved: BTreeMap<String, ExactSolution> = solved.into_iter().collect();
    update_exact_cache(&solved)?;
    exact.extend(solved);

    let mut traces: Vec<RqaoaTrace> = Vec::new();
    let mut pooled_ratios: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    let mut methods = BTreeMap::new();
    for (m, (name, strategy, pooled)) in strategies.iter().enumerate() {
        let mut run = run_rqaoa_batch(
            &instances,
            strategy,
            a.iterations,
            derive_seed(cli.seed, &[m as u64]),
        )?;
        let mut ratios = BTreeMap::new();
        for (t, inst) in run.iter_mut().zip(&instances) {
            t.method = name.clone();
            ratios.insert(
                t.instance_id.clone(),
                trace_ratio(t, &exact[&inst.id], inst.kind())?,
            );
        }
        let values: Vec<f64> = ratios.values().copied().collect();
        methods.insert(
            name.clone(),
            MethodRqaoaSummary {
                runs: run.len(),
                median_ratio: crate::evalharness::median(&values),
                min_ratio: values.iter().copied().reduce(f64::min),
                circuit_calls: run.iter().map(|t| t.circuit_calls).sum(),
                gradient_calls: run.iter().map(|t| t.gradient_calls).sum(),
            },
        );
        if *pooled {
            pooled_ratios.insert(name.clone(), ratios);
        }
        traces.extend(run);
    }
    let summary = RqaoaSummary {
        methods,
        pooled: (!pooled_ratios.is_empty()).then(|| pool_traces(&pooled_ratios)),
    };
    write_jsonl(&a.out, &traces)?;
    write_json(&with_suffix(&a.out, ".summary.json"), &summary)?;
    record_config(cli, "rqaoa", &a.out, a)
}

#[derive(Serialize)]
struct EcdfRow<'a> {
    method: &'a str,
    t: f64,
    f: f64,
}

fn report_ecdf(cli: &Cli, a: &EcdfArgs) -> Result<()> {
    let mut samples: Vec<RatioSample> = Vec::new();
    for p in &a.samples {
        samples.extend(read_csv::<RatioSample>(p)?);
    }
    if samples.is_empty() {
        return Err(Error::Domain("no ratio samples to report".into()));
    }
    let mut by_method: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for s in &samples {
        by_method.entry(&s.method).or_default().push(s.ratio);
    }
    let all: Vec<f64> = samples.iter().map(|s| s.ratio).collect();
    let grid = match a.grid_points {
        Some(m) if m >= 2 => {
            let g = default_grid(&all);
            let (lo, hi) = (g[0].min(0.0), *g.last().expect("nonempty"));
            (0..m)
                .map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64)
                .collect()
        }
        Some(_) => return Err(Error::Parameter("--grid-points must be at least 2".into())),
        None => default_grid(&all),
    };
    let mut rows = Vec::new();
    let curves: Vec<_> = by_method
        .iter()
        .map(|(m, v)| ecdf(m, v, &grid))
        .collect::<Result<_>>()?;
    for c in &curves {
        for (&t, &f) in c.grid.iter().zip(&c.values) {
            rows.push(EcdfRow {
                method: &c.method,
                t,
                f,
            });
        }
    }
    write_csv(&a.out, &rows)?;
    record_config(cli, "report-ecdf", &a.out, a)
}
