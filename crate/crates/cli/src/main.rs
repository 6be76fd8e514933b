mod settings;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use dage::autodiff::GradCheckOptions;
use dage::bench::{
    generate_dataset, holdout, overlap_histogram, read_split, synthetic_kg, write_dataset, GenConfig,
    QueryInstance, QueryType, SplitName, SynthConfig, BUCKET_LABELS,
};
use dage::geometry::{gradcheck_operators, Geometry, GeometryConfig, Model};
use dage::kg::KnowledgeGraph;
use dage::oracle::eval_concept;
use dage::query::{parse_concept, relax};
use dage::train::{evaluate, report_csv, report_tables, train, write_loss_csv, TrainConfig};

use settings::Settings;

/// Largest relative gradient error a passing operator may show.
const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Config,
    Io,
    Format,
    Data,
    SelfCheck,
}

impl Kind {
    fn code(self) -> u8 {
        match self {
            Kind::Usage | Kind::Config => 1,
            Kind::Io | Kind::Format | Kind::Data => 2,
            Kind::SelfCheck => 3,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Kind::Usage => "usage",
            Kind::Config => "config",
            Kind::Io => "io",
            Kind::Format => "format",
            Kind::Data => "data",
            Kind::SelfCheck => "selfcheck",
        }
    }
}

#[derive(Debug)]
struct CliError {
    kind: Kind,
    detail: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.detail)
    }
}

impl std::error::Error for CliError {}

pub fn fail(kind: Kind, detail: impl Into<String>) -> anyhow::Error {
    CliError {
        kind,
        detail: detail.into(),
    }
    .into()
}

/// Tags library errors with the kind they are reported under.
trait OrFail<T> {
    fn or_fail(self, kind: Kind) -> Result<T>;
}

impl<T, E: fmt::Display> OrFail<T> for std::result::Result<T, E> {
    fn or_fail(self, kind: Kind) -> Result<T> {
        self.map_err(|e| fail(kind, e.to_string()))
    }
}

#[derive(Parser)]
#[command(name = "dage", version, about = "DAG queries over knowledge graphs: generate, answer, embed, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample train/valid/test-easy/test-hard query splits
    Generate(GenerateArgs),
    /// Answer a query exactly on a graph
    Answer(AnswerArgs),
    /// Print the tree-form relaxation of a query
    Relax(RelaxArgs),
    /// Train a query embedding model
    Train(TrainArgs),
    /// Filtered (or raw) MRR of a model on one split
    Eval(EvalArgs),
    /// Overlap histogram of one split
    Analyze(AnalyzeArgs),
    /// Finite-difference check of every geometry operator
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` file; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    kg_train: Option<String>,
    #[arg(long)]
    kg_full: Option<String>,
    /// Build a synthetic graph instead of reading one
    #[arg(long)]
    synthetic: bool,
    /// Share of synthetic triples held out of the training graph
    #[arg(long)]
    holdout: Option<f64>,
    /// Comma-separated query types
    #[arg(long)]
    types: Option<TypeList>,
    /// Types of the test-hard split, when different from --types
    #[arg(long)]
    hard_types: Option<TypeList>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_valid: Option<usize>,
    #[arg(long)]
    n_test_easy: Option<usize>,
    #[arg(long)]
    n_test_hard: Option<usize>,
    #[arg(long)]
    hard_threshold: Option<f64>,
    #[arg(long)]
    max_retries: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct AnswerArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    kg: Option<String>,
    #[arg(long)]
    query: Option<String>,
}

#[derive(Args)]
struct RelaxArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    query: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    geometry: Option<Geometry>,
    /// Directory written by `generate`
    #[arg(long)]
    data: Option<String>,
    /// Model file to write
    #[arg(long)]
    out: Option<String>,
    /// Loss trace (defaults to loss.csv next to the model)
    #[arg(long)]
    loss_csv: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    lambda_mono: Option<f64>,
    #[arg(long)]
    lambda_conj: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha_in: Option<f64>,
    #[arg(long)]
    volume_beta: Option<f64>,
    #[arg(long)]
    cone_lambda: Option<f64>,
    /// Embed tree-form relaxations instead of the queries
    #[arg(long)]
    relaxed: bool,
    #[arg(long)]
    conj_pool: Option<usize>,
    #[arg(long)]
    conj_batch: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    split: Option<SplitName>,
    /// Rank against every entity instead of filtering known answers
    #[arg(long)]
    raw_ranks: bool,
    /// `csv` (per type and per bucket) or `table` (one row, fixed columns)
    #[arg(long)]
    format: Option<Format>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    split: Option<SplitName>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    geometry: Option<Geometry>,
    #[arg(long)]
    seed: Option<u64>,
    /// Random points per operator
    #[arg(long)]
    points: Option<usize>,
    /// Corrupt the backward rule of one tape op (to see the check fail)
    #[arg(long)]
    inject_fault: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
struct TypeList(Vec<QueryType>);

impl FromStr for TypeList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let types = s
            .split(',')
            .map(|t| t.trim().parse::<QueryType>().map_err(|e| e.to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        if types.is_empty() {
            return Err("no query types".into());
        }
        Ok(TypeList(types))
    }
}

impl fmt::Display for TypeList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(|t| t.as_str()).collect();
        f.write_str(&names.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Table,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "table" => Ok(Format::Table),
            other => Err(format!("unknown format '{other}' (expected csv or table)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Table => "table",
        })
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: usage: {first}");
            return ExitCode::from(Kind::Usage.code());
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, detail) = match e.downcast_ref::<CliError>() {
                Some(c) => (c.kind, c.detail.clone()),
                None => (Kind::Data, format!("{e:#}")),
            };
            eprintln!("error: {}: {}", kind.name(), detail.replace('\n', "; "));
            ExitCode::from(kind.code())
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate(a) => generate(a),
        Command::Answer(a) => answer(a),
        Command::Relax(a) => relax_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Analyze(a) => analyze(a),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn settings(common: &Common) -> Result<Settings> {
    Settings::load(common.config.as_deref())
}

/// Loads a full graph and a training graph that shares its vocabulary.
fn load_pair(train_path: &str, full_path: &str) -> Result<(KnowledgeGraph, KnowledgeGraph)> {
    let full = load_kg(full_path)?;
    let train = KnowledgeGraph::load_with_vocab(train_path, full.entities().clone(), full.relations().clone())
        .map_err(|e| fail(kg_kind(&e), format!("{train_path}: {e}")))?;
    if !train.same_vocabulary(&full) {
        return Err(fail(Kind::Data, format!("{train_path} names entities or relations missing from {full_path}")));
    }
    Ok((train, full))
}

fn load_kg(path: &str) -> Result<KnowledgeGraph> {
    KnowledgeGraph::load(path).map_err(|e| fail(kg_kind(&e), format!("{path}: {e}")))
}

fn kg_kind(e: &dage::kg::KgError) -> Kind {
    match e {
        dage::kg::KgError::Io(_) => Kind::Io,
        _ => Kind::Format,
    }
}

fn write_kg(kg: &KnowledgeGraph, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| fail(Kind::Io, format!("{}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    kg.write_tsv(&mut w).or_fail(Kind::Io)?;
    std::io::Write::flush(&mut w).or_fail(Kind::Io)
}

fn read(dir: &str, split: SplitName) -> Result<Vec<QueryInstance>> {
    read_split(dir, split)
        .map(|s| s.instances)
        .map_err(|e| {
            let kind = match e {
                dage::bench::BenchError::Io(_) => Kind::Io,
                _ => Kind::Format,
            };
            fail(kind, format!("{dir}/{}: {e}", split.file_name()))
        })
}

fn generate(a: GenerateArgs) -> Result<()> {
    let mut s = settings(&a.common)?;
    let synthetic = s.get("synthetic", a.synthetic.then_some(true), false)?;
    let seed = s.get("seed", a.seed, 0)?;
    let (kg_train, kg_full) = if synthetic {
        let fraction = s.get("holdout", a.holdout, 0.2)?;
        if !(0.0..1.0).contains(&fraction) {
            return Err(fail(Kind::Config, "holdout must be in [0, 1)"));
        }
        let full = synthetic_kg(&SynthConfig {
            seed,
            ..SynthConfig::default()
        });
        (holdout(&full, fraction, seed), full)
    } else {
        let train_path: String = s.require("kg_train", a.kg_train)?;
        let full_path: String = s.require("kg_full", a.kg_full)?;
        load_pair(&train_path, &full_path)?
    };
    let types = s.get("types", a.types, TypeList(QueryType::BENCHMARK.to_vec()))?;
    let hard_types = match a.hard_types {
        Some(h) => Some(s.get("hard_types", Some(h), TypeList(Vec::new()))?),
        None => {
            let h = s.get("hard_types", None, types.clone())?;
            (h != types).then_some(h)
        }
    };
    let config = GenConfig {
        types: types.0,
        hard_types: hard_types.map(|h| h.0),
        n_train: s.get("n_train", a.n_train, 0)?,
        n_valid: s.get("n_valid", a.n_valid, 0)?,
        n_test_easy: s.get("n_test_easy", a.n_test_easy, 0)?,
        n_test_hard: s.get("n_test_hard", a.n_test_hard, 0)?,
        threshold: s.get("hard_threshold", a.hard_threshold, 0.5)?,
        seed,
        max_retries: s.get("max_retries", a.max_retries, 100)?,
    };
    let out: String = s.require("out", a.out)?;
    s.finish("generate")?;

    let splits = generate_dataset(&kg_train, &kg_full, &config).or_fail(Kind::Data)?;
    let out = PathBuf::from(out);
    fs::create_dir_all(&out).map_err(|e| fail(Kind::Io, format!("{}: {e}", out.display())))?;
    for split in &splits {
        let path = out.join(format!("{}.jsonl", split.name));
        write_dataset(split, &path).or_fail(Kind::Io)?;
        println!("{}\t{}", split.name, split.instances.len());
    }
    write_kg(&kg_train, &out.join("kg-train.tsv"))?;
    write_kg(&kg_full, &out.join("kg-full.tsv"))?;
    Ok(())
}

fn answer(a: AnswerArgs) -> Result<()> {
    let mut s = settings(&a.common)?;
    let kg_path: String = s.require("kg", a.kg)?;
    let query: String = s.require("query", a.query)?;
    s.finish("answer")?;
    let kg = load_kg(&kg_path)?;
    let c = parse_concept(&query).or_fail(Kind::Format)?;
    let answers = eval_concept(&kg, &c).or_fail(Kind::Data)?;
    let mut names: Vec<&str> = answers.iter().map(|&e| kg.entity_name(e)).collect();
    names.sort_unstable();
    for n in names {
        println!("{n}");
    }
    Ok(())
}

fn relax_cmd(a: RelaxArgs) -> Result<()> {
    let mut s = settings(&a.common)?;
    let query: String = s.require("query", a.query)?;
    s.finish("relax")?;
    let c = parse_concept(&query).or_fail(Kind::Format)?;
    println!("{}", relax(&c));
    Ok(())
}

/// Queries `geometry` can embed; the rest are reported and dropped.
fn supported(geometry: Geometry, queries: Vec<QueryInstance>, what: &str) -> Vec<QueryInstance> {
    if geometry.supports_negation() {
        return queries;
    }
    let total = queries.len();
    let kept: Vec<QueryInstance> = queries.into_iter().filter(|q| !q.concept.has_negation()).collect();
    if kept.len() < total {
        eprintln!(
            "note: skipping {} {what} queries with negation ({geometry} cannot embed them)",
            total - kept.len()
        );
    }
    kept
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mut s = settings(&a.common)?;
    let d = TrainConfig::default();
    let geometry = s.require("geometry", a.geometry)?;
    let data: String = s.require("data", a.data)?;
    let out: String = s.require("out", a.out)?;
    let default_loss = Path::new(&out)
        .parent()
        .unwrap_or(Path::new(""))
        .join("loss.csv")
        .display()
        .to_string();
    let loss_csv: String = s.get("loss_csv", a.loss_csv, default_loss)?;
    let g = GeometryConfig::default();
    let config = TrainConfig {
        geometry,
        dim: s.get("dim", a.dim, d.dim)?,
        batch_size: s.get("batch_size", a.batch_size, d.batch_size)?,
        negatives: s.get("negatives", a.negatives, d.negatives)?,
        margin: s.get("margin", a.margin, d.margin)?,
        learning_rate: s.get("learning_rate", a.learning_rate, d.learning_rate)?,
        lambda_mono: s.get("lambda_mono", a.lambda_mono, d.lambda_mono)?,
        lambda_conj: s.get("lambda_conj", a.lambda_conj, d.lambda_conj)?,
        steps: s.get("steps", a.steps, d.steps)?,
        seed: s.get("seed", a.seed, d.seed)?,
        geometry_config: GeometryConfig {
            alpha_in: s.get("alpha_in", a.alpha_in, g.alpha_in)?,
            volume_beta: s.get("volume_beta", a.volume_beta, g.volume_beta)?,
            cone_lambda: s.get("cone_lambda", a.cone_lambda, g.cone_lambda)?,
        },
        relaxed: s.get("relaxed", a.relaxed.then_some(true), false)?,
        conj_pool: s.get("conj_pool", a.conj_pool, d.conj_pool)?,
        conj_batch: s.get("conj_batch", a.conj_batch, d.conj_batch)?,
    };
    s.finish("train")?;
    config.validate().or_fail(Kind::Config)?;

    let dir = Path::new(&data);
    let (kg_train, _) = load_pair(
        &dir.join("kg-train.tsv").display().to_string(),
        &dir.join("kg-full.tsv").display().to_string(),
    )?;
    let queries = supported(geometry, read(&data, SplitName::Train)?, "training");
    let (model, rows) = train(&kg_train, &queries, &config).or_fail(Kind::Data)?;
    for path in [&out, &loss_csv] {
        if let Some(parent) = Path::new(path).parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| fail(Kind::Io, format!("{}: {e}", parent.display())))?;
        }
    }
    model.save(&out).map_err(|e| fail(Kind::Io, format!("{out}: {e}")))?;
    write_loss_csv(&rows, &loss_csv).map_err(|e| fail(Kind::Io, format!("{loss_csv}: {e}")))?;
    if let Some(last) = rows.last() {
        eprintln!("final step {}: total loss {:.6}", last.step, last.total);
    }
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let mut s = settings(&a.common)?;
    let model_path: String = s.require("model", a.model)?;
    let data: String = s.require("data", a.data)?;
    let split = s.get("split", a.split, SplitName::TestHard)?;
    let raw = s.get("raw_ranks", a.raw_ranks.then_some(true), false)?;
    let format = s.get("format", a.format, Format::Csv)?;
    s.finish("eval")?;
    let model = Model::load(&model_path).map_err(|e| fail(Kind::Format, format!("{model_path}: {e}")))?;
    let geometry = model.ops.geometry;
    let queries = supported(geometry, read(&data, split)?, split.as_str());
    let report = evaluate(&model, &queries, raw).or_fail(Kind::Data)?;
    match format {
        Format::Csv => print!("{}", report_csv(&report)),
        Format::Table => print!("{}", report_tables(&report, geometry.supports_negation())),
    }
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let mut s = settings(&a.common)?;
    let data: String = s.require("data", a.data)?;
    let split = s.get("split", a.split, SplitName::TestEasy)?;
    s.finish("analyze")?;
    let queries = read(&data, split)?;
    let counts = overlap_histogram(&dage::bench::DatasetSplit {
        name: split.as_str().to_owned(),
        instances: queries,
    });
    println!("bucket,count");
    for (label, n) in BUCKET_LABELS.iter().zip(counts) {
        println!("{label},{n}");
    }
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> Result<()> {
    let mut s = settings(&a.common)?;
    let geometry = s.require("geometry", a.geometry)?;
    let seed = s.get("seed", a.seed, 0)?;
    let points = s.get("points", a.points, 20)?;
    let fault = s.get("inject_fault", a.inject_fault, "none".to_owned())?;
    s.finish("gradcheck")?;
    let fault = (fault != "none").then_some(fault);
    if let Some(op) = &fault {
        if !dage::autodiff::OP_NAMES.contains(&op.as_str()) {
            return Err(fail(
                Kind::Usage,
                format!("unknown op '{op}' (one of {})", dage::autodiff::OP_NAMES.join(", ")),
            ));
        }
    }
    let opts = GradCheckOptions {
        fault,
        ..GradCheckOptions::default()
    };
    let checks = gradcheck_operators(geometry, seed, points, &opts).or_fail(Kind::Data)?;
    println!("operator,max_rel_error,checked,excluded");
    let mut failed = Vec::new();
    for c in &checks {
        match &c.report {
            Some(r) => {
                println!("{},{:e},{},{}", c.operator, r.max_rel_error, r.checked, r.excluded);
                if !(r.max_rel_error <= GRAD_TOLERANCE) {
                    failed.push(c.operator);
                }
            }
            None => println!("{},,,", c.operator),
        }
    }
    if !failed.is_empty() {
        return Err(fail(
            Kind::SelfCheck,
            format!("relative error above {GRAD_TOLERANCE:e} in {}", failed.join(", ")),
        ));
    }
    Ok(())
}
