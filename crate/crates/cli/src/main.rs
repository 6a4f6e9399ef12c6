//! `arl`: learn, mine, evaluate and classify with association rules from the command line.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use arl::classifier::{cross_validate, MinerLearner, ProbeLearner, RuleLearner, DEFAULT_FOLDS, DEFAULT_SEEDS};
use arl::data::{discretize_equal_frequency, ingest_csv, DataError, Dataset, DEFAULT_BINS};
use arl::exec::{with_workers, Exec};
use arl::learner::{
    antecedent_candidates, extract_frequent_itemsets, extract_rules_multi_target, extract_rules_single_target,
    ExtractionReport, LearnError, ProbeBank, StitchedModel, Thresholds,
};
use arl::metrics::{render_table, RuleEvaluator, RuleSetSummary};
use arl::miner::{mine, mine_itemsets, MinerParams};
use arl::model::{BridgeBackend, EmpiricalBackend, ModelBackend, ModelError};
use arl::rules::{ItemsetDocument, RuleSet, RuleSetDocument};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use config::{parse_list, FileConfig};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Transport(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Transport(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Transport(m) => m,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::BadSmoothing(_) => CliError::Config(e.to_string()),
            ModelError::EmptyContext => CliError::Data(e.to_string()),
            _ => CliError::Transport(e.to_string()),
        }
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::Config(m) => CliError::Config(m),
            LearnError::Data(d) => d.into(),
            LearnError::Model { .. } => CliError::Transport(e.to_string()),
        }
    }
}

impl From<arl::classifier::ClassifyError> for CliError {
    fn from(e: arl::classifier::ClassifyError) -> Self {
        use arl::classifier::ClassifyError as E;
        match e {
            E::Config(m) => CliError::Config(m),
            E::Learn(l) => l.into(),
            E::Data(d) => d.into(),
            E::RareClass { .. } | E::SingleClass(_) => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "arl",
    version,
    about = "Association rule learning from conditional probabilistic models"
)]
struct Cli {
    /// Flat key=value file supplying defaults for any option.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads: 0 uses all cores, 1 runs sequentially.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the dataset summary as JSON.
    Inspect(DataArgs),
    /// Extract rules by probing a model backend.
    Learn(LearnArgs),
    /// Extract frequent itemsets by probing a model backend.
    Itemsets(ItemsetArgs),
    /// Run the exhaustive support/confidence miner.
    Mine(MineArgs),
    /// Compute quality metrics of a rules file on a dataset.
    Eval(EvalArgs),
    /// Cross-validate a rule-list classifier.
    Classify(ClassifyArgs),
    /// Apply a grid of thresholds to one set of model predictions.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    /// The first row holds data, not column names.
    #[arg(long)]
    no_header: bool,
    /// Comma-separated numeric columns to discretize.
    #[arg(long)]
    numeric: Option<String>,
    #[arg(long)]
    bins: Option<usize>,
}

#[derive(Args, Debug)]
struct BackendArgs {
    /// `empirical` or `bridge:<server command>`.
    #[arg(long)]
    backend: Option<String>,
    /// Additive smoothing for the empirical backend.
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args, Debug)]
struct ThresholdArgs {
    #[arg(long)]
    max_antecedents: Option<usize>,
    #[arg(long)]
    tau_a: Option<f64>,
    #[arg(long)]
    tau_c: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Paradigm {
    Single,
    Multi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Args, Debug)]
struct LearnArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    thresholds: ThresholdArgs,
    #[arg(long, value_enum)]
    paradigm: Option<Paradigm>,
    /// Rules JSON destination (standard output when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Run report JSON destination.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ItemsetArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    max_size: Option<usize>,
    #[arg(long)]
    tau_s: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write one itemset per line as `feature=value` tokens.
    #[arg(long)]
    flat: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MineArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    min_support: Option<f64>,
    #[arg(long)]
    min_confidence: Option<f64>,
    #[arg(long)]
    max_antecedents: Option<usize>,
    /// Emit frequent itemsets instead of rules.
    #[arg(long)]
    itemsets: bool,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    flat: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    rules: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum LearnerKind {
    Probe,
    Miner,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    thresholds: ThresholdArgs,
    /// Name of the class feature.
    #[arg(long)]
    class: Option<String>,
    #[arg(long, value_enum)]
    learner: Option<LearnerKind>,
    #[arg(long)]
    min_support: Option<f64>,
    #[arg(long)]
    min_confidence: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
    /// Comma-separated seeds.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    max_antecedents: Option<usize>,
    /// Comma-separated τ_a values.
    #[arg(long)]
    tau_a: Option<String>,
    /// Comma-separated τ_c values.
    #[arg(long)]
    tau_c: Option<String>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    #[arg(long)]
    output: Option<PathBuf>,
}

const DEFAULT_BACKEND: &str = "empirical";

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let workers = file.pick(cli.workers, "workers", 0)?;
    with_workers(workers, |exec| match cli.command {
        Command::Inspect(a) => cmd_inspect(&file, a),
        Command::Learn(a) => cmd_learn(&file, a, exec),
        Command::Itemsets(a) => cmd_itemsets(&file, a, exec),
        Command::Mine(a) => cmd_mine(&file, a, exec),
        Command::Eval(a) => cmd_eval(&file, a, exec),
        Command::Classify(a) => cmd_classify(&file, a, exec),
        Command::Sweep(a) => cmd_sweep(&file, a, exec),
    })
}

fn load_data(file: &FileConfig, args: &DataArgs) -> Result<Dataset, CliError> {
    let input: PathBuf = file
        .pick_opt(args.input.clone(), "input")?
        .ok_or_else(|| CliError::Config("no input file given (--input)".into()))?;
    let header = file.pick(args.no_header.then_some(false), "header", true)?;
    let dataset = ingest_csv(&input, header)?;
    let numeric: Option<String> = file.pick_opt(args.numeric.clone(), "numeric")?;
    let columns: Vec<String> = numeric
        .as_deref()
        .map(|s| parse_list(s, "numeric"))
        .transpose()?
        .unwrap_or_default();
    if columns.is_empty() {
        return Ok(dataset);
    }
    let bins = file.pick(args.bins, "bins", DEFAULT_BINS)?;
    if bins == 0 {
        return Err(CliError::Config("bins must be at least 1".into()));
    }
    Ok(discretize_equal_frequency(&dataset, &columns, bins)?)
}

fn make_backend(file: &FileConfig, args: &BackendArgs) -> Result<Arc<dyn ModelBackend>, CliError> {
    let spec = file.pick(args.backend.clone(), "backend", DEFAULT_BACKEND.to_string())?;
    let alpha = file.pick(args.alpha, "alpha", 0.0)?;
    if spec == "empirical" {
        return Ok(Arc::new(EmpiricalBackend::new(alpha)?));
    }
    match spec.strip_prefix("bridge:") {
        Some(cmd) if !cmd.trim().is_empty() => {
            let bridge = BridgeBackend::connect(cmd.trim()).map_err(|e| CliError::Transport(e.to_string()))?;
            log::info!("connected to model server {:?}", bridge.server_name());
            Ok(Arc::new(bridge))
        }
        _ => Err(CliError::Config(format!(
            "unknown backend {spec:?}; expected `empirical` or `bridge:<command>`"
        ))),
    }
}

fn thresholds(file: &FileConfig, args: &ThresholdArgs) -> Result<Thresholds, CliError> {
    let d = Thresholds::default();
    Ok(Thresholds::new(
        file.pick(args.tau_a, "tau_a", d.tau_a)?,
        file.pick(args.tau_c, "tau_c", d.tau_c)?,
        file.pick(args.max_antecedents, "max_antecedents", d.max_antecedents)?,
    )?)
}

fn pick_enum<E: ValueEnum>(file: &FileConfig, flag: Option<E>, key: &str) -> Result<Option<E>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    file.get::<String>(key)?
        .map(|s| E::from_str(&s, true).map_err(|_| CliError::Config(format!("config key {key}: unknown value {s:?}"))))
        .transpose()
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output types serialize");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct RunReport<'a> {
    #[serde(flatten)]
    extraction: &'a ExtractionReport,
    output_count: usize,
    wall_time_ms: u128,
}

fn write_report(
    path: Option<&Path>,
    report: &ExtractionReport,
    count: usize,
    started: Instant,
) -> Result<(), CliError> {
    let wall = started.elapsed().as_millis();
    log::info!(
        "{} probes, {} fits, {} skipped antecedents, {count} results in {wall} ms",
        report.probe_count,
        report.fit_count,
        report.skipped_antecedents
    );
    if let Some(p) = path {
        let run = RunReport {
            extraction: report,
            output_count: count,
            wall_time_ms: wall,
        };
        write_output(Some(p), &to_json(&run))?;
    }
    Ok(())
}

fn rules_json(rules: &RuleSet, dataset: &Dataset) -> String {
    to_json(&rules.to_document(&RuleEvaluator::new(dataset)))
}

fn cmd_inspect(file: &FileConfig, args: DataArgs) -> Result<(), CliError> {
    let dataset = load_data(file, &args)?;
    write_output(None, &to_json(&dataset.summary()))
}

fn cmd_learn(file: &FileConfig, args: LearnArgs, exec: Exec) -> Result<(), CliError> {
    let t = thresholds(file, &args.thresholds)?;
    let paradigm = pick_enum(file, args.paradigm, "paradigm")?.unwrap_or(Paradigm::Single);
    let dataset = load_data(file, &args.data)?;
    let backend = make_backend(file, &args.backend)?;
    let started = Instant::now();
    let out = match paradigm {
        Paradigm::Single => extract_rules_single_target(&dataset, backend.as_ref(), &t, exec)?,
        Paradigm::Multi => {
            let model = StitchedModel::fit(&dataset, backend.as_ref(), exec)?;
            let candidates = antecedent_candidates(dataset.universe(), t.max_antecedents);
            extract_rules_multi_target(&model, &candidates, &t, exec)?
        }
    };
    write_output(args.output.as_deref(), &rules_json(&out.rules, &dataset))?;
    write_report(args.report.as_deref(), &out.report, out.rules.len(), started)
}

fn cmd_itemsets(file: &FileConfig, args: ItemsetArgs, exec: Exec) -> Result<(), CliError> {
    let max_size = file.pick(args.max_size, "max_antecedents", Thresholds::default().max_antecedents)?;
    let tau_s = file.pick(args.tau_s, "tau_s", Thresholds::default().tau_s)?;
    let dataset = load_data(file, &args.data)?;
    let backend = make_backend(file, &args.backend)?;
    let started = Instant::now();
    let out = extract_frequent_itemsets(&dataset, backend.as_ref(), max_size, tau_s, exec)?;
    let doc = ItemsetDocument::new(dataset.universe(), &out.itemsets);
    write_output(args.output.as_deref(), &to_json(&doc))?;
    if let Some(flat) = args.flat.as_deref() {
        write_output(Some(flat), &doc.to_flat())?;
    }
    write_report(args.report.as_deref(), &out.report, out.itemsets.len(), started)
}

fn cmd_mine(file: &FileConfig, args: MineArgs, exec: Exec) -> Result<(), CliError> {
    let params = MinerParams::new(
        file.pick(args.min_support, "min_support", 0.1)?,
        file.pick(args.min_confidence, "min_confidence", Thresholds::default().tau_c)?,
        file.pick(
            args.max_antecedents,
            "max_antecedents",
            Thresholds::default().max_antecedents,
        )?,
    )
    .map_err(|e| CliError::Config(e.0))?;
    let dataset = load_data(file, &args.data)?;
    if args.itemsets {
        let sets = mine_itemsets(&dataset, params.min_support, params.max_antecedents, exec)
            .map_err(|e| CliError::Config(e.0))?;
        let doc = ItemsetDocument::new(dataset.universe(), &sets);
        write_output(args.output.as_deref(), &to_json(&doc))?;
        if let Some(flat) = args.flat.as_deref() {
            write_output(Some(flat), &doc.to_flat())?;
        }
        return Ok(());
    }
    let rules = mine(&dataset, &params, exec).map_err(|e| CliError::Config(e.0))?;
    write_output(args.output.as_deref(), &rules_json(&rules, &dataset))
}

fn summary_output(summary: &RuleSetSummary, format: Format) -> String {
    match format {
        Format::Json => to_json(summary),
        Format::Table => summary.to_string(),
    }
}

fn cmd_eval(file: &FileConfig, args: EvalArgs, exec: Exec) -> Result<(), CliError> {
    let dataset = load_data(file, &args.data)?;
    let text = std::fs::read_to_string(&args.rules)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", args.rules.display())))?;
    let doc: RuleSetDocument = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("malformed rules file {}: {e}", args.rules.display())))?;
    let rules = doc.to_rule_set(dataset.universe())?;
    let summary = RuleEvaluator::new(&dataset).summarize(&rules, exec);
    write_output(args.output.as_deref(), &summary_output(&summary, args.format))
}

fn cmd_classify(file: &FileConfig, args: ClassifyArgs, exec: Exec) -> Result<(), CliError> {
    let class: String = file
        .pick_opt(args.class.clone(), "class")?
        .ok_or_else(|| CliError::Config("no class feature given (--class)".into()))?;
    let folds = file.pick(args.folds, "folds", DEFAULT_FOLDS)?;
    let seeds: Vec<u64> = match file.pick_opt(args.seeds.clone(), "seeds")? {
        Some(s) => parse_list(&s, "seeds")?,
        None => DEFAULT_SEEDS.to_vec(),
    };
    if seeds.is_empty() {
        return Err(CliError::Config("seed list is empty".into()));
    }
    let kind = pick_enum(file, args.learner, "learner")?.unwrap_or(LearnerKind::Probe);
    let learner: Box<dyn RuleLearner> = match kind {
        LearnerKind::Probe => Box::new(ProbeLearner {
            backend: make_backend(file, &args.backend)?,
            thresholds: thresholds(file, &args.thresholds)?,
        }),
        LearnerKind::Miner => Box::new(MinerLearner {
            params: MinerParams::new(
                file.pick(args.min_support, "min_support", 0.1)?,
                file.pick(args.min_confidence, "min_confidence", Thresholds::default().tau_c)?,
                file.pick(
                    args.thresholds.max_antecedents,
                    "max_antecedents",
                    Thresholds::default().max_antecedents,
                )?,
            )
            .map_err(|e| CliError::Config(e.0))?,
        }),
    };
    let dataset = load_data(file, &args.data)?;
    let class_feature = dataset
        .universe()
        .feature_index(&class)
        .ok_or_else(|| CliError::Config(format!("class feature {class:?} is not a column of the input")))?;
    let report = cross_validate(&dataset, class_feature, learner.as_ref(), folds, &seeds, exec)?;
    let text = match args.format {
        Format::Json => to_json(&report),
        Format::Table => report.to_table(),
    };
    write_output(args.output.as_deref(), &text)
}

#[derive(Serialize)]
struct SweepPoint {
    tau_a: f64,
    tau_c: f64,
    #[serde(flatten)]
    summary: RuleSetSummary,
}

#[derive(Serialize)]
struct SweepDocument {
    backend: String,
    fit_count: u64,
    probe_count: u64,
    points: Vec<SweepPoint>,
}

fn cmd_sweep(file: &FileConfig, args: SweepArgs, exec: Exec) -> Result<(), CliError> {
    let d = Thresholds::default();
    let max_antecedents = file.pick(args.max_antecedents, "max_antecedents", d.max_antecedents)?;
    let grid = |flag: &Option<String>, key: &str, default: f64| -> Result<Vec<f64>, CliError> {
        match flag {
            Some(s) => parse_list(s, key),
            None => match file.get::<String>(key)? {
                Some(s) => parse_list(&s, key),
                None => Ok(vec![default]),
            },
        }
    };
    let tau_as = grid(&args.tau_a, "tau_a", d.tau_a)?;
    let tau_cs = grid(&args.tau_c, "tau_c", d.tau_c)?;
    if tau_as.is_empty() || tau_cs.is_empty() {
        return Err(CliError::Config("empty threshold grid".into()));
    }
    for &v in tau_as.iter().chain(&tau_cs) {
        Thresholds::new(v, v, max_antecedents)?;
    }
    let dataset = load_data(file, &args.data)?;
    let backend = make_backend(file, &args.backend)?;
    let bank = ProbeBank::build(&dataset, backend.as_ref(), max_antecedents, exec)?;
    let eval = RuleEvaluator::new(&dataset);
    let mut points = Vec::new();
    for &tau_a in &tau_as {
        for &tau_c in &tau_cs {
            let rules = bank.rules(tau_a, tau_c, exec)?.rules;
            points.push(SweepPoint {
                tau_a,
                tau_c,
                summary: eval.summarize(&rules, exec),
            });
        }
    }
    let doc = SweepDocument {
        backend: backend.id(),
        fit_count: bank.report().fit_count,
        probe_count: bank.report().probe_count,
        points,
    };
    let text = match args.format {
        Format::Json => to_json(&doc),
        Format::Table => {
            let mut header = vec!["tau_a", "tau_c"];
            header.extend(RuleSetSummary::TABLE_HEADER);
            let rows: Vec<Vec<String>> = doc
                .points
                .iter()
                .map(|p| {
                    let mut row = vec![p.tau_a.to_string(), p.tau_c.to_string()];
                    row.extend(p.summary.table_cells());
                    row
                })
                .collect();
            render_table(&header, &rows)
        }
    };
    write_output(args.output.as_deref(), &text)
}
