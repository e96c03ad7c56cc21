use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rulepatch::data::{load_csv, LoadOptions};
use rulepatch::overlay::RuleId;
use rulepatch::simulation::{
    aggregate_curves, run_all, write_aggregate_csv, write_curves_csv, AccuracyCurve,
    ExperimentConfig, Mode, RunSummary,
};
use rulepatch::transform::TransformationConfig;
use serde_json::{json, Value};

use crate::error::AppError;
use crate::session::{self, parse_rule_arg, FeedbackRequest, Session, TrainOptions};

#[derive(Debug, Parser)]
#[command(name = "rulepatch", version, about = "Patch a classifier's predictions with user feedback rules")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and its explanation rules, writing a new session directory.
    Train(TrainArgs),
    /// Print the overlay response for one instance.
    Explain(ExplainArgs),
    /// Manage stored feedback rules.
    #[command(subcommand)]
    Feedback(FeedbackCommand),
    /// Run a feedback simulation over several seeds and write accuracy curves.
    Simulate(SimulateArgs),
    /// Serve a session over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Schema JSON; inferred from the data when omitted.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub label: String,
    #[arg(long)]
    pub positive_label: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub session: PathBuf,
    /// Instance as a JSON object, or a path to a file holding one.
    #[arg(long)]
    pub instance: String,
}

#[derive(Debug, Subcommand)]
pub enum FeedbackCommand {
    /// Store a corrected rule; without --original it is a complementary rule.
    Add(FeedbackAddArgs),
    /// List stored rules.
    List {
        #[arg(long)]
        session: PathBuf,
    },
    /// Delete a stored rule.
    Remove {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        id: RuleId,
    },
}

#[derive(Debug, Args)]
pub struct FeedbackAddArgs {
    #[arg(long)]
    pub session: PathBuf,
    /// `<clause>@<label>`
    #[arg(long)]
    pub original: Option<String>,
    /// `<clause>@<label>`
    #[arg(long)]
    pub corrected: String,
    /// Transformation config JSON (inline or a path); missing features use session defaults.
    #[arg(long)]
    pub tconfig: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub mode: Mode,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Label column; defaults to the last column.
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub positive_label: Option<String>,
    /// Inclusive range `a..b`, or a comma separated list.
    #[arg(long, default_value = "0..49")]
    pub seeds: String,
    /// Curve CSV; the aggregate CSV and summary JSON are written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Name written in the dataset column; defaults to the data file stem.
    #[arg(long)]
    pub dataset: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub session: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
}

/// Parses `3..7` (inclusive), `3..=7` or `1,4,9`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, AppError> {
    let bad = || AppError::Invalid(format!("cannot read seeds `{text}`"));
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        text.split(',').map(num).collect::<Result<_, _>>()?
    };
    Ok(seeds)
}

fn json_arg(text: &str) -> Result<Value, AppError> {
    let trimmed = text.trim_start();
    let raw = if trimmed.starts_with('{') {
        text.to_string()
    } else {
        fs::read_to_string(text).map_err(|e| AppError::io(text, e))?
    };
    Ok(serde_json::from_str(&raw)?)
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("curves");
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn create(path: &Path) -> Result<fs::File, AppError> {
    fs::File::create(path).map_err(|e| AppError::io(path, e))
}

fn header_last(path: &Path) -> Result<String, AppError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| AppError::Invalid(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| AppError::Invalid(format!("{}: {e}", path.display())))?;
    headers
        .iter()
        .next_back()
        .map(|h| h.trim().to_string())
        .ok_or_else(|| AppError::Invalid(format!("{}: empty header", path.display())))
}

fn simulate(args: &SimulateArgs) -> Result<Value, AppError> {
    let label = match &args.label {
        Some(l) => l.clone(),
        None => header_last(&args.data)?,
    };
    let mut opts = LoadOptions::new(label);
    opts.positive_label = args.positive_label.clone();
    if let Some(path) = &args.schema {
        let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        opts.schema = Some(serde_json::from_str(&text)?);
    }
    let ds = load_csv(&args.data, &opts)?;
    let name = match &args.dataset {
        Some(n) => n.clone(),
        None => args.data.file_stem().and_then(|s| s.to_str()).unwrap_or("data").to_string(),
    };
    let mut config = ExperimentConfig::new(args.mode, &name, &ds.schema);
    config.seeds = parse_seeds(&args.seeds)?;
    tracing::info!(mode = args.mode.name(), dataset = %name, seeds = config.seeds.len(), "simulating");
    let runs = run_all(&ds, &config)?;

    write_curves_csv(create(&args.out)?, args.mode, &name, &runs)?;
    let curves: Vec<AccuracyCurve> = runs.iter().flat_map(|r| r.curves.iter().cloned()).collect();
    let aggregate_path = sibling(&args.out, "aggregate.csv");
    write_aggregate_csv(create(&aggregate_path)?, args.mode, &name, &aggregate_curves(&curves)?)?;
    let summaries: Vec<RunSummary> = runs
        .iter()
        .map(|r| RunSummary {
            config: &config,
            seed: r.seed,
            stats: r.stats,
            feedback_rules: r.table.len(),
            wall_time_secs: r.wall_time_secs,
        })
        .collect();
    let summary_path = sibling(&args.out, "summary.json");
    let text = serde_json::to_string_pretty(&summaries)?;
    fs::write(&summary_path, text).map_err(|e| AppError::io(&summary_path, e))?;
    Ok(json!({
        "runs": runs.len(),
        "curves": args.out,
        "aggregate": aggregate_path,
        "summary": summary_path,
    }))
}

/// Runs one command; the returned JSON goes to stdout.
pub fn run(cli: Cli) -> Result<Value, AppError> {
    match cli.command {
        Command::Train(a) => {
            let opts = TrainOptions {
                data: a.data,
                schema: a.schema,
                label: a.label,
                positive_label: a.positive_label,
                seed: a.seed,
                train_fraction: a.train_fraction,
            };
            let s = session::train(&opts, &a.out)?;
            Ok(json!({
                "session": s.dir,
                "train_rows": s.train.len(),
                "test_rows": s.test.len(),
                "explanation_rules": s.ers.len(),
                "train_accuracy": rulepatch::model::accuracy(&s.model, &s.train.rows, &s.train.labels),
                "test_accuracy": rulepatch::model::accuracy(&s.model, &s.test.rows, &s.test.labels),
            }))
        }
        Command::Explain(a) => {
            let s = Session::open(&a.session)?;
            let x = s.parse_instance(&json_arg(&a.instance)?)?;
            Ok(serde_json::to_value(s.respond(&x))?)
        }
        Command::Feedback(FeedbackCommand::Add(a)) => {
            let mut s = Session::open(&a.session)?;
            let req = FeedbackRequest {
                original: a.original.as_deref().map(parse_rule_arg).transpose()?,
                corrected: parse_rule_arg(&a.corrected)?,
            };
            let tconfig: Option<TransformationConfig> = match &a.tconfig {
                Some(t) => Some(serde_json::from_value(json_arg(t)?)?),
                None => None,
            };
            let id = s.add_feedback(&req, tconfig.as_ref())?;
            Ok(json!({ "id": id }))
        }
        Command::Feedback(FeedbackCommand::List { session }) => {
            Ok(serde_json::to_value(Session::open(&session)?.rules())?)
        }
        Command::Feedback(FeedbackCommand::Remove { session, id }) => {
            Session::open(&session)?.remove_feedback(id)?;
            Ok(json!({ "removed": id }))
        }
        Command::Simulate(a) => simulate(&a),
        Command::Serve(a) => {
            let s = Session::open(&a.session)?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| AppError::Internal(e.to_string()))?;
            runtime.block_on(crate::server::serve(s, &a.addr))?;
            Ok(json!({ "stopped": a.addr }))
        }
    }
}
