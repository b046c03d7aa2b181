//! `crossgp`: synth → ingest → featurize → pair → train → evaluate →
//! importance → report.

mod manifest;
mod summary;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crossgp_core::augment::AugmentConfig;
use crossgp_core::evaluate::ImportanceMethod;
use crossgp_core::featurize::{
    featurize_bundles, pair_cross_day, read_examples_csv, read_features_csv, write_examples_csv,
    write_features_csv, DEFAULT_MIN_CGM, DEFAULT_TEST_FRACTION,
};
use crossgp_core::ingest::{self, parse_event_files, StreamKind};
use crossgp_core::models::ModelKind;
use crossgp_core::pipeline::{
    evaluate_artifact, importance_artifact, train_model, write_json, ModelArtifact, ModelHyper,
    Subset, TrainOptions,
};
use crossgp_core::synth::{self, Coupling, SynthConfig};

use manifest::Manifest;

#[derive(Debug, Parser)]
#[command(
    name = "crossgp",
    version,
    about = "Cross-day glycemic-control prediction pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic cgm.csv, bolus.csv and meal.csv.
    Synth(SynthArgs),
    /// Parse raw CSVs into per-subject JSON-lines day bundles.
    Ingest(IngestArgs),
    /// Reduce day bundles to daily features.
    Featurize(FeaturizeArgs),
    /// Pair day-d features with day-(d+1) labels.
    Pair(PairArgs),
    /// Train one model on paired examples.
    Train(TrainArgs),
    /// Score a model and write per-class metrics.
    Evaluate(EvaluateArgs),
    /// Native or permutation feature importance.
    Importance(ImportanceArgs),
    /// Flatten evaluation and importance reports into one CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    #[arg(long, default_value_t = 30)]
    subjects: usize,
    #[arg(long, default_value_t = 90)]
    days: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Good,Moderate,Poor day proportions.
    #[arg(long, default_value = "0.6,0.2,0.2", value_parser = parse_triple)]
    mix: [f64; 3],
    /// Weight of yesterday's latent control level.
    #[arg(long, default_value_t = Coupling::default().persistence)]
    persistence: f64,
    /// Weight of yesterday's total insulin.
    #[arg(long, default_value_t = Coupling::default().insulin)]
    insulin_coupling: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct IngestArgs {
    #[arg(long)]
    cgm: PathBuf,
    #[arg(long)]
    bolus: Option<PathBuf>,
    #[arg(long)]
    meal: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Abort on the first invalid row.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args, Serialize)]
struct FeaturizeArgs {
    /// Directory of `*.jsonl` bundles, or of raw CSVs containing cgm.csv.
    #[arg(long)]
    raw: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MIN_CGM)]
    min_cgm: usize,
}

#[derive(Debug, Args, Serialize)]
struct PairArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    /// One of lr, rf, gbt, crossgp.
    #[arg(long, value_parser = parse_kind)]
    model: ModelKind,
    #[arg(long)]
    examples: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TEST_FRACTION)]
    test_fraction: f64,
    #[arg(long, default_value_t = AugmentConfig::default().sigma_scale)]
    aug_sigma: f64,
    #[arg(long, default_value_t = AugmentConfig::default().copies_per_example)]
    aug_copies: usize,
    /// Step size (lr, crossgp).
    #[arg(long)]
    lr: Option<f64>,
    /// Epochs (lr, crossgp).
    #[arg(long)]
    epochs: Option<usize>,
    /// L2 penalty (lr).
    #[arg(long)]
    l2: Option<f64>,
    /// Trees (rf) or boosting rounds (gbt).
    #[arg(long)]
    trees: Option<usize>,
    /// Tree depth limit (rf, gbt).
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    min_leaf: Option<usize>,
    /// Features considered per split (rf).
    #[arg(long)]
    mtry: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Hidden width (crossgp).
    #[arg(long)]
    hidden: Option<usize>,
    /// Mini-batch size (crossgp).
    #[arg(long)]
    batch: Option<usize>,
    /// Decoupled weight decay on weight matrices (crossgp).
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Inverse-frequency class weights in the loss (crossgp).
    #[arg(long)]
    class_weights: bool,
}

#[derive(Debug, Args, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    examples: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// `test` recomputes the held-out split recorded in the model.
    #[arg(long, default_value = "test")]
    subset: Subset,
}

#[derive(Debug, Args, Serialize)]
struct ImportanceArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    examples: PathBuf,
    #[arg(long, default_value = "permutation")]
    method: ImportanceMethod,
    #[arg(long, default_value_t = 20)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "test")]
    subset: Subset,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ReportArgs {
    /// Directory searched (non-recursively) for report JSON files.
    #[arg(long)]
    reports: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse()
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected three comma-separated values, got {}", v.len()))
}

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    let dir = parent_dir(path);
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn synth_cmd(args: &SynthArgs) -> Result<Manifest> {
    let cfg = SynthConfig {
        n_subjects: args.subjects,
        days_per_subject: args.days,
        seed: args.seed,
        control_mix: args.mix,
        coupling: Coupling {
            persistence: args.persistence,
            insulin: args.insulin_coupling,
        },
        ..SynthConfig::default()
    };
    let data = synth::generate(&cfg)?;
    let outputs = data.write_csvs(&args.out)?;
    log::info!(
        "wrote {} CGM readings, {} insulin events, {} meals to {}",
        data.cgm.len(),
        data.insulin.len(),
        data.meals.len(),
        args.out.display()
    );
    Manifest::new("synth", args, Some(args.seed)).outputs(outputs)
}

fn ingest_cmd(args: &IngestArgs) -> Result<Manifest> {
    let mut events = Vec::new();
    let mut rejected = Vec::new();
    let streams = [
        (Some(&args.cgm), StreamKind::Cgm),
        (args.bolus.as_ref(), StreamKind::Bolus),
        (args.meal.as_ref(), StreamKind::Meal),
    ];
    for (path, kind) in streams {
        let Some(path) = path else { continue };
        let outcome = parse_event_files(std::slice::from_ref(path), kind, args.strict)?;
        events.extend(outcome.events);
        rejected.extend(outcome.rejected);
    }
    report_rejected(&rejected);
    let bundles = ingest::bundle_by_day(events);
    let outputs = ingest::write_bundles(&args.out, &bundles)?;
    log::info!(
        "wrote {} day bundles in {} files",
        bundles.len(),
        outputs.len()
    );
    let inputs: Vec<&PathBuf> = streams.iter().filter_map(|(p, _)| *p).collect();
    Manifest::new("ingest", args, None)
        .inputs(&inputs)?
        .outputs(outputs)
}

fn report_rejected(rejected: &[crossgp_core::Error]) {
    if rejected.is_empty() {
        return;
    }
    log::warn!("{} rows rejected", rejected.len());
    for e in rejected.iter().take(10) {
        log::warn!("  {e}");
    }
}

fn featurize_cmd(args: &FeaturizeArgs) -> Result<Manifest> {
    let (bundles, inputs) = if args.raw.join(StreamKind::Cgm.file_name()).is_file() {
        let (bundles, rejected) = ingest::load_raw_dir(&args.raw, false)?;
        report_rejected(&rejected);
        (bundles, csv_inputs(&args.raw))
    } else {
        (ingest::read_bundles(&args.raw)?, jsonl_inputs(&args.raw)?)
    };
    if bundles.is_empty() {
        bail!(crossgp_core::Error::EmptyDay);
    }
    let (days, skipped) = featurize_bundles(&bundles, args.min_cgm);
    if skipped > 0 {
        log::info!("skipped {skipped} days below {} CGM readings", args.min_cgm);
    }
    ensure_parent(&args.out)?;
    write_features_csv(&args.out, &days)?;
    log::info!("wrote {} daily feature rows", days.len());
    Manifest::new("featurize", args, None)
        .inputs(&inputs)?
        .outputs([args.out.clone()])
}

fn csv_inputs(dir: &Path) -> Vec<PathBuf> {
    [StreamKind::Cgm, StreamKind::Bolus, StreamKind::Meal]
        .iter()
        .map(|k| dir.join(k.file_name()))
        .filter(|p| p.is_file())
        .collect()
}

fn jsonl_inputs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "jsonl") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn pair_cmd(args: &PairArgs) -> Result<Manifest> {
    let days = read_features_csv(&args.features)?;
    let examples = pair_cross_day(&days)?;
    ensure_parent(&args.out)?;
    write_examples_csv(&args.out, &examples)?;
    log::info!(
        "paired {} examples from {} days",
        examples.len(),
        days.len()
    );
    Manifest::new("pair", args, None)
        .inputs(&[&args.features])?
        .outputs([args.out.clone()])
}

fn hyper_from(args: &TrainArgs) -> Result<ModelHyper> {
    let mut hyper = ModelHyper::default_for(args.model);
    let mut unused = Vec::new();
    let mut note = |name: &str, set: bool| {
        if set {
            unused.push(name.to_string());
        }
    };
    match &mut hyper {
        ModelHyper::Lr(h) => {
            h.step = args.lr.unwrap_or(h.step);
            h.epochs = args.epochs.unwrap_or(h.epochs);
            h.l2 = args.l2.unwrap_or(h.l2);
            note("--trees", args.trees.is_some());
            note("--max-depth", args.max_depth.is_some());
            note("--hidden", args.hidden.is_some());
            note("--weight-decay", args.weight_decay.is_some());
        }
        ModelHyper::Rf(h) => {
            h.n_trees = args.trees.unwrap_or(h.n_trees);
            h.max_depth = args.max_depth.or(h.max_depth);
            h.min_leaf = args.min_leaf.unwrap_or(h.min_leaf);
            h.features_per_split = args.mtry.unwrap_or(h.features_per_split);
            note("--lr", args.lr.is_some());
            note("--epochs", args.epochs.is_some());
            note("--hidden", args.hidden.is_some());
            note("--weight-decay", args.weight_decay.is_some());
        }
        ModelHyper::Gbt(h) => {
            h.rounds = args.trees.unwrap_or(h.rounds);
            h.max_depth = args.max_depth.unwrap_or(h.max_depth);
            h.eta = args.eta.unwrap_or(h.eta);
            h.lambda = args.lambda.unwrap_or(h.lambda);
            h.gamma = args.gamma.unwrap_or(h.gamma);
            note("--lr", args.lr.is_some());
            note("--epochs", args.epochs.is_some());
            note("--hidden", args.hidden.is_some());
            note("--weight-decay", args.weight_decay.is_some());
        }
        ModelHyper::Crossgp(c) => {
            c.adam.step_size = args.lr.unwrap_or(c.adam.step_size);
            c.epochs = args.epochs.unwrap_or(c.epochs);
            c.hidden_width = args.hidden.unwrap_or(c.hidden_width);
            c.batch_size = args.batch.unwrap_or(c.batch_size);
            c.adam.weight_decay = args.weight_decay.unwrap_or(c.adam.weight_decay);
            c.class_weighting = args.class_weights;
            note("--trees", args.trees.is_some());
            note("--max-depth", args.max_depth.is_some());
        }
    }
    if !unused.is_empty() {
        log::warn!("ignored for {}: {}", args.model, unused.join(", "));
    }
    Ok(hyper)
}

fn train_cmd(args: &TrainArgs) -> Result<Manifest> {
    let examples = read_examples_csv(&args.examples)?;
    let opts = TrainOptions {
        hyper: hyper_from(args)?,
        seed: args.seed,
        test_fraction: args.test_fraction,
        sigma_scale: args.aug_sigma,
        copies_per_example: args.aug_copies,
    };
    let artifact = train_model(&examples, &opts)?;
    ensure_parent(&args.out)?;
    artifact.save(&args.out)?;
    log::info!("saved {} model to {}", args.model, args.out.display());
    Manifest::new("train", args, Some(args.seed))
        .inputs(&[&args.examples])?
        .outputs([args.out.clone()])
}

fn evaluate_cmd(args: &EvaluateArgs) -> Result<Manifest> {
    let artifact = ModelArtifact::load(&args.model)?;
    let examples = read_examples_csv(&args.examples)?;
    let report = evaluate_artifact(&artifact, &examples, args.subset)?;
    log::info!(
        "{}: accuracy {:.4} on {} examples",
        report.model_kind,
        report.overall.accuracy,
        report.n_examples
    );
    ensure_parent(&args.report)?;
    write_json(&args.report, &report)?;
    Manifest::new("evaluate", args, None)
        .inputs(&[&args.model, &args.examples])?
        .outputs([args.report.clone()])
}

fn importance_cmd(args: &ImportanceArgs) -> Result<Manifest> {
    let artifact = ModelArtifact::load(&args.model)?;
    let examples = read_examples_csv(&args.examples)?;
    let report = importance_artifact(
        &artifact,
        &examples,
        args.subset,
        args.method,
        args.repeats,
        args.seed,
    )?;
    log::info!(
        "{} top-3 features: {}",
        report.model_kind,
        report.top3.join(", ")
    );
    ensure_parent(&args.out)?;
    write_json(&args.out, &report)?;
    Manifest::new("importance", args, Some(args.seed))
        .inputs(&[&args.model, &args.examples])?
        .outputs([args.out.clone()])
}

fn report_cmd(args: &ReportArgs) -> Result<Manifest> {
    let (rows, sources) = summary::collect(&args.reports)?;
    if rows.is_empty() {
        bail!(crossgp_core::Error::Config(format!(
            "no evaluation or importance reports found in {}",
            args.reports.display()
        )));
    }
    ensure_parent(&args.out)?;
    summary::write(&args.out, &rows)?;
    log::info!(
        "flattened {} reports into {} rows",
        sources.len(),
        rows.len()
    );
    Manifest::new("report", args, None)
        .inputs(&sources)?
        .outputs([args.out.clone()])
}

fn run(cli: Cli) -> Result<()> {
    let manifest = match &cli.command {
        Command::Synth(a) => synth_cmd(a)?,
        Command::Ingest(a) => ingest_cmd(a)?,
        Command::Featurize(a) => featurize_cmd(a)?,
        Command::Pair(a) => pair_cmd(a)?,
        Command::Train(a) => train_cmd(a)?,
        Command::Evaluate(a) => evaluate_cmd(a)?,
        Command::Importance(a) => importance_cmd(a)?,
        Command::Report(a) => report_cmd(a)?,
    };
    manifest.record()
}

/// 2 for filesystem failures, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let io = err.chain().any(|cause| {
        cause.downcast_ref::<std::io::Error>().is_some()
            || cause
                .downcast_ref::<crossgp_core::Error>()
                .is_some_and(|e| e.is_io())
    });
    if io {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CROSSGP_LOG", "info")).init();
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
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
