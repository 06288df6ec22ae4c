mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use atmocluster::{
    assign, evaluate, kmeans_fit, load_dataset, load_reference_grouping, mlsmote, save_dataset,
    silhouette, Assignment, ClusterModel, DatasetFormat, DatasetTable, EvaluationReport,
    KMeansFit, KMeansParams, MlsmoteOutput, MlsmoteParams, Standardization,
};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use config::{existing, kmeans_params, mlsmote_params, pick, require, require_seed, FileConfig};

#[derive(Parser)]
#[command(name = "atmocluster", version, propagate_version = true)]
#[command(about = "Cluster images by atmosphere from pseudo-label strength vectors")]
struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Oversample minority labels with MLSMOTE.
    Augment(AugmentArgs),
    /// Fit k-means and write the model and training assignment.
    Cluster(ClusterArgs),
    /// Assign records to the nearest centroid of a saved model.
    Assign(AssignArgs),
    /// Score an assignment: silhouette and normalized entropy.
    Evaluate(EvaluateArgs),
    /// Augment, cluster, assign and evaluate in one run.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct MlsmoteFlags {
    /// Neighbours per seed record.
    #[arg(long = "mlsmote-k")]
    mlsmote_k: Option<usize>,
    /// ranking, union or intersection.
    #[arg(long)]
    strategy: Option<String>,
}

#[derive(Args)]
struct KMeansFlags {
    /// Number of clusters.
    #[arg(short, long)]
    k: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Z-score each feature column before fitting.
    #[arg(long)]
    normalize: bool,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(short, long)]
    input: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    mlsmote: MlsmoteFlags,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(short, long)]
    input: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    kmeans: KMeansFlags,
    /// Model JSON to write.
    #[arg(short, long)]
    model: PathBuf,
    /// Assignment CSV for the fitted records.
    #[arg(short, long)]
    assignments: Option<PathBuf>,
}

#[derive(Args)]
struct AssignArgs {
    #[arg(short, long)]
    model: PathBuf,
    #[arg(short, long)]
    input: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(short, long)]
    assignments: PathBuf,
    #[arg(short, long)]
    reference: Option<PathBuf>,
    /// Dataset holding the features of the assigned records.
    #[arg(short, long)]
    input: Option<PathBuf>,
    /// Report JSON to write.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Confusion probabilities as CSV.
    #[arg(long)]
    confusion: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(short, long)]
    input: Option<PathBuf>,
    #[arg(short, long)]
    reference: Option<PathBuf>,
    /// Dataset to assign with the fitted model instead of the fitting data.
    #[arg(long)]
    assign_input: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Skip MLSMOTE.
    #[arg(long)]
    no_augment: bool,
    #[command(flatten)]
    mlsmote: MlsmoteFlags,
    #[command(flatten)]
    kmeans: KMeansFlags,
    /// Directory for all artifacts.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
}

pub enum Failure {
    Validation(String),
    Data(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Data(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Validation(_) => "validation",
            Failure::Data(_) => "data",
            Failure::Io(_) => "io",
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Data(m) | Failure::Io(m) => m,
        }
    }
}

impl From<atmocluster::Error> for Failure {
    fn from(e: atmocluster::Error) -> Self {
        if e.is_io() {
            Failure::Io(e.to_string())
        } else if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if json {
                let err = json!({"error": {"kind": f.kind(), "message": f.message(), "exit_code": f.code()}});
                eprintln!("{err}");
            } else {
                eprintln!("error ({}): {}", f.kind(), f.message());
            }
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = FileConfig::load(cli.config.as_deref())?;
    let out = Output { json: cli.json };
    match cli.command {
        Command::Augment(a) => cmd_augment(a, config, out),
        Command::Cluster(a) => cmd_cluster(a, config, out),
        Command::Assign(a) => cmd_assign(a, config, out),
        Command::Evaluate(a) => cmd_evaluate(a, config, out),
        Command::Pipeline(a) => cmd_pipeline(a, config, out),
    }
}

#[derive(Clone, Copy)]
struct Output {
    json: bool,
}

impl Output {
    fn emit(&self, value: &impl Serialize, text: impl FnOnce() -> String) {
        if self.json {
            println!("{}", serde_json::to_string_pretty(value).expect("summary serializes"));
        } else {
            print!("{}", text());
        }
    }
}

fn format_of(path: &Path) -> Result<DatasetFormat, Failure> {
    DatasetFormat::from_path(path).ok_or_else(|| {
        Failure::Validation(format!(
            "cannot infer dataset format of `{}` (use .jsonl or .csv)",
            path.display()
        ))
    })
}

fn read_table(path: &Path) -> Result<DatasetTable, Failure> {
    Ok(load_dataset(path, format_of(path)?)?)
}

fn write_table(table: &DatasetTable, path: &Path) -> Result<(), Failure> {
    Ok(save_dataset(table, path, format_of(path)?)?)
}

fn input_path(flag: Option<PathBuf>, config: Option<PathBuf>) -> Result<PathBuf, Failure> {
    existing(require(pick(flag, config), "input dataset (--input or `dataset`)")?, "input dataset")
}

fn run_mlsmote(table: &DatasetTable, params: MlsmoteParams) -> Result<MlsmoteOutput, Failure> {
    let output = mlsmote(table, params)?;
    for skipped in &output.skipped {
        eprintln!("{skipped}");
    }
    Ok(output)
}

#[derive(Serialize)]
struct AugmentSummary {
    records: usize,
    synthetic: usize,
    generated: BTreeMap<String, usize>,
    skipped: Vec<String>,
}

impl AugmentSummary {
    fn new(output: &MlsmoteOutput) -> Self {
        Self {
            records: output.table.len(),
            synthetic: output.synthetic_count(),
            generated: output.generated.clone(),
            skipped: output.skipped.iter().map(|s| s.label.clone()).collect(),
        }
    }

    fn text(&self) -> String {
        let mut s = format!("{} synthetic ({} records total)\n", self.synthetic, self.records);
        for (label, n) in &self.generated {
            s.push_str(&format!("  {label}: {n}\n"));
        }
        s
    }
}

fn cmd_augment(args: AugmentArgs, config: FileConfig, out: Output) -> Result<(), Failure> {
    let seed = require_seed(pick(args.seed, config.seed))?;
    let input = input_path(args.input, config.dataset)?;
    let params = mlsmote_params(
        seed,
        pick(args.mlsmote.mlsmote_k, config.mlsmote.k),
        pick(args.mlsmote.strategy, config.mlsmote.strategy),
    )?;
    format_of(&args.output)?;
    let table = read_table(&input)?;
    let output = run_mlsmote(&table, params)?;
    write_table(&output.table, &args.output)?;
    let summary = AugmentSummary::new(&output);
    out.emit(&summary, || summary.text());
    Ok(())
}

struct KMeansSettings {
    params: KMeansParams,
    normalize: bool,
}

fn kmeans_settings(flags: KMeansFlags, seed: u64, config: &FileConfig) -> Result<KMeansSettings, Failure> {
    let k = pick(flags.k, config.k).unwrap_or(config::DEFAULT_K);
    let params = kmeans_params(
        k,
        seed,
        pick(flags.max_iter, config.kmeans.max_iter),
        pick(flags.tol, config.kmeans.tol),
    )?;
    let normalize = flags.normalize || config.kmeans.normalize.unwrap_or(false);
    Ok(KMeansSettings { params, normalize })
}

fn fit(table: &DatasetTable, settings: &KMeansSettings) -> Result<KMeansFit, Failure> {
    let features = table.feature_matrix();
    if !settings.normalize {
        return Ok(kmeans_fit(&features, settings.params)?);
    }
    let standardization = Standardization::fit(&features)?;
    let mut fit = kmeans_fit(&standardization.apply(&features), settings.params)?;
    fit.model.normalization = Some(standardization);
    Ok(fit)
}

fn cluster_sizes(clusters: &[usize], k: usize) -> Vec<usize> {
    let mut sizes = vec![0; k];
    for &c in clusters {
        sizes[c] += 1;
    }
    sizes
}

#[derive(Serialize)]
struct ClusterSummary {
    k: usize,
    seed: u64,
    inertia: f64,
    iterations_run: usize,
    converged: bool,
    cluster_sizes: Vec<usize>,
}

impl ClusterSummary {
    fn new(fit: &KMeansFit) -> Self {
        let m = &fit.model;
        Self {
            k: m.k,
            seed: m.seed,
            inertia: m.inertia,
            iterations_run: m.iterations_run,
            converged: m.converged,
            cluster_sizes: cluster_sizes(&fit.labels, m.k),
        }
    }

    fn text(&self) -> String {
        format!(
            "k={} seed={} inertia={:.6} iterations={} converged={}\ncluster sizes {:?}\n",
            self.k, self.seed, self.inertia, self.iterations_run, self.converged, self.cluster_sizes
        )
    }
}

fn cmd_cluster(args: ClusterArgs, config: FileConfig, out: Output) -> Result<(), Failure> {
    let seed = require_seed(pick(args.seed, config.seed))?;
    let settings = kmeans_settings(args.kmeans, seed, &config)?;
    let input = input_path(args.input, config.dataset)?;
    let table = read_table(&input)?;
    let fit = fit(&table, &settings)?;
    fit.model.save_json(&args.model)?;
    if let Some(path) = &args.assignments {
        Assignment::new(table.ids(), fit.labels.clone())?.save_csv(path)?;
    }
    let summary = ClusterSummary::new(&fit);
    out.emit(&summary, || summary.text());
    Ok(())
}

fn assign_table(model: &ClusterModel, table: &DatasetTable) -> Result<Assignment, Failure> {
    let clusters = assign(model, &table.feature_matrix())?;
    Ok(Assignment::new(table.ids(), clusters)?)
}

fn cmd_assign(args: AssignArgs, config: FileConfig, out: Output) -> Result<(), Failure> {
    let model_path = existing(args.model, "model")?;
    let input = input_path(args.input, config.assign_dataset.or(config.dataset))?;
    let model = ClusterModel::load_json(&model_path)?;
    let table = read_table(&input)?;
    let assignment = assign_table(&model, &table)?;
    assignment.save_csv(&args.output)?;
    let sizes = cluster_sizes(&assignment.clusters, model.k);
    let summary = json!({"items": assignment.len(), "cluster_sizes": sizes});
    out.emit(&summary, || format!("assigned {} items; cluster sizes {sizes:?}\n", assignment.len()));
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn report_json(report: &impl Serialize) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    text
}

fn cmd_evaluate(args: EvaluateArgs, config: FileConfig, out: Output) -> Result<(), Failure> {
    let assignment_path = existing(args.assignments, "assignment file")?;
    let reference_path = existing(
        require(pick(args.reference, config.reference), "reference grouping (--reference or `reference`)")?,
        "reference grouping",
    )?;
    let input = input_path(args.input, config.assign_dataset.or(config.dataset))?;
    let assignment = Assignment::load_csv(&assignment_path)?;
    let reference = load_reference_grouping(&reference_path)?;
    let table = read_table(&input)?;
    let report = evaluate(&table, &assignment, &reference)?;
    if let Some(path) = &args.output {
        write_text(path, &report_json(&report))?;
    }
    if let Some(path) = &args.confusion {
        write_text(path, &report.confusion.to_csv()?)?;
    }
    out.emit(&report, || report.to_string());
    Ok(())
}

#[derive(Serialize)]
struct PipelineReport {
    augmentation: Option<AugmentSummary>,
    clustering: ClusterSummary,
    assigned: usize,
    /// Silhouette of the written assignment, when it has two or more clusters.
    silhouette: Option<f64>,
    /// Present when a reference grouping was supplied.
    evaluation: Option<EvaluationReport>,
}

fn cmd_pipeline(args: PipelineArgs, config: FileConfig, out: Output) -> Result<(), Failure> {
    let seed = require_seed(pick(args.seed, config.seed))?;
    let augment = !args.no_augment && config.mlsmote.enabled.unwrap_or(true);
    let mlsmote = mlsmote_params(
        seed,
        pick(args.mlsmote.mlsmote_k, config.mlsmote.k),
        pick(args.mlsmote.strategy, config.mlsmote.strategy.clone()),
    )?;
    let settings = kmeans_settings(args.kmeans, seed, &config)?;
    let input = input_path(args.input, config.dataset)?;
    let reference = pick(args.reference, config.reference)
        .map(|p| existing(p, "reference grouping"))
        .transpose()?;
    let assign_input = pick(args.assign_input, config.assign_dataset)
        .map(|p| existing(p, "assign dataset"))
        .transpose()?;
    let dir = require(pick(args.output_dir, config.output), "output directory (--output-dir or `output`)")?;
    fs::create_dir_all(&dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;

    let table = read_table(&input)?;
    let reference = reference.map(load_reference_grouping).transpose()?;
    let (fitting, augmentation) = if augment {
        let output = run_mlsmote(&table, mlsmote)?;
        let summary = AugmentSummary::new(&output);
        (output.table, Some(summary))
    } else {
        (table, None)
    };
    save_dataset(&fitting, dir.join("augmented.jsonl"), DatasetFormat::Jsonl)?;

    let fit = fit(&fitting, &settings)?;
    fit.model.save_json(dir.join("model.json"))?;

    let target = assign_input.map(|p| read_table(&p)).transpose()?;
    let target = target.as_ref().unwrap_or(&fitting);
    let assignment = assign_table(&fit.model, target)?;
    assignment.save_csv(dir.join("assignments.csv"))?;

    let evaluation = reference
        .map(|r| evaluate(target, &assignment, &r))
        .transpose()?;
    let silhouette = match &evaluation {
        Some(e) => e.silhouette,
        None => silhouette(&target.feature_matrix(), &assignment.clusters)
            .ok()
            .map(|s| s.overall),
    };
    let report = PipelineReport {
        augmentation,
        clustering: ClusterSummary::new(&fit),
        assigned: assignment.len(),
        silhouette,
        evaluation,
    };
    write_text(&dir.join("report.json"), &report_json(&report))?;
    out.emit(&report, || {
        let mut s = String::new();
        if let Some(a) = &report.augmentation {
            s.push_str(&a.text());
        }
        s.push_str(&report.clustering.text());
        match &report.evaluation {
            Some(e) => s.push_str(&e.to_string()),
            None => match report.silhouette {
                Some(v) => s.push_str(&format!("silhouette        {v:.4}\n")),
                None => s.push_str("silhouette        n/a (single cluster)\n"),
            },
        }
        s.push_str(&format!("artifacts in {}\n", dir.display()));
        s
    });
    Ok(())
}
