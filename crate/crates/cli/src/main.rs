use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bsgs::design::{export_csv, ingest_csv, preprocess, GroupStructure};
use bsgs::metrics::{prediction_error, MetricsRecord};
use bsgs::oracle::exhaustive_bsgs;
use bsgs::selector::{write_path_csv, Criterion};
use bsgs::study::{
    run_method, scaling_study, simulate, stability_selection, GroupFrequency, Method, MethodConfig,
    ScalingSweep, SimulationSummary,
};
use bsgs::synth::{generate, GroundTruth, SyntheticSpec};
use bsgs::{ErrorKind, Execution};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

mod output;

pub const VERSION: &str = env!("BSGS_VERSION");

#[derive(Debug, Error)]
enum CliError {
    #[error("{}: {}", module_of(.0), .0)]
    Core(#[from] bsgs::Error),
    #[error("cli: cannot write {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("cli: cannot write {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("cli: {0}")]
    Config(String),
    #[error("cli: {0}")]
    Input(String),
    #[error("cli: {0}")]
    Numerical(String),
}

fn module_of(e: &bsgs::Error) -> &'static str {
    match e {
        bsgs::Error::Design(_) => "grouped-design",
        bsgs::Error::Linalg(_) => "linalg-core",
        bsgs::Error::Splice(_) => "gsplicing",
        bsgs::Error::Select(_) => "selector",
        bsgs::Error::Synth(_) => "synthgen",
        bsgs::Error::Metrics(_) => "metrics",
        bsgs::Error::Oracle(_) => "oracle",
        bsgs::Error::Config(_) => "study",
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        let kind = match self {
            CliError::Core(e) => e.kind(),
            CliError::Io { .. } | CliError::Csv { .. } | CliError::Input(_) => ErrorKind::Input,
            CliError::Numerical(_) => ErrorKind::Numerical,
            CliError::Config(_) => ErrorKind::Config,
        };
        match kind {
            ErrorKind::Input => 2,
            ErrorKind::Numerical => 3,
            ErrorKind::Config => 4,
        }
    }
}

fn core<E: Into<bsgs::Error>>(e: E) -> CliError {
    CliError::Core(e.into())
}

#[derive(Parser)]
#[command(name = "bsgs", version = VERSION, about = "Best subset of groups selection by group splicing")]
struct Cli {
    /// Worker threads for replicate-level parallelism (1 runs sequentially).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one dataset and write a JSON report.
    #[command(
        after_help = "Output: JSON with version, method, size, support (group labels), num_predictors, \
coefficients [{column, group, value}] in the original basis, intercept, loss, gic, bic, threshold, \
iterations, trace, and for sgs/ggs the evaluated path."
    )]
    Fit(FitArgs),
    /// Run replicated simulations of a synthetic spec.
    #[command(
        after_help = "Per-replicate CSV columns: replicate,seed,status,tp,fp,tn,fn,tpr,fpr,mcc,gse,reee,\
selected_size,max_iterations,selected,error,runtime_seconds. Summary JSON: version, config, summary (mean/sd)."
    )]
    Simulate(SimulateArgs),
    /// Runtime-scaling sweep.
    #[command(
        after_help = "CSV columns: component,value,n,J,K,reps,mean_selected,median_runtime_seconds"
    )]
    Bench(BenchArgs),
    /// Emit the criterion path of the sequential size search.
    #[command(
        name = "gic-path",
        after_help = "CSV columns: T,loss,gic,bic,num_predictors,support,argmin"
    )]
    GicPath(GicPathArgs),
    /// Exhaustive best subset of groups for small problems.
    #[command(after_help = "Output: JSON with version, size, support, loss, num_candidates.")]
    Oracle(OracleArgs),
    /// Selection frequencies over random subsamples.
    #[command(
        after_help = "CSV columns: group,label,count,frequency (sorted by descending count)"
    )]
    Stability(StabilityArgs),
    /// Write a synthetic dataset as design.csv, groups.csv and truth.json.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Design CSV with a header row.
    #[arg(
        long,
        requires = "groups",
        required_unless_present = "spec",
        conflicts_with = "spec"
    )]
    design: Option<PathBuf>,
    /// Two-column CSV mapping design columns to group labels.
    #[arg(long)]
    groups: Option<PathBuf>,
    /// Name of the response column in the design CSV.
    #[arg(long, default_value = "y")]
    response: String,
    /// Synthetic spec JSON, generated in memory.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Overrides the spec's seed.
    #[arg(long, requires = "spec")]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Gsplicing,
    Sgs,
    Ggs,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Gic,
    Bic,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct MethodArgs {
    #[arg(long, value_enum, default_value = "sgs")]
    method: MethodArg,
    /// Model size for the fixed-size method.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    t_min: Option<usize>,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long, default_value_t = bsgs::splicing::DEFAULT_C_MAX)]
    c_max: usize,
    /// Fixed splice-acceptance threshold instead of the size-dependent default.
    #[arg(long = "pi-t")]
    pi_t: Option<f64>,
    #[arg(long, value_enum, default_value = "gic")]
    criterion: CriterionArg,
}

impl MethodArgs {
    fn config(&self) -> MethodConfig {
        let method = match self.method {
            MethodArg::Gsplicing => Method::Gsplicing,
            MethodArg::Sgs => Method::Sgs,
            MethodArg::Ggs => Method::Ggs,
        };
        MethodConfig {
            method,
            size: self.size,
            t_min: self.t_min,
            t_max: self.t_max,
            c_max: self.c_max,
            threshold: self.pi_t,
            criterion: match self.criterion {
                CriterionArg::Gic => Criterion::Gic,
                CriterionArg::Bic => Criterion::Bic,
            },
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    method: MethodArgs,
    /// Held-out design CSV (same columns and group map) for prediction error.
    #[arg(long)]
    test_design: Option<PathBuf>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 100)]
    replications: usize,
    #[command(flatten)]
    method: MethodArgs,
    /// Per-replicate output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Summary JSON path; stderr when absent.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Sweep declaration JSON.
    #[arg(long, required_unless_present = "setting", conflicts_with = "setting")]
    sweep: Option<PathBuf>,
    /// One of the preset sweeps: a (vary J), b (vary n), c (vary group size).
    #[arg(long)]
    setting: Option<char>,
    /// Method for preset sweeps.
    #[arg(long, value_enum, default_value = "sgs")]
    method: MethodArg,
    /// Overrides the number of timed reps per point.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct GicPathArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    t_min: Option<usize>,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long, default_value_t = bsgs::splicing::DEFAULT_C_MAX)]
    c_max: usize,
    #[arg(long = "pi-t")]
    pi_t: Option<f64>,
    #[arg(long, value_enum, default_value = "gic")]
    criterion: CriterionArg,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    size: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StabilityArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    method: MethodArgs,
    #[arg(long, default_value_t = 100)]
    replications: usize,
    #[arg(long, default_value_t = 0.5)]
    subsample_fraction: f64,
    /// Seed of the subsampling stream.
    #[arg(long = "subsample-seed", default_value_t = 0)]
    subsample_seed: u64,
    /// Keep only the `k` most frequent groups.
    #[arg(long)]
    top: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
}

struct Loaded {
    x: DMatrix<f64>,
    y: DVector<f64>,
    structure: GroupStructure,
    column_names: Vec<String>,
    truth: Option<(SyntheticSpec, GroundTruth)>,
}

fn load_spec(path: &Path, seed: Option<u64>) -> Result<SyntheticSpec, CliError> {
    let spec = SyntheticSpec::from_json_file(path).map_err(core)?;
    let spec = match seed {
        Some(s) => spec.with_seed(s),
        None => spec,
    };
    spec.validate().map_err(core)?;
    Ok(spec)
}

fn load(data: &DataArgs) -> Result<Loaded, CliError> {
    if let Some(spec_path) = &data.spec {
        let spec = load_spec(spec_path, data.seed)?;
        let truth = generate(&spec).map_err(core)?;
        return Ok(Loaded {
            x: truth.design_raw.clone(),
            y: truth.response.clone(),
            structure: spec.structure_of_groups(),
            column_names: spec.column_names(),
            truth: Some((spec, truth)),
        });
    }
    let design = data.design.as_ref().expect("clap enforces a data source");
    let groups = data
        .groups
        .as_ref()
        .expect("clap enforces --groups with --design");
    let d = ingest_csv(design, &data.response, groups).map_err(core)?;
    Ok(Loaded {
        x: d.x,
        y: d.y,
        structure: d.structure,
        column_names: d.column_names,
        truth: None,
    })
}

/// Opens `path` for writing, or stdout.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) => File::create(p)
            .map(|f| Box::new(BufWriter::new(f)) as Box<dyn Write>)
            .map_err(|source| CliError::Io {
                path: p.display().to_string(),
                source,
            }),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn display(path: Option<&Path>) -> String {
    path.map(|p| p.display().to_string())
        .unwrap_or_else(|| "stdout".into())
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    let mut out = sink(path)?;
    let io_err = |source| CliError::Io {
        path: display(path),
        source,
    };
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| io_err(e.into()))?;
    writeln!(out).map_err(io_err)?;
    out.flush().map_err(io_err)
}

fn csv_result(path: Option<&Path>, r: csv::Result<()>) -> Result<(), CliError> {
    r.map_err(|source| CliError::Csv {
        path: display(path),
        source,
    })
}

fn method_name(m: MethodArg) -> &'static str {
    match m {
        MethodArg::Gsplicing => "gsplicing",
        MethodArg::Sgs => "sgs",
        MethodArg::Ggs => "ggs",
    }
}

fn run_fit(args: &FitArgs, exec: Execution) -> Result<(), CliError> {
    let data = load(&args.data)?;
    let design = preprocess(&data.x, &data.y, data.structure.clone()).map_err(core)?;
    let fit = run_method(&design, &args.method.config(), exec)?;
    let mut report = output::FitJson::new(
        method_name(args.method.method),
        &fit.best,
        &data.structure,
        &data.column_names,
    )
    .with_path(&fit.path, &data.structure);
    if let Some((spec, truth)) = &data.truth {
        report.metrics = Some(MetricsRecord::evaluate(
            &fit.best.support,
            &truth.true_support,
            spec.num_groups,
            &fit.best.beta_original,
            &truth.beta_star,
        ));
    }
    if let Some(test_path) = &args.test_design {
        let groups =
            args.data.groups.as_ref().ok_or_else(|| {
                CliError::Config("--test-design needs --design and --groups".into())
            })?;
        let test = ingest_csv(test_path, &args.data.response, groups).map_err(core)?;
        if test.column_names != data.column_names {
            return Err(CliError::Input(format!(
                "{} does not have the training design's columns",
                test_path.display()
            )));
        }
        report.prediction_error =
            Some(prediction_error(&fit.best, &test.x, &test.y).map_err(core)?);
    }
    write_json(args.out.as_deref(), &report)
}

#[derive(Serialize)]
struct SimulationConfigEcho<'a> {
    spec: &'a SyntheticSpec,
    method: &'a MethodConfig,
    replications: usize,
}

#[derive(Serialize)]
struct SimulationJson<'a> {
    version: &'static str,
    config: SimulationConfigEcho<'a>,
    summary: &'a SimulationSummary,
}

#[derive(Serialize)]
struct ReplicateJson<'a> {
    replicate: usize,
    seed: u64,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    selected: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<&'a bsgs::metrics::MetricsRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    runtime_seconds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

fn run_simulate(args: &SimulateArgs, exec: Execution) -> Result<(), CliError> {
    if args.replications == 0 {
        return Err(CliError::Config("--replications must be at least 1".into()));
    }
    let spec = load_spec(&args.spec, args.seed)?;
    let method = args.method.config();
    if method.method == Method::Gsplicing && method.size.is_none() {
        return Err(CliError::Config("--method gsplicing needs --size".into()));
    }
    let rows = simulate(&spec, &method, args.replications, exec);
    let out = args.out.as_deref();
    match args.format {
        Format::Csv => {
            let w = sink(out)?;
            csv_result(
                out,
                output::write_simulation_csv(w, &rows, &spec.structure_of_groups()),
            )?;
        }
        Format::Json => {
            let structure = spec.structure_of_groups();
            let body: Vec<ReplicateJson> = rows
                .iter()
                .map(|r| {
                    let ok = r.result.as_ref().ok();
                    ReplicateJson {
                        replicate: r.replicate,
                        seed: r.seed,
                        status: if ok.is_some() { "ok" } else { "error" },
                        selected: ok.map(|m| output::support_labels(&structure, &m.selected)),
                        metrics: ok.map(|m| &m.metrics),
                        max_iterations: ok.map(|m| m.max_iterations),
                        runtime_seconds: ok.map(|m| m.runtime_seconds),
                        error: r.result.as_ref().err().map(String::as_str),
                    }
                })
                .collect();
            write_json(out, &body)?;
        }
    }
    let summary = SimulationSummary::of(&rows);
    let doc = SimulationJson {
        version: VERSION,
        config: SimulationConfigEcho {
            spec: &spec,
            method: &method,
            replications: args.replications,
        },
        summary: &summary,
    };
    match &args.summary {
        Some(p) => write_json(Some(p), &doc)?,
        None => eprintln!("{}", serde_json::to_string_pretty(&doc).unwrap_or_default()),
    }
    for r in &rows {
        if let Err(e) = &r.result {
            eprintln!("replicate {} (seed {}) failed: {e}", r.replicate, r.seed);
        }
    }
    if !summary.acceptable() {
        return Err(CliError::Numerical(format!(
            "only {}/{} replicates succeeded",
            summary.succeeded, summary.replications
        )));
    }
    Ok(())
}

fn run_bench(args: &BenchArgs) -> Result<(), CliError> {
    let mut sweep: ScalingSweep = match (&args.sweep, args.setting) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        (None, Some(s)) => {
            let method = match args.method {
                MethodArg::Sgs => Method::Sgs,
                MethodArg::Ggs => Method::Ggs,
                MethodArg::Gsplicing => {
                    return Err(CliError::Config(
                        "preset sweeps use --method sgs or ggs".into(),
                    ));
                }
            };
            ScalingSweep::preset(s, method)
                .ok_or_else(|| CliError::Config(format!("unknown setting '{s}'")))?
        }
        (None, None) => unreachable!("clap enforces a sweep source"),
    };
    if let Some(r) = args.reps {
        sweep.reps = r;
    }
    let points = scaling_study(&sweep)?;
    let out = args.out.as_deref();
    match args.format {
        Format::Csv => csv_result(out, output::write_scaling_csv(sink(out)?, &points)),
        Format::Json => write_json(out, &points),
    }
}

fn run_gic_path(args: &GicPathArgs) -> Result<(), CliError> {
    let data = load(&args.data)?;
    let design = preprocess(&data.x, &data.y, data.structure.clone()).map_err(core)?;
    let method = MethodArgs {
        method: MethodArg::Sgs,
        size: None,
        t_min: args.t_min,
        t_max: args.t_max,
        c_max: args.c_max,
        pi_t: args.pi_t,
        criterion: args.criterion,
    }
    .config();
    let fit = run_method(&design, &method, Execution::Sequential)?;
    let out = args.out.as_deref();
    match args.format {
        Format::Csv => csv_result(
            out,
            write_path_csv(sink(out)?, &fit.path, &data.structure, method.criterion),
        ),
        Format::Json => {
            #[derive(Serialize)]
            struct PathJson {
                argmin: usize,
                path: Vec<output::PathEntry>,
            }
            let path = output::FitJson::new("sgs", &fit.best, &data.structure, &data.column_names)
                .with_path(&fit.path, &data.structure)
                .path;
            write_json(
                out,
                &PathJson {
                    argmin: fit.best.size(),
                    path,
                },
            )
        }
    }
}

fn run_oracle(args: &OracleArgs, exec: Execution) -> Result<(), CliError> {
    let data = load(&args.data)?;
    let design = preprocess(&data.x, &data.y, data.structure.clone()).map_err(core)?;
    let res = exhaustive_bsgs(&design, args.size, exec).map_err(core)?;
    #[derive(Serialize)]
    struct OracleJson {
        version: &'static str,
        size: usize,
        support: Vec<String>,
        loss: f64,
        num_candidates: usize,
    }
    write_json(
        args.out.as_deref(),
        &OracleJson {
            version: VERSION,
            size: args.size,
            support: output::support_labels(&data.structure, &res.best_support),
            loss: res.best_loss,
            num_candidates: res.num_candidates,
        },
    )
}

fn run_stability(args: &StabilityArgs, exec: Execution) -> Result<(), CliError> {
    let data = load(&args.data)?;
    let method = args.method.config();
    let report = stability_selection(
        &data.x,
        &data.y,
        &data.structure,
        &method,
        args.replications,
        args.subsample_fraction,
        args.subsample_seed,
        exec,
    )?;
    let mut rows = report.frequencies;
    if let Some(k) = args.top {
        rows.truncate(k);
    }
    let out = args.out.as_deref();
    match args.format {
        Format::Csv => csv_result(out, output::write_stability_csv(sink(out)?, &rows))?,
        Format::Json => {
            // Same 1-based group ids as the CSV.
            let rows: Vec<GroupFrequency> = rows
                .into_iter()
                .map(|f| GroupFrequency {
                    group: f.group + 1,
                    ..f
                })
                .collect();
            write_json(out, &rows)?
        }
    }
    for (r, e) in &report.failures {
        eprintln!("subsample {r} failed: {e}");
    }
    if report.failures.len() * 10 > report.replications {
        return Err(CliError::Numerical(format!(
            "{}/{} subsample fits failed",
            report.failures.len(),
            report.replications
        )));
    }
    Ok(())
}

fn run_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let spec = load_spec(&args.spec, args.seed)?;
    let truth = generate(&spec).map_err(core)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|source| CliError::Io {
        path: args.out_dir.display().to_string(),
        source,
    })?;
    let structure = spec.structure_of_groups();
    let names = spec.column_names();
    export_csv(
        &args.out_dir.join("design.csv"),
        &args.out_dir.join("groups.csv"),
        &truth.design_raw,
        &truth.response,
        &structure,
        &names,
        "y",
    )
    .map_err(core)?;
    #[derive(Serialize)]
    struct TruthJson {
        version: &'static str,
        spec: SyntheticSpec,
        true_support: Vec<String>,
        coefficients: Vec<(String, f64)>,
    }
    let coefficients = names
        .iter()
        .zip(truth.beta_star.iter())
        .filter(|(_, b)| **b != 0.0)
        .map(|(n, b)| (n.clone(), *b))
        .collect();
    write_json(
        Some(&args.out_dir.join("truth.json")),
        &TruthJson {
            version: VERSION,
            true_support: output::support_labels(&structure, &truth.true_support),
            spec,
            coefficients,
        },
    )
}

fn execution(threads: Option<usize>) -> Result<Execution, CliError> {
    match threads {
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(1) => Ok(Execution::Sequential),
        #[cfg(feature = "rayon")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Config(e.to_string()))?;
            Ok(Execution::Parallel)
        }
        _ => Ok(Execution::Parallel),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let exec = execution(cli.threads)?;
    match &cli.command {
        Command::Fit(a) => run_fit(a, exec),
        Command::Simulate(a) => run_simulate(a, exec),
        Command::Bench(a) => run_bench(a),
        Command::GicPath(a) => run_gic_path(a),
        Command::Oracle(a) => run_oracle(a, exec),
        Command::Stability(a) => run_stability(a, exec),
        Command::Generate(a) => run_generate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(4)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
