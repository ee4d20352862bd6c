//! `bounded-effects`: validate panels, estimate bounds and run simulation studies.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid data, configuration or
//! usage, 3 degenerate estimation.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bounded_effects::bounds::{naive_cic, naive_did, selection_did, BoundsResult, Estimator};
use bounded_effects::dataset::{read_csv, validate_units, write_csv, Rule};
use bounded_effects::inference::{
    bootstrap_sigmas, confidence_interval, imbens_manski_z, pointwise_intervals, InferenceError,
    DEFAULT_ALPHA, DEFAULT_BOOTSTRAP,
};
use bounded_effects::simulate::{coverage_study, generate, DgpConfig, SimError, StudySpec};
use bounded_effects::{DataError, Direction, EstimationError, PanelDataset, Schema};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

const THREADS_ENV: &str = "BOUNDED_EFFECTS_THREADS";

#[derive(Parser)]
#[command(name = "bounded-effects", version, about = "Bounds on treatment effects for always-observed units")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate always-observed shares, bounds and confidence intervals.
    Estimate(EstimateArgs),
    /// Run a coverage study on a simulated design.
    Simulate(SimulateArgs),
    /// Check a panel file against the data rules.
    Validate(ValidateArgs),
    /// Write one simulated panel as CSV.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum MethodArg {
    Did,
    Cic,
    Both,
    Naive,
    SelectionDid,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum StudyMethod {
    Did,
    Cic,
}

#[derive(clap::Args)]
struct EstimateArgs {
    /// Panel CSV.
    #[arg(long)]
    input: PathBuf,
    /// TOML column mapping; defaults to id,g,y1,y2,s1,s2.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Comma-separated `positive`/`negative`, one per missingness source.
    #[arg(long)]
    monotonicity: Option<String>,
    /// Interior quantile grid size for changes-in-changes.
    #[arg(long)]
    grid: Option<usize>,
    /// Bootstrap replicates; 0 skips confidence intervals.
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `csv` writes only the quantile table.
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// Design file (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    /// Overrides the seed in the design file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "did")]
    method: StudyMethod,
    #[arg(long, default_value_t = bounded_effects::bounds::DEFAULT_GRID)]
    grid: usize,
    /// Bootstrap replicates per replication; 0 skips confidence intervals.
    #[arg(long, default_value_t = 199)]
    bootstrap: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ValidateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(clap::Args)]
struct GenerateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failed command: exit code plus diagnostic.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn io(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    fn degenerate(message: impl Into<String>) -> Self {
        Failure { code: 3, message: message.into() }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(_) => Failure::io(e.to_string()),
            _ => Failure::invalid(e.to_string()),
        }
    }
}

impl From<EstimationError> for Failure {
    fn from(e: EstimationError) -> Self {
        Failure::degenerate(e.to_string())
    }
}

impl From<InferenceError> for Failure {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::InvalidAlpha(_) | InferenceError::TooFewReplicates(_) => {
                Failure::invalid(e.to_string())
            }
            _ => Failure::degenerate(e.to_string()),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(_) | SimError::TooFewReps(_) => Failure::invalid(e.to_string()),
            SimError::AllRepsFailed => Failure::degenerate(e.to_string()),
            SimError::Inference(e) => e.into(),
            SimError::Data(e) => e.into(),
        }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn load_schema(path: Option<&Path>) -> Result<Schema, Failure> {
    match path {
        None => Ok(Schema::default()),
        Some(p) => Schema::from_toml_str(&read_text(p)?)
            .map_err(|e| Failure::invalid(format!("schema {}: {e}", p.display()))),
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<DgpConfig, Failure> {
    let mut cfg = DgpConfig::from_toml_str(&read_text(path)?)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Writes through a temporary file in the target directory, then renames.
fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::io(e.to_string());
    match out {
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes).and_then(|_| stdout.flush()).map_err(io)
        }
        Some(path) => {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
            tmp.write_all(bytes).map_err(io)?;
            tmp.as_file().sync_all().map_err(io)?;
            tmp.persist(path).map_err(|e| io(e.error))?;
            Ok(())
        }
    }
}

fn json_bytes(doc: &Value) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(doc).expect("serializable document");
    bytes.push(b'\n');
    bytes
}

fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).expect("serializable value")
}

/// Bounds, shares and (optionally) bootstrap intervals for one estimator.
fn bounds_document(
    ds: &PanelDataset,
    estimator: Estimator,
    args: &EstimateArgs,
) -> Result<(Value, Vec<Vec<String>>), Failure> {
    let r: BoundsResult = estimator.run(ds)?;
    let p = &r.proportions;
    let mut doc = json!({
        "method": r.method,
        "estimand": r.estimand,
        "pi0": p.pi0,
        "pi1": p.pi1,
        "pi0_raw": p.pi0_raw,
        "pi1_raw": p.pi1_raw,
        "pi0_clipped": p.pi0_clipped,
        "pi1_clipped": p.pi1_clipped,
        "imputed": p.imputed,
        "bounds": { "lb": r.lb, "ub": r.ub },
        "n_used": r.n_used,
        "clamp_events": r.clamp_events,
        "ci": Value::Null,
        "sigmas": Value::Null,
    });
    let mut rows: Vec<Value> = r
        .qtt_table
        .iter()
        .flatten()
        .map(|row| json!({ "q": row.q, "lb": row.lb, "ub": row.ub }))
        .collect();
    if args.bootstrap > 0 {
        let sigmas = bootstrap_sigmas(ds, &estimator, args.bootstrap, args.seed)?;
        let ci = confidence_interval(&r, &sigmas, args.alpha)?;
        doc["ci"] = json!({ "lo": ci.lo, "hi": ci.hi, "z_alpha": ci.z_alpha, "alpha": ci.alpha });
        doc["sigmas"] = to_value(&sigmas);
        doc["sigmas"].as_object_mut().expect("object").remove("per_quantile");
        for (row, qi) in rows.iter_mut().zip(pointwise_intervals(&r, &sigmas, args.alpha)?) {
            row["ci_lo"] = json!(qi.lo);
            row["ci_hi"] = json!(qi.hi);
            row["z_alpha"] = json!(qi.z_alpha);
        }
    }
    let table = rows
        .iter()
        .map(|row| {
            ["q", "lb", "ub", "ci_lo", "ci_hi"]
                .iter()
                .map(|k| row.get(*k).map(|v| v.to_string()).unwrap_or_default())
                .collect()
        })
        .collect();
    if r.qtt_table.is_some() {
        doc["qtt_table"] = Value::Array(rows);
    }
    Ok((doc, table))
}

fn naive_document(ds: &PanelDataset, args: &EstimateArgs, grid: usize) -> Result<Value, Failure> {
    let mut doc = json!({
        "naive": { "did": naive_did(ds)?, "cic": naive_cic(ds, grid)? },
        "n_used": ds.n_observed_post(),
    });
    if args.bootstrap > 0 {
        let mut cis = serde_json::Map::new();
        for (name, est) in [("did", Estimator::NaiveDid), ("cic", Estimator::NaiveCic { grid })] {
            let r = est.run(ds)?;
            let sigmas = bootstrap_sigmas(ds, &est, args.bootstrap, args.seed)?;
            let ci = confidence_interval(&r, &sigmas, args.alpha)?;
            cis.insert(
                name.into(),
                json!({ "lo": ci.lo, "hi": ci.hi, "z_alpha": ci.z_alpha, "sigma": ci.sigma_lb }),
            );
        }
        doc["naive_ci"] = Value::Object(cis);
    }
    Ok(doc)
}

fn selection_document(ds: &PanelDataset) -> Result<Value, Failure> {
    let mut doc = json!({ "selection_did": { "overall": selection_did(ds, None)? } });
    if ds.has_explicit_sources() {
        let per: Vec<f64> = (0..ds.n_sources())
            .map(|j| selection_did(ds, Some(j)))
            .collect::<Result<_, _>>()?;
        doc["selection_did"]["sources"] = json!(per);
    }
    Ok(doc)
}

fn estimate(args: EstimateArgs) -> Result<(), Failure> {
    let trims = matches!(args.method, MethodArg::Did | MethodArg::Cic | MethodArg::Both);
    let uses_grid = matches!(args.method, MethodArg::Cic | MethodArg::Both | MethodArg::Naive);
    if args.grid.is_some() && !uses_grid {
        return Err(Failure::invalid("--grid applies only to cic, both and naive"));
    }
    let grid = args.grid.unwrap_or(bounded_effects::bounds::DEFAULT_GRID);
    if grid < 3 {
        return Err(Failure::invalid("--grid must be at least 3"));
    }
    if args.format == FormatArg::Csv && !matches!(args.method, MethodArg::Cic | MethodArg::Both) {
        return Err(Failure::invalid("--format csv writes the quantile table; use --method cic or both"));
    }
    if args.bootstrap == 1 {
        return Err(Failure::invalid("--bootstrap must be 0 or at least 2"));
    }
    imbens_manski_z(0.0, 0.0, 1.0, 1.0, 1, args.alpha)?;
    let directions = match (&args.monotonicity, trims) {
        (Some(text), _) => Direction::parse_list(text).map_err(Failure::invalid)?,
        (None, true) => {
            return Err(Failure::invalid("--monotonicity is required for did, cic and both"))
        }
        (None, false) => Vec::new(),
    };

    let schema = load_schema(args.schema.as_deref())?;
    let file = std::fs::File::open(&args.input)
        .map_err(|e| Failure::io(format!("{}: {e}", args.input.display())))?;
    let raw = read_csv(std::io::BufReader::new(file), &schema)?;
    let mut ds = PanelDataset::new(raw.units)?;
    if !directions.is_empty() {
        ds = ds.with_directions(directions.clone())?;
    }

    let config = json!({
        "input": args.input.display().to_string(),
        "schema": schema,
        "method": args.method,
        "monotonicity": directions,
        "grid": uses_grid.then_some(grid),
        "bootstrap": args.bootstrap,
        "seed": args.seed,
        "alpha": args.alpha,
        "format": args.format,
        "ignored_columns": raw.ignored_columns,
    });
    let cic = Estimator::Cic { grid };
    let (mut doc, table) = match args.method {
        MethodArg::Did => bounds_document(&ds, Estimator::Did, &args)?,
        MethodArg::Cic => bounds_document(&ds, cic, &args)?,
        MethodArg::Both => {
            let (did, _) = bounds_document(&ds, Estimator::Did, &args)?;
            let (cic, table) = bounds_document(&ds, cic, &args)?;
            (json!({ "did": did, "cic": cic }), table)
        }
        MethodArg::Naive => (naive_document(&ds, &args, grid)?, Vec::new()),
        MethodArg::SelectionDid => (selection_document(&ds)?, Vec::new()),
    };
    doc["config"] = config;

    let bytes = match args.format {
        FormatArg::Json => json_bytes(&doc),
        FormatArg::Csv => {
            let csv_err = |e: csv::Error| Failure::io(e.to_string());
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["q", "lb", "ub", "ci_lo", "ci_hi"]).map_err(csv_err)?;
            for row in &table {
                w.write_record(row).map_err(csv_err)?;
            }
            w.into_inner().map_err(|e| Failure::io(e.to_string()))?
        }
    };
    emit(args.out.as_deref(), &bytes)
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.config, args.seed)?;
    let estimator = match args.method {
        StudyMethod::Did => Estimator::Did,
        StudyMethod::Cic => Estimator::Cic { grid: args.grid },
    };
    let spec = StudySpec {
        reps: args.reps,
        estimator,
        alpha: args.alpha,
        n_boot: args.bootstrap,
    };
    let report = coverage_study(&cfg, &spec)?;
    let mut doc = to_value(&report);
    doc["config"] = json!({ "dgp": cfg, "study": spec });
    emit(args.out.as_deref(), &json_bytes(&doc))
}

fn validate(args: ValidateArgs) -> Result<(), Failure> {
    let schema = load_schema(args.schema.as_deref())?;
    let file = std::fs::File::open(&args.input)
        .map_err(|e| Failure::io(format!("{}: {e}", args.input.display())))?;
    let raw = read_csv(std::io::BufReader::new(file), &schema)?;
    let violations = validate_units(&raw.units);
    let mut out = String::new();
    for v in &violations {
        out.push_str(&v.to_string());
        out.push('\n');
    }
    emit(None, out.as_bytes())?;
    eprintln!("{} rows, {} violations", raw.units.len(), violations.len());
    if violations.is_empty() {
        Ok(())
    } else {
        let rule: Rule = violations[0].rule;
        Err(Failure::invalid(format!("data rule `{rule}` violated")))
    }
}

fn generate_cmd(args: GenerateArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.config, args.seed)?;
    let sim = generate(&cfg)?;
    let mut bytes = Vec::new();
    write_csv(&sim.data, &mut bytes)?;
    emit(args.out.as_deref(), &bytes)
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(text) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = text
        .trim()
        .parse()
        .map_err(|_| Failure::invalid(format!("{THREADS_ENV} must be a non-negative integer")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::invalid(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Simulate(a) => simulate(a),
        Command::Validate(a) => validate(a),
        Command::Generate(a) => generate_cmd(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
