mod oracle;
mod summary;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use serde_json::json;

use dmin_core::data::{
    clean_dataset, load_dataset, open_input, read_records_with_schema, split_dataset, CleaningPolicy, Imputer,
    SchemaConfig,
};
use dmin_core::document::{InputDoc, NcpSection, ResultDocument};
use dmin_core::metrics::risk_from_keys;
use dmin_core::minimizer::{evaluate, minimize, validate, MinimizationConfig};
use dmin_core::oracle::ForestParams;
use dmin_core::tree::TreeParams;
use dmin_core::{Dataset, Error, Result, SplitSpec};

use oracle::{Context, OracleSpec};

#[derive(Parser)]
#[command(name = "dmin", version, about = "Model-guided data minimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find the coarsest generalization that keeps the model's predictions.
    Minimize(MinimizeArgs),
    /// Generalize a CSV with a result document.
    Apply {
        #[arg(long)]
        doc: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Relative accuracy and information loss of a result document on a CSV.
    Evaluate {
        #[arg(long)]
        doc: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// precomputed:COLUMN, subprocess:CMD, http:URL or model:PATH
        #[arg(long)]
        oracle: OracleSpec,
    },
    /// Identity-disclosure risk of a CSV over quasi-identifier columns.
    Risk {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated column names.
        #[arg(long, value_delimiter = ',', required = true)]
        qi: Vec<String>,
    },
    /// Serve personalized minimization sessions over HTTP.
    Serve {
        #[arg(long)]
        doc: PathBuf,
        #[arg(long, default_value_t = 8080)]
        serve_port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 1800)]
        idle_timeout_secs: u64,
        /// Append session events to this file (off by default).
        #[arg(long)]
        session_log: Option<PathBuf>,
        /// Serve static assets (a browser front end) from this directory.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct MinimizeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// builtin, precomputed:COLUMN, subprocess:CMD, http:URL or model:PATH
    #[arg(long)]
    oracle: OracleSpec,
    #[arg(long, default_value_t = 0.98)]
    target_accuracy: f64,
    /// Fractions for the training, generalizer, optimization and validation splits.
    #[arg(long, value_delimiter = ',', default_value = "0.4,0.2,0.2,0.2")]
    splits: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Safety cap on generalizer tree depth.
    #[arg(long, default_value_t = 30)]
    max_depth: usize,
    #[arg(long, default_value_t = 10_000)]
    max_iterations: usize,
    /// Features missing in more than this fraction of records are dropped.
    #[arg(long, default_value_t = 0.5)]
    max_missing: f64,
    /// Per-feature NCP weights as name=weight pairs; others weigh 1.
    #[arg(long, value_delimiter = ',')]
    weights: Vec<String>,
    /// Trees in the builtin reference model.
    #[arg(long, default_value_t = 10)]
    trees: usize,
    /// Depth cap of the builtin reference model's trees.
    #[arg(long, default_value_t = 12)]
    forest_depth: usize,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Schema(_) => 2,
        Error::Parse { .. } | Error::EmptyDataset(_) | Error::Csv(_) => 3,
        Error::Oracle(_) => 4,
        _ => 1,
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn weights(args: &[String], ds: &Dataset) -> Result<Option<Vec<f64>>> {
    if args.is_empty() {
        return Ok(None);
    }
    let mut w = vec![1.0; ds.schema.n_features()];
    for pair in args {
        let (name, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("weight `{pair}` is not name=value")))?;
        let j = ds
            .schema
            .feature_index(name)
            .ok_or_else(|| Error::Config(format!("weight for unknown feature `{name}`")))?;
        w[j] = value
            .parse()
            .map_err(|_| Error::Config(format!("weight `{value}` is not a number")))?;
    }
    Ok(Some(w))
}

fn cmd_minimize(args: &MinimizeArgs) -> Result<String> {
    let schema_config = SchemaConfig::from_path(&args.schema)?;
    let fractions: [f64; 4] = args
        .splits
        .as_slice()
        .try_into()
        .map_err(|_| Error::Config(format!("--splits takes four fractions, got {}", args.splits.len())))?;
    let spec = SplitSpec {
        fractions,
        seed: args.seed,
    };
    spec.validate()?;
    let raw = load_dataset(&args.data, &schema_config)?;
    let policy = CleaningPolicy {
        max_missing_fraction: args.max_missing,
        ..CleaningPolicy::default()
    };
    let (clean, clean_report) = clean_dataset(&raw, &policy)?;
    let [mut train, mut generalizer, mut optimize, mut validation] = split_dataset(&clean, &spec)?;
    let imputer = Imputer::fit(&generalizer);
    for ds in [&mut train, &mut generalizer, &mut optimize, &mut validation] {
        imputer.apply(ds);
    }
    let input = InputDoc::new(&clean.schema, schema_config.missing.clone(), imputer.fills());
    let forest = ForestParams {
        n_trees: args.trees,
        max_depth: args.forest_depth,
        seed: args.seed,
    };
    let built = oracle::build(
        &args.oracle,
        &Context {
            data: &args.data,
            schema: &clean.schema,
            input: &input,
            train: Some(&train),
            forest,
        },
    )?;
    let config = MinimizationConfig {
        target_accuracy: args.target_accuracy,
        tree: TreeParams {
            max_depth: args.max_depth,
        },
        max_iterations: args.max_iterations,
        weights: weights(&args.weights, &clean)?,
        seed: args.seed,
    };
    let result = minimize(&generalizer, &optimize, &built.oracle, &config)?;
    let validated = if validation.is_empty() {
        None
    } else {
        Some(validate(&result, &validation, &built.oracle)?)
    };
    let effective = json!({
        "data": args.data.display().to_string(),
        "schema": args.schema.display().to_string(),
        "oracle": args.oracle.to_string(),
        "target_accuracy": args.target_accuracy,
        "splits": fractions,
        "split_sizes": [train.len(), generalizer.len(), optimize.len(), validation.len()],
        "seed": args.seed,
        "max_depth": args.max_depth,
        "max_iterations": args.max_iterations,
        "max_missing": args.max_missing,
        "weights": config.weights,
        "forest": if built.trained.is_some() { serde_json::to_value(forest)? } else { serde_json::Value::Null },
    });
    let mut doc = ResultDocument::from_result(&result, effective, validated.as_ref());
    doc.input = input;

    fs::create_dir_all(&args.out)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", args.out.display())))?;
    write_file(&args.out.join("result.json"), doc.to_json())?;
    let mut trace = Vec::new();
    doc.write_trace_csv(&mut trace)?;
    write_file(&args.out.join("trace.csv"), trace)?;
    let summary = summary::render(&doc, args.target_accuracy);
    write_file(&args.out.join("summary.txt"), &summary)?;
    write_file(
        &args.out.join("clean_report.json"),
        serde_json::to_string_pretty(&clean_report)? + "\n",
    )?;
    if let Some(model) = &built.trained {
        write_file(&args.out.join("model.json"), serde_json::to_string(model)? + "\n")?;
    }
    Ok(summary)
}

fn read_with_doc(doc: &ResultDocument, data: &Path) -> Result<Dataset> {
    let mut ds = read_records_with_schema(open_input(data)?, &doc.schema, &doc.input.missing)?;
    doc.input.impute(&doc.schema, &mut ds.records)?;
    if let Some(j) = ds.records.iter().flat_map(|r| r.cells().iter().position(|c| c.is_missing())).next() {
        return Err(Error::Parse {
            row: 0,
            column: doc.schema.features[j].name.clone(),
            message: "missing value with no recorded fill".into(),
        });
    }
    Ok(ds)
}

fn cmd_apply(doc: &Path, data: &Path, out: &Path) -> Result<String> {
    let doc = ResultDocument::from_path(doc)?;
    let model = doc.to_model()?;
    let ds = read_with_doc(&doc, data)?;
    let generalized = Dataset {
        schema: ds.schema.clone(),
        records: model.apply(&ds.records),
        labels: ds.labels.clone(),
    };
    let file = fs::File::create(out).map_err(|e| Error::Config(format!("cannot write {}: {e}", out.display())))?;
    generalized.write_csv(std::io::BufWriter::new(file))?;
    Ok(format!("{} records written to {}\n", ds.len(), out.display()))
}

fn cmd_evaluate(doc: &Path, data: &Path, spec: &OracleSpec) -> Result<String> {
    let doc = ResultDocument::from_path(doc)?;
    let model = doc.to_model()?;
    let ds = read_with_doc(&doc, data)?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset("reading the evaluation data"));
    }
    if *spec == OracleSpec::Builtin {
        return Err(Error::Config(
            "evaluate needs an existing model; use model:PATH for a saved reference model".into(),
        ));
    }
    let built = oracle::build(
        spec,
        &Context {
            data,
            schema: &doc.schema,
            input: &doc.input,
            train: None,
            forest: ForestParams::default(),
        },
    )?;
    let (accuracy, ncp) = evaluate(&model, &ds.records, &built.oracle, None)?;
    let report = json!({
        "accuracy": accuracy,
        "ncp": NcpSection::from_report(&doc.schema, &ncp),
    });
    Ok(serde_json::to_string_pretty(&report)? + "\n")
}

fn cmd_risk(data: &Path, qi: &[String]) -> Result<String> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open_input(data)?);
    let header = rdr.headers()?.clone();
    let cols = qi
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Config(format!("unknown column `{name}`")))
        })
        .collect::<Result<Vec<usize>>>()?;
    let rows = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
    let keys = rows
        .iter()
        .map(|r| cols.iter().map(|&j| r.get(j).unwrap_or("").to_string()).collect::<Vec<String>>());
    let report = risk_from_keys(keys).map_err(|_| Error::EmptyDataset("reading the risk data"))?;
    Ok(serde_json::to_string_pretty(&report)? + "\n")
}

fn cmd_serve(
    doc: &Path,
    host: &str,
    port: u16,
    idle: u64,
    session_log: Option<PathBuf>,
    static_dir: Option<PathBuf>,
) -> Result<String> {
    let model = ResultDocument::from_path(doc)?.to_model()?;
    let config = dmin_service::ServiceConfig {
        idle_timeout: Duration::from_secs(idle),
        session_log,
        static_dir,
    };
    let state = dmin_service::AppState::new(model, config)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .map_err(|e| Error::Config(format!("cannot bind {host}:{port}: {e}")))?;
        eprintln!("serving on http://{}", listener.local_addr()?);
        dmin_service::serve(listener, state).await?;
        Ok(String::new())
    })
}

fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Minimize(args) => cmd_minimize(&args),
        Command::Apply { doc, data, out } => cmd_apply(&doc, &data, &out),
        Command::Evaluate { doc, data, oracle } => cmd_evaluate(&doc, &data, &oracle),
        Command::Risk { data, qi } => cmd_risk(&data, &qi),
        Command::Serve {
            doc,
            serve_port,
            host,
            idle_timeout_secs,
            session_log,
            static_dir,
        } => cmd_serve(&doc, &host, serve_port, idle_timeout_secs, session_log, static_dir),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({"error": e.code(), "message": e.to_string()}));
            ExitCode::from(exit_code(&e))
        }
    }
}
