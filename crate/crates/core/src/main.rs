use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use dtization::bench::{run_bench, BenchConfig, OutputFormat, ScalerSpec};
use dtization::dataset::{load_csv, TaskKind};
use dtization::scalers::{load_scaler, save_scaler, FittedScaler, ScalerError, ScalerMethod};
use dtization::tree::{exponent, grow_importance_tree, FactorMode};

/// Supervised feature scaling (DTization) and scaler benchmarks.
#[derive(Parser)]
#[command(name = "dtization", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a scaler on a CSV file and save it.
    Fit(FitArgs),
    /// Apply a saved scaler to a CSV file.
    Transform(TransformArgs),
    /// Print a saved scaler's parameters or factor table.
    Inspect(InspectArgs),
    /// Compare scalers with KNN or linear regression on a held-out split.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Dtization,
    Minmax,
    Standard,
    Log,
    Robust,
}

impl From<MethodArg> for ScalerMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Dtization => ScalerMethod::Dtization,
            MethodArg::Minmax => ScalerMethod::MinMax,
            MethodArg::Standard => ScalerMethod::Standard,
            MethodArg::Log => ScalerMethod::Log,
            MethodArg::Robust => ScalerMethod::Robust,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    AsPublished,
    Descending,
}

impl From<ModeArg> for FactorMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::AsPublished => FactorMode::AsPublished,
            ModeArg::Descending => FactorMode::Descending,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Classification,
    Regression,
}

impl From<TaskArg> for TaskKind {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Classification => TaskKind::Classification,
            TaskArg::Regression => TaskKind::Regression,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Rows,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    target: Option<String>,
    #[arg(long, value_enum, default_value = "classification")]
    task: TaskArg,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "as-published")]
    mode: ModeArg,
    #[arg(long)]
    out: PathBuf,
    /// Also print the importance tree (dtization only).
    #[arg(long)]
    tree: bool,
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long)]
    scaler: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Column copied through unchanged.
    #[arg(long)]
    target: Option<String>,
    #[arg(long, value_enum, default_value = "classification")]
    task: TaskArg,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    scaler: PathBuf,
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not strictly between 0 and 1"))
    }
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    target: String,
    #[arg(long, value_enum, default_value = "classification")]
    task: TaskArg,
    /// Scalers to compare (comma separated).
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "minmax,standard,log,robust,dtization"
    )]
    method: Vec<MethodArg>,
    /// Factor modes for dtization (comma separated).
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "as-published"
    )]
    mode: Vec<ModeArg>,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    #[arg(long = "test-fraction", default_value_t = 0.2, value_parser = parse_fraction)]
    test_fraction: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: FormatArg,
}

enum Failure {
    Usage(String),
    Data(String),
}

impl<E: std::fmt::Display> From<E> for Failure
where
    E: Into<Box<dyn std::error::Error>>,
{
    fn from(e: E) -> Self {
        Failure::Data(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Transform(a) => cmd_transform(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => Cli::command().error(ErrorKind::ValueValidation, msg).exit(),
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn cmd_fit(a: FitArgs) -> CmdResult {
    let method = ScalerMethod::from(a.method);
    if method.is_supervised() && a.target.is_none() {
        return Err(Failure::Usage("--method dtization needs --target".into()));
    }
    let task = if a.target.is_some() {
        a.task.into()
    } else {
        TaskKind::Unlabeled
    };
    let (ds, _) = load_csv(&a.data, a.target.as_deref(), task)?;
    let mode = FactorMode::from(a.mode);
    let scaler = FittedScaler::fit(&ds, method, mode)?;
    save_scaler(&scaler, &a.out)?;

    let mut stdout = io::stdout().lock();
    write!(stdout, "{}", scaler.describe())?;
    if a.tree && method.is_supervised() {
        let (_, tree) = grow_importance_tree(&ds, exponent(ds.n_features())?, mode)?;
        write!(stdout, "# tree\n{}", tree.dump())?;
    }
    writeln!(stdout, "# wrote {}", a.out.display())?;
    Ok(())
}

fn cmd_transform(a: TransformArgs) -> CmdResult {
    let scaler = load_scaler(&a.scaler)?;
    let task = if a.target.is_some() {
        a.task.into()
    } else {
        TaskKind::Unlabeled
    };
    let (ds, _) = load_csv(&a.data, a.target.as_deref(), task)?;
    let out = match scaler.transform(&ds) {
        Err(ScalerError::MissingFeatures(missing)) => {
            return Err(Failure::Data(format!(
                "missing feature(s): {}",
                missing.join(", ")
            )))
        }
        other => other?,
    };
    match &a.out {
        Some(path) => out.save_csv(path)?,
        None => out.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_inspect(a: InspectArgs) -> CmdResult {
    let scaler = load_scaler(&a.scaler)?;
    print!("{}", scaler.describe());
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> CmdResult {
    let methods: Vec<ScalerMethod> = a.method.iter().map(|&m| m.into()).collect();
    let modes: Vec<FactorMode> = a.mode.iter().map(|&m| m.into()).collect();
    let format = match a.format {
        FormatArg::Text => OutputFormat::Text,
        FormatArg::Rows => OutputFormat::Rows,
    };
    let config = BenchConfig {
        scalers: ScalerSpec::expand(&methods, &modes),
        k: a.k as usize,
        test_fraction: a.test_fraction,
        seed: a.seed,
        output: a.out.clone(),
        format,
        ..BenchConfig::new(&a.data, &a.target, a.task.into())
    };
    let report = match run_bench(&config) {
        Ok(r) => r,
        Err(e) if e.is_usage() => return Err(Failure::Usage(e.to_string())),
        Err(e) => return Err(Failure::Data(e.to_string())),
    };
    let rendered = report.render(format);
    print!("{rendered}");
    if let Some(path) = &config.output {
        fs::write(path, &rendered)?;
    }
    if !report.is_success() {
        let names: Vec<&str> = report.failures.iter().map(|f| f.scaler.as_str()).collect();
        return Err(Failure::Data(format!(
            "scaler(s) failed: {}",
            names.join(", ")
        )));
    }
    Ok(())
}
