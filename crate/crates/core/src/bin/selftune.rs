use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use selftune::analysis::FloquetMode;
use selftune::experiments::{
    analyze, certify, gain_csv, gain_curve, parse_list, run_sweep, sweep_csv, Analysis,
};
use selftune::scenario::{simulate, CertifyClause, Scenario};
use selftune::Error;

/// Output directory for emitted files (default: current directory).
const OUT_DIR_ENV: &str = "SELFTUNE_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "selftune",
    version,
    about = "Self-tuning of bifurcation parameters: simulate, analyse, falsify"
)]
struct Cli {
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Format of tabular output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum What {
    Lyapunov,
    Kyp,
    PositiveReal,
    Floquet,
    Linearize,
    Sector,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Reduced,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClauseArg {
    Practical,
    Semiglobal,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario; writes <name>.csv and <name>.report.json.
    Simulate { config: PathBuf },
    /// Re-run a scenario for each value of one parameter.
    Sweep {
        config: PathBuf,
        /// Dotted key, e.g. law.a or perturbation.epsilon.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
    },
    /// Search for counterexamples to practical stability.
    Certify {
        config: PathBuf,
        #[arg(long, value_enum)]
        clause: Option<ClauseArg>,
        /// U2 radius (practical) or U radius (semiglobal).
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        points_per_shell: Option<usize>,
        /// Comma-separated eps values for a residual sweep.
        #[arg(long)]
        sweep_epsilons: Option<String>,
    },
    /// Run one of the analysis checks.
    Analyze {
        config: PathBuf,
        #[arg(long, value_enum)]
        what: What,
        #[arg(long, value_enum, default_value_t = Mode::Reduced)]
        mode: Mode,
    },
    /// Forced response amplitude for a list of forcing amplitudes.
    GainCurve {
        config: PathBuf,
        /// Comma-separated, strictly increasing.
        #[arg(long)]
        amplitudes: String,
        /// Hold mu at this value instead of adapting it.
        #[arg(long, allow_hyphen_values = true)]
        freeze_mu: Option<f64>,
    },
}

struct Failure {
    code: u8,
    error: Error,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = if error.is_integration_failure() { 3 } else { 2 };
        Failure { code, error }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = f
                .error
                .to_string()
                .replace('\\', "\\\\")
                .replace('"', "\\\"");
            eprintln!("error kind={} msg=\"{}\"", f.error.kind(), msg);
            ExitCode::from(f.code)
        }
    }
}

fn out_dir() -> Result<PathBuf, Failure> {
    let dir = std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("."), PathBuf::from);
    fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    Ok(dir)
}

fn io_error(path: &Path, e: std::io::Error) -> Failure {
    Error::Validation(format!("cannot write {}: {e}", path.display())).into()
}

fn write(dir: &Path, file: String, contents: &str) -> Result<String, Failure> {
    let path = dir.join(file);
    fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
    Ok(path.display().to_string())
}

fn load(config: &Path, seed: Option<u64>) -> Result<Scenario, Failure> {
    // Anything rejected while loading is an input error, including inadmissible initial states.
    let mut scenario = Scenario::load(config).map_err(|error| Failure { code: 2, error })?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

fn json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable output");
    s.push('\n');
    s
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { config } => {
            let scenario = load(&config, cli.seed)?;
            let dir = out_dir()?;
            let mut run = simulate(&scenario)?;
            let csv = run.to_csv()?;
            let csv_path = write(&dir, format!("{}.csv", scenario.name), &csv)?;
            let report_file = format!("{}.report.json", scenario.name);
            run.report.files = vec![csv_path, dir.join(&report_file).display().to_string()];
            let report = json(&run.report);
            write(&dir, report_file, &report)?;
            match cli.format {
                Format::Json => print!("{report}"),
                Format::Csv => print!("{csv}"),
            }
        }
        Command::Sweep {
            config,
            param,
            values,
        } => {
            let scenario = load(&config, cli.seed)?;
            let values: Vec<String> = values
                .split(',')
                .map(|v| v.trim().to_string())
                .filter(|v| !v.is_empty())
                .collect();
            let rows = run_sweep(&scenario, &param, &values)?;
            emit(
                cli.format,
                &format!("{}.sweep", scenario.name),
                &rows,
                || sweep_csv(&rows),
            )?;
        }
        Command::Certify {
            config,
            clause,
            radius,
            horizon,
            points_per_shell,
            sweep_epsilons,
        } => {
            let mut scenario = load(&config, cli.seed)?;
            let settings = scenario.certify.get_or_insert_with(Default::default);
            if let Some(c) = clause {
                settings.clause = match c {
                    ClauseArg::Practical => CertifyClause::Practical,
                    ClauseArg::Semiglobal => CertifyClause::Semiglobal,
                };
            }
            if let Some(r) = radius {
                settings.radius = r;
            }
            if let Some(h) = horizon {
                settings.budget.horizon = h;
            }
            if let Some(n) = points_per_shell {
                settings.budget.points_per_shell = n;
            }
            if let Some(eps) = sweep_epsilons {
                settings.sweep_epsilons = Some(parse_list(&eps)?);
            }
            scenario.validate()?;
            let report = certify(&scenario)?;
            let text = json(&report);
            write(
                &out_dir()?,
                format!("{}.certify.json", scenario.name),
                &text,
            )?;
            print!("{text}");
        }
        Command::Analyze { config, what, mode } => {
            let scenario = load(&config, cli.seed)?;
            let what = match what {
                What::Lyapunov => Analysis::Lyapunov,
                What::Kyp => Analysis::Kyp,
                What::PositiveReal => Analysis::PositiveReal,
                What::Floquet => Analysis::Floquet,
                What::Linearize => Analysis::Linearize,
                What::Sector => Analysis::Sector,
            };
            let mode = match mode {
                Mode::Reduced => FloquetMode::Reduced,
                Mode::Full => FloquetMode::Full,
            };
            let report = analyze(&scenario, what, mode)?;
            let text = json(&report);
            let tag = serde_json::to_value(what)
                .expect("tag")
                .as_str()
                .unwrap_or("analysis")
                .to_string();
            write(&out_dir()?, format!("{}.{tag}.json", scenario.name), &text)?;
            print!("{text}");
        }
        Command::GainCurve {
            config,
            amplitudes,
            freeze_mu,
        } => {
            let scenario = load(&config, cli.seed)?;
            let points = gain_curve(&scenario, &parse_list(&amplitudes)?, freeze_mu)?;
            emit(
                cli.format,
                &format!("{}.gain", scenario.name),
                &points,
                || gain_csv(&points),
            )?;
        }
    }
    Ok(())
}

fn emit<T: serde::Serialize>(
    format: Format,
    stem: &str,
    rows: &T,
    csv: impl FnOnce() -> selftune::Result<String>,
) -> Result<(), Failure> {
    let (text, ext) = match format {
        Format::Csv => (csv()?, "csv"),
        Format::Json => (json(rows), "json"),
    };
    write(&out_dir()?, format!("{stem}.{ext}"), &text)?;
    print!("{text}");
    Ok(())
}
