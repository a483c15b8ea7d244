use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ivkp::sim::TestKind;
use ivkp_cli::config::{read_json, RunConfig, SimulateConfig};
use ivkp_cli::{cmd_invert, cmd_kpcheck, cmd_simulate, cmd_test, summary, CliError, CliResult, Overrides, Report};

#[derive(Parser)]
#[command(name = "ivkp", version, about = "Weak-instrument robust subvector AR tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test H0: beta = beta0.
    Test(RunArgs),
    /// Confidence set for beta by inverting the test over a grid.
    Invert(RunArgs),
    /// Distance of the score covariance from Kronecker structure.
    Kpcheck(RunArgs),
    /// Monte Carlo rejection rates.
    Simulate(SimArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TestArg {
    Akp,
    Arar,
    Msakp1,
}

impl From<TestArg> for TestKind {
    fn from(t: TestArg) -> Self {
        match t {
            TestArg::Akp => TestKind::Akp,
            TestArg::Arar => TestKind::Arar,
            TestArg::Msakp1 => TestKind::Msakp1,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_enum)]
    test: Option<TestArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report path; the report goes to stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Directory of extra critical value tables.
    #[arg(long)]
    cv_table_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// CSV path; the CSV goes to stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    cv_table_dir: Option<PathBuf>,
}

fn load_run(args: &RunArgs) -> CliResult<RunConfig> {
    let mut config: RunConfig = read_json(&args.config)?;
    let overrides = Overrides {
        input: args.input.clone(),
        alpha: args.alpha,
        test: args.test.map(TestKind::from),
        seed: args.seed,
        output: args.output.clone(),
    };
    overrides.apply(&mut config);
    // Relative paths in the config are read relative to the config file.
    if let Some(dir) = args.config.parent() {
        if config.input.is_relative() && args.input.is_none() {
            config.input = dir.join(&config.input);
        }
        if let Some(d) = config.cv_table_dir.as_mut().filter(|d| d.is_relative()) {
            *d = dir.join(&*d);
        }
    }
    Ok(config)
}

fn write_out(path: Option<&Path>, text: &str, line: &str) -> CliResult<()> {
    match path {
        Some(p) => {
            fs::write(p, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display())))?;
            println!("{line}");
        }
        None => {
            print!("{text}");
            eprintln!("{line}");
        }
    }
    Ok(())
}

fn emit(report: Report, output: Option<&Path>) -> CliResult<()> {
    let mut json = report.to_json();
    json.push('\n');
    let mut line = summary(&report);
    for w in &report.warnings {
        line.push_str(&format!("\nwarning: {w}"));
    }
    write_out(output, &json, &line)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Test(args) => {
            let config = load_run(&args)?;
            let out = config.output.clone();
            emit(cmd_test(config, args.cv_table_dir.as_deref())?, out.as_deref())
        }
        Command::Invert(args) => {
            let config = load_run(&args)?;
            let out = config.output.clone();
            emit(cmd_invert(config, args.cv_table_dir.as_deref())?, out.as_deref())
        }
        Command::Kpcheck(args) => {
            let config = load_run(&args)?;
            let out = config.output.clone();
            emit(cmd_kpcheck(config, args.cv_table_dir.as_deref())?, out.as_deref())
        }
        Command::Simulate(args) => {
            let mut config: SimulateConfig = read_json(&args.config)?;
            if let Some(r) = args.reps {
                config.reps = r;
            }
            if let Some(s) = args.seed {
                config.seed = s;
            }
            if let Some(o) = &args.output {
                config.output = Some(o.clone());
            }
            let report = cmd_simulate(&config, args.cv_table_dir.as_deref(), args.workers)?;
            let line = format!(
                "{} rows over {} reps, seed {} ({})",
                report.rows.len(),
                config.reps,
                config.seed,
                report.generator
            );
            write_out(config.output.as_deref(), &report.to_csv_string(), &line)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
