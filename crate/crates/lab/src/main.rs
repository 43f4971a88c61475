use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use freesym_lab::config::{ExperimentConfig, Suite, OUT_ENV};
use freesym_lab::report::{self, Format, ReportRow};
use freesym_lab::run_experiment;

#[derive(Parser)]
#[command(name = "freesym-lab", version, about = "Runs verification suites and writes CSV reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML with dotted keys).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config and the FREESYM_LAB_OUT variable.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replaces the instance and model seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Named preset (`smoke` or `acceptance`) when no config is given; with
    /// `report`, the experiment to summarize.
    #[arg(long, global = true)]
    suite: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Σ-norm against the conditioned norms and the model.
    Norm,
    /// Moments of the model singular value function.
    Mu,
    /// Residuals of the algebraic decomposition.
    Decompose,
    /// Operator-norm sandwich for free sums.
    Voiculescu,
    /// Rosenthal-type inequalities with their constants.
    Maincor,
    /// Operator norms of length-d words.
    Buchholz,
    /// Symmetric-space norms of length-d words.
    Lengthd,
    /// Johnson–Schechtman sandwich with constant 3.
    Js,
    /// Martingale square functions.
    Burkholder,
    /// Summarizes the CSV files in the output directory.
    Report,
}

impl Command {
    fn suite(self) -> Option<Suite> {
        Some(match self {
            Command::Norm => Suite::Norm,
            Command::Mu => Suite::Mu,
            Command::Decompose => Suite::Decompose,
            Command::Voiculescu => Suite::Voiculescu,
            Command::Maincor => Suite::Maincor,
            Command::Buchholz => Suite::Buchholz,
            Command::Lengthd => Suite::Lengthd,
            Command::Js => Suite::Js,
            Command::Burkholder => Suite::Burkholder,
            Command::Report => return None,
        })
    }
}

fn print_summary(rows: &[ReportRow]) {
    for ((experiment, name), (pass, fail)) in report::summarize(rows) {
        let status = if fail == 0 { "PASS" } else { "FAIL" };
        println!("{status} {experiment} {name}: {pass} pass, {fail} fail");
    }
}

fn run_suite(cli: &Cli, suite: Suite) -> Result<bool> {
    let mut cfg = match (&cli.config, &cli.suite) {
        (Some(_), Some(_)) => bail!("--config and --suite are exclusive"),
        (Some(path), None) => ExperimentConfig::load(path)?,
        (None, preset) => ExperimentConfig::preset(suite, preset.as_deref().unwrap_or("smoke"))?,
    };
    cfg.experiment = suite;
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    cfg.validate()?;
    let rows = run_experiment(&cfg)?;
    let dir = cfg.output_dir(cli.out.as_deref());
    let csv = dir.join(format!("{suite}.csv"));
    report::emit_report(&rows, Format::Csv, &csv)?;
    if cfg.output.plotdata {
        report::emit_report(&rows, Format::Plotdata, &dir.join(format!("{suite}.plot.csv")))?;
    }
    print_summary(&rows);
    println!("wrote {}", csv.display());
    Ok(rows.iter().all(|r| r.pass))
}

fn run_report(cli: &Cli) -> Result<bool> {
    let dir = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("lab-out"));
    let mut files: Vec<PathBuf> = match &cli.suite {
        Some(name) => vec![dir.join(format!("{}.csv", name.parse::<Suite>()?))],
        None => std::fs::read_dir(&dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| is_report(p))
            .collect(),
    };
    files.sort();
    if files.is_empty() {
        bail!("no reports in {}", dir.display());
    }
    let mut rows = Vec::new();
    for f in &files {
        let text = std::fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
        rows.extend(report::from_csv(&text).with_context(|| format!("in {}", f.display()))?);
    }
    print_summary(&rows);
    Ok(rows.iter().all(|r| r.pass))
}

fn is_report(p: &Path) -> bool {
    let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
    name.ends_with(".csv") && !name.ends_with(".plot.csv")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command.suite() {
        Some(suite) => run_suite(&cli, suite),
        None => run_report(&cli),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
