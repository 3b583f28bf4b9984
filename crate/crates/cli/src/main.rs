use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod config;
mod run;

use config::{Analysis, RunConfig, TOL_ENV};

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "cwobs", version, about = "Observability and unique continuation for coupled 1-D waves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run analyses on a JSON system description.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Path to the JSON config.
    config: PathBuf,
    /// Run every analysis.
    #[arg(long)]
    all: bool,
    #[arg(long)]
    observability: bool,
    /// Unique continuation (constant-coefficient or cascade criterion).
    #[arg(long)]
    uc: bool,
    #[arg(long)]
    fattorini: bool,
    #[arg(long)]
    simulate: bool,
    #[arg(long)]
    compactness: bool,
    /// Output directory for report.json and CSV files.
    #[arg(long, default_value = "cwobs-out")]
    out: PathBuf,
}

impl AnalyzeArgs {
    fn selection(&self, cfg: &RunConfig) -> Vec<Analysis> {
        if self.all {
            return Analysis::ALL.to_vec();
        }
        let flags = [
            (self.simulate, Analysis::Simulate),
            (self.observability, Analysis::Observability),
            (self.uc, Analysis::Uc),
            (self.fattorini, Analysis::Fattorini),
            (self.compactness, Analysis::Compactness),
        ];
        let mut v: Vec<Analysis> = flags.iter().filter(|f| f.0).map(|f| f.1).collect();
        if v.is_empty() {
            v = cfg.analyses.clone();
        }
        if v.is_empty() {
            v.push(Analysis::Observability);
        }
        v.sort();
        v.dedup();
        v
    }
}

fn analyze(args: AnalyzeArgs) -> ExitCode {
    let raw = match std::fs::read(&args.config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let text = match String::from_utf8(raw.clone()) {
        Ok(t) => t,
        Err(_) => {
            eprintln!("error: {} is not UTF-8", args.config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let env = std::env::var(TOL_ENV).ok();
    let parsed = RunConfig::parse(&text).and_then(|c| {
        let t = c.tolerances(env.as_deref())?;
        Ok((c, t))
    });
    let (cfg, tol) = match parsed {
        Ok(v) => v,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let analyses = args.selection(&cfg);
    match run::run(&cfg, &raw, &tol, &analyses, &args.out) {
        Ok(s) if s.failed => {
            eprintln!("numerical failure; partial report at {}", s.report_path.display());
            ExitCode::from(EXIT_NUMERIC)
        }
        Ok(s) => {
            println!("{}", s.report_path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_IO)
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Analyze(a) => analyze(a),
    }
}
