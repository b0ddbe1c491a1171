use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gpbandit::harness;
use gpbandit::Error;

#[derive(Parser)]
#[command(name = "gpbandit", version, about = "Gaussian-process bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (policy, seed) cell of an experiment config.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; overrides `run.workers`.
        #[arg(long)]
        workers: Option<usize>,
        /// Comma-separated policy labels to keep, e.g. `compressed-ucb,dense-ucb`.
        #[arg(long, value_delimiter = ',')]
        policies: Vec<String>,
        /// Comma-separated seeds; overrides `bandit.seeds`.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Cross-check the posterior and run bounds against the dense oracles.
        #[arg(long)]
        verify: bool,
    },
}

fn report_error(e: &Error) {
    match e {
        Error::Config(issues) => {
            for issue in issues {
                eprintln!("config error: {issue}");
            }
        }
        other => eprintln!("error: {other}"),
    }
}

fn main() -> ExitCode {
    let Command::Run {
        config,
        out,
        workers,
        policies,
        seeds,
        verify,
    } = Cli::parse().command;

    let mut spec = match harness::parse_config(&config) {
        Ok(s) => s,
        Err(e) => {
            report_error(&e);
            return ExitCode::from(1);
        }
    };
    if let Some(dir) = out {
        spec.output_dir = dir;
    }
    if let Some(w) = workers {
        spec.workers = w.max(1);
    }
    if !seeds.is_empty() {
        spec.seeds = seeds;
    }
    if !policies.is_empty() {
        if let Err(e) = spec.filter_policies(&policies) {
            report_error(&e);
            return ExitCode::from(1);
        }
    }

    let report = match harness::run_experiment(&spec) {
        Ok(r) => r,
        Err(e) => {
            report_error(&e);
            return ExitCode::from(1);
        }
    };
    print!("{}", harness::summary_table(&report));
    println!("outputs written to {}", spec.output_dir.display());

    let mut code = 0;
    for p in &report.policies {
        for cell in &p.runs {
            if let Err(msg) = &cell.outcome {
                eprintln!("{} seed {} failed: {msg}", p.spec.label, cell.seed);
                code = 2;
            }
        }
    }
    if verify {
        match harness::verify(&spec, &report) {
            Ok(r) => println!("{r}"),
            Err(e) => {
                report_error(&e);
                code = code.max(1);
            }
        }
    }
    ExitCode::from(code)
}
