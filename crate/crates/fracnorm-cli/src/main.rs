use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use fracnorm::harness::{experiment_names, render_all, run_experiment, Config, Format, RateTable};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

/// Run registered verification experiments and report their rate tables.
#[derive(Debug, Parser)]
#[command(name = "verify", version)]
struct Args {
    /// Experiment name, or `all`.
    #[arg(required_unless_present = "list")]
    experiment: Option<String>,
    /// Polynomial order of the elements (1 or 2).
    #[arg(long, default_value_t = 1)]
    order: usize,
    /// Number of mesh levels.
    #[arg(long, default_value_t = 4)]
    levels: usize,
    #[arg(long, default_value_t = Config::default().seed)]
    seed: u64,
    /// Exponent of the smallness bound.
    #[arg(long, default_value_t = 0.1)]
    kappa: f64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
    /// List experiment names and exit.
    #[arg(long)]
    list: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.list {
        for n in experiment_names() {
            println!("{n}");
        }
        return ExitCode::SUCCESS;
    }
    let config = Config {
        order: args.order,
        levels: args.levels,
        seed: args.seed,
        kappa: args.kappa,
    };
    let names: Vec<&str> = match args.experiment.as_deref() {
        Some("all") | None => experiment_names(),
        Some(name) => vec![name],
    };
    let mut tables: Vec<RateTable> = Vec::new();
    let mut ok = true;
    for name in names {
        match run_experiment(name, &config) {
            Ok(t) => {
                eprintln!("{name}: {}", t.verdict.as_str());
                ok &= t.passed();
                tables.push(t);
            }
            Err(e) => {
                eprintln!("{name}: error: {e}");
                ok = false;
            }
        }
    }
    let format = match args.format {
        OutputFormat::Csv => Format::Csv,
        OutputFormat::Json => Format::Json,
    };
    let text = match render_all(&tables, format) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match &args.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(2);
            }
        }
        None => print!("{text}"),
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
