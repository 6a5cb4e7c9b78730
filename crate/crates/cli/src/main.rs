use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rst_core::baselines::Variant;
use rst_core::experiment::{cmd_compare, cmd_curve, cmd_run, CurveKind, ExperimentConfig, Overrides};
use rst_core::Error;

/// Self-training experiments on synthetic or JSONL corpora.
#[derive(Parser)]
#[command(name = "rst", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured variant once per seed.
    Run(Common),
    /// Train several variants on shared splits and tabulate them.
    Compare(Common),
    /// Emit a drift, lambda, ratio, m or convergence curve.
    Curve {
        #[arg(value_parser = parse_curve)]
        curve: CurveKind,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Variant name; repeat or separate with commas for `compare`.
    #[arg(long = "variant", value_delimiter = ',', value_parser = parse_variant)]
    variants: Vec<Variant>,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_curve(s: &str) -> Result<CurveKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Usage(String),
    Runtime(String),
}

fn load(common: &Common, many_variants: bool) -> Result<ExperimentConfig, Failure> {
    if !many_variants && common.variants.len() > 1 {
        return Err(Failure::Usage("--variant takes a single name here".into()));
    }
    let mut config = ExperimentConfig::load(&common.config).map_err(|e| Failure::Usage(e.to_string()))?;
    config
        .apply(&Overrides {
            output_dir: common.out.clone(),
            seeds: common.seeds.clone(),
            variants: common.variants.clone(),
        })
        .map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(config)
}

fn runtime(e: Error) -> Failure {
    match e {
        Error::Config(_) | Error::Parse { .. } => Failure::Usage(e.to_string()),
        other => Failure::Runtime(other.to_string()),
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run(common) => {
            let config = load(&common, false)?;
            eprintln!("run {} seeds={:?} config={}", config.variant, config.seeds, &config.hash()[..12]);
            let summary = cmd_run(&config).map_err(runtime)?;
            for r in &summary.results {
                let metrics: Vec<String> = r.metrics.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
                eprintln!("seed {}: {}", r.seed, metrics.join(" "));
            }
            eprintln!("wrote {}", config.output_dir.display());
        }
        Command::Compare(common) => {
            let config = load(&common, true)?;
            let summary = cmd_compare(&config).map_err(runtime)?;
            eprint!("{}", summary.table);
            eprintln!("wrote {}", config.output_dir.display());
        }
        Command::Curve { curve, common } => {
            let config = load(&common, false)?;
            let points = cmd_curve(&config, curve).map_err(runtime)?;
            eprintln!("{} points, wrote {}", points.len(), config.output_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
