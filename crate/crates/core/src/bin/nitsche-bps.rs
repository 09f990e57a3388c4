use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use nitsche_bps::diagnostics;
use nitsche_bps::harness::{
    emit, emit_sections, parse_config_file, render_markdown, reproduce_table, ExperimentConfig, OutputFormat,
    TableId, TableOptions,
};

#[derive(Parser)]
#[command(version, about = "Nitsche hp discretization with substructuring preconditioners")]
struct Cli {
    /// key=value file; command-line flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single configuration
    Run(RunArgs),
    /// Reproduce one of the experiment tables
    Table(TableArgs),
    /// Run a diagnostic study
    Diag(DiagArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    level: Option<usize>,
    #[arg(long)]
    refine: Option<usize>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    precond: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    maxit: Option<usize>,
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Edge mass inside the edge blocks of P (consistent, lumped)
    #[arg(long)]
    edge_mass: Option<String>,
    /// Multiplier on the edge blocks of P
    #[arg(long)]
    edge_weight: Option<f64>,
    /// Use the square root of the edge block instead of the block itself
    #[arg(long)]
    literal_sqrt: bool,
    #[arg(long, default_value = "csv")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long)]
    id: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    interface_cap: Option<usize>,
    /// Directory with `N<N>_n<n>.mesh` files for the unstructured tables
    #[arg(long)]
    mesh_dir: Option<PathBuf>,
    /// Only run cells with at most this many elements
    #[arg(long)]
    max_elements: Option<usize>,
    /// Only run cells with at most this degree
    #[arg(long)]
    max_degree: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Check {
    Slobodeckij,
    Normequiv,
    Counterexample,
    Logfactor,
}

#[derive(Args)]
struct DiagArgs {
    #[arg(long, value_enum)]
    check: Check,
    #[arg(long, default_value_t = 2)]
    level: usize,
    #[arg(long, default_value_t = 1)]
    degree: usize,
    /// Number of refinements beyond the partition level
    #[arg(long, default_value_t = 3)]
    steps: usize,
    #[arg(long, default_value_t = 20)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn build_config(cli_config: Option<&PathBuf>, args: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = cli_config {
        for (k, v) in parse_config_file(path)? {
            if k == "format" || k == "out" {
                continue;
            }
            cfg.set(&k, &v).with_context(|| format!("in {}", path.display()))?;
        }
    }
    let mut set = |k: &str, v: Option<String>| -> anyhow::Result<()> {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
        Ok(())
    };
    set("grid", args.grid.clone())?;
    set("level", args.level.map(|v| v.to_string()))?;
    set("refine", args.refine.map(|v| v.to_string()))?;
    set("degree", args.degree.map(|v| v.to_string()))?;
    set("alpha", args.alpha.map(|v| v.to_string()))?;
    set("precond", args.precond.clone())?;
    set("tol", args.tol.map(|v| v.to_string()))?;
    set("maxit", args.maxit.map(|v| v.to_string()))?;
    set("mesh", args.mesh.as_ref().map(|p| p.display().to_string()))?;
    set("edge_mass", args.edge_mass.clone())?;
    set("edge_weight", args.edge_weight.map(|v| v.to_string()))?;
    if args.literal_sqrt {
        cfg.literal_sqrt = true;
    }
    if cfg.mesh.is_some() && args.grid.is_none() {
        cfg.grid = "file".parse()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Run(args) => {
            let cfg = build_config(cli.config.as_ref(), args)?;
            let row = nitsche_bps::harness::run_experiment(&cfg)?;
            let format: OutputFormat = args.format.parse()?;
            match &args.out {
                Some(path) => emit(&[row], format, path)?,
                None => print!("{}", nitsche_bps::harness::render_csv(&[row])),
            }
        }
        Command::Table(args) => {
            let id: TableId = args.id.parse()?;
            let mut opts = TableOptions {
                mesh_dir: args.mesh_dir.clone(),
                max_elements: args.max_elements,
                max_degree: args.max_degree,
                ..TableOptions::default()
            };
            if let Some(cap) = args.interface_cap {
                opts.interface_cap = cap;
            }
            let sections = reproduce_table(id, &opts);
            let format: OutputFormat = match (&args.format, &args.out) {
                (Some(f), _) => f.parse()?,
                (None, Some(p)) if p.extension().is_some_and(|e| e == "csv") => OutputFormat::Csv,
                _ => OutputFormat::Markdown,
            };
            match &args.out {
                Some(path) => emit_sections(&sections, format, path)?,
                None => print!("{}", render_markdown(&sections)),
            }
        }
        Command::Diag(args) => {
            let text = match args.check {
                Check::Slobodeckij => diagnostics::report_slobodeckij(args.level, args.steps, args.degree)?,
                Check::Normequiv => diagnostics::report_norm_equivalence(args.level, args.steps, args.degree, args.samples, args.seed)?,
                Check::Counterexample => diagnostics::report_counterexample(args.level, args.steps, args.degree)?,
                Check::Logfactor => diagnostics::report_log_factor(args.level, args.steps, args.degree)?,
            };
            match &args.out {
                Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

