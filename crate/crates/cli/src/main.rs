use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hcband::{Command, RunConfig, RunError};

/// Band-gap computations for high-contrast periodic and random elastic composites.
#[derive(Debug, Parser)]
#[command(name = "hcband", version)]
struct Cli {
    /// Pipeline to run; overrides `command` in the config file.
    #[arg(value_enum)]
    command: Option<Command>,
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Do not read or write the eigenpair cache.
    #[arg(long)]
    no_cache: bool,
    #[arg(long)]
    lambda_max: Option<f64>,
    #[arg(long)]
    grid_points: Option<usize>,
    /// Mesh size on the reference inclusion.
    #[arg(long)]
    h: Option<f64>,
    /// Cube side for β∞, cells per side for torus and RVE runs.
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Model JSON file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// sets.json to render (bands).
    #[arg(long)]
    input: Option<PathBuf>,
}

fn config(cli: &Cli) -> Result<(RunConfig, PathBuf, Option<String>), RunError> {
    let (mut cfg, base, text) = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| RunError::usage(format!("cannot read {}: {e}", p.display())))?;
            let mut cfg = RunConfig::from_toml_str(&text)?;
            if let Some(c) = cli.command {
                cfg.command = c;
            }
            let base = p.parent().map(PathBuf::from).unwrap_or_default();
            (cfg, base, Some(text))
        }
        None => {
            let c = cli.command.ok_or_else(|| RunError::usage("give a command or --config"))?;
            (RunConfig::new(c), PathBuf::from("."), None)
        }
    };
    if let Some(v) = &cli.out {
        cfg.out = v.clone();
    }
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = cli.threads {
        cfg.threads = v;
    }
    if cli.no_cache {
        cfg.cache = false;
    }
    if let Some(v) = cli.lambda_max {
        cfg.lambda_max = Some(v);
    }
    if let Some(v) = cli.grid_points {
        cfg.grid_points = v;
    }
    if let Some(v) = cli.h {
        cfg.h = v;
    }
    if let Some(v) = cli.cells {
        cfg.cells = v;
    }
    if let Some(v) = cli.samples {
        cfg.samples = v;
    }
    if let Some(v) = cli.count {
        cfg.count = v;
    }
    if let Some(v) = cli.lambda {
        cfg.lambda = Some(v);
    }
    if let Some(v) = &cli.model {
        // a flag given on the command line is relative to the working directory
        cfg.model = None;
        cfg.model_file = Some(std::env::current_dir().map(|d| d.join(v)).unwrap_or_else(|_| v.clone()));
    }
    if let Some(v) = &cli.input {
        cfg.input = Some(std::env::current_dir().map(|d| d.join(v)).unwrap_or_else(|_| v.clone()));
    }
    Ok((cfg, base, text))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = RunError::usage(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    let result = config(&cli).and_then(|(cfg, base, text)| hcband::run_in(&cfg, &base, text.as_deref()));
    match result {
        Ok(m) => {
            for f in &m.files {
                println!("{}", f.name);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
