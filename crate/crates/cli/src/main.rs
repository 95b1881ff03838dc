use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ventzell_cli::{execute, load_config, CliError, EXIT_FAIL, EXIT_PASS};

/// Runs one experiment described by a TOML config.
#[derive(Debug, Parser)]
#[command(name = "ventzell", version)]
struct Args {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    threads: Option<usize>,
    /// error, warn, info, debug or trace.
    #[arg(long, default_value = "info")]
    log_level: log::LevelFilter,
    /// Overrides the master seed of the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn run(args: Args) -> Result<i32, CliError> {
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = args.out.clone().unwrap_or_else(|| config.output_dir.clone());
    if args.threads == Some(0) {
        return Err(CliError::Config("--threads: must be at least 1".into()));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    let (outcome, manifest) = pool.install(|| execute(config, &out))?;
    for f in &manifest.files {
        log::debug!("wrote {} ({} bytes)", f.file, f.bytes);
    }
    println!(
        "{}: {} ({} files in {})",
        outcome.kind,
        if outcome.pass { "PASS" } else { "FAIL" },
        manifest.files.len() + 1,
        out.display()
    );
    Ok(if outcome.pass { EXIT_PASS } else { EXIT_FAIL })
}

fn main() -> ExitCode {
    let args = Args::parse();
    env_logger::Builder::new().filter_level(args.log_level).init();
    match run(args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
