use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use aniso_nonlocal_cli::{run, CliError, Command, RunConfig, EXIT_CONFIG};
use clap::Parser;
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "aniso-nonlocal", version, about = "Run an anisotropic nonlocal experiment from a JSON config")]
struct Args {
    /// constants, barrier-verify, envelope, abp-cover, cz, solve, harnack, decay, sweep or kernel-check
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `out`, then the working directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "ANISO_NONLOCAL_THREADS")]
    threads: Option<usize>,
}

fn diagnostic(e: &CliError) -> ExitCode {
    eprintln!("{}", json!({"error": e.kind(), "message": e.to_string()}));
    ExitCode::from(EXIT_CONFIG as u8)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if e.use_stderr() => {
            eprintln!("{}", json!({"error": "usage", "message": e.to_string()}));
            return ExitCode::from(EXIT_CONFIG as u8);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    if let Some(t) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            return diagnostic(&CliError::config(e));
        }
    }
    let text = match fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => return diagnostic(&CliError::Config(format!("{}: {e}", args.config.display()))),
    };
    let mut cfg = match RunConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!(
                "{}",
                json!({"error": "config", "message": e.to_string(), "line": e.line(), "column": e.column()})
            );
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    println!("{}", json!({"command": args.command.name(), "digest": cfg.digest()}));

    let result = match run(&cfg, args.command) {
        Ok(r) => r,
        Err(e) => return diagnostic(&e),
    };
    let out = args.out.or_else(|| cfg.out.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("."));
    if let Err(e) = result.write(&out) {
        return diagnostic(&CliError::Io(e));
    }
    println!("{}", result.summary());
    ExitCode::from(result.exit_code() as u8)
}
