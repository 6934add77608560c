use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use meanfield::config::Command;
use meanfield::run::{replay, run, RunError, RunSummary};

#[derive(Parser)]
#[command(name = "meanfield", version, about = "Seeded mean-field particle experiments with CSV output")]
struct Cli {
    #[command(subcommand)]
    action: Action,
}

#[derive(Subcommand)]
enum Action {
    /// Run one experiment: validate, lln, feynman-kac, variance, laplace,
    /// optimize, rare-event, rate or regimes.
    Run {
        #[arg(value_parser = parse_command)]
        command: Command,
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Worker threads; 0 uses every core. Never changes outputs.
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Re-run from a manifest and check every output hash.
    Replay {
        manifest: PathBuf,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
}

fn parse_command(s: &str) -> Result<Command, String> {
    s.parse()
}

fn report(summary: &RunSummary) {
    println!("status=ok");
    println!("run_id={}", summary.run_id);
    println!("output_dir={}", summary.output_dir.display());
    println!("manifest={}", summary.manifest.display());
}

fn fail(err: &RunError, command: &str, dir: Option<&PathBuf>) -> ExitCode {
    let record = err.record(command);
    eprint!("{record}");
    if let (Some(dir), RunError::Config(_) | RunError::Manifest(_) | RunError::Mismatch { .. }) = (dir, err) {
        if std::fs::create_dir_all(dir).is_ok() {
            let _ = std::fs::write(dir.join("error.txt"), &record);
        }
    }
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.action {
        Action::Run {
            command,
            config,
            output_dir,
            threads,
        } => match run(command, &config, output_dir.as_deref(), threads) {
            Ok(s) => {
                report(&s);
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e, command.name(), output_dir.as_ref()),
        },
        Action::Replay { manifest, threads } => match replay(&manifest, threads) {
            Ok(s) => {
                report(&s);
                ExitCode::SUCCESS
            }
            Err(e) => {
                let dir = manifest.parent().map(PathBuf::from);
                fail(&e, "replay", dir.as_ref())
            }
        },
    }
}
