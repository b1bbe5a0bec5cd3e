use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ltde_core::config::ExperimentConfig;
use ltde_core::harness::{self, exit_code, resolve_out};
use ltde_core::verify::VerifySettings;
use ltde_core::Error;

#[derive(Parser)]
#[command(name = "ltde", version, about = "Localized mean-field actor-critic on a state network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; omitted means the line3 defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory. Defaults to the config's `out`, then $LTDE_OUT/<name>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted override such as `training.actor.k=1`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Record wall-clock timings in the manifest (breaks byte-identical reruns).
    #[arg(long)]
    timings: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Seeded agent-level and team-level trajectories.
    Simulate(Common),
    /// Exact tables by enumeration.
    Oracle(Common),
    /// Localized actor-critic training.
    Train(Common),
    /// Acceptance criteria with a JSON report.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Comma-separated criterion ids; all when omitted.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
    /// gnuplot-ready columns from a run's CSV file.
    Export {
        /// CSV file, e.g. runs/line3/training.csv.
        file: PathBuf,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut overrides = common.set.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    ExperimentConfig::load(common.config.as_deref(), &overrides)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(c) => single("simulate", &c),
        Command::Oracle(c) => single("oracle", &c),
        Command::Train(c) => single("train", &c),
        Command::Verify { common, only } => {
            let cfg = load(&common)?;
            let out = resolve_out(&cfg, common.out.as_deref());
            let (report, _) = harness::cmd_verify(&cfg, &VerifySettings::default(), &only, &out, common.timings)?;
            for line in report.lines() {
                println!("{line}");
            }
            println!("report: {}", out.join("verify.json").display());
            if report.passed {
                Ok(())
            } else {
                Err(Error::VerificationFailed(format!(
                    "{} of {} criteria failed",
                    report.criteria.iter().filter(|c| !c.passed).count(),
                    report.criteria.len()
                )))
            }
        }
        Command::Export { file } => {
            let text = std::fs::read_to_string(&file)?;
            print!("{}", harness::export_columns(&text));
            Ok(())
        }
    }
}

fn single(command: &str, common: &Common) -> Result<(), Error> {
    let cfg = load(common)?;
    let out = resolve_out(&cfg, common.out.as_deref());
    let manifest = harness::run_command(command, &cfg, &out, common.timings)?;
    println!("{command}: wrote {} files to {}", manifest.files.len() + 1, out.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
