use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use unbiased_cli::{config, CliError, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "unbiased", version, about = "Reproducible source-localization and reconstruction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run {
        /// Experiment name; optional when the config file names one.
        experiment: Option<Experiment>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List an experiment's configuration keys with their defaults.
    Describe { experiment: Experiment },
    /// Print build metadata.
    Version,
}

fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Describe { experiment } => print!("{}", config::describe(experiment)),
        Command::Version => print!("{}", unbiased_cli::version_text()),
        Command::Run { experiment, config, seed, out, threads } => {
            let mut cfg = match (&config, experiment) {
                (Some(path), _) => ExperimentConfig::load(path)?,
                (None, Some(e)) => ExperimentConfig::defaults(e),
                (None, None) => return Err(CliError::Usage("run: give an experiment or --config".into())),
            };
            if let Some(e) = experiment {
                if e != cfg.experiment() {
                    return Err(CliError::Usage(format!("config is for `{}`, not `{e}`", cfg.experiment())));
                }
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| CliError::Usage(format!("threads: {e}")))?;
            }
            let dir = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
            let summary = unbiased_cli::run(&cfg, &dir)?;
            for line in summary.lines {
                println!("{line}");
            }
            println!("wrote {} files to {}", summary.files.len() + 1, dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
