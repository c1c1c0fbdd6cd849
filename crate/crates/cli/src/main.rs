use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use migr_harness::config::EXAMPLE_CONFIG;
use migr_harness::error::exit;
use migr_harness::pipeline::parse_stages;
use migr_harness::{run_pipeline, ExperimentConfig, HarnessError, RunOptions, Stage, THREADS_ENV};

#[derive(Parser)]
#[command(name = "migr-scatter", version, about = "Random-medium scattering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw the source and potential realizations.
    Synth(Common),
    /// Solve once at the lowest wavenumber and record the Born terms.
    Forward(Common),
    /// Generate far-field archives over the band.
    Sweep(Common),
    /// Estimate the strengths and reconstruct them.
    Recover(Common),
    /// Compare estimates against the configured strengths.
    Verify(Common),
    /// Aggregate verification errors into a summary table.
    Report(Common),
    /// Run several stages in order (all of them by default).
    Run {
        #[command(flatten)]
        common: Common,
        /// Comma-separated stage list, e.g. `synth,sweep`.
        #[arg(long, value_parser = parse_stage_list)]
        stages: Option<StageList>,
    },
    /// Check the configuration and list every violated precondition.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print an example configuration.
    Example,
}

#[derive(Clone)]
struct StageList(Vec<Stage>);

fn parse_stage_list(s: &str) -> Result<StageList, String> {
    parse_stages(s).map(StageList)
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `[run] seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Run even when preconditions are violated.
    #[arg(long)]
    force: bool,
}

fn configure_threads() -> Result<(), String> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().map_err(|_| format!("{THREADS_ENV}={v} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn run_stages(common: Common, stages: &[Stage]) -> Result<(), HarnessError> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(out) = common.out {
        config.output.dir = out;
    }
    if let Some(seed) = common.seed {
        config.run.seed = seed;
    }
    if common.force {
        for v in config.validate() {
            eprintln!("warning: {v}");
        }
    }
    let out = config.output.dir.clone();
    let manifest = run_pipeline(&config, &out, stages, RunOptions { force: common.force })?;
    for (stage, secs) in &manifest.timings {
        eprintln!("{stage}: {secs:.2} s");
    }
    println!("{}", out.join(migr_harness::manifest::MANIFEST_FILE).display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(exit::VALIDATION as u8);
    }
    let result = match cli.command {
        Command::Synth(c) => run_stages(c, &[Stage::Synth]),
        Command::Forward(c) => run_stages(c, &[Stage::Forward]),
        Command::Sweep(c) => run_stages(c, &[Stage::Sweep]),
        Command::Recover(c) => run_stages(c, &[Stage::Recover]),
        Command::Verify(c) => run_stages(c, &[Stage::Verify]),
        Command::Report(c) => run_stages(c, &[Stage::Report]),
        Command::Run { common, stages } => run_stages(common, stages.as_ref().map_or(&Stage::ALL[..], |s| &s.0)),
        Command::Validate { config } => ExperimentConfig::load(&config).and_then(|c| {
            let v = c.validate();
            if v.is_empty() {
                println!("ok");
                Ok(())
            } else {
                Err(HarnessError::Validation(v))
            }
        }),
        Command::Example => {
            print!("{EXAMPLE_CONFIG}");
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::from(exit::SUCCESS as u8),
        Err(HarnessError::Validation(v)) => {
            for x in &v {
                eprintln!("violation: {x}");
            }
            ExitCode::from(exit::VALIDATION as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
