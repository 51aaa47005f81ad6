use clap::{Parser, Subcommand};
use harness::config::{ConfigFile, ExperimentConfig, FilterSelection, Preset};
use harness::experiment::{run_experiment, simulate, HarnessError};
use harness::output::{summary_row, write_run, write_stream, SUMMARY_HEADER};
use inekf::filter::{numerical_rank, observability_matrix, unobservable_basis, GRAVITY};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "inekf", about = "Contact-aided invariant EKF experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte-Carlo convergence experiment.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        filter: Option<FilterSelection>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Preset::Desk)]
        preset: Preset,
    },
    /// Dump the simulated sensor stream as CSV.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Preset::Desk)]
        preset: Preset,
    },
    /// Print the rank and null space of the single-contact observability
    /// matrix.
    Observability {
        #[arg(long, default_value_t = 0.005)]
        dt: f64,
        #[arg(long, default_value_t = 20)]
        steps: usize,
    },
}

fn load(preset: Preset, path: Option<&Path>, overrides: &ConfigFile) -> Result<ExperimentConfig, HarnessError> {
    let text = path.map(fs::read_to_string).transpose().map_err(harness::ConfigError::from)?;
    Ok(ExperimentConfig::resolve(preset, text.as_deref(), overrides)?)
}

fn run(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Run {
            config,
            trials,
            seed,
            filter,
            out,
            preset,
        } => {
            let overrides = ConfigFile {
                trials,
                seed,
                filter,
                ..ConfigFile::default()
            };
            let config = load(preset, config.as_deref(), &overrides)?;
            let result = run_experiment(&config)?;
            write_run(&out, &config, &result)?;
            println!("{SUMMARY_HEADER}");
            for s in &result.summaries {
                println!("{}", summary_row(s));
            }
        }
        Command::Simulate { config, out, preset } => {
            let config = load(preset, config.as_deref(), &ConfigFile::default())?;
            let (_, stream) = simulate(&config)?;
            let mut w = BufWriter::new(fs::File::create(&out)?);
            write_stream(&mut w, &stream)?;
            w.flush()?;
            println!("wrote {} events to {}", stream.len(), out.display());
        }
        Command::Observability { dt, steps } => {
            if !(dt > 0.0) || steps == 0 {
                return Err(harness::ConfigError::Invalid("dt and steps must be positive".into()).into());
            }
            let o = observability_matrix(steps, dt, GRAVITY);
            let rank = numerical_rank(&o);
            println!("state dimension: {}", o.ncols());
            println!("rank: {rank}");
            println!("unobservable dimension: {}", o.ncols() - rank);
            println!("null-space basis (columns; rows are R, v, p, d):");
            print!("{:.6}", unobservable_basis(&o));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
