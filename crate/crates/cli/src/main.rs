//! Command-line front end for the cluster simulator.
//!
//! Exit codes: 0 success, 2 bad configuration or usage, 3 the simulation
//! failed or diverged, 4 file or data errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dcs3gd::harness::{self, ExperimentConfig, HarnessError, SweepAxis};
use dcs3gd::models::{make_synthetic_dataset, write_binary, write_csv, DatasetSpec, ModelError};

#[derive(Parser)]
#[command(
    name = "dcs3gd",
    version,
    about = "Simulate distributed SGD variants on a modeled cluster"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its run directory.
    Run {
        config: PathBuf,
        /// Overrides `run.output_dir`.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run an experiment once per value of one setting.
    Sweep {
        config: PathBuf,
        /// n_workers, n_workers_fixed_batch, lambda0, local_batch_size,
        /// eta_single_node, momentum, t_compute, t_allreduce or jitter.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Directory receiving one subdirectory per value (default: the
        /// config's output_dir).
        #[arg(long)]
        output_root: Option<PathBuf>,
    },
    /// Compare completed runs against the slowest one.
    Compare {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Print CSV instead of a table.
        #[arg(long)]
        csv: bool,
    },
    /// Parse and check a configuration without running it.
    ValidateConfig { config: PathBuf },
    /// Generate a synthetic dataset from a TOML description.
    GenData {
        spec: PathBuf,
        /// `.csv` writes CSV; anything else the binary format.
        out: PathBuf,
    },
}

fn exit_code(e: &HarnessError) -> u8 {
    match e {
        HarnessError::Config { .. } | HarnessError::Parse { .. } | HarnessError::Mismatch(_) => 2,
        HarnessError::Sim(_) | HarnessError::Model(_) | HarnessError::Optim(_) => 3,
        _ => 4,
    }
}

fn fail(e: HarnessError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(&e))
}

fn run(config: &Path, output_dir: Option<PathBuf>) -> Result<ExitCode, HarnessError> {
    let mut config = ExperimentConfig::load(config)?;
    let outcome = match output_dir {
        Some(dir) => {
            config.run.output_dir = dir.clone();
            harness::run_experiment_into(&config, &dir)?
        }
        None => harness::run_experiment(&config)?,
    };
    let s = &outcome.record.summary;
    println!("wrote {}", outcome.output_dir.display());
    println!(
        "iterations {}  simulated time {:.4}  train loss {:.6}  train error {:.4}",
        s.completed_iterations, s.total_simulated_time, s.final_train_loss, s.final_train_error
    );
    if let (Some(loss), Some(err)) = (s.final_val_loss, s.final_val_error) {
        println!("validation loss {loss:.6}  validation error {err:.4}");
    }
    if let Some(at) = s.diverged_at {
        eprintln!("run diverged at iteration {at}");
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep(
    config: &Path,
    axis: &str,
    values: &[f64],
    output_root: Option<PathBuf>,
) -> Result<ExitCode, HarnessError> {
    let config = ExperimentConfig::load(config)?;
    let axis: SweepAxis = axis.parse()?;
    let root = output_root.unwrap_or_else(|| harness::resolve_output_dir(&config.run.output_dir));
    let points = harness::sweep(&config, axis, values, &root)?;
    let mut failed = false;
    for p in &points {
        match &p.result {
            Ok(s) => println!(
                "{:<28} loss {:.6}  val error {}  time {:.4}{}",
                p.label,
                s.final_train_loss,
                s.final_val_error.map_or("-".into(), |e| format!("{e:.4}")),
                s.total_simulated_time,
                if s.diverged_at.is_some() {
                    "  (diverged)"
                } else {
                    ""
                }
            ),
            Err(e) => {
                failed = true;
                println!("{:<28} failed: {e}", p.label);
            }
        }
    }
    println!("wrote {}", root.join("sweep.csv").display());
    Ok(if failed {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    })
}

fn gen_data(spec: &Path, out: &Path) -> Result<ExitCode, HarnessError> {
    let text = std::fs::read_to_string(spec).map_err(|e| HarnessError::Io {
        path: spec.to_path_buf(),
        source: e,
    })?;
    let spec: DatasetSpec = toml::from_str(&text).map_err(|e| HarnessError::Parse {
        path: Some(spec.to_path_buf()),
        message: e.to_string(),
    })?;
    let data = make_synthetic_dataset(&spec).map_err(|e| HarnessError::Config {
        field: "dataset".into(),
        reason: e.to_string(),
    })?;
    let is_csv = out
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let written: Result<(), ModelError> = if is_csv {
        write_csv(&data, out)
    } else {
        write_binary(&data, out)
    };
    written.map_err(|e| HarnessError::Dataset {
        path: out.to_path_buf(),
        source: e,
    })?;
    println!(
        "wrote {} samples of dimension {} to {}",
        data.len(),
        data.dimension,
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, output_dir } => run(&config, output_dir),
        Command::Sweep {
            config,
            axis,
            values,
            output_root,
        } => sweep(&config, &axis, &values, output_root),
        Command::Compare { dirs, csv } => harness::compare_runs(&dirs).and_then(|cmp| {
            if csv {
                print!("{}", cmp.to_csv()?);
            } else {
                print!("{}", cmp.to_table());
            }
            Ok(ExitCode::SUCCESS)
        }),
        Command::ValidateConfig { config } => ExperimentConfig::load(&config).map(|c| {
            println!(
                "{}: ok ({} on {} workers)",
                config.display(),
                c.cluster.algorithm,
                c.cluster.n_workers
            );
            ExitCode::SUCCESS
        }),
        Command::GenData { spec, out } => gen_data(&spec, &out),
    };
    result.unwrap_or_else(fail)
}
