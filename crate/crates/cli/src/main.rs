use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use skl_core::experiment::{config_splits, dump_spectrum, fit_split, gen_g50c, prepare, run_experiment};
use skl_core::model_io::{load_model, save_model};
use skl_core::verify::run_all;
use skl_core::{ErrorKind, ExperimentConfig, SklError};

#[derive(Parser)]
#[command(name = "skl", version, about = "Graph-based semi-supervised classification with learned spectral kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the G50C two-Gaussian benchmark as dense CSV.
    GenG50c {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a transductive experiment and print its JSON report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also save the model fitted on the first split.
        #[arg(long)]
        save_model: Option<PathBuf>,
    },
    /// Print `index,gamma,a,lambda_bar` for the parameter-free model.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print `row,label` predictions of a saved model for its unlabeled points.
    Predict {
        #[arg(long)]
        model: PathBuf,
    },
    /// Run the built-in correctness and benchmark checks.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(cli: Cli) -> Result<bool, SklError> {
    match cli.command {
        Command::GenG50c { seed, out } => {
            gen_g50c(seed)?.write_csv(BufWriter::new(File::create(&out)?))?;
            info!("wrote {}", out.display());
        }
        Command::Run { config, out, save_model: model_path } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let report = run_experiment(&cfg)?;
            info!(
                "mean accuracy {:?} over {} splits in {:.2}s",
                report.mean_accuracy,
                report.splits.len(),
                report.timings.total
            );
            let mut w = output(out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            writeln!(w)?;
            w.flush()?;
            if let Some(path) = model_path {
                let prepared = prepare(&cfg, cfg.dataset.load()?)?;
                let split = &config_splits(&cfg, &prepared.dataset)?[0];
                let model = fit_split(&cfg, &prepared, split)?;
                save_model(&model, &prepared.dataset, &path)?;
                info!("saved model to {}", path.display());
            }
        }
        Command::Spectrum { config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let mut w = output(None)?;
            w.write_all(dump_spectrum(&cfg)?.as_bytes())?;
            w.flush()?;
        }
        Command::Predict { model } => {
            let saved = load_model(&model)?;
            let mut w = output(None)?;
            writeln!(w, "row,label")?;
            for (row, label) in saved.predict_unlabeled()? {
                writeln!(w, "{row},{label}")?;
            }
            w.flush()?;
        }
        Command::Verify { seed } => {
            let checks = run_all(seed);
            for c in &checks {
                let mark = if c.passed { "PASS" } else { "FAIL" };
                println!("{mark} {} ({:.2}s): {}", c.name, c.seconds, c.detail);
            }
            return Ok(checks.iter().all(|c| c.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Input => 2,
                ErrorKind::Numerical => 3,
                ErrorKind::Degenerate => 4,
            })
        }
    }
}
