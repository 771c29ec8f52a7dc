use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use cws_cli::config::{load_config, workers_from_env};
use cws_cli::pipeline::{self, histogram_file, render_slice, Manifest};
use cws_cli::{ConfigError, PipelineConfig, PipelineError};
use cws_core::forward::MeasurementAxis;

#[derive(Parser)]
#[command(name = "cws", version, about = "Coincidence wavefront sensing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON config file; omitted keys keep their defaults.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set optics.displacement=5e-5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set output_dir=DIR`.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig, ConfigError> {
        let mut o = self.overrides.clone();
        if let Some(dir) = &self.out {
            o.push(format!("output_dir={}", dir.display()));
        }
        load_config(self.config.as_deref(), &o, workers_from_env()?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the state and sample coincidence histograms.
    Simulate(ConfigArgs),
    /// Estimate gradients and amplitude from histogram files.
    Estimate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// k_x histogram; defaults to the output directory's.
        #[arg(long)]
        kx: Option<PathBuf>,
        /// k_y histogram; defaults to the output directory's.
        #[arg(long)]
        ky: Option<PathBuf>,
    },
    /// Integrate the phase and assemble the wave function.
    Reconstruct {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        gradient: Option<PathBuf>,
        #[arg(long)]
        amplitude: Option<PathBuf>,
    },
    /// Run every stage and write all artifacts with a manifest.
    Pipeline(ConfigArgs),
    /// Render a 2D slice of a field file to PPM.
    Render {
        #[arg(long)]
        field: PathBuf,
        /// One token per axis: `x`, `y`, a coordinate in metres, or `#index`.
        #[arg(long)]
        slice: String,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        hue_offset: f64,
        #[arg(long, default_value_t = 8)]
        scale: usize,
    },
    /// Run the oracle cross-checks sized to the config.
    Validate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
}

enum Failure {
    Pipeline(PipelineError),
    Other(anyhow::Error),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::Pipeline(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Pipeline(e.into())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn report(m: &Manifest) {
    for a in &m.artifacts {
        println!("{}  {}", a.sha256, m.config.output_dir.join(&a.path).display());
    }
    if let Ok(s) = serde_json::to_string(&m.summary) {
        println!("summary {s}");
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(c) => report(&pipeline::simulate(&c.load()?)?),
        Command::Estimate { cfg, kx, ky } => {
            let config = cfg.load()?;
            let dir = &config.output_dir;
            let mut files = vec![kx.unwrap_or_else(|| dir.join(histogram_file(MeasurementAxis::Kx)))];
            if config.lattice.dims_per_photon == 2 {
                files.push(ky.unwrap_or_else(|| dir.join(histogram_file(MeasurementAxis::Ky))));
            }
            report(&pipeline::estimate(&config, &files)?)
        }
        Command::Reconstruct { cfg, gradient, amplitude } => {
            let config = cfg.load()?;
            let dir = &config.output_dir;
            let g = gradient.unwrap_or_else(|| dir.join(pipeline::GRADIENT_FILE));
            let a = amplitude.unwrap_or_else(|| dir.join(pipeline::AMPLITUDE_FILE));
            report(&pipeline::reconstruct(&config, &g, &a)?)
        }
        Command::Pipeline(c) => report(&pipeline::run_pipeline(&c.load()?)?),
        Command::Render { field, slice, output, hue_offset, scale } => {
            let f = cws_core::io::read_field(&field).with_context(|| format!("reading {}", field.display()))?;
            let bytes = render_slice(&f, &slice, hue_offset, scale.max(1))?;
            std::fs::write(&output, bytes).with_context(|| format!("writing {}", output.display()))?;
        }
        Command::Validate { cfg, json } => {
            let r = cws_cli::validate::validate(&cfg.load()?);
            if json {
                println!("{}", serde_json::to_string_pretty(&r).context("encoding report")?);
            } else {
                for line in r.lines() {
                    println!("{line}");
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Pipeline(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
