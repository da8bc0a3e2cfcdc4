use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use roughlik::error::Error;
use roughlik::field::FieldRegistry;
use roughlik::harness::{self, ExperimentConfig};
use serde_json::json;

/// Likelihood inference for differential equations driven by rough signals.
#[derive(Parser)]
#[command(name = "roughlik", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an fBm driver and write it with the model response.
    Simulate(Flags),
    /// Recover driver increments from observations.
    Invert(Flags),
    /// Evaluate the log-likelihood at θ or over a θ grid.
    Loglik(Flags),
    /// Scale-ordered maximum likelihood on a θ grid.
    Mle(Flags),
    /// Staged posterior on a θ grid.
    Posterior(Flags),
    /// Likelihood convergence study across dyadic levels.
    Converge(Flags),
}

#[derive(Args, Clone, Default)]
struct Flags {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Model id from the field registry.
    #[arg(long)]
    model: Option<String>,
    /// Hurst index of the driver.
    #[arg(long)]
    h: Option<f64>,
    /// Level range `A..B`.
    #[arg(long)]
    levels: Option<String>,
    /// `lo:hi:n` per parameter, comma separated.
    #[arg(long = "theta-grid", allow_hyphen_values = true)]
    theta_grid: Option<String>,
    /// Comma-separated parameter values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta: Option<Vec<f64>>,
    /// Observation CSV.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Driver CSV used as ground truth by `invert`.
    #[arg(long)]
    driver: Option<PathBuf>,
    /// Dyadic level of the simulation grid.
    #[arg(long)]
    level: Option<u32>,
    /// Time horizon.
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// Reference level for `converge`.
    #[arg(long = "n-ref")]
    n_ref: Option<u32>,
    /// RK4 substeps per interval.
    #[arg(long)]
    steps: Option<usize>,
    /// Monte-Carlo samples when the driver has more coordinates than the state.
    #[arg(long = "mc-samples")]
    mc_samples: Option<usize>,
    /// Simulate with all driver increments zero.
    #[arg(long = "zero-noise")]
    zero_noise: bool,
}

impl Flags {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_path(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.noise.seed = Some(v);
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = &self.model {
            cfg.model.id = v.clone();
        }
        if let Some(v) = self.h {
            cfg.noise.h = v;
        }
        if let Some(v) = &self.levels {
            cfg.levels = Some(v.clone());
        }
        if let Some(v) = &self.theta_grid {
            cfg.theta_grid = Some(v.clone());
        }
        if let Some(v) = &self.theta {
            cfg.model.theta = v.clone();
        }
        if let Some(v) = &self.input {
            cfg.input = Some(v.clone());
        }
        if let Some(v) = &self.driver {
            cfg.driver = Some(v.clone());
        }
        if let Some(v) = self.level {
            cfg.grid.level = v;
            cfg.grid.times = None;
        }
        if let Some(v) = self.t_end {
            cfg.grid.t_end = v;
        }
        if let Some(v) = self.n_ref {
            cfg.n_ref = Some(v);
        }
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = self.mc_samples {
            cfg.mc_samples = v;
        }
        if self.zero_noise {
            cfg.noise.zero = true;
        }
        Ok(cfg)
    }
}

fn emit(value: &serde_json::Value) {
    let text = serde_json::to_string_pretty(value).expect("serialisable");
    // a closed pipe downstream is not an error for us
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (flags, run): (&Flags, fn(&ExperimentConfig, &FieldRegistry) -> roughlik::error::Result<serde_json::Value>) =
        match &cli.command {
            Command::Simulate(f) => (f, harness::cmd_simulate),
            Command::Invert(f) => (f, harness::cmd_invert),
            Command::Loglik(f) => (f, harness::cmd_loglik),
            Command::Mle(f) => (f, harness::cmd_mle),
            Command::Posterior(f) => (f, harness::cmd_posterior),
            Command::Converge(f) => (f, harness::cmd_converge),
        };
    let registry = FieldRegistry::with_builtins();
    let outcome = flags.resolve().and_then(|cfg| run(&cfg, &registry).map(|v| (cfg, v)));
    match outcome {
        Ok((_, value)) => {
            emit(&value);
            ExitCode::SUCCESS
        }
        Err(err) => {
            let mut body = json!({"error": err.to_string()});
            if let Some(i) = err.interval_index() {
                body["interval"] = json!(i);
            }
            emit(&body);
            eprintln!("error: {err}");
            match err {
                Error::Parse { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
