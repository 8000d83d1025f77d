//! The `fvddp` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::diagnostics::diagnose;
use crate::error::{Error, Result};
use crate::filtering::{filter_dataset, InferenceOptions, Mode};
use crate::io::{load_dataset, load_state, state_to_string, Provenance, DatasetFile};
use crate::lattice::DEFAULT_EPSILON;
use crate::posterior::predictive;
use crate::smoothing::smooth_dataset;
use crate::synth::{simulate, SimulationConfig};

#[derive(Debug, Parser)]
#[command(name = "fvddp", version, about = "Filtering, smoothing and prediction for Fleming-Viot hidden Markov models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Law of the signal at the last collection time given all data.
    Filter {
        dataset: PathBuf,
        #[command(flatten)]
        inference: InferenceArgs,
    },
    /// Law of the signal at time --time given all data.
    Smooth {
        dataset: PathBuf,
        #[arg(long)]
        time: f64,
        #[command(flatten)]
        inference: InferenceArgs,
    },
    /// Predictive probabilities of the next observation.
    Predict { state: PathBuf },
    /// Generate a synthetic dataset.
    Simulate {
        /// Comma-separated collection times.
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,
        /// Observations per time: one value for all times, or one per time.
        #[arg(long, value_delimiter = ',', default_value = "10")]
        count: Vec<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        /// Use a nonatomic baseline instead of the negative-binomial atoms.
        #[arg(long)]
        nonatomic: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Component count, mass concentration and a plot table.
    Diagnose { state: PathBuf },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Mc,
    Auto,
}

#[derive(Debug, Args)]
struct InferenceArgs {
    #[arg(long, value_enum, default_value = "exact")]
    mode: ModeArg,
    /// Monte Carlo particles per step (accepts 1e6).
    #[arg(long, default_value = "1e6", value_parser = parse_count)]
    particles: u64,
    /// Pruning threshold for Monte Carlo output.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    /// Required for mc and auto modes.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn parse_count(s: &str) -> std::result::Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    match s.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x < 1.8e19 => Ok(x as u64),
        _ => Err(format!("{s:?} is not a nonnegative integer")),
    }
}

impl InferenceArgs {
    fn options(&self) -> Result<InferenceOptions> {
        let mode = match self.mode {
            ModeArg::Exact => Mode::Exact,
            ModeArg::Mc => Mode::Mc,
            ModeArg::Auto => Mode::Auto,
        };
        if mode != Mode::Exact && self.seed.is_none() {
            return Err(Error::Invalid("--seed is required with --mode mc or auto".into()));
        }
        if self.particles == 0 {
            return Err(Error::Invalid("--particles must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::Invalid(format!("--epsilon must lie in [0, 1), got {}", self.epsilon)));
        }
        Ok(InferenceOptions {
            mode,
            particles: self.particles,
            epsilon: self.epsilon,
            seed: self.seed.unwrap_or(0),
            ..InferenceOptions::default()
        })
    }

    fn provenance(&self, command: &str, time: Option<f64>) -> Provenance {
        let mc = !matches!(self.mode, ModeArg::Exact);
        Provenance {
            command: command.into(),
            time,
            mode: format!("{:?}", self.mode).to_lowercase(),
            seed: self.seed,
            particles: mc.then_some(self.particles),
            epsilon: self.epsilon,
        }
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(0) => Err(Error::Invalid("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Invalid(e.to_string()))?
            .install(f),
    }
}

fn emit(text: &str, output: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Filter { dataset, inference } => {
            let opts = inference.options()?;
            let data = load_dataset(&dataset)?;
            let state = with_threads(inference.threads, || filter_dataset(&data, &opts))?;
            let text = state_to_string(&state, inference.provenance("filter", None));
            emit(&text, inference.output.as_deref(), out)
        }
        Command::Smooth { dataset, time, inference } => {
            let opts = inference.options()?;
            let data = load_dataset(&dataset)?;
            let state = with_threads(inference.threads, || smooth_dataset(&data, time, &opts))?;
            let text = state_to_string(&state, inference.provenance("smooth", Some(time)));
            emit(&text, inference.output.as_deref(), out)
        }
        Command::Predict { state } => {
            let p = predictive(&load_state(&state)?);
            let mut text = String::from("label\tprobability\n");
            for (l, q) in p.labels.iter().zip(&p.per_type) {
                text.push_str(&format!("{l}\t{q}\n"));
            }
            text.push_str(&format!("NEW\t{}\n", p.new_type));
            emit(&text, None, out)
        }
        Command::Simulate { times, count, seed, theta, nonatomic, output } => {
            let counts = match count.as_slice() {
                [n] => vec![*n; times.len()],
                _ => count,
            };
            let config = SimulationConfig { times, counts, theta, atomic: !nonatomic, seed };
            let data = simulate(&config)?;
            let mut text = serde_json::to_string_pretty(&DatasetFile::from_dataset(&data)).expect("serializable");
            text.push('\n');
            emit(&text, output.as_deref(), out)
        }
        Command::Diagnose { state } => emit(&diagnose(&load_state(&state)?).to_tsv(), None, out),
    }
}

/// Runs the command line and returns the process exit code. Errors go to
/// `err` as one JSON object with the error class and message.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let report = serde_json::json!({ "error": e.class(), "message": e.to_string() });
            let _ = writeln!(err, "{report}");
            e.exit_code()
        }
    }
}
