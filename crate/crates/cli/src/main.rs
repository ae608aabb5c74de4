//! `nretarget`: train, retarget, evaluate and run the experiments from the
//! command line. Exit codes: 0 ok, 2 configuration, 3 numerical, 4 I/O.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_override, RunConfig};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(m: impl Into<String>) -> Self {
        CliError { code: 2, message: m.into() }
    }

    pub fn numeric(m: impl Into<String>) -> Self {
        CliError { code: 3, message: m.into() }
    }

    pub fn io(m: impl Into<String>) -> Self {
        CliError { code: 4, message: m.into() }
    }
}

impl From<neural_retarget::Error> for CliError {
    fn from(e: neural_retarget::Error) -> Self {
        use neural_retarget::Error as E;
        let code = match &e {
            E::Config(_) | E::Usage(_) => 2,
            E::Evaluation { .. } | E::NonFinite { .. } => 3,
            E::Parse { .. } | E::Validation(_) | E::Io { .. } => 4,
        };
        CliError { code, message: e.to_string() }
    }
}

#[derive(Parser)]
#[command(name = "nretarget", version, about = "Human-to-robot motion retargeting by latent optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Args, Clone, Debug)]
struct Common {
    /// TOML run configuration.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override any config field, e.g. `--set train.epochs=20`.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
    sets: Vec<(String, toml::Value)>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Bundled model name or `.robot` path.
    #[arg(long)]
    robot: Option<String>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Dataset directory with `train/` and `test/`.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args, Clone, Debug)]
struct InferFlags {
    /// `feedforward` or `latent_opt`.
    #[arg(long)]
    mode: Option<String>,
    /// `neural` or `gaussian`.
    #[arg(long)]
    init: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Jointly train encoder and decoder; writes a checkpoint and loss curve.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Retarget demonstrations; writes trajectories and per-iteration losses.
    Retarget {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        infer: InferFlags,
        /// A single `.demo` file instead of the test split.
        #[arg(long)]
        demo: Option<PathBuf>,
    },
    /// Per-motion Frechet, velocity and acceleration errors.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        infer: InferFlags,
    },
    /// Loss curves for the neural start against three Gaussian starts.
    CompareInit {
        #[command(flatten)]
        common: Common,
    },
    /// Train and evaluate over architectures, activations and modes.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// Finite-difference check of every differentiable component.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Random configurations per component.
        #[arg(long)]
        configs: Option<usize>,
        /// Restrict to these components.
        #[arg(long = "component")]
        components: Vec<String>,
        /// Corrupt one backward rule (test fixture).
        #[arg(long, hide = true)]
        corrupt_op: Option<String>,
        #[arg(long, hide = true, default_value_t = 1.5)]
        corrupt_factor: f64,
    },
    /// Generate the synthetic train/test demonstration set.
    Synth {
        #[command(flatten)]
        common: Common,
    },
}

fn resolve(common: &Common, extra: Vec<(String, toml::Value)>) -> Result<RunConfig, CliError> {
    use toml::Value as V;
    let path = |p: &PathBuf| V::String(p.display().to_string());
    let mut o: Vec<(String, V)> = Vec::new();
    if let Some(s) = common.seed {
        let s = i64::try_from(s).map_err(|_| CliError::config("seed: must fit in 63 bits"))?;
        o.push(("seed".into(), V::Integer(s)));
    }
    if let Some(j) = common.jobs {
        o.push(("jobs".into(), V::Integer(j as i64)));
    }
    if let Some(p) = &common.out {
        o.push(("out".into(), path(p)));
    }
    if let Some(r) = &common.robot {
        o.push(("robot".into(), V::String(r.clone())));
    }
    if let Some(p) = &common.checkpoint {
        o.push(("checkpoint".into(), path(p)));
    }
    if let Some(p) = &common.data {
        o.push(("data.dir".into(), path(p)));
    }
    o.extend(extra);
    // Explicit --set entries win over the dedicated flags.
    o.extend(common.sets.iter().cloned());
    RunConfig::resolve(common.config.as_deref(), &o)
}

fn infer_overrides(f: &InferFlags) -> Vec<(String, toml::Value)> {
    let mut o = Vec::new();
    if let Some(m) = &f.mode {
        o.push(("infer.mode".into(), toml::Value::String(m.clone())));
    }
    if let Some(i) = &f.init {
        o.push(("infer.init".into(), toml::Value::String(i.clone())));
    }
    o
}

fn run(cli: Cli) -> Result<(), CliError> {
    use commands::*;
    match cli.command {
        Command::Train { common, epochs, lr } => {
            let mut extra = Vec::new();
            if let Some(e) = epochs {
                extra.push(("train.epochs".into(), toml::Value::Integer(e as i64)));
            }
            if let Some(l) = lr {
                extra.push(("train.lr".into(), toml::Value::Float(l)));
            }
            cmd_train(Run::new("train", resolve(&common, extra)?)?)
        }
        Command::Retarget { common, infer, demo } => {
            cmd_retarget(Run::new("retarget", resolve(&common, infer_overrides(&infer))?)?, demo)
        }
        Command::Eval { common, infer } => cmd_eval(Run::new("eval", resolve(&common, infer_overrides(&infer))?)?),
        Command::CompareInit { common } => cmd_compare_init(Run::new("compare-init", resolve(&common, vec![])?)?),
        Command::Ablate { common } => cmd_ablate(Run::new("ablate", resolve(&common, vec![])?)?),
        Command::Gradcheck {
            common,
            configs,
            components,
            corrupt_op,
            corrupt_factor,
        } => {
            let mut extra = Vec::new();
            if let Some(c) = configs {
                extra.push(("gradcheck.configs".into(), toml::Value::Integer(c as i64)));
            }
            let fault = match corrupt_op {
                Some(op) => Some((op.parse::<neural_retarget::autodiff::OpKind>()?, corrupt_factor)),
                None => None,
            };
            cmd_gradcheck(Run::new("gradcheck", resolve(&common, extra)?)?, &components, fault)
        }
        Command::Synth { common } => cmd_synth(Run::new("synth", resolve(&common, vec![])?)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
