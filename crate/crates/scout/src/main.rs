use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use scout::commands::{
    cmd_attribute, cmd_evaluate, cmd_gradcheck, cmd_predict, cmd_prepare, cmd_synth, cmd_train, cmd_transfer_eval,
};
use scout::config::{LoadedConfig, Overrides, RunConfig};
use scout::error::{exit, Error, Result};
use scout_core::attribution::{AttributionTarget, DEFAULT_STEPS};
use scout_core::model::Variant;
use scout_core::synth::SynthConfig;

#[derive(Parser)]
#[command(name = "scout", version, about = "Interaction-aware multi-agent trajectory forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    /// Fixed inverse-distance weights.
    #[value(alias = "a")]
    FixedWeight,
    /// Multi-head attention.
    #[value(alias = "b")]
    Attention,
    /// Gated edges.
    #[value(alias = "c")]
    Gated,
    #[value(alias = "gcn")]
    PlainGcn,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::FixedWeight => Variant::FixedWeight,
            VariantArg::Attention => Variant::Attention,
            VariantArg::Gated => Variant::Gated,
            VariantArg::PlainGcn => Variant::PlainGcn,
        }
    }
}

/// Configuration file and the flags that override it.
#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Weight of the overlap penalty.
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight of the final-step term.
    #[arg(long)]
    beta: Option<f64>,
    /// Attention heads.
    #[arg(long)]
    heads: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<LoadedConfig> {
        let o = Overrides {
            seed: self.seed,
            variant: self.variant.map(Variant::from),
            alpha: self.alpha,
            beta: self.beta,
            heads: self.heads,
        };
        RunConfig::load(self.config.as_deref(), &o)
    }
}

#[derive(Args)]
struct SceneArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Prepared dataset (defaults to `data.cache` of the config).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Subcommand)]
enum Command {
    /// Resample, window, normalise and split a trajectory CSV.
    Prepare {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Trajectory CSV (defaults to `data.csv` of the config).
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a prepared dataset.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics of a checkpoint on one split.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Forecast one scene.
    Predict {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        scene: SceneArgs,
        /// Scene id (`recording@anchor_frame`); the first scene by default.
        #[arg(long)]
        scene_id: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrated-gradients attribution of one scene's interactions.
    Attribute {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        scene_id: Option<String>,
        /// Agent whose forecast is explained.
        #[arg(long, default_value_t = 0)]
        node: usize,
        /// Explain one coordinate at this step instead of the summed squared
        /// displacement.
        #[arg(long)]
        step: Option<usize>,
        /// Coordinate for `--step`: 0 = x, 1 = y.
        #[arg(long, default_value_t = 0)]
        axis: usize,
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        n_steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Zero-shot evaluation on a dataset from another domain.
    TransferEval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic interaction dataset as CSV (2.5 Hz).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        scenes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Every scene holds a crossing pair.
        #[arg(long)]
        crossing_heavy: bool,
        /// Position noise standard deviation, metres.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Compare analytic and finite-difference gradients for every variant.
    Gradcheck {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

/// Writes `value` as JSON to stdout; a closed pipe is not an error.
fn print<T: Serialize>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("report serialises");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Prepare { cfg, input, out } => print(&cmd_prepare(&cfg.load()?, input.as_deref(), &out)?),
        Command::Train { cfg, data, out } => print(&cmd_train(&cfg.load()?, data.as_deref(), &out)?),
        Command::Evaluate { cfg, scene, out } => print(&cmd_evaluate(
            &cfg.load()?,
            &scene.checkpoint,
            scene.data.as_deref(),
            &scene.split,
            out.as_deref(),
        )?),
        Command::Predict {
            cfg,
            scene,
            scene_id,
            out,
        } => print(&cmd_predict(
            &cfg.load()?,
            &scene.checkpoint,
            scene.data.as_deref(),
            &scene.split,
            scene_id.as_deref(),
            out.as_deref(),
        )?),
        Command::Attribute {
            cfg,
            scene,
            scene_id,
            node,
            step,
            axis,
            n_steps,
            out,
        } => {
            let target = match step {
                Some(step) => AttributionTarget::Coordinate { node, step, axis },
                None => AttributionTarget::SquaredDisplacement { node },
            };
            print(&cmd_attribute(
                &cfg.load()?,
                &scene.checkpoint,
                scene.data.as_deref(),
                &scene.split,
                scene_id.as_deref(),
                target,
                n_steps,
                &out,
            )?)
        }
        Command::TransferEval { cfg, scene, out } => {
            let data = scene
                .data
                .ok_or_else(|| Error::Usage("transfer-eval needs --data for the target domain".into()))?;
            print(&cmd_transfer_eval(&cfg.load()?, &scene.checkpoint, &data, &scene.split, out.as_deref())?)
        }
        Command::Synth {
            out,
            scenes,
            seed,
            crossing_heavy,
            noise,
        } => {
            let mut synth = if crossing_heavy {
                SynthConfig::crossing_heavy(scenes, seed)
            } else {
                SynthConfig {
                    scenes,
                    seed,
                    ..SynthConfig::default()
                }
            };
            if let Some(n) = noise {
                synth.noise_std = n;
            }
            let tracks = cmd_synth(&synth, &out)?;
            eprintln!("wrote {tracks} tracks to {}", out.display());
        }
        Command::Gradcheck { cfg, trials, tolerance } => {
            let loaded = cfg.load()?;
            let heads = cfg.heads.unwrap_or(3);
            let report = cmd_gradcheck(&loaded, trials, heads, tolerance)?;
            for (variant, err) in report.by_variant() {
                eprintln!("{:<13} max rel err {err:.3e}", variant.name());
            }
            print(&report);
            if !report.passed() {
                return Ok(exit::NUMERIC);
            }
        }
    }
    Ok(exit::OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
