//! `molfuse` command-line interface.
//!
//! Exit codes: 0 success, 2 input error, 3 contract violation.

use clap::{Args, Parser, Subcommand};
use molfuse::pipeline::commands;
use molfuse::pipeline::{PipelineError, RunConfig, SplitMethod};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "molfuse", version, about = "Multi-modal molecular property prediction for ionizable lipids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Configuration preset: mini, paper-scaffold or paper-cliff.
    #[arg(long, default_value = "mini")]
    preset: String,
    /// Flat key=value config file; overrides the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Individual key=value overrides; applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Run seed (shorthand for --set seed=N).
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn build(&self) -> Result<RunConfig, PipelineError> {
        let mut cfg = RunConfig::preset(&self.preset).map_err(PipelineError::Config)?;
        if let Some(path) = &self.config {
            let content = std::fs::read_to_string(path)
                .map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
            cfg.apply_file_str(&content).map_err(PipelineError::Config)?;
        }
        for pair in &self.sets {
            let Some((key, value)) = pair.split_once('=') else {
                return Err(PipelineError::Config(
                    molfuse::pipeline::config::ConfigError::BadLine { line: 0 },
                ));
            };
            cfg.apply(key.trim(), value.trim())
                .map_err(PipelineError::Config)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate().map_err(PipelineError::Config)?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse a SMILES string and print the molecular graph as JSON.
    Parse {
        #[arg(long)]
        smiles: String,
    },
    /// Write circular and structural-key fingerprints as CSV.
    Fingerprint {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Circular-fingerprint neighborhood radius.
        #[arg(long, default_value_t = 2)]
        radius: usize,
        /// Circular-fingerprint width in bits (a power of two).
        #[arg(long, default_value_t = 2048)]
        width: usize,
    },
    /// Transfection-cliff tooling.
    Cliffs {
        #[command(subcommand)]
        action: CliffsAction,
    },
    /// Dataset splitting.
    Split {
        #[command(subcommand)]
        method: SplitCommand,
    },
    /// Pretrain the 3-D encoder with the denoising objective.
    Pretrain {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Resume from an earlier pretrain checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train the fusion model with the hybrid loss.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Precomputed splits.csv; computed from the config when omitted.
        #[arg(long)]
        splits: Option<PathBuf>,
        /// Pretrained 3-D encoder checkpoint to start from.
        #[arg(long)]
        pretrain: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Predict efficiencies with a trained checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        conformers: Option<PathBuf>,
    },
    /// Emit per-atom attention explanations.
    Explain {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        conformers: Option<PathBuf>,
    },
    /// Export pooled embeddings per fusion stage.
    Embeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        conformers: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CliffsAction {
    /// Mine all structure-similar pairs with large efficiency gaps.
    Mine {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Circular-fingerprint neighborhood radius.
        #[arg(long, default_value_t = 2)]
        radius: usize,
        /// Circular-fingerprint width in bits (a power of two).
        #[arg(long, default_value_t = 2048)]
        width: usize,
    },
}

#[derive(Subcommand)]
enum SplitCommand {
    /// Group by Murcko scaffold; no scaffold spans two partitions.
    Scaffold {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Spectral-cluster fingerprints, then sample 10% per cluster to test.
    Cliff {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn emit(line: &str) {
    use std::io::Write;
    // tolerate a closed pipe (e.g. `molfuse ... | head`)
    let _ = writeln!(std::io::stdout(), "{line}");
}

fn print_report<T: serde::Serialize>(report: &T) {
    match serde_json::to_string_pretty(report) {
        Ok(json) => emit(&json),
        Err(e) => eprintln!("report serialization failed: {e}"),
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Parse { smiles } => {
            emit(&commands::run_parse(&smiles)?);
        }
        Command::Fingerprint {
            input,
            output,
            radius,
            width,
        } => {
            print_report(&commands::run_fingerprint(&input, &output, radius, width)?);
        }
        Command::Cliffs {
            action:
                CliffsAction::Mine {
                    input,
                    output,
                    radius,
                    width,
                },
        } => {
            print_report(&commands::run_cliffs(&input, &output, radius, width)?);
        }
        Command::Split { method } => {
            let (method, input, output, config) = match method {
                SplitCommand::Scaffold {
                    input,
                    output,
                    config,
                } => (SplitMethod::Scaffold, input, output, config),
                SplitCommand::Cliff {
                    input,
                    output,
                    config,
                } => (SplitMethod::Cliff, input, output, config),
            };
            let cfg = config.build()?;
            print_report(&commands::run_split(method, &cfg, &input, &output)?);
        }
        Command::Pretrain {
            input,
            out,
            resume,
            config,
        } => {
            let cfg = config.build()?;
            print_report(&commands::run_pretrain(
                &cfg,
                &input,
                &out,
                resume.as_deref(),
            )?);
        }
        Command::Train {
            input,
            out,
            splits,
            pretrain,
            config,
        } => {
            let cfg = config.build()?;
            print_report(&commands::run_train(
                &cfg,
                &input,
                splits.as_deref(),
                pretrain.as_deref(),
                &out,
            )?);
        }
        Command::Predict {
            checkpoint,
            input,
            out,
            conformers,
        } => {
            print_report(&commands::run_predict(
                &checkpoint,
                &input,
                &out,
                conformers.as_deref(),
            )?);
        }
        Command::Explain {
            checkpoint,
            input,
            out,
            conformers,
        } => {
            print_report(&commands::run_explain(
                &checkpoint,
                &input,
                &out,
                conformers.as_deref(),
            )?);
        }
        Command::Embeddings {
            checkpoint,
            input,
            out,
            conformers,
        } => {
            print_report(&commands::run_embeddings(
                &checkpoint,
                &input,
                &out,
                conformers.as_deref(),
            )?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
