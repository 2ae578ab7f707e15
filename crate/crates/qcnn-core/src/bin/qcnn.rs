use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qcnn_core::config::ExperimentConfig;
use qcnn_core::error::{Error, Result};
use qcnn_core::mitigate::{DropoutMode, SelectionMetric, SoftDropoutPolicy};
use qcnn_core::report;
use qcnn_core::runner::{self, DropoutOptions, SoftDropOptions};

#[derive(Parser)]
#[command(name = "qcnn", version, about = "QCNN simulator, trainer and overfitting mitigation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    SingleQubit,
    SingleGate,
    Cnot,
}

impl From<ModeArg> for DropoutMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::SingleQubit => DropoutMode::SingleQubitFraction,
            ModeArg::SingleGate => DropoutMode::SingleGate,
            ModeArg::Cnot => DropoutMode::CnotFraction,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectArg {
    Validation,
    Gap,
}

impl From<SelectArg> for SelectionMetric {
    fn from(s: SelectArg) -> Self {
        match s {
            SelectArg::Validation => SelectionMetric::ValidationAccuracy,
            SelectArg::Gap => SelectionMetric::Gap,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model per the config and save it with history and manifest
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a saved model on the config's data splits
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hard gate-dropout trial suite on a saved model
    Dropout {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Soft-dropout policy search on a saved model
    Softdrop {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// "default" or a path to a JSON array of policies
        #[arg(long, default_value = "default")]
        grid: String,
        #[arg(long, value_enum)]
        select: Option<SelectArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the ancilla variant, drop its rotation, report before/after
    Ancilla {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("QCNN_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Argument(format!("QCNN_THREADS must be a positive integer, got '{v}'")))?;
        if n == 0 {
            return Err(Error::Argument("QCNN_THREADS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn load_config(path: &PathBuf) -> Result<(ExperimentConfig, String)> {
    let text = std::fs::read_to_string(path)?;
    let cfg = ExperimentConfig::from_json(&text)?;
    Ok((cfg, text))
}

fn parse_grid(spec: &str) -> Result<Option<Vec<SoftDropoutPolicy>>> {
    if spec == "default" {
        return Ok(None);
    }
    let text = std::fs::read_to_string(spec)?;
    let grid: Vec<SoftDropoutPolicy> =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{spec}: {e}")))?;
    Ok(Some(grid))
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Train { config, out } => {
            let (cfg, text) = load_config(&config)?;
            let outcome = runner::cmd_train(&cfg, &text, out.as_deref())?;
            println!("model saved to {}", outcome.model_path.display());
            println!(
                "test accuracy {:.4}  validation accuracy {:.4}  gap {:.4}",
                outcome.metrics.test_accuracy,
                outcome.metrics.validation_accuracy,
                outcome.metrics.gap
            );
        }
        Command::Eval { config, model, out } => {
            let (cfg, _) = load_config(&config)?;
            let metrics = runner::cmd_eval(&cfg, &model, out.as_deref())?;
            println!(
                "test accuracy {:.4}  validation accuracy {:.4}  gap {:.4}",
                metrics.test_accuracy, metrics.validation_accuracy, metrics.gap
            );
        }
        Command::Dropout {
            config,
            model,
            mode,
            fraction,
            trials,
            seed,
            out,
        } => {
            let (cfg, _) = load_config(&config)?;
            let opts =
                DropoutOptions::resolve(&cfg, mode.map(Into::into), fraction, trials, seed)?;
            let rep = runner::cmd_dropout(&cfg, &model, &opts, out.as_deref())?;
            println!(
                "baseline test accuracy {:.4}; over {} trials mean {:.4} min {:.4} max {:.4} std {:.4}",
                rep.baseline.test_accuracy,
                rep.trials,
                rep.summary.mean,
                rep.summary.min,
                rep.summary.max,
                rep.summary.std
            );
        }
        Command::Softdrop {
            config,
            model,
            grid,
            select,
            out,
        } => {
            let (cfg, _) = load_config(&config)?;
            let opts = SoftDropOptions::resolve(&cfg, parse_grid(&grid)?, select.map(Into::into))?;
            let search = runner::cmd_softdrop(&cfg, &model, &opts, out.as_deref())?;
            let rows: Vec<report::ReportRow> = search
                .rows
                .iter()
                .map(|r| report::ReportRow::new(r.policy.label(), &r.metrics))
                .collect();
            print!("{}", report::to_table("soft dropout search", &rows));
            println!("selected: {}", search.selected_policy.label());
        }
        Command::Ancilla { config, out } => {
            let (cfg, text) = load_config(&config)?;
            let outcome = runner::cmd_ancilla(&cfg, &text, out.as_deref())?;
            println!(
                "before drop: test {:.4} val {:.4}",
                outcome.before.test_accuracy, outcome.before.validation_accuracy
            );
            println!(
                "after drop:  test {:.4} val {:.4}",
                outcome.after.test_accuracy, outcome.after.validation_accuracy
            );
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
