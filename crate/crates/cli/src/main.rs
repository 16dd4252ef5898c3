//! `supersub`: generate data, train, finetune, pack, evaluate and report.
//!
//! Exit status is 0 on success, 2 for usage or configuration problems
//! (including missing inputs) and 3 for corrupt or mismatched artifacts.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use supersub_core::delta::DeltaMode;
use supersub_core::experiment::{self, ExperimentConfig, Target};
use supersub_core::runtime::EvalMode;
use supersub_core::Error;

#[derive(Parser, Debug)]
#[command(
    name = "supersub",
    version,
    about = "Two-stage superclass/subclass classification experiments"
)]
struct Cli {
    /// Experiment config (JSON). Without it the built-in golden config is used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory; overrides the config's `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Experiment seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write train/test datasets into the run directory.
    GenData,
    /// Train a network: `super`, `sub:<i>` (from scratch) or `lowerbound`.
    Train { target: String },
    /// Finetune specialist <i> from the superclass network.
    Finetune { superclass: usize },
    /// Delta-compress finetuned specialist <i> against the superclass network.
    Pack {
        superclass: usize,
        /// `fp16` or `qat-int`; defaults to the config's delta mode.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Rebuild specialist <i> from its delta.
    Unpack {
        superclass: usize,
        #[arg(long)]
        mode: Option<String>,
    },
    /// Evaluate `lowerbound`, `upperbound`, `two_stage_vanilla` or `two_stage_efficient`.
    Eval {
        mode: String,
        /// Deltas loaded by `two_stage_efficient`; defaults to the config's delta mode.
        #[arg(long)]
        delta_mode: Option<String>,
    },
    /// Summarize a run directory (defaults to the configured one).
    Report { run_dir: Option<PathBuf> },
    /// Run every step in order.
    Pipeline,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::golden("run"),
    };
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn delta_mode(config: &ExperimentConfig, flag: &Option<String>) -> Result<DeltaMode, Error> {
    flag.as_deref().map(str::parse).unwrap_or(Ok(config.delta_mode))
}

fn run(cli: &Cli) -> Result<(), Error> {
    let config = load_config(cli)?;
    match &cli.command {
        Command::GenData => {
            let (train, test) = experiment::gen_data(&config)?;
            let layout = config.layout();
            println!("train: {} rows -> {}", train.len(), layout.train_data().display());
            println!("test: {} rows -> {}", test.len(), layout.test_data().display());
        }
        Command::Train { target } => {
            let target: Target = target.parse()?;
            let net = experiment::train_target(&config, target)?;
            println!(
                "{target}: {} parameters -> {}",
                net.param_count(),
                config.layout().model(target).display()
            );
        }
        Command::Finetune { superclass } => {
            experiment::finetune(&config, *superclass)?;
            println!(
                "finetune {superclass} -> {}",
                config.layout().finetuned(*superclass).display()
            );
        }
        Command::Pack { superclass, mode } => {
            let mode = delta_mode(&config, mode)?;
            let s = experiment::pack_specialist(&config, *superclass, mode)?;
            println!(
                "delta {superclass} ({}): raw {} bytes, packed {} bytes, reference {} bytes, ratio {:.4}",
                mode.label(),
                s.raw_bytes,
                s.packed_bytes,
                s.reference_bytes,
                s.ratio
            );
        }
        Command::Unpack { superclass, mode } => {
            let mode = delta_mode(&config, mode)?;
            experiment::unpack_specialist(&config, *superclass, mode)?;
            println!(
                "reconstructed {superclass} -> {}",
                config.layout().reconstructed(*superclass, mode).display()
            );
        }
        Command::Eval { mode, delta_mode: flag } => {
            let mode: EvalMode = mode.parse()?;
            let dm = delta_mode(&config, flag)?;
            let e = experiment::eval(&config, mode, dm)?;
            let r = &e.report;
            println!(
                "{}: macro {:.2}%, micro {:.2}%, superclass {:.2}%, n_test {}",
                experiment::eval_label(mode, dm),
                r.macro_accuracy,
                r.micro_accuracy,
                r.superclass_accuracy,
                r.n_test
            );
            if let Some(l) = e.ledger {
                println!(
                    "ledger: bytes_loaded {}, peak_resident_bytes {}, reconstruction_adds {}, specialist_switches {}",
                    l.bytes_loaded, l.peak_resident_bytes, l.reconstruction_adds, l.specialist_switches
                );
            }
        }
        Command::Report { run_dir } => {
            let dir = run_dir.clone().unwrap_or_else(|| config.out_dir.clone());
            print!("{}", experiment::report(dir)?.text);
        }
        Command::Pipeline => print!("{}", experiment::run_pipeline(&config)?.text),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_integrity() { 3 } else { 2 })
        }
    }
}
