use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use evonet::experiment::{parse_config, run_pipeline, Command};
use evonet::ErrorKind;

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    Evolve,
    Finetune,
    Evaluate,
    Visualize,
    Full,
}

/// Layer-wise neuroevolution with back-propagation fine-tuning.
#[derive(Parser)]
#[command(name = "evonet", version)]
struct Cli {
    #[arg(value_enum)]
    stage: Stage,
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 lets the runtime decide.
    #[arg(long, env = "EVONET_THREADS")]
    threads: Option<usize>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.stage {
        Stage::Evolve => Command::Evolve,
        Stage::Finetune => Command::Finetune,
        Stage::Evaluate => Command::Evaluate,
        Stage::Visualize => Command::Visualize,
        Stage::Full => Command::Full,
    };
    let result = parse_config(&cli.config).and_then(|mut cfg| {
        if let Some(seed) = cli.seed {
            cfg.set_seed(seed);
        }
        if let Some(t) = cli.threads {
            cfg.evolution.threads = t;
        }
        if let Some(out) = cli.out {
            cfg.output_dir = out;
        }
        run_pipeline(&cfg, command, Some(&cli.config))
    });
    match result {
        Ok(summary) => {
            for note in &summary.notes {
                eprintln!("note: {note}");
            }
            // A closed stdout (e.g. piped into `head`) is not a failure of the run.
            let mut out = std::io::stdout().lock();
            if let Some(m) = &summary.metrics {
                let _ = writeln!(out, "test_ccr {:.4} ({} samples)", m.test_ccr, m.n_test);
            }
            for p in &summary.outputs {
                let _ = writeln!(out, "wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let (label, code) = match e.kind() {
                ErrorKind::Config => ("config error", 2),
                ErrorKind::Data => ("data error", 3),
                ErrorKind::Numeric => ("numeric error", 4),
            };
            eprintln!("evonet: {label}: {e}");
            ExitCode::from(code)
        }
    }
}
