use std::path::PathBuf;
use std::process::ExitCode;

use accd_cli::{
    resolve_config, run_eval, run_fit, run_report, run_score, run_synth, run_validate, CliError, CliResult, Overrides,
    SynthParams, SYNTH_METHOD,
};
use accd_core::io::dataset::SequenceLayout;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "accd", version, about = "A-contrario validation of change-detection masks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct Common {
    /// Sequence directory.
    #[arg(long)]
    seq: PathBuf,
    /// Extra config file applied over the sequence's config.cfg.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Restrict to one backbone stage.
    #[arg(long)]
    stage: Option<u8>,
    /// NFA acceptance threshold.
    #[arg(long)]
    epsilon: Option<f64>,
}

impl Common {
    fn layout_and_config(&self) -> CliResult<(SequenceLayout, accd_core::config::RunConfig)> {
        let layout = SequenceLayout::new(&self.seq);
        let ov = Overrides {
            config: self.config.clone(),
            epsilon: self.epsilon,
            stages: self.stage.map(|s| vec![s]),
        };
        let cfg = resolve_config(&layout, &ov)?;
        Ok((layout, cfg))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit one localized mixture model per stage from the training frames.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write per-frame log p-value maps.
    Score {
        #[command(flatten)]
        common: Common,
    },
    /// Filter a method's candidate masks by their NFA.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: String,
    },
    /// Compare candidate and validated masks against ground truth.
    Eval {
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        method: String,
    },
    /// Average evaluation summaries over sequences.
    Report {
        /// Sequence directories (repeatable).
        #[arg(long, required = true)]
        seq: Vec<PathBuf>,
        #[arg(long)]
        method: String,
        /// Also write the table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic sequence.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-axis anomaly displacement in planted standard deviations.
        #[arg(long, default_value_t = 8.0)]
        delta: f64,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--jobs: {e}")))?;
    }
    match cli.command {
        Command::Fit { common, seed } => {
            let (layout, cfg) = common.layout_and_config()?;
            for s in run_fit(&layout, &cfg, seed)? {
                eprintln!(
                    "stage {}: {} -> {} components, {} EM iterations{}",
                    s.stage,
                    s.k_fitted,
                    s.k_kept,
                    s.iterations(),
                    if s.converged { "" } else { " (not converged)" }
                );
                for (i, v) in s.trace.iter().enumerate() {
                    eprintln!("  iter {i:>3}  objective {v:.6}");
                }
                println!("{}", s.model_path.display());
            }
        }
        Command::Score { common } => {
            let (layout, cfg) = common.layout_and_config()?;
            let n = run_score(&layout, &cfg)?;
            println!("scored {n} frames");
        }
        Command::Validate { common, method } => {
            let (layout, cfg) = common.layout_and_config()?;
            let s = run_validate(&layout, &cfg, &method)?;
            println!(
                "{} frames, {} regions, {} accepted, {} rejected",
                s.frames,
                s.regions,
                s.accepted,
                s.regions - s.accepted
            );
        }
        Command::Eval { seq, method } => {
            let layout = SequenceLayout::new(&seq);
            let summary = run_eval(&layout, &method)?;
            print!("{}", accd_cli::report::render(&method, 1, &summary));
        }
        Command::Report { seq, method, out } => {
            let layouts: Vec<_> = seq.iter().map(SequenceLayout::new).collect();
            let table = run_report(&layouts, &method)?;
            print!("{table}");
            if let Some(path) = out {
                std::fs::write(&path, &table).map_err(|e| CliError::Core {
                    step: "report",
                    source: accd_core::Error::Io { path, source: e },
                })?;
            }
        }
        Command::Synth { out, seed, delta } => {
            let params = SynthParams { delta, ..SynthParams::default() };
            let planted = run_synth(&out, &params, seed)?;
            println!(
                "wrote {} planted objects to {} (method {SYNTH_METHOD})",
                planted.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
