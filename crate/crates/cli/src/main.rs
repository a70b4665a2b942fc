//! `myo`: command line driver for the five-classifier study.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use myocontrol::error::ErrorCategory;
use myocontrol::experiment::{self, ClassifierKind, ExperimentConfig, METRIC_NAMES};
use myocontrol::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "myo", version, about = "Synthetic myoelectric control study: train, evaluate, run Fitts' law tests")]
struct Cli {
    /// TOML configuration; every missing field takes its default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "study")]
    out: PathBuf,
    /// Base seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of virtual subjects (overrides the config).
    #[arg(long, global = true)]
    subjects: Option<usize>,
    /// Comma-separated classifiers, e.g. LDA-R,LSTM-V (overrides the config).
    #[arg(long, global = true, value_delimiter = ',')]
    roster: Option<Vec<String>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize ramp and continuous sessions for every subject.
    Generate,
    /// Train the roster and fit proportional-control maps.
    Train,
    /// Decision streams and error rates on the held-out test trial.
    Offline,
    /// Closed-loop Fitts' law runs in Latin-square order.
    Fitts,
    /// RM-ANOVA with post-hoc tests against LDA-R.
    Stats,
    /// PCA of LSTM-V embeddings.
    Latent,
    /// All of the above in order.
    Run,
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Config => 3,
        ErrorCategory::Data => 4,
        ErrorCategory::Training => 5,
        ErrorCategory::Io => 6,
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.subjects {
        cfg.n_virtual_subjects = n;
    }
    if let Some(names) = &cli.roster {
        cfg.roster = names.iter().map(|s| s.parse::<ClassifierKind>()).collect::<Result<_>>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let out = &cli.out;
    match cli.command {
        Command::Generate => experiment::cmd_generate(&cfg, out),
        Command::Train => experiment::cmd_train(&cfg, out),
        Command::Offline => {
            for (subject, reports) in experiment::cmd_offline(&cfg, out)? {
                for r in reports {
                    println!(
                        "subject {subject:02}  {:<7} accuracy {:.3}  total error {:.3}  instability {:.3}",
                        r.classifier, r.accuracy, r.total_error_rate, r.instability
                    );
                }
            }
            Ok(())
        }
        Command::Fitts => {
            for r in experiment::cmd_fitts(&cfg, out)? {
                let order: Vec<&str> = r.order.iter().map(|k| k.name()).collect();
                println!("subject {:02}  order {}", r.subject, order.join(" "));
                for (kind, m) in &r.metrics {
                    println!(
                        "  {:<7} completion {:.2}  movement {:.2} s  throughput {:.3}  instability {:.3}",
                        kind.name(),
                        m.completion_rate,
                        m.movement_time,
                        m.throughput,
                        m.instability
                    );
                }
            }
            Ok(())
        }
        Command::Stats => {
            for s in experiment::cmd_stats(&cfg, out)? {
                println!("{:<18} F({}, {}) = {:.3}  p = {:.4}", s.metric, s.result.df.0, s.result.df.1, s.result.f, s.result.p);
                for ph in &s.result.posthoc {
                    println!(
                        "    {} vs {}: p_adj = {:.4}  d = {:.2} ({:?})",
                        s.classifiers[ph.condition],
                        s.classifiers[ph.baseline],
                        ph.p_adjusted,
                        ph.cohens_d.d,
                        ph.cohens_d.label
                    );
                }
            }
            Ok(())
        }
        Command::Latent => {
            for s in experiment::cmd_latent(&cfg, out)? {
                let counts: Vec<String> = s.counts.iter().map(|(k, n)| format!("{k} {n}")).collect();
                println!("subject {:02}  explained {:?}  points: {}", s.subject, s.explained_variance, counts.join(", "));
            }
            Ok(())
        }
        Command::Run => {
            experiment::run_all(&cfg, out)?;
            println!("study written to {} ({} metrics per classifier)", out.display(), METRIC_NAMES.len());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
