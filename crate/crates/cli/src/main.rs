//! `exact`: build challenges, run explanation methods against them and
//! report leaderboards.
//!
//! Exit codes: 0 success, 1 other failure, 2 invalid input, 3 explainer
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use exact_core::explainers::{ExternalSpec, MethodSpec};
use exact_core::harness::{
    build_challenge, calibrate_alpha, explain_challenge, generate_challenge, read_leaderboard, run_challenge,
    score_run, self_test, train_challenge, update_leaderboard, ChallengeManifest, RunOptions, ScoreReport, ALPHA_GRID,
};
use exact_core::models::{ModelKind, ModelSpec, TrainConfig};
use exact_core::reporting::{render_leaderboard, render_panel, render_report_summary, LeaderboardFormat, PanelSpec};
use exact_core::tris::{BackgroundKind, Scenario, TrisConfig};
use exact_core::Error;

#[derive(Parser)]
#[command(name = "exact", version, about = "Ground-truth benchmarks for explanation methods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct MethodArgs {
    /// Method id (e.g. `gradient`), inline JSON, or a path to a JSON spec.
    #[arg(long)]
    method: Option<String>,
    /// External explainer executable; replaces --method.
    #[arg(long)]
    plugin: Option<PathBuf>,
    /// Deadline for --plugin, in seconds.
    #[arg(long, default_value_t = 600.0)]
    timeout: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the dataset for a manifest and lay out the challenge directory.
    Generate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the challenge model on the public split.
    Train {
        #[arg(long)]
        challenge: PathBuf,
    },
    /// Generate and train in one step.
    Build {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute attributions on the test split; prints the run id.
    Explain {
        #[arg(long)]
        challenge: PathBuf,
        #[command(flatten)]
        method: MethodArgs,
    },
    /// Score a run and enter it on the leaderboard.
    Score {
        #[arg(long)]
        challenge: PathBuf,
        #[arg(long)]
        run: String,
    },
    /// Explain, score and rank in one step.
    Run {
        #[arg(long)]
        challenge: PathBuf,
        #[command(flatten)]
        method: MethodArgs,
    },
    /// Print the ranked best run per method.
    Leaderboard {
        #[arg(long)]
        challenge: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Image grid of samples, ground truth and attributions.
    Panel {
        #[arg(long)]
        challenge: PathBuf,
        /// Test-split positions, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        samples: Vec<usize>,
        /// Run ids or ranked method names, comma separated.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        shared_scale: bool,
    },
    /// Oracle and random-baseline checks on small challenges of every kind.
    Selftest {
        /// Working directory; a temporary one is used when omitted.
        #[arg(long)]
        work: Option<PathBuf>,
    },
    /// Smallest signal weight at which a model reaches the target accuracy.
    Calibrate {
        #[arg(long, value_enum)]
        scenario: ScenarioArg,
        #[arg(long, value_enum)]
        background: BackgroundArg,
        #[arg(long, default_value_t = 64)]
        px: usize,
        #[arg(long, value_enum, default_value_t = ModelArg::Cnn)]
        model: ModelArg,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0.9)]
        target: f64,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Signal weights to try, ascending; defaults to the standard grid.
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Lin,
    Mult,
    Rigid,
    Xor,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackgroundArg {
    White,
    Corr,
    Image,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Llr,
    Mlp,
    Cnn,
}

fn parse_method(args: &MethodArgs) -> exact_core::Result<MethodSpec> {
    if let Some(exe) = &args.plugin {
        return Ok(MethodSpec::External(ExternalSpec { executable: exe.clone(), timeout_secs: args.timeout }));
    }
    let text = args.method.as_deref().ok_or_else(|| Error::Config("give --method or --plugin".into()))?;
    let json = if text.trim_start().starts_with('{') {
        text.to_string()
    } else if Path::new(text).is_file() {
        std::fs::read_to_string(text).map_err(|e| Error::Config(format!("{text}: {e}")))?
    } else {
        return MethodSpec::from_id(text);
    };
    serde_json::from_str(&json).map_err(|e| Error::Config(format!("method spec: {e}")))
}

fn print_report(report: &ScoreReport) {
    print!("{}", render_report_summary(report));
}

fn execute(cmd: Command) -> exact_core::Result<()> {
    match cmd {
        Command::Generate { manifest, out } => {
            let ch = generate_challenge(&ChallengeManifest::from_file(&manifest)?, &out)?;
            println!(
                "challenge {} (dataset {}): {} train, {} val, {} test",
                ch.info.challenge_id, ch.info.dataset_id, ch.info.train_count, ch.info.val_count, ch.info.test_count
            );
        }
        Command::Train { challenge } => report_model(&train_challenge(&challenge)?),
        Command::Build { manifest, out } => report_model(&build_challenge(&ChallengeManifest::from_file(&manifest)?, &out)?),
        Command::Explain { challenge, method } => {
            println!("{}", explain_challenge(&challenge, &parse_method(&method)?, RunOptions::default())?);
        }
        Command::Score { challenge, run } => {
            let report = score_run(&challenge, &run)?;
            update_leaderboard(&challenge, &report)?;
            print_report(&report);
        }
        Command::Run { challenge, method } => {
            print_report(&run_challenge(&challenge, &parse_method(&method)?, RunOptions::default())?);
        }
        Command::Leaderboard { challenge, format } => {
            let format = match format {
                Format::Table => LeaderboardFormat::Table,
                Format::Json => LeaderboardFormat::Json,
                Format::Csv => LeaderboardFormat::Csv,
            };
            print!("{}", render_leaderboard(&read_leaderboard(&challenge)?, format));
        }
        Command::Panel { challenge, samples, methods, out, shared_scale } => {
            let path = render_panel(&challenge, &PanelSpec { samples, methods, output: out, shared_scale })?;
            println!("{}", path.display());
        }
        Command::Selftest { work } => {
            let tmp;
            let dir = match work {
                Some(d) => d,
                None => {
                    tmp = std::env::temp_dir().join(format!("exact-selftest-{}", std::process::id()));
                    tmp
                }
            };
            let checks = self_test(&dir);
            if dir.starts_with(std::env::temp_dir()) {
                let _ = std::fs::remove_dir_all(&dir);
            }
            let checks = checks?;
            let mut failed = 0;
            for c in &checks {
                println!(
                    "{} {} {} {}: {:.6} (expected {:.6} +/- {:.1e})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.challenge,
                    c.method,
                    c.metric,
                    c.value,
                    c.expected,
                    c.tolerance
                );
                failed += usize::from(!c.passed);
            }
            if failed > 0 {
                eprintln!("{failed} of {} self-test checks failed", checks.len());
                std::process::exit(1);
            }
        }
        Command::Calibrate { scenario, background, px, model, samples, target, epochs, corpus, alphas } => {
            let scenario = match scenario {
                ScenarioArg::Lin => Scenario::Lin,
                ScenarioArg::Mult => Scenario::Mult,
                ScenarioArg::Rigid => Scenario::Rigid,
                ScenarioArg::Xor => Scenario::Xor,
            };
            let background = match background {
                BackgroundArg::White => BackgroundKind::White,
                BackgroundArg::Corr => BackgroundKind::Corr,
                BackgroundArg::Image => BackgroundKind::Image,
            };
            let kind = match model {
                ModelArg::Llr => ModelKind::Llr,
                ModelArg::Mlp => ModelKind::Mlp,
                ModelArg::Cnn => ModelKind::Cnn,
            };
            let mut cfg = TrisConfig::new(scenario, background, px);
            cfg.n_samples = samples;
            cfg.corpus_dir = corpus;
            let mut training = TrainConfig::default();
            if let Some(e) = epochs {
                training.epochs = e;
            }
            let alphas = if alphas.is_empty() { ALPHA_GRID.to_vec() } else { alphas };
            let cal = calibrate_alpha(&cfg, &ModelSpec::default_for(kind, px, px), &training, &alphas, target)?;
            println!("{}", serde_json::to_string_pretty(&cal).expect("calibration serializes"));
        }
    }
    Ok(())
}

fn report_model(ch: &exact_core::harness::Challenge) {
    if let Some(m) = &ch.info.model {
        println!(
            "challenge {}: {} model, {} parameters, best epoch {}, val accuracy {:.4}, test accuracy {:.4}",
            ch.info.challenge_id, m.kind, m.parameter_count, m.best_epoch, m.val_accuracy, m.test_accuracy
        );
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.class());
            ExitCode::from(if e.is_explainer_failure() {
                3
            } else if e.is_validation() {
                2
            } else {
                1
            })
        }
    }
}
