use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use semid_core::corpus::{
    category_histogram, generate_synthetic, parse_corpus, Category, SynthConfig,
};
use semid_core::defense::{apply_defense, DefenseConfig};
use semid_core::evaluation::{best_f1, ground_truth_pairs, pr_sweep};
use semid_core::harness::{export_report, Experiment, ExperimentConfig};
use semid_core::neural::{
    balanced_training_pairs, score_all_pairs_nn, train, MlpParams, TrainConfig,
};
use semid_core::pairwise::{
    baseline_scores, score_all_pairs_variant, ScoreVariant, DEFAULT_EPSILON,
};
use semid_core::sessions::{build_session_set, PartitionConfig, SessionSet, Strategy};
use semid_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "semid",
    version,
    about = "Semantic identification attacks on browsing logs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse an MSNBC sequence file and print its category histogram.
    Ingest {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Generate a synthetic corpus in the MSNBC sequence format.
    Synth {
        #[arg(long)]
        users: usize,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        len_mean: usize,
        #[arg(long, default_value_t = 1)]
        len_min: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split a corpus into sessions and write the session set as JSON.
    Partition {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        strategy: StrategyArg,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        homepage: i64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score all session pairs and report the best-F1 operating point.
    Attack {
        #[arg(long)]
        sessions: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        /// Multiply instead of divide by the inverse-similarity sums.
        #[arg(long)]
        product_variant: bool,
        /// Session set to train the neural attack on.
        #[arg(long)]
        train: Option<PathBuf>,
        /// Previously saved neural model.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        save_model: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 0.01)]
        learning_rate: f64,
        /// Pair scores as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Precision/recall curve as CSV.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Run a full experiment from a JSON config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Append random noise pages to every session.
    Defend {
        #[arg(long)]
        sessions: PathBuf,
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Homepage,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Pairwise,
    Neural,
    Baseline,
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes)?,
        None => io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

fn read_sessions(path: &Path) -> Result<SessionSet> {
    SessionSet::from_json(&fs::read_to_string(path)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { file, json } => {
            let corpus = parse_corpus(BufReader::new(fs::File::open(&file)?))?;
            let hist = category_histogram(&corpus)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&hist)?);
            } else {
                println!("users\t{}", corpus.traces.len());
                println!("pages\t{}", corpus.total_pages());
                for c in &hist {
                    println!(
                        "{}\t{}\t{}\t{:.3}",
                        c.category,
                        corpus.categories.name(c.category),
                        c.count,
                        c.proportion
                    );
                }
            }
        }
        Command::Synth {
            users,
            alpha,
            seed,
            len_mean,
            len_min,
            out,
        } => {
            let corpus = generate_synthetic(&SynthConfig {
                n_users: users,
                dirichlet_alpha: alpha,
                trace_len_mean: len_mean,
                trace_len_min: len_min,
                seed,
            })?;
            write_output(out.as_deref(), corpus.to_msnbc_string().as_bytes())?;
        }
        Command::Partition {
            input,
            strategy,
            k,
            seed,
            homepage,
            out,
        } => {
            let corpus = parse_corpus(BufReader::new(fs::File::open(&input)?))?;
            let homepage_category = Category::from_one_based(homepage)
                .ok_or_else(|| Error::InvalidInput(format!("homepage category {homepage}")))?;
            let config = PartitionConfig {
                strategy: match strategy {
                    StrategyArg::Homepage => Strategy::Homepage,
                    StrategyArg::Random => Strategy::Random,
                },
                k,
                seed,
                homepage_category,
            };
            let set = build_session_set(&corpus, &config)?;
            eprintln!("{} users, {} sessions", set.users.len(), set.len());
            write_output(out.as_deref(), set.to_json()?.as_bytes())?;
        }
        Command::Attack {
            sessions,
            method,
            seed,
            epsilon,
            product_variant,
            train: train_path,
            model,
            save_model,
            epochs,
            learning_rate,
            out,
            curve,
        } => {
            let set = read_sessions(&sessions)?;
            let variant = if product_variant {
                ScoreVariant::Product
            } else {
                ScoreVariant::Ratio
            };
            let scores = match method {
                MethodArg::Pairwise => score_all_pairs_variant(&set, epsilon, variant)?,
                MethodArg::Baseline => baseline_scores(&set, seed)?,
                MethodArg::Neural => {
                    let params = match (model, train_path) {
                        (Some(m), _) => MlpParams::from_json(&fs::read_to_string(m)?)?,
                        (None, Some(t)) => {
                            let train_set = read_sessions(&t)?;
                            let pairs = balanced_training_pairs(&train_set, seed)?;
                            train(
                                &pairs,
                                &TrainConfig {
                                    seed,
                                    epochs,
                                    learning_rate,
                                    ..TrainConfig::default()
                                },
                            )?
                        }
                        (None, None) => {
                            return Err(Error::InvalidInput(
                                "neural attack needs --model or --train".into(),
                            ))
                        }
                    };
                    if let Some(path) = save_model {
                        fs::write(path, params.to_json()?)?;
                    }
                    score_all_pairs_nn(&params, &set)?
                }
            };
            if let Some(path) = out {
                let mut buf = Vec::new();
                scores.write_csv(&mut buf)?;
                fs::write(path, buf)?;
            }
            let truth = ground_truth_pairs(&set);
            let pr = pr_sweep(&scores, &truth)?;
            if let Some(path) = curve {
                let mut buf = Vec::new();
                pr.write_csv(&mut buf)?;
                fs::write(path, buf)?;
            }
            println!("{}", serde_json::to_string(&best_f1(&pr)?)?);
        }
        Command::Experiment { config, out } => {
            let cfg: ExperimentConfig = serde_json::from_str(&fs::read_to_string(&config)?)?;
            let experiment = Experiment::from_config(cfg)?;
            let result = experiment.run()?;
            let files = export_report(&result, &out)?;
            for cell in &result.report.cells {
                println!(
                    "{}\t{}\tmean f1 {:.4}\tmean precision {:.4}\tmean recall {:.4}\tmean reach {:.1}\tbest f1 {:.4}",
                    cell.sample_size,
                    cell.attack.name(),
                    cell.mean.f1,
                    cell.mean.precision,
                    cell.mean.recall,
                    cell.mean.reach,
                    cell.best.f1,
                );
            }
            eprintln!("wrote {} files to {}", files.len(), out.display());
        }
        Command::Defend {
            sessions,
            p,
            seed,
            out,
        } => {
            let set = read_sessions(&sessions)?;
            let defended = apply_defense(&set, &DefenseConfig { p, seed });
            write_output(out.as_deref(), defended.to_json()?.as_bytes())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
