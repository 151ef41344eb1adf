//! Experiment protocol: sample users per trial, run the attacks, pick each
//! trial's best-F1 operating point, and aggregate over trials.
//!
//! All randomness in a trial comes from streams keyed by
//! `(master_seed, purpose, sample_size, trial_index)`, so any single trial can
//! be rerun on its own and trials can be evaluated in any order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{generate_synthetic, parse_corpus, Corpus, SynthConfig};
use crate::defense::{apply_defense, DefenseConfig};
use crate::error::{Error, Result};
use crate::evaluation::{best_f1, ground_truth_pairs, pr_sweep, MetricsPoint, PrCurve};
use crate::neural::{balanced_training_pairs, score_all_pairs_nn, train, TrainConfig};
use crate::pairwise::{baseline_scores, score_all_pairs_variant, ScoreVariant, DEFAULT_EPSILON};
use crate::rng::{derive_seed, Rng};
use crate::sessions::{build_session_set, PartitionConfig, SessionSet, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attack {
    Pairwise,
    Neural,
    Baseline,
}

impl Attack {
    pub fn name(self) -> &'static str {
        match self {
            Attack::Pairwise => "pairwise",
            Attack::Neural => "neural",
            Attack::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for Attack {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pairwise" => Ok(Attack::Pairwise),
            "neural" => Ok(Attack::Neural),
            "baseline" => Ok(Attack::Baseline),
            other => Err(Error::invalid(format!("unknown attack {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusSource {
    /// Path to an MSNBC sequence file.
    Msnbc(PathBuf),
    Synthetic(SynthConfig),
}

impl CorpusSource {
    pub fn load(&self) -> Result<Corpus> {
        match self {
            CorpusSource::Msnbc(path) => {
                let file = fs::File::open(path)?;
                parse_corpus(std::io::BufReader::new(file))
            }
            CorpusSource::Synthetic(cfg) => generate_synthetic(cfg),
        }
    }
}

/// Users held out to train the neural attack, by partition strategy.
pub const DEFAULT_TRAIN_USERS_RANDOM: usize = 100;
pub const DEFAULT_TRAIN_USERS_HOMEPAGE: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub corpus: CorpusSource,
    pub partition: PartitionConfig,
    #[serde(default = "default_sample_sizes")]
    pub sample_sizes: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_attacks")]
    pub attacks: Vec<Attack>,
    #[serde(default)]
    pub defense_p: Option<usize>,
    /// Defaults to 100 for random partition and 50 for homepage partition.
    #[serde(default)]
    pub train_users: Option<usize>,
    pub master_seed: u64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub score_variant: ScoreVariant,
    #[serde(default)]
    pub training: TrainConfig,
}

fn default_sample_sizes() -> Vec<usize> {
    vec![300, 500, 750, 1000]
}

fn default_trials() -> usize {
    25
}

fn default_attacks() -> Vec<Attack> {
    vec![Attack::Pairwise, Attack::Neural, Attack::Baseline]
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl ExperimentConfig {
    pub fn train_users(&self) -> usize {
        self.train_users.unwrap_or(match self.partition.strategy {
            Strategy::Random => DEFAULT_TRAIN_USERS_RANDOM,
            Strategy::Homepage => DEFAULT_TRAIN_USERS_HOMEPAGE,
        })
    }

    fn uses_neural(&self) -> bool {
        self.attacks.contains(&Attack::Neural)
    }

    pub fn validate(&self) -> Result<()> {
        self.partition.validate()?;
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.attacks.is_empty() {
            return Err(Error::invalid("no attacks selected"));
        }
        if self.partition.strategy == Strategy::Random && self.sample_sizes.is_empty() {
            return Err(Error::invalid("no sample sizes"));
        }
        if self.sample_sizes.contains(&0) {
            return Err(Error::invalid("sample sizes must be positive"));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if self.uses_neural() {
            self.training.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub attack: Attack,
    pub best: MetricsPoint,
    pub curve: PrCurve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub sample_size: usize,
    pub trial_index: usize,
    pub sampled_users: Vec<u32>,
    pub training_users: Vec<u32>,
    pub prevalence: f64,
    pub outcomes: Vec<AttackOutcome>,
}

impl TrialReport {
    pub fn outcome(&self, attack: Attack) -> Option<&AttackOutcome> {
        self.outcomes.iter().find(|o| o.attack == attack)
    }

    pub fn summary(&self) -> TrialSummary {
        TrialSummary {
            sample_size: self.sample_size,
            trial_index: self.trial_index,
            sampled_users: self.sampled_users.clone(),
            training_users: self.training_users.clone(),
            prevalence: self.prevalence,
            best: self.outcomes.iter().map(|o| (o.attack, o.best)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub sample_size: usize,
    pub trial_index: usize,
    pub sampled_users: Vec<u32>,
    pub training_users: Vec<u32>,
    pub prevalence: f64,
    pub best: BTreeMap<Attack, MetricsPoint>,
}

/// Trial-averaged metrics at each trial's own best-F1 point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub reach: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub sample_size: usize,
    pub attack: Attack,
    pub mean: MeanMetrics,
    /// The single most successful trial (highest best-F1).
    pub best: MetricsPoint,
    pub best_trial: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub eligible_users: usize,
    pub cells: Vec<CellSummary>,
    pub trials: Vec<TrialSummary>,
}

impl ExperimentReport {
    pub fn cell(&self, sample_size: usize, attack: Attack) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.sample_size == sample_size && c.attack == attack)
    }
}

/// A finished run: the report plus every trial's full curves.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub trials: Vec<TrialReport>,
}

// Stream purposes.
const EVAL_SAMPLE: u64 = 0;
const TRAIN_SAMPLE: u64 = 1;
const BASELINE: u64 = 2;
const TRAINING: u64 = 3;
const DEFENSE: u64 = 4;
const NEGATIVES: u64 = 5;

/// A configured experiment over a partitioned corpus.
pub struct Experiment {
    config: ExperimentConfig,
    sessions: SessionSet,
}

impl Experiment {
    pub fn new(config: ExperimentConfig, corpus: &Corpus) -> Result<Self> {
        config.validate()?;
        let sessions = build_session_set(corpus, &config.partition)?;
        Ok(Experiment { config, sessions })
    }

    pub fn from_config(config: ExperimentConfig) -> Result<Self> {
        let corpus = config.corpus.load()?;
        Experiment::new(config, &corpus)
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn eligible_sessions(&self) -> &SessionSet {
        &self.sessions
    }

    fn train_count(&self) -> usize {
        if self.config.uses_neural() {
            self.config.train_users()
        } else {
            0
        }
    }

    /// Sample sizes actually evaluated. Homepage experiments use every
    /// eligible user not held out for training.
    pub fn sample_sizes(&self) -> Vec<usize> {
        match self.config.partition.strategy {
            Strategy::Random => self.config.sample_sizes.clone(),
            Strategy::Homepage => {
                vec![self.sessions.users.len().saturating_sub(self.train_count())]
            }
        }
    }

    fn seed(&self, purpose: u64, sample_size: usize, trial_index: usize) -> u64 {
        derive_seed(
            self.config.master_seed,
            &[purpose, sample_size as u64, trial_index as u64],
        )
    }

    fn draw_users(&self, sample_size: usize, trial_index: usize) -> Result<(Vec<u32>, Vec<u32>)> {
        let eligible = &self.sessions.users;
        let train_count = self.train_count();
        if sample_size + train_count > eligible.len() || sample_size < 2 {
            return Err(Error::invalid(format!(
                "need {sample_size} evaluation + {train_count} training users, \
                 only {} eligible",
                eligible.len()
            )));
        }
        let mut eval_rng = Rng::seeded(self.seed(EVAL_SAMPLE, sample_size, trial_index));
        let mut train_rng = Rng::seeded(self.seed(TRAIN_SAMPLE, sample_size, trial_index));
        let pick = |idx: Vec<usize>, pool: &[u32]| -> Vec<u32> {
            let mut users: Vec<u32> = idx.into_iter().map(|i| pool[i]).collect();
            users.sort_unstable();
            users
        };
        match self.config.partition.strategy {
            Strategy::Random => {
                let eval = pick(
                    eval_rng.sample_indices(eligible.len(), sample_size),
                    eligible,
                );
                let rest: Vec<u32> = eligible
                    .iter()
                    .copied()
                    .filter(|u| eval.binary_search(u).is_err())
                    .collect();
                let train = pick(train_rng.sample_indices(rest.len(), train_count), &rest);
                Ok((eval, train))
            }
            Strategy::Homepage => {
                let train = pick(
                    train_rng.sample_indices(eligible.len(), train_count),
                    eligible,
                );
                let eval = eligible
                    .iter()
                    .copied()
                    .filter(|u| train.binary_search(u).is_err())
                    .collect();
                Ok((eval, train))
            }
        }
    }

    pub fn run_trial(&self, sample_size: usize, trial_index: usize) -> Result<TrialReport> {
        let (sampled_users, training_users) = self.draw_users(sample_size, trial_index)?;
        let mut eval = self.sessions.restrict_to(&sampled_users);
        if let Some(p) = self.config.defense_p {
            let seed = self.seed(DEFENSE, sample_size, trial_index);
            eval = apply_defense(&eval, &DefenseConfig { p, seed });
        }
        let truth = ground_truth_pairs(&eval);

        let mut outcomes = Vec::with_capacity(self.config.attacks.len());
        for &attack in &self.config.attacks {
            let scores = match attack {
                Attack::Pairwise => {
                    score_all_pairs_variant(&eval, self.config.epsilon, self.config.score_variant)?
                }
                Attack::Baseline => {
                    baseline_scores(&eval, self.seed(BASELINE, sample_size, trial_index))?
                }
                Attack::Neural => {
                    let train_set = self.sessions.restrict_to(&training_users);
                    let pairs = balanced_training_pairs(
                        &train_set,
                        self.seed(NEGATIVES, sample_size, trial_index),
                    )?;
                    let cfg = TrainConfig {
                        seed: derive_seed(
                            self.seed(TRAINING, sample_size, trial_index),
                            &[self.config.training.seed],
                        ),
                        ..self.config.training
                    };
                    let model = train(&pairs, &cfg)?;
                    score_all_pairs_nn(&model, &eval)?
                }
            };
            let curve = pr_sweep(&scores, &truth)?;
            let best = best_f1(&curve)?;
            outcomes.push(AttackOutcome {
                attack,
                best,
                curve,
            });
        }
        Ok(TrialReport {
            sample_size,
            trial_index,
            sampled_users,
            training_users,
            prevalence: truth.prevalence(),
            outcomes,
        })
    }

    pub fn run(&self) -> Result<ExperimentRun> {
        let mut trials = Vec::new();
        for size in self.sample_sizes() {
            for t in 0..self.config.trials {
                trials.push(self.run_trial(size, t)?);
            }
        }
        let cells = aggregate(&self.sample_sizes(), &self.config.attacks, &trials);
        Ok(ExperimentRun {
            report: ExperimentReport {
                config: self.config.clone(),
                eligible_users: self.sessions.users.len(),
                cells,
                trials: trials.iter().map(TrialReport::summary).collect(),
            },
            trials,
        })
    }
}

fn aggregate(sizes: &[usize], attacks: &[Attack], trials: &[TrialReport]) -> Vec<CellSummary> {
    let mut cells = Vec::new();
    for &size in sizes {
        for &attack in attacks {
            let points: Vec<(usize, MetricsPoint)> = trials
                .iter()
                .filter(|t| t.sample_size == size)
                .filter_map(|t| t.outcome(attack).map(|o| (t.trial_index, o.best)))
                .collect();
            if points.is_empty() {
                continue;
            }
            let n = points.len() as f64;
            let mean =
                |f: fn(&MetricsPoint) -> f64| points.iter().map(|(_, p)| f(p)).sum::<f64>() / n;
            let (best_trial, best) = points
                .iter()
                .copied()
                .reduce(|a, b| if b.1.f1 > a.1.f1 { b } else { a })
                .expect("non-empty");
            cells.push(CellSummary {
                sample_size: size,
                attack,
                mean: MeanMetrics {
                    threshold: mean(|p| p.threshold),
                    precision: mean(|p| p.precision),
                    recall: mean(|p| p.recall),
                    f1: mean(|p| p.f1),
                    reach: mean(|p| p.reach as f64),
                },
                best,
                best_trial,
            });
        }
    }
    cells
}

pub fn run_experiment(config: ExperimentConfig) -> Result<ExperimentRun> {
    Experiment::from_config(config)?.run()
}

pub fn curve_file_name(attack: Attack, sample_size: usize, trial_index: usize) -> String {
    format!("{}_{}_{}.csv", attack.name(), sample_size, trial_index)
}

/// Writes `report.json` and one `{attack}_{size}_{trial}.csv` curve per trial
/// into `dir`, returning the paths written.
pub fn export_report(run: &ExperimentRun, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let report_path = dir.join("report.json");
    let mut json = serde_json::to_string_pretty(&run.report)?;
    json.push('\n');
    fs::write(&report_path, json)?;
    written.push(report_path);
    for trial in &run.trials {
        for outcome in &trial.outcomes {
            let path = dir.join(curve_file_name(
                outcome.attack,
                trial.sample_size,
                trial.trial_index,
            ));
            let mut buf = Vec::new();
            outcome.curve.write_csv(&mut buf)?;
            fs::write(&path, buf)?;
            written.push(path);
        }
    }
    Ok(written)
}

pub fn load_report(path: &Path) -> Result<ExperimentReport> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
