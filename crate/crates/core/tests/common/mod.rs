#![allow(dead_code)]

use semid_core::corpus::SynthConfig;
use semid_core::harness::{Attack, CorpusSource, ExperimentConfig};
use semid_core::neural::TrainConfig;
use semid_core::pairwise::{ScoreVariant, DEFAULT_EPSILON};
use semid_core::sessions::PartitionConfig;

/// Skewed synthetic corpus: every trace holds at least two 35-page sessions.
pub fn skewed_corpus() -> SynthConfig {
    SynthConfig {
        n_users: 1200,
        dirichlet_alpha: 0.3,
        trace_len_mean: 100,
        trace_len_min: 70,
        seed: 11,
    }
}

pub fn skewed_experiment(
    attacks: Vec<Attack>,
    sizes: Vec<usize>,
    trials: usize,
) -> ExperimentConfig {
    ExperimentConfig {
        corpus: CorpusSource::Synthetic(skewed_corpus()),
        partition: PartitionConfig::random(35, 12),
        sample_sizes: sizes,
        trials,
        attacks,
        defense_p: None,
        train_users: None,
        master_seed: 13,
        epsilon: DEFAULT_EPSILON,
        score_variant: ScoreVariant::Ratio,
        training: TrainConfig::default(),
    }
}

pub fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "[{}] criterion {id}: {name} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
}
