//! Ground truth, threshold metrics and precision/recall sweeps.
//!
//! A pair is predicted same-user when its score is `>= threshold`. Reach
//! counts distinct users owning at least one correctly predicted pair.

use std::collections::{BTreeSet, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pairwise::ScoredPairs;
use crate::sessions::SessionSet;

/// Above this many pairs the sweep uses quantile thresholds.
pub const EXACT_SWEEP_MAX_PAIRS: usize = 100_000;
pub const QUANTILE_POINTS: usize = 1001;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    /// Same-user pairs `(a, b)` with `a < b`.
    pub positive_pairs: BTreeSet<(u32, u32)>,
    pub pair_universe_size: u64,
    session_users: Vec<u32>,
}

impl GroundTruth {
    pub fn is_positive(&self, a: usize, b: usize) -> bool {
        a != b && self.session_users[a] == self.session_users[b]
    }

    pub fn user_of(&self, session: usize) -> u32 {
        self.session_users[session]
    }

    pub fn n_sessions(&self) -> usize {
        self.session_users.len()
    }

    pub fn prevalence(&self) -> f64 {
        self.positive_pairs.len() as f64 / self.pair_universe_size as f64
    }
}

pub fn ground_truth_pairs(set: &SessionSet) -> GroundTruth {
    let session_users: Vec<u32> = set.sessions.iter().map(|s| s.user_id).collect();
    let n = session_users.len();
    let mut by_user: std::collections::BTreeMap<u32, Vec<u32>> = Default::default();
    for (i, &u) in session_users.iter().enumerate() {
        by_user.entry(u).or_default().push(i as u32);
    }
    let positive_pairs = by_user
        .values()
        .flat_map(|ids| {
            ids.iter()
                .enumerate()
                .flat_map(move |(x, &a)| ids[x + 1..].iter().map(move |&b| (a, b)))
        })
        .collect();
    GroundTruth {
        positive_pairs,
        pair_universe_size: (n as u64) * (n as u64).saturating_sub(1) / 2,
        session_users,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub reach: u64,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

impl MetricsPoint {
    fn from_counts(
        threshold: f64,
        predicted: u64,
        correct: u64,
        positives: u64,
        reach: u64,
    ) -> Self {
        let precision = if predicted == 0 {
            0.0
        } else {
            correct as f64 / predicted as f64
        };
        let recall = correct as f64 / positives as f64;
        MetricsPoint {
            threshold,
            precision,
            recall,
            f1: f1_score(precision, recall),
            reach,
        }
    }
}

fn check_compatible(scores: &ScoredPairs, truth: &GroundTruth) -> Result<()> {
    if scores.n_sessions() != truth.n_sessions() {
        return Err(Error::invalid(format!(
            "scores cover {} sessions but ground truth has {}",
            scores.n_sessions(),
            truth.n_sessions()
        )));
    }
    if truth.positive_pairs.is_empty() {
        return Err(Error::invalid("no same-user pairs to identify"));
    }
    Ok(())
}

pub fn metrics_at_threshold(
    scores: &ScoredPairs,
    threshold: f64,
    truth: &GroundTruth,
) -> Result<MetricsPoint> {
    check_compatible(scores, truth)?;
    let mut predicted = 0u64;
    let mut correct = 0u64;
    let mut reached = HashSet::new();
    for (a, b, s) in scores.iter() {
        if s >= threshold {
            predicted += 1;
            if truth.is_positive(a, b) {
                correct += 1;
                reached.insert(truth.user_of(a));
            }
        }
    }
    Ok(MetricsPoint::from_counts(
        threshold,
        predicted,
        correct,
        truth.positive_pairs.len() as u64,
        reached.len() as u64,
    ))
}

/// Points ordered by ascending threshold; recall never increases along it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<MetricsPoint>,
}

impl PrCurve {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "threshold,precision,recall,f1,reach")?;
        for p in &self.points {
            writeln!(
                out,
                "{},{},{},{},{}",
                p.threshold, p.precision, p.recall, p.f1, p.reach
            )?;
        }
        Ok(())
    }
}

/// Candidate thresholds: every distinct score for small inputs, otherwise
/// the distinct values among 1001 evenly spaced order statistics.
fn candidate_thresholds(sorted_asc: &[f64]) -> Vec<f64> {
    let n = sorted_asc.len();
    let mut out: Vec<f64> = if n <= EXACT_SWEEP_MAX_PAIRS {
        sorted_asc.to_vec()
    } else {
        (0..QUANTILE_POINTS)
            .map(|q| {
                let pos = (q as f64 / (QUANTILE_POINTS - 1) as f64 * (n - 1) as f64).round();
                sorted_asc[pos as usize]
            })
            .collect()
    };
    out.dedup();
    out
}

pub fn pr_sweep(scores: &ScoredPairs, truth: &GroundTruth) -> Result<PrCurve> {
    check_compatible(scores, truth)?;
    if scores.is_empty() {
        return Err(Error::invalid("no scored pairs"));
    }
    if scores.scores().iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    // Pairs by descending score; thresholds are consumed from the top so each
    // predicted set is a prefix.
    let mut ranked: Vec<(f64, usize, usize)> = scores.iter().map(|(a, b, s)| (s, a, b)).collect();
    ranked.sort_unstable_by(|x, y| y.0.total_cmp(&x.0));
    let sorted_asc: Vec<f64> = ranked.iter().rev().map(|r| r.0).collect();
    let thresholds = candidate_thresholds(&sorted_asc);

    let positives = truth.positive_pairs.len() as u64;
    let mut reached_users = HashSet::new();
    let mut cursor = 0usize;
    let mut correct = 0u64;
    let mut points = Vec::with_capacity(thresholds.len());
    for &t in thresholds.iter().rev() {
        while cursor < ranked.len() && ranked[cursor].0 >= t {
            let (_, a, b) = ranked[cursor];
            if truth.is_positive(a, b) {
                correct += 1;
                reached_users.insert(truth.user_of(a));
            }
            cursor += 1;
        }
        let reach = reached_users.len() as u64;
        points.push(MetricsPoint::from_counts(
            t,
            cursor as u64,
            correct,
            positives,
            reach,
        ));
    }
    points.reverse();
    Ok(PrCurve { points })
}

/// Highest-F1 point; ties go to the higher threshold.
pub fn best_f1(curve: &PrCurve) -> Result<MetricsPoint> {
    curve
        .points
        .iter()
        .copied()
        .reduce(|best, p| {
            if p.f1 > best.f1 || (p.f1 == best.f1 && p.threshold > best.threshold) {
                p
            } else {
                best
            }
        })
        .ok_or_else(|| Error::invalid("empty curve"))
}
