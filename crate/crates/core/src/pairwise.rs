//! All-pairs similarity and the similarity/dissimilarity pair score.
//!
//! For sessions `i` and `j` with cosine similarities `sim`,
//!
//! ```text
//! score(i, j) = sim(i, j) / ( sum_{k != i} 1 / max(sim(i, k), eps)
//!                           + sum_{k != j} 1 / max(sim(j, k), eps) )
//! ```
//!
//! Both sums run over every other session, including the partner. The
//! inverse-similarity row sums are computed once per session in index order,
//! so results do not depend on thread scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{cosine, fingerprint, Fingerprint};
use crate::rng::Rng;
use crate::sessions::SessionSet;

pub const DEFAULT_EPSILON: f64 = 1e-9;

/// Symmetric `n x n` cosine matrix, row-major, unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_fingerprints(fps: &[Fingerprint]) -> Result<Self> {
        let n = fps.len();
        if n < 2 {
            return Err(Error::invalid(
                "similarity matrix needs at least 2 sessions",
            ));
        }
        let mut values = vec![0.0; n * n];
        values.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if i == j {
                    1.0
                } else {
                    // Evaluate with the lower index first so (i,j) and (j,i) agree bitwise.
                    let (a, b) = if i < j { (i, j) } else { (j, i) };
                    cosine(&fps[a], &fps[b])
                };
            }
        });
        Ok(SimilarityMatrix { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    /// `sum_{k != i} 1 / max(sim(i, k), eps)`, accumulated left to right.
    pub fn inverse_row_sum(&self, i: usize, epsilon: f64) -> f64 {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != i)
            .fold(0.0, |acc, (_, &s)| acc + 1.0 / s.max(epsilon))
    }
}

pub fn fingerprints(set: &SessionSet) -> Result<Vec<Fingerprint>> {
    set.sessions.iter().map(fingerprint).collect()
}

pub fn similarity_matrix(set: &SessionSet) -> Result<SimilarityMatrix> {
    SimilarityMatrix::from_fingerprints(&fingerprints(set)?)
}

/// Which combination of similarity and inverse similarity to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreVariant {
    /// Similarity divided by the summed inverse similarities.
    #[default]
    Ratio,
    /// Non-standard alternative: similarity multiplied by the summed inverse
    /// similarities, so pairs that stand apart from the crowd score higher.
    Product,
}

fn combine(sim: f64, inv_i: f64, inv_j: f64, variant: ScoreVariant) -> f64 {
    match variant {
        ScoreVariant::Ratio => sim / (inv_i + inv_j),
        ScoreVariant::Product => sim * (inv_i + inv_j),
    }
}

pub fn pairwise_score(i: usize, j: usize, m: &SimilarityMatrix, epsilon: f64) -> Result<f64> {
    pairwise_score_variant(i, j, m, epsilon, ScoreVariant::Ratio)
}

pub fn pairwise_score_variant(
    i: usize,
    j: usize,
    m: &SimilarityMatrix,
    epsilon: f64,
    variant: ScoreVariant,
) -> Result<f64> {
    if i == j {
        return Err(Error::invalid("pair score of a session with itself"));
    }
    if i >= m.n() || j >= m.n() {
        return Err(Error::invalid(format!("pair ({i}, {j}) out of range")));
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    Ok(combine(
        m.get(a, b),
        m.inverse_row_sum(a, epsilon),
        m.inverse_row_sum(b, epsilon),
        variant,
    ))
}

/// Scores for every unordered pair `(a, b)`, `a < b`, of dense session ids,
/// stored in row-major upper-triangle order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPairs {
    pub attack_name: String,
    n: usize,
    scores: Vec<f64>,
}

impl ScoredPairs {
    pub fn from_fn(
        attack_name: impl Into<String>,
        n: usize,
        f: impl Fn(usize, usize) -> f64 + Sync,
    ) -> Self {
        let scores = (0..n)
            .into_par_iter()
            .flat_map_iter(|a| {
                let f = &f;
                (a + 1..n).map(move |b| f(a, b))
            })
            .collect();
        ScoredPairs {
            attack_name: attack_name.into(),
            n,
            scores,
        }
    }

    pub fn n_sessions(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    fn offset(&self, a: usize) -> usize {
        a * (2 * self.n - a - 1) / 2
    }

    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        if a == b || b >= self.n {
            return None;
        }
        Some(self.scores[self.offset(a) + (b - a - 1)])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n;
        (0..n)
            .flat_map(move |a| (a + 1..n).map(move |b| (a, b)))
            .zip(&self.scores)
            .map(|((a, b), &s)| (a, b, s))
    }

    /// CSV with header `session_a,session_b,score`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "session_a,session_b,score")?;
        for (a, b, s) in self.iter() {
            writeln!(out, "{a},{b},{s}")?;
        }
        Ok(())
    }
}

pub fn score_all_pairs(set: &SessionSet, epsilon: f64) -> Result<ScoredPairs> {
    score_all_pairs_variant(set, epsilon, ScoreVariant::Ratio)
}

pub fn score_all_pairs_variant(
    set: &SessionSet,
    epsilon: f64,
    variant: ScoreVariant,
) -> Result<ScoredPairs> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let m = similarity_matrix(set)?;
    let inv: Vec<f64> = (0..m.n())
        .into_par_iter()
        .map(|i| m.inverse_row_sum(i, epsilon))
        .collect();
    let name = match variant {
        ScoreVariant::Ratio => "pairwise",
        ScoreVariant::Product => "pairwise-product",
    };
    Ok(ScoredPairs::from_fn(name, m.n(), |a, b| {
        combine(m.get(a, b), inv[a], inv[b], variant)
    }))
}

/// Independent uniform `[0, 1)` score per pair, drawn in pair order.
pub fn baseline_scores(set: &SessionSet, seed: u64) -> Result<ScoredPairs> {
    let n = set.len();
    if n < 2 {
        return Err(Error::invalid("baseline needs at least 2 sessions"));
    }
    let mut rng = Rng::seeded(seed);
    let scores = (0..n * (n - 1) / 2).map(|_| rng.uniform()).collect();
    Ok(ScoredPairs {
        attack_name: "baseline".into(),
        n,
        scores,
    })
}
