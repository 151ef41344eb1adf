//! Category-proportion fingerprints and cosine similarity.

use serde::{Deserialize, Serialize};

use crate::corpus::{Category, NUM_CATEGORIES};
use crate::error::{Error, Result};
use crate::sessions::Session;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fingerprint {
    proportions: [f64; NUM_CATEGORIES],
}

impl Fingerprint {
    pub fn from_pages(pages: &[Category]) -> Result<Self> {
        if pages.is_empty() {
            return Err(Error::invalid("fingerprint of an empty session"));
        }
        let mut counts = [0usize; NUM_CATEGORIES];
        for p in pages {
            counts[p.index()] += 1;
        }
        let len = pages.len() as f64;
        Ok(Fingerprint {
            proportions: counts.map(|c| c as f64 / len),
        })
    }

    pub fn proportions(&self) -> &[f64; NUM_CATEGORIES] {
        &self.proportions
    }

    fn norm_squared(&self) -> f64 {
        self.proportions.iter().map(|x| x * x).sum()
    }
}

pub fn fingerprint(session: &Session) -> Result<Fingerprint> {
    Fingerprint::from_pages(&session.pages)
}

/// Cosine similarity clamped to `[0, 1]`.
pub fn cosine(a: &Fingerprint, b: &Fingerprint) -> f64 {
    let dot: f64 = a
        .proportions
        .iter()
        .zip(&b.proportions)
        .map(|(x, y)| x * y)
        .sum();
    // sqrt(|a|^2 |b|^2) makes cosine(f, f) exactly 1.
    (dot / (a.norm_squared() * b.norm_squared()).sqrt()).clamp(0.0, 1.0)
}
