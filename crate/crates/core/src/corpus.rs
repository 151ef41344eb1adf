//! Categorized browsing traces: the MSNBC sequence format, histograms, and a
//! seeded synthetic generator.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const NUM_CATEGORIES: usize = 17;

/// Category labels in the order of the published page-view distribution.
/// Multi-word labels are written as single tokens so they survive the
/// whitespace-separated header line.
pub const DEFAULT_CATEGORY_NAMES: [&str; NUM_CATEGORIES] = [
    "frontpage",
    "news",
    "tech",
    "local",
    "opinion",
    "on-air",
    "misc",
    "weather",
    "health",
    "living",
    "business",
    "sports",
    "summary",
    "bbs",
    "travel",
    "msn-news",
    "msn-sports",
];

/// A page category, stored 0-based. Files and user-facing output are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Category(u8);

impl Category {
    pub fn from_index(index: usize) -> Option<Self> {
        (index < NUM_CATEGORIES).then_some(Category(index as u8))
    }

    pub fn from_one_based(value: i64) -> Option<Self> {
        if (1..=NUM_CATEGORIES as i64).contains(&value) {
            Some(Category((value - 1) as u8))
        } else {
            None
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn one_based(self) -> u8 {
        self.0 + 1
    }

    pub fn all() -> impl Iterator<Item = Category> {
        (0..NUM_CATEGORIES as u8).map(Category)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.one_based())
    }
}

impl Serialize for Category {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.one_based())
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Category::from_one_based(v).ok_or_else(|| {
            serde::de::Error::custom(format!("category {v} outside 1..={NUM_CATEGORIES}"))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct CategoryTable {
    names: Vec<String>,
}

impl CategoryTable {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.len() != NUM_CATEGORIES {
            return Err(Error::invalid(format!(
                "expected {NUM_CATEGORIES} category names, got {}",
                names.len()
            )));
        }
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() || name.chars().any(char::is_whitespace) {
                return Err(Error::invalid(format!("bad category name {name:?}")));
            }
            if names[..i].contains(name) {
                return Err(Error::invalid(format!("duplicate category name {name:?}")));
            }
        }
        Ok(CategoryTable { names })
    }

    pub fn name(&self, category: Category) -> &str {
        &self.names[category.index()]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn lookup(&self, name: &str) -> Option<Category> {
        self.names
            .iter()
            .position(|n| n == name)
            .and_then(Category::from_index)
    }
}

impl Default for CategoryTable {
    fn default() -> Self {
        CategoryTable {
            names: DEFAULT_CATEGORY_NAMES
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl TryFrom<Vec<String>> for CategoryTable {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        CategoryTable::new(names)
    }
}

impl From<CategoryTable> for Vec<String> {
    fn from(t: CategoryTable) -> Self {
        t.names
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserTrace {
    pub user_id: u32,
    pub pages: Vec<Category>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    MsnbcFile,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub categories: CategoryTable,
    pub traces: Vec<UserTrace>,
    pub provenance: Provenance,
}

impl Corpus {
    pub fn total_pages(&self) -> usize {
        self.traces.iter().map(|t| t.pages.len()).sum()
    }

    /// Writes the corpus in the MSNBC sequence format; `parse_corpus` reads it back.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "% Different categories found in input file:")?;
        writeln!(out)?;
        writeln!(out, "{}", self.categories.names().join(" "))?;
        writeln!(out)?;
        writeln!(out, "% Sequences:")?;
        writeln!(out)?;
        for trace in &self.traces {
            let mut first = true;
            for page in &trace.pages {
                if !first {
                    out.write_all(b" ")?;
                }
                first = false;
                write!(out, "{}", page.one_based())?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn to_msnbc_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// Parses an MSNBC sequence file.
///
/// `%` lines are comments. The first non-comment, non-blank line holds the
/// category names; each later line is one user's visits. Blank lines are
/// accepted before the first user and at the end of the file, but a blank
/// line between two users is an error because it would shift user ids.
pub fn parse_corpus<R: BufRead>(input: R) -> Result<Corpus> {
    let mut categories: Option<CategoryTable> = None;
    let mut traces = Vec::new();
    let mut pending_blank: Option<usize> = None;

    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.starts_with('%') {
            continue;
        }
        let trimmed = line.trim();
        if trimmed.is_empty() {
            if !traces.is_empty() && pending_blank.is_none() {
                pending_blank = Some(line_no);
            }
            continue;
        }
        if categories.is_none() {
            let names = trimmed.split_whitespace().map(str::to_owned).collect();
            categories =
                Some(CategoryTable::new(names).map_err(|e| Error::parse(line_no, e.to_string()))?);
            continue;
        }
        if let Some(blank) = pending_blank {
            return Err(Error::parse(blank, "empty data line"));
        }
        let pages = trimmed
            .split_whitespace()
            .map(|tok| {
                let v: i64 = tok
                    .parse()
                    .map_err(|_| Error::parse(line_no, format!("malformed integer {tok:?}")))?;
                Category::from_one_based(v).ok_or_else(|| {
                    Error::parse(
                        line_no,
                        format!("category {v} outside 1..={NUM_CATEGORIES}"),
                    )
                })
            })
            .collect::<Result<Vec<_>>>()?;
        traces.push(UserTrace {
            user_id: traces.len() as u32,
            pages,
        });
    }

    let categories = categories.ok_or_else(|| Error::parse(0, "missing category header"))?;
    Ok(Corpus {
        categories,
        traces,
        provenance: Provenance::MsnbcFile,
    })
}

pub fn parse_corpus_str(text: &str) -> Result<Corpus> {
    parse_corpus(text.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub category: Category,
    pub count: u64,
    pub proportion: f64,
}

/// Page-view counts and proportions per category, in category order.
pub fn category_histogram(corpus: &Corpus) -> Result<Vec<CategoryCount>> {
    let mut counts = [0u64; NUM_CATEGORIES];
    for page in corpus.traces.iter().flat_map(|t| &t.pages) {
        counts[page.index()] += 1;
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::invalid("histogram of an empty corpus"));
    }
    Ok(Category::all()
        .map(|c| CategoryCount {
            category: c,
            count: counts[c.index()],
            proportion: counts[c.index()] as f64 / total as f64,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_users: usize,
    pub dirichlet_alpha: f64,
    pub trace_len_mean: usize,
    pub trace_len_min: usize,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return Err(Error::invalid("n_users must be positive"));
        }
        if !(self.dirichlet_alpha > 0.0 && self.dirichlet_alpha.is_finite()) {
            return Err(Error::invalid(
                "dirichlet_alpha must be positive and finite",
            ));
        }
        if self.trace_len_min == 0 || self.trace_len_mean == 0 {
            return Err(Error::invalid("trace lengths must be positive"));
        }
        if self.trace_len_min > self.trace_len_mean {
            return Err(Error::invalid("trace_len_min exceeds trace_len_mean"));
        }
        Ok(())
    }
}

/// Each user gets a private category distribution from a symmetric Dirichlet,
/// a geometric trace length clamped below at `trace_len_min`, and pages drawn
/// independently from that distribution. User `u` draws from stream `(seed, u)`.
pub fn generate_synthetic(config: &SynthConfig) -> Result<Corpus> {
    config.validate()?;
    let traces = (0..config.n_users)
        .map(|u| {
            let mut rng = Rng::stream(config.seed, &[u as u64]);
            let prefs = rng.dirichlet(config.dirichlet_alpha, NUM_CATEGORIES);
            let len =
                (rng.geometric(config.trace_len_mean as f64) as usize).max(config.trace_len_min);
            let pages = (0..len)
                .map(|_| Category(rng.categorical(&prefs) as u8))
                .collect();
            UserTrace {
                user_id: u as u32,
                pages,
            }
        })
        .collect();
    Ok(Corpus {
        categories: CategoryTable::default(),
        traces,
        provenance: Provenance::Synthetic,
    })
}
