//! Splitting user traces into sessions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Category, Corpus, UserTrace};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    #[serde(rename = "id")]
    pub session_id: u32,
    #[serde(rename = "user")]
    pub user_id: u32,
    pub pages: Vec<Category>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Homepage,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub strategy: Strategy,
    /// Minimum session length (homepage) or exact session length (random).
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_homepage")]
    pub homepage_category: Category,
}

fn default_homepage() -> Category {
    Category::from_one_based(1).expect("1 is a valid category")
}

impl PartitionConfig {
    pub fn random(k: usize, seed: u64) -> Self {
        PartitionConfig {
            strategy: Strategy::Random,
            k,
            seed,
            homepage_category: default_homepage(),
        }
    }

    pub fn homepage(k: usize) -> Self {
        PartitionConfig {
            strategy: Strategy::Homepage,
            k,
            seed: 0,
            homepage_category: default_homepage(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("partition k must be at least 1"));
        }
        Ok(())
    }
}

/// Sessions with dense ids `0..len`; every represented user owns at least two.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSet {
    pub users: Vec<u32>,
    pub sessions: Vec<Session>,
}

impl SessionSet {
    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    /// Keeps the sessions of `users` (in set order) and renumbers ids densely.
    pub fn restrict_to(&self, users: &[u32]) -> SessionSet {
        let keep: std::collections::HashSet<u32> = users.iter().copied().collect();
        let sessions: Vec<Session> = self
            .sessions
            .iter()
            .filter(|s| keep.contains(&s.user_id))
            .enumerate()
            .map(|(i, s)| Session {
                session_id: i as u32,
                ..s.clone()
            })
            .collect();
        SessionSet {
            users: self
                .users
                .iter()
                .copied()
                .filter(|u| keep.contains(u))
                .collect(),
            sessions,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: SessionSet = serde_json::from_str(text)?;
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let mut per_user: BTreeMap<u32, usize> = BTreeMap::new();
        for (i, s) in self.sessions.iter().enumerate() {
            if s.session_id as usize != i {
                return Err(Error::invalid(format!(
                    "session ids must be dense: position {i} has id {}",
                    s.session_id
                )));
            }
            if s.pages.is_empty() {
                return Err(Error::invalid(format!("session {i} is empty")));
            }
            *per_user.entry(s.user_id).or_default() += 1;
        }
        let mut listed = self.users.clone();
        listed.sort_unstable();
        if !listed.iter().copied().eq(per_user.keys().copied()) {
            return Err(Error::invalid("user list does not match session owners"));
        }
        if let Some((u, _)) = per_user.iter().find(|(_, &n)| n < 2) {
            return Err(Error::invalid(format!(
                "user {u} has fewer than 2 sessions"
            )));
        }
        Ok(())
    }
}

/// Splits at every homepage visit, dropping the homepage pages themselves
/// and any segment shorter than `k`. Returned sessions carry id 0.
pub fn homepage_partition(trace: &UserTrace, k: usize, homepage: Category) -> Vec<Session> {
    trace
        .pages
        .split(|&p| p == homepage)
        .filter(|seg| !seg.is_empty() && seg.len() >= k)
        .map(|seg| Session {
            session_id: 0,
            user_id: trace.user_id,
            pages: seg.to_vec(),
        })
        .collect()
}

/// Repeatedly draws `k` pages without replacement until fewer than `k`
/// remain. Pages inside a session keep their trace order.
pub fn random_partition(trace: &UserTrace, k: usize, rng: &mut Rng) -> Vec<Session> {
    assert!(k >= 1, "k must be at least 1");
    let mut order: Vec<usize> = (0..trace.pages.len()).collect();
    let count = order.len() / k;
    // Drawing k at a time without replacement is a prefix of a uniform shuffle.
    for i in 0..count * k {
        let j = i + rng.below_usize(order.len() - i);
        order.swap(i, j);
    }
    order[..count * k]
        .chunks(k)
        .map(|chunk| {
            let mut idx = chunk.to_vec();
            idx.sort_unstable();
            Session {
                session_id: 0,
                user_id: trace.user_id,
                pages: idx.into_iter().map(|i| trace.pages[i]).collect(),
            }
        })
        .collect()
}

/// Partitions every trace and keeps only users with two or more sessions.
/// Random partition of user `u` draws from stream `(seed, u)`.
pub fn build_session_set(corpus: &Corpus, config: &PartitionConfig) -> Result<SessionSet> {
    config.validate()?;
    let mut users = Vec::new();
    let mut sessions = Vec::new();
    for trace in &corpus.traces {
        let parts = match config.strategy {
            Strategy::Homepage => homepage_partition(trace, config.k, config.homepage_category),
            Strategy::Random => {
                let mut rng = Rng::stream(config.seed, &[trace.user_id as u64]);
                random_partition(trace, config.k, &mut rng)
            }
        };
        if parts.len() < 2 {
            continue;
        }
        users.push(trace.user_id);
        for mut s in parts {
            s.session_id = sessions.len() as u32;
            sessions.push(s);
        }
    }
    Ok(SessionSet { users, sessions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CategoryTable, Provenance};

    fn cat(v: i64) -> Category {
        Category::from_one_based(v).unwrap()
    }

    fn trace(user_id: u32, pages: &[i64]) -> UserTrace {
        UserTrace {
            user_id,
            pages: pages.iter().map(|&v| cat(v)).collect(),
        }
    }

    fn corpus(traces: Vec<UserTrace>) -> Corpus {
        Corpus {
            categories: CategoryTable::default(),
            traces,
            provenance: Provenance::Synthetic,
        }
    }

    #[test]
    fn homepage_worked_example() {
        // 50 pages, homepage at positions 20 and 45 (1-indexed).
        let pages: Vec<i64> = (1..=50)
            .map(|i| if i == 20 || i == 45 { 1 } else { 2 + (i % 16) })
            .collect();
        let t = trace(0, &pages);
        let s = homepage_partition(&t, 1, cat(1));
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].pages, t.pages[0..19]);
        assert_eq!(s[1].pages, t.pages[20..44]);
        assert_eq!(s[2].pages, t.pages[45..50]);
    }

    #[test]
    fn homepage_without_homepage_visits() {
        let t = trace(0, &[2, 3, 4, 5, 6, 7, 8, 9, 10, 11]);
        let s = homepage_partition(&t, 5, cat(1));
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].pages, t.pages);
    }

    #[test]
    fn homepage_only_trace_yields_nothing() {
        assert!(homepage_partition(&trace(0, &[1, 1, 1]), 1, cat(1)).is_empty());
    }

    #[test]
    fn homepage_drops_short_segments() {
        let t = trace(0, &[1, 2, 3, 1, 4, 1, 5, 6, 7]);
        let s = homepage_partition(&t, 2, cat(1));
        let lens: Vec<usize> = s.iter().map(|s| s.pages.len()).collect();
        assert_eq!(lens, vec![2, 3]);
    }

    #[test]
    fn random_partition_fifty_by_twenty() {
        let t = trace(0, &(0..50).map(|i| 1 + i % 17).collect::<Vec<_>>());
        let mut rng = Rng::seeded(1);
        let s = random_partition(&t, 20, &mut rng);
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(|s| s.pages.len() == 20));
    }

    #[test]
    fn random_partition_whole_trace() {
        let t = trace(0, &(0..35).map(|i| 1 + (i * 7) % 17).collect::<Vec<_>>());
        let s = random_partition(&t, 35, &mut Rng::seeded(2));
        assert_eq!(s.len(), 1);
        // Whole-trace draw keeps original order, so it is the trace itself.
        assert_eq!(s[0].pages, t.pages);
    }

    #[test]
    fn build_set_applies_two_session_filter() {
        let c = corpus(vec![
            trace(0, &[2; 70]),
            trace(1, &[3; 40]),
            trace(2, &[4; 10]),
        ]);
        let set = build_session_set(&c, &PartitionConfig::random(20, 5)).unwrap();
        assert_eq!(set.users, vec![0, 1]);
        assert_eq!(set.sessions.len(), 5);
        assert_eq!(set.sessions.iter().filter(|s| s.user_id == 0).count(), 3);
        assert!(set
            .sessions
            .iter()
            .enumerate()
            .all(|(i, s)| s.session_id == i as u32));
        set.validate().unwrap();
    }

    #[test]
    fn homepage_set_single_sessions_are_dropped() {
        let c = corpus(vec![trace(0, &[2; 12]), trace(1, &[3; 15])]);
        let set = build_session_set(&c, &PartitionConfig::homepage(5)).unwrap();
        assert!(set.is_empty());
        assert!(set.users.is_empty());
    }

    #[test]
    fn build_set_is_deterministic() {
        let c = corpus(
            (0..20)
                .map(|u| {
                    trace(
                        u,
                        &(0..(30 + u as i64 * 3))
                            .map(|i| 1 + (i * u as i64) % 17)
                            .collect::<Vec<_>>(),
                    )
                })
                .collect(),
        );
        let cfg = PartitionConfig::random(10, 99);
        assert_eq!(
            build_session_set(&c, &cfg).unwrap(),
            build_session_set(&c, &cfg).unwrap()
        );
    }

    #[test]
    fn restrict_renumbers() {
        let c = corpus(vec![
            trace(0, &[2; 40]),
            trace(1, &[3; 40]),
            trace(2, &[4; 40]),
        ]);
        let set = build_session_set(&c, &PartitionConfig::random(20, 0)).unwrap();
        let sub = set.restrict_to(&[2, 0]);
        assert_eq!(sub.users, vec![0, 2]);
        assert_eq!(sub.sessions.len(), 4);
        sub.validate().unwrap();
        assert_eq!(sub.sessions[2].user_id, 2);
    }

    #[test]
    fn json_uses_one_based_pages() {
        let set = SessionSet {
            users: vec![4],
            sessions: vec![
                Session {
                    session_id: 0,
                    user_id: 4,
                    pages: vec![cat(1), cat(17)],
                },
                Session {
                    session_id: 1,
                    user_id: 4,
                    pages: vec![cat(2)],
                },
            ],
        };
        let text = set.to_json().unwrap();
        assert!(text.contains(r#""pages":[1,17]"#), "{text}");
        assert!(text.contains(r#""id":0"#));
        assert_eq!(SessionSet::from_json(&text).unwrap(), set);
        assert!(SessionSet::from_json(&text.replace("[1,17]", "[0,17]")).is_err());
    }
}
