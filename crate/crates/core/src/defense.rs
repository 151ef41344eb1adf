//! Noise-page countermeasure: append uniformly random category visits.

use serde::{Deserialize, Serialize};

use crate::corpus::{Category, NUM_CATEGORIES};
use crate::rng::Rng;
use crate::sessions::{Session, SessionSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefenseConfig {
    pub p: usize,
    pub seed: u64,
}

pub fn add_noise_pages(session: &Session, p: usize, rng: &mut Rng) -> Session {
    let mut pages = Vec::with_capacity(session.pages.len() + p);
    pages.extend_from_slice(&session.pages);
    pages.extend(
        (0..p).map(|_| {
            Category::from_index(rng.below_usize(NUM_CATEGORIES)).expect("index below 17")
        }),
    );
    Session {
        pages,
        ..session.clone()
    }
}

/// Session `i` draws its noise from stream `(seed, i)`.
pub fn apply_defense(set: &SessionSet, config: &DefenseConfig) -> SessionSet {
    SessionSet {
        users: set.users.clone(),
        sessions: set
            .sessions
            .iter()
            .map(|s| {
                let mut rng = Rng::stream(config.seed, &[s.session_id as u64]);
                add_noise_pages(s, config.p, &mut rng)
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::Fingerprint;
    use crate::rng::Rng;
    use proptest::prelude::{any, prop, prop_assert, prop_assert_eq, proptest};

    fn session(id: u32, user: u32, pages: &[i64]) -> Session {
        Session {
            session_id: id,
            user_id: user,
            pages: pages
                .iter()
                .map(|&v| Category::from_one_based(v).unwrap())
                .collect(),
        }
    }

    fn sample_set() -> SessionSet {
        SessionSet {
            users: vec![3, 8],
            sessions: vec![
                session(0, 3, &[1, 2, 3]),
                session(1, 3, &[4, 4]),
                session(2, 8, &[5; 35]),
                session(3, 8, &[6, 7, 8]),
            ],
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let set = sample_set();
        assert_eq!(apply_defense(&set, &DefenseConfig { p: 0, seed: 1 }), set);
        let s = &set.sessions[0];
        assert_eq!(add_noise_pages(s, 0, &mut Rng::seeded(0)), *s);
    }

    #[test]
    fn five_pages_on_thirty_five() {
        let s = &sample_set().sessions[2];
        let out = add_noise_pages(s, 5, &mut Rng::seeded(2));
        assert_eq!(out.pages.len(), 40);
        assert_eq!(out.pages[..35], s.pages[..]);
        assert_eq!((out.user_id, out.session_id), (8, 2));
    }

    #[test]
    fn structure_and_determinism() {
        let set = sample_set();
        let cfg = DefenseConfig { p: 15, seed: 77 };
        let a = apply_defense(&set, &cfg);
        assert_eq!(a, apply_defense(&set, &cfg));
        assert_eq!(a.users, set.users);
        assert_eq!(a.len(), set.len());
        for (x, y) in a.sessions.iter().zip(&set.sessions) {
            assert_eq!((x.session_id, x.user_id), (y.session_id, y.user_id));
            assert_eq!(x.pages.len(), y.pages.len() + 15);
        }
    }

    #[test]
    fn noise_is_uniform() {
        let s = session(0, 0, &[1]);
        let out = add_noise_pages(&s, 100_000, &mut Rng::seeded(12345));
        let mut tally = [0usize; NUM_CATEGORIES];
        for p in &out.pages[1..] {
            tally[p.index()] += 1;
        }
        for &c in &tally {
            let freq = c as f64 / 100_000.0;
            assert!((freq - 1.0 / 17.0).abs() < 0.005, "{freq}");
        }
    }

    proptest! {
        #[test]
        fn prefix_length_and_drift(
            pages in prop::collection::vec(1i64..=17, 1..80),
            p in 0usize..40,
            seed in any::<u64>(),
        ) {
            let s = session(0, 0, &pages);
            let out = add_noise_pages(&s, p, &mut Rng::seeded(seed));
            prop_assert_eq!(out.pages.len(), pages.len() + p);
            prop_assert_eq!(&out.pages[..pages.len()], &s.pages[..]);
            let before = Fingerprint::from_pages(&s.pages).unwrap();
            let after = Fingerprint::from_pages(&out.pages).unwrap();
            let bound = p as f64 / (pages.len() + p) as f64;
            for (x, y) in before.proportions().iter().zip(after.proportions()) {
                prop_assert!((x - y).abs() <= bound + 1e-12);
            }
        }
    }
}
