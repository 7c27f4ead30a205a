//! Randomized source lists for lore-fallback lines.
//!
//! Repeating one fixed phrase in a prompt tends to make the model echo it
//! verbatim, so every fallback line gets its own sample of 2 to 4 sources in
//! random order.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

pub const PHRASE_POOL: [&str; 4] = ["folklore", "common sense", "mythology", "culture"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct PhraseSample {
    chosen: Vec<&'static str>,
}

impl PhraseSample {
    /// Accepts 2 to 4 distinct members of [`PHRASE_POOL`].
    pub fn from_words(words: &[&str]) -> Option<Self> {
        if !(2..=4).contains(&words.len()) {
            return None;
        }
        let mut chosen = Vec::with_capacity(words.len());
        for w in words {
            let canonical = PHRASE_POOL.iter().find(|p| *p == w)?;
            if chosen.contains(canonical) {
                return None;
            }
            chosen.push(*canonical);
        }
        Some(Self { chosen })
    }

    pub fn words(&self) -> &[&'static str] {
        &self.chosen
    }

    pub fn len(&self) -> usize {
        self.chosen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chosen.is_empty()
    }

    /// English list with a serial comma: "a and b", "a, b, and c".
    pub fn render(&self) -> String {
        match self.chosen.as_slice() {
            [] => String::new(),
            [only] => only.to_string(),
            [a, b] => format!("{a} and {b}"),
            [init @ .., last] => format!("{}, and {last}", init.join(", ")),
        }
    }
}

impl fmt::Display for PhraseSample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

pub fn sample_phrases<R: Rng + ?Sized>(rng: &mut R) -> PhraseSample {
    let k = rng.random_range(2..=4usize);
    let mut pool = PHRASE_POOL;
    let (chosen, _) = pool.partial_shuffle(rng, k);
    PhraseSample {
        chosen: chosen.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    #[test]
    fn rendering_forms() {
        let s = PhraseSample::from_words(&["common sense", "mythology", "folklore"]).unwrap();
        assert_eq!(s.render(), "common sense, mythology, and folklore");
        let s = PhraseSample::from_words(&["culture", "folklore"]).unwrap();
        assert_eq!(s.render(), "culture and folklore");
        let s = PhraseSample::from_words(&["folklore", "common sense", "mythology", "culture"])
            .unwrap();
        assert_eq!(s.render(), "folklore, common sense, mythology, and culture");
    }

    #[test]
    fn from_words_rejects_invalid_samples() {
        assert!(PhraseSample::from_words(&["folklore"]).is_none());
        assert!(PhraseSample::from_words(&["folklore", "folklore"]).is_none());
        assert!(PhraseSample::from_words(&["folklore", "history"]).is_none());
    }

    #[test]
    fn samples_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let s = sample_phrases(&mut rng);
            assert!((2..=4).contains(&s.len()));
            let distinct: HashSet<_> = s.words().iter().collect();
            assert_eq!(distinct.len(), s.len());
            assert!(s.words().iter().all(|w| PHRASE_POOL.contains(w)));
        }
    }

    #[test]
    fn same_seed_same_sample() {
        let a = sample_phrases(&mut ChaCha8Rng::seed_from_u64(77));
        let b = sample_phrases(&mut ChaCha8Rng::seed_from_u64(77));
        assert_eq!(a, b);
    }
}
