use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SegmentPair;
use crate::error::{Error, Result};

/// Source-side word inventory of the synthetic language pair. No word's
/// shift-1 cipher image is itself in the list, so the two sides have disjoint
/// vocabularies under the default cipher.
pub const LEXICON: [&str; 64] = [
    "time", "year", "people", "way", "day", "man", "thing", "woman", "life", "child", "world",
    "school", "state", "family", "student", "group", "country", "problem", "hand", "part",
    "place", "case", "week", "company", "system", "program", "question", "work", "government",
    "number", "night", "point", "home", "water", "room", "mother", "area", "money", "story",
    "fact", "month", "lot", "right", "study", "book", "eye", "job", "word", "business", "issue",
    "side", "kind", "head", "house", "service", "friend", "father", "power", "hour", "game",
    "line", "end", "member", "law",
];

pub const MIN_SENTENCE_WORDS: usize = 3;
pub const MAX_SENTENCE_WORDS: usize = 8;

/// Synthetic translation task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticTask {
    /// Target = source with every character enciphered.
    Cipher,
    /// Target = source words in reverse order, then enciphered.
    ReverseWords,
}

impl FromStr for SyntheticTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cipher" => Ok(Self::Cipher),
            "reverse_words" => Ok(Self::ReverseWords),
            other => Err(Error::Input(format!(
                "unknown task `{other}` (expected cipher or reverse_words)"
            ))),
        }
    }
}

impl fmt::Display for SyntheticTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cipher => "cipher",
            Self::ReverseWords => "reverse_words",
        })
    }
}

/// Bijective substitution over `a..=z`; every other character maps to itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cipher {
    forward: [u8; 26],
    inverse: [u8; 26],
}

impl Cipher {
    pub fn shift(k: u8) -> Self {
        let mut table = [0u8; 26];
        for (i, slot) in table.iter_mut().enumerate() {
            *slot = b'a' + ((i as u8 + k) % 26);
        }
        Self::from_table(table).expect("a rotation is a permutation")
    }

    /// `table[i]` is the image of the letter `b'a' + i`.
    pub fn from_table(table: [u8; 26]) -> Result<Self> {
        let mut inverse = [0u8; 26];
        let mut seen = [false; 26];
        for (i, &c) in table.iter().enumerate() {
            if !c.is_ascii_lowercase() || seen[(c - b'a') as usize] {
                return Err(Error::Input("cipher table is not a permutation of a..z".into()));
            }
            seen[(c - b'a') as usize] = true;
            inverse[(c - b'a') as usize] = b'a' + i as u8;
        }
        Ok(Self {
            forward: table,
            inverse,
        })
    }

    fn map(table: &[u8; 26], text: &str) -> String {
        text.chars()
            .map(|c| {
                if c.is_ascii_lowercase() {
                    table[(c as u8 - b'a') as usize] as char
                } else {
                    c
                }
            })
            .collect()
    }

    pub fn encode(&self, text: &str) -> String {
        Self::map(&self.forward, text)
    }

    pub fn decode(&self, text: &str) -> String {
        Self::map(&self.inverse, text)
    }
}

impl Default for Cipher {
    fn default() -> Self {
        Self::shift(1)
    }
}

/// A synthetic language pair: the exact forward transform and its inverse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticLanguage {
    pub task: SyntheticTask,
    pub cipher: Cipher,
}

impl SyntheticLanguage {
    pub const SOURCE_TAG: &'static str = "plain";
    pub const TARGET_TAG: &'static str = "cipher";
    pub const SOURCE_NAME: &'static str = "Plain";
    pub const TARGET_NAME: &'static str = "Cipher";

    pub fn new(task: SyntheticTask) -> Self {
        Self {
            task,
            cipher: Cipher::default(),
        }
    }

    /// Perfect translation of a source sentence.
    pub fn translate(&self, source: &str) -> String {
        let words: Vec<String> = source.split_whitespace().map(|w| self.cipher.encode(w)).collect();
        match self.task {
            SyntheticTask::Cipher => words.join(" "),
            SyntheticTask::ReverseWords => words.into_iter().rev().collect::<Vec<_>>().join(" "),
        }
    }

    /// Maps a target sentence back to the source language.
    pub fn invert(&self, target: &str) -> String {
        let words: Vec<String> = target.split_whitespace().map(|w| self.cipher.decode(w)).collect();
        match self.task {
            SyntheticTask::Cipher => words.join(" "),
            SyntheticTask::ReverseWords => words.into_iter().rev().collect::<Vec<_>>().join(" "),
        }
    }

    pub fn source_lexicon(&self) -> HashSet<String> {
        LEXICON.iter().map(|w| w.to_string()).collect()
    }

    pub fn target_lexicon(&self) -> HashSet<String> {
        LEXICON.iter().map(|w| self.cipher.encode(w)).collect()
    }
}

/// Deterministic corpus of `size` sentence pairs for a synthetic task.
pub fn generate_synthetic_corpus(
    seed: u64,
    size: usize,
    task: SyntheticTask,
) -> Result<Vec<SegmentPair>> {
    if size == 0 {
        return Err(Error::Input("corpus size must be at least 1".into()));
    }
    let language = SyntheticLanguage::new(task);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (0..size)
        .map(|_| {
            let len = rng.random_range(MIN_SENTENCE_WORDS..=MAX_SENTENCE_WORDS);
            let source = (0..len)
                .map(|_| LEXICON[rng.random_range(0..LEXICON.len())])
                .collect::<Vec<_>>()
                .join(" ");
            let target = language.translate(&source);
            SegmentPair::authentic(source, target)
        })
        .collect();
    Ok(pairs)
}
