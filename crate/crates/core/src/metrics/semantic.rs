use std::collections::{HashMap, HashSet};

use super::{LanguageClassifier, SemanticScorer};
use crate::corpus::SyntheticLanguage;

/// Multiset token F1 between two whitespace-tokenised strings.
pub fn token_f1(a: &str, b: &str) -> f64 {
    let a: Vec<&str> = a.split_whitespace().collect();
    let b: Vec<&str> = b.split_whitespace().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for w in &a {
        *counts.entry(w).or_insert(0) += 1;
    }
    let mut overlap = 0usize;
    for w in &b {
        if let Some(c) = counts.get_mut(w) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    2.0 * overlap as f64 / (a.len() + b.len()) as f64
}

/// Token F1 between the source and the target mapped back through the
/// synthetic language's inverse transform.
#[derive(Debug, Clone)]
pub struct TokenF1Scorer {
    language: SyntheticLanguage,
}

impl TokenF1Scorer {
    pub fn new(language: SyntheticLanguage) -> Self {
        Self { language }
    }
}

impl SemanticScorer for TokenF1Scorer {
    fn score(&self, source: &str, target: &str) -> f64 {
        token_f1(source, &self.language.invert(target))
    }
}

pub fn default_semantic_scorer(language: SyntheticLanguage) -> TokenF1Scorer {
    TokenF1Scorer::new(language)
}

/// Lexicon-coverage language ID: confidence is the fraction of tokens found
/// in a language's word list; the best-covered language wins, earlier
/// entries on ties.
#[derive(Debug, Clone, Default)]
pub struct LexiconClassifier {
    languages: Vec<(String, HashSet<String>)>,
}

impl LexiconClassifier {
    pub fn new(languages: Vec<(String, HashSet<String>)>) -> Self {
        Self { languages }
    }

    pub fn for_language(language: &SyntheticLanguage) -> Self {
        Self::new(vec![
            (SyntheticLanguage::SOURCE_TAG.to_string(), language.source_lexicon()),
            (SyntheticLanguage::TARGET_TAG.to_string(), language.target_lexicon()),
        ])
    }
}

impl LanguageClassifier for LexiconClassifier {
    fn classify(&self, text: &str) -> (String, f64) {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.is_empty() || self.languages.is_empty() {
            return ("und".to_string(), 0.0);
        }
        let mut best = (0usize, -1.0f64);
        for (i, (_, lexicon)) in self.languages.iter().enumerate() {
            let hits = tokens.iter().filter(|t| lexicon.contains(**t)).count();
            let confidence = hits as f64 / tokens.len() as f64;
            if confidence > best.1 {
                best = (i, confidence);
            }
        }
        (self.languages[best.0].0.clone(), best.1)
    }
}
