//! Word-level vocabulary and the translation prompt layout.
//!
//! A prompt is `<bos>`, the instruction line, the source words padded with
//! `<pad>` up to `source_slots`, then `<sep>`. Training appends the target
//! words and `<eos>`; only positions after `<sep>` carry loss.

use std::collections::HashMap;

use rayon::prelude::*;

use super::backbone::{generate, Backbone};
use super::DecodeConfig;
use crate::corpus::{SyntheticLanguage, MAX_SENTENCE_WORDS};
use crate::error::Result;
use crate::scalar::Scalar;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const SEP: u32 = 3;
pub const UNK: u32 = 4;

const SPECIALS: [&str; 5] = ["<pad>", "<bos>", "<eos>", "<sep>", "<unk>"];

/// Instruction line rendered in front of every source sentence.
pub fn instruction(source_language: &str, target_language: &str) -> String {
    format!("Translate the following text from {source_language} to {target_language}:")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Special tokens first, then `words` in order, duplicates dropped.
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Self {
            words: Vec::new(),
            index: HashMap::new(),
        };
        for w in SPECIALS.iter().map(|s| s.to_string()).chain(words.into_iter().map(Into::into)) {
            if !vocab.index.contains_key(&w) {
                vocab.index.insert(w.clone(), vocab.words.len() as u32);
                vocab.words.push(w);
            }
        }
        vocab
    }

    /// Instruction words plus both sides of the synthetic lexicon.
    pub fn for_language(language: &SyntheticLanguage) -> Self {
        let instr = instruction(SyntheticLanguage::SOURCE_NAME, SyntheticLanguage::TARGET_NAME);
        let mut source: Vec<String> = language.source_lexicon().into_iter().collect();
        source.sort();
        let mut target: Vec<String> = language.target_lexicon().into_iter().collect();
        target.sort();
        Self::new(
            instr
                .split_whitespace()
                .map(str::to_string)
                .chain(source)
                .chain(target),
        )
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        text.split_whitespace().map(|w| self.id(w)).collect()
    }

    /// Joins non-special tokens with single spaces.
    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .filter(|&&id| id as usize >= SPECIALS.len() || id == UNK)
            .filter_map(|&id| self.word(id))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// A tokenised training sequence; `tokens[first_target..]` are the labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingExample {
    pub tokens: Vec<u32>,
    pub first_target: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptEncoder {
    pub vocab: Vocab,
    instruction: Vec<u32>,
    pub source_slots: usize,
}

impl PromptEncoder {
    pub fn new(vocab: Vocab, source_language: &str, target_language: &str, source_slots: usize) -> Self {
        let instruction = vocab.encode(&instruction(source_language, target_language));
        Self {
            vocab,
            instruction,
            source_slots,
        }
    }

    pub fn for_language(language: &SyntheticLanguage) -> Self {
        Self::new(
            Vocab::for_language(language),
            SyntheticLanguage::SOURCE_NAME,
            SyntheticLanguage::TARGET_NAME,
            MAX_SENTENCE_WORDS,
        )
    }

    pub fn prompt(&self, source: &str) -> Vec<u32> {
        let src = self.vocab.encode(source);
        let mut ids = Vec::with_capacity(2 + self.instruction.len() + src.len().max(self.source_slots));
        ids.push(BOS);
        ids.extend_from_slice(&self.instruction);
        let pad = self.source_slots.saturating_sub(src.len());
        ids.extend(src);
        ids.extend(std::iter::repeat_n(PAD, pad));
        ids.push(SEP);
        ids
    }

    pub fn example(&self, source: &str, target: &str) -> TrainingExample {
        let mut tokens = self.prompt(source);
        let first_target = tokens.len();
        tokens.extend(self.vocab.encode(target));
        tokens.push(EOS);
        TrainingExample {
            tokens,
            first_target,
        }
    }

    pub fn decode(&self, ids: &[u32]) -> String {
        self.vocab.decode(ids)
    }
}

/// Anything that maps a source sentence to a translation.
pub trait Translate: Sync {
    fn translate(&self, source: &str) -> Result<String>;
}

impl Translate for SyntheticLanguage {
    fn translate(&self, source: &str) -> Result<String> {
        Ok(SyntheticLanguage::translate(self, source))
    }
}

/// Greedy translation with a model.
pub struct ModelTranslator<'a, B: ?Sized> {
    pub model: &'a B,
    pub encoder: &'a PromptEncoder,
    pub decode: DecodeConfig,
}

impl<'a, B: ?Sized> ModelTranslator<'a, B> {
    pub fn new(model: &'a B, encoder: &'a PromptEncoder, decode: DecodeConfig) -> Self {
        Self {
            model,
            encoder,
            decode,
        }
    }
}

impl<B> ModelTranslator<'_, B>
where
    B: ?Sized,
{
    fn run<T: Scalar>(&self, source: &str) -> Result<String>
    where
        B: Backbone<T>,
    {
        let prompt = self.encoder.prompt(source);
        let out = generate(self.model, &prompt, &self.decode)?;
        Ok(self.encoder.decode(&out.tokens))
    }
}

impl<T: Scalar> Translate for ModelTranslator<'_, crate::model::TransformerModel<T>> {
    fn translate(&self, source: &str) -> Result<String> {
        self.run::<T>(source)
    }
}

impl<T: Scalar> Translate for ModelTranslator<'_, crate::quantizer::QuantizedModel<T>> {
    fn translate(&self, source: &str) -> Result<String> {
        self.run::<T>(source)
    }
}

/// Translates every source in parallel; output order matches input order.
pub fn translate_all(translator: &dyn Translate, sources: &[String]) -> Result<Vec<String>> {
    sources.par_iter().map(|s| translator.translate(s)).collect()
}
