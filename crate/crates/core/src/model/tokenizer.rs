//! Minimal deterministic tokenizer shared by the text encoder and decoder.
//!
//! Ids `0..RESERVED` are reserved: padding, sequence start, and the five
//! quality level words. Every other word is hashed into the remaining range.

use crate::hash::{word_hash, words};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const LEVEL_WORDS: [&str; 5] = ["bad", "poor", "fair", "good", "excellent"];
pub const LEVEL_IDS: [u32; 5] = [3, 4, 5, 6, 7];
const RESERVED: u32 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tokenizer {
    vocab_size: u32,
}

impl Tokenizer {
    /// Panics if `vocab_size` leaves no room for hashed words.
    pub fn new(vocab_size: usize) -> Self {
        assert!(vocab_size as u32 > RESERVED, "vocabulary too small");
        Tokenizer { vocab_size: vocab_size as u32 }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size as usize
    }

    pub fn token_id(&self, word: &str) -> u32 {
        if let Some(i) = LEVEL_WORDS.iter().position(|w| *w == word) {
            return LEVEL_IDS[i];
        }
        RESERVED + (word_hash(word) % (self.vocab_size - RESERVED) as u64) as u32
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        words(text).map(|w| self.token_id(&w)).collect()
    }
}
