//! Word n-gram model with stupid-backoff scores, normalized per context.
//!
//! Sentences are padded with `order - 1` [`BOS`] symbols on the left and one
//! [`EOS`] on the right before counting. The stupid-backoff score is
//!
//! ```text
//! S(w | ctx) = c(ctx, w) / c(ctx, ·)        if c(ctx, w) > 0
//!            = 0.4 · S(w | ctx[1..])        otherwise
//! S(w)       = c(w) / (N + 1)               unknown words count 1
//! ```
//!
//! where `c(ctx, ·)` sums the counts of all continuations of `ctx`. Scores
//! are divided by their sum over the vocabulary plus the unknown word, so
//! `probability` is a proper distribution for every context.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use hashbrown::HashMap;

use crate::error::{Error, Result};
use crate::stats::pairwise_sum;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const DEFAULT_DISCOUNT: f64 = 0.4;
pub const DEFAULT_ORDER: usize = 3;
/// Id used for out-of-vocabulary words.
pub const UNK: u32 = u32::MAX;

/// Lowercases and strips leading/trailing punctuation; internal hyphens and
/// apostrophes survive. Returns `None` when nothing is left.
pub fn normalize_word(w: &str) -> Option<String> {
    let trimmed = w.trim_matches(|c: char| !c.is_alphanumeric());
    if trimmed.is_empty() {
        None
    } else {
        Some(trimmed.to_lowercase())
    }
}

/// Normalized words of a line.
pub fn words(line: &str) -> Vec<String> {
    line.split_whitespace().filter_map(normalize_word).collect()
}

#[derive(Debug, Clone, Default)]
struct Continuations {
    total: u64,
    next: Vec<(u32, u64)>,
}

#[derive(Debug, Clone)]
pub struct NgramModel {
    order: usize,
    discount: f64,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    /// `counts[k - 1]` holds k-gram counts.
    counts: Vec<HashMap<Vec<u32>, u64>>,
    /// `continuations[k]` maps a k-word context to its successors.
    continuations: Vec<HashMap<Vec<u32>, Continuations>>,
    total: u64,
    word_tokens: u64,
}

impl NgramModel {
    /// Counts n-grams over `sentences` (one sentence per item).
    pub fn train<'a>(sentences: impl IntoIterator<Item = &'a str>, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("n-gram order must be at least 1".into()));
        }
        let mut vocab: Vec<String> = vec![BOS.to_string(), EOS.to_string()];
        let mut index: HashMap<String, u32> = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        let mut counts: Vec<HashMap<Vec<u32>, u64>> = vec![HashMap::new(); order];
        let mut word_tokens = 0u64;
        let mut padded = Vec::new();
        for line in sentences {
            let ws = words(line);
            if ws.is_empty() {
                continue;
            }
            word_tokens += ws.len() as u64;
            padded.clear();
            padded.extend(core::iter::repeat_n(0u32, order - 1));
            for w in ws {
                let next = vocab.len() as u32;
                let id = *index.entry(w.clone()).or_insert_with(|| {
                    vocab.push(w);
                    next
                });
                padded.push(id);
            }
            padded.push(1);
            for (k, table) in counts.iter_mut().enumerate() {
                for window in padded.windows(k + 1) {
                    *table.entry(window.to_vec()).or_insert(0) += 1;
                }
            }
        }
        if word_tokens == 0 {
            return Err(Error::Empty("n-gram training corpus"));
        }
        Ok(Self::assemble(order, DEFAULT_DISCOUNT, vocab, index, counts, word_tokens))
    }

    /// Rebuilds a model from serialized parts.
    pub fn from_parts(
        order: usize,
        discount: f64,
        vocab: Vec<String>,
        tables: Vec<Vec<(Vec<u32>, u64)>>,
        word_tokens: u64,
    ) -> Result<Self> {
        if order == 0 || tables.len() != order {
            return Err(Error::Config(format!("{} count tables for order {order}", tables.len())));
        }
        if vocab.first().map(String::as_str) != Some(BOS) || vocab.get(1).map(String::as_str) != Some(EOS) {
            return Err(Error::Config("vocabulary must start with the boundary symbols".into()));
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, w) in vocab.iter().enumerate() {
            if index.insert(w.clone(), i as u32).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary entry {w:?}")));
            }
        }
        let mut counts = Vec::with_capacity(order);
        for (k, table) in tables.into_iter().enumerate() {
            let mut map = HashMap::with_capacity(table.len());
            for (key, c) in table {
                if key.len() != k + 1 || key.iter().any(|&id| id as usize >= vocab.len()) {
                    return Err(Error::Config(format!("malformed {}-gram key {key:?}", k + 1)));
                }
                map.insert(key, c);
            }
            counts.push(map);
        }
        Ok(Self::assemble(order, discount, vocab, index, counts, word_tokens))
    }

    fn assemble(
        order: usize,
        discount: f64,
        vocab: Vec<String>,
        index: HashMap<String, u32>,
        counts: Vec<HashMap<Vec<u32>, u64>>,
        word_tokens: u64,
    ) -> Self {
        let total = counts[0].values().sum();
        let mut continuations: Vec<HashMap<Vec<u32>, Continuations>> = vec![HashMap::new(); order];
        for (k, table) in counts.iter().enumerate().skip(1) {
            for (key, &c) in table {
                let entry = continuations[k].entry(key[..k].to_vec()).or_default();
                entry.total += c;
                entry.next.push((key[k], c));
            }
        }
        for map in &mut continuations {
            for cont in map.values_mut() {
                cont.next.sort_unstable();
            }
        }
        Self { order, discount, vocab, index, counts, continuations, total, word_tokens }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocab
    }

    /// Sum of unigram counts, boundary symbols included.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of word tokens seen in training (no boundary symbols).
    pub fn word_tokens(&self) -> u64 {
        self.word_tokens
    }

    /// k-gram entries, sorted by key.
    pub fn table(&self, k: usize) -> Vec<(Vec<u32>, u64)> {
        let mut out: Vec<(Vec<u32>, u64)> = self.counts[k - 1].iter().map(|(key, &c)| (key.clone(), c)).collect();
        out.sort_unstable();
        out
    }

    pub fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    /// Raw count of an already-normalized word tuple.
    pub fn count(&self, gram: &[&str]) -> u64 {
        if gram.is_empty() || gram.len() > self.order {
            return 0;
        }
        let key: Vec<u32> = gram.iter().map(|w| self.id(w)).collect();
        self.counts[gram.len() - 1].get(&key).copied().unwrap_or(0)
    }

    fn unigram_count(&self, id: u32) -> u64 {
        if id == UNK {
            return 0;
        }
        self.counts[0].get(&[id][..]).copied().unwrap_or(0)
    }

    /// Maximum-likelihood `c(ctx, w) / c(ctx, ·)`; zero for unseen contexts.
    pub fn mle_probability(&self, word: &str, context: &[&str]) -> f64 {
        let ctx = self.context_ids(context);
        if ctx.is_empty() {
            return self.unigram_count(self.id(word)) as f64 / self.total as f64;
        }
        match self.continuations[ctx.len()].get(&ctx) {
            Some(c) => c.next.iter().find(|(w, _)| *w == self.id(word)).map_or(0.0, |(_, n)| *n as f64 / c.total as f64),
            None => 0.0,
        }
    }

    /// Keeps the last `order - 1` context words, as ids.
    fn context_ids(&self, context: &[&str]) -> Vec<u32> {
        let keep = context.len().min(self.order - 1);
        context[context.len() - keep..].iter().map(|w| self.id(w)).collect()
    }

    fn score_ids(&self, word: u32, ctx: &[u32]) -> f64 {
        if ctx.is_empty() {
            let c = if word == UNK { 1 } else { self.unigram_count(word) };
            return c as f64 / (self.total + 1) as f64;
        }
        if let Some(cont) = self.continuations[ctx.len()].get(ctx) {
            if let Ok(i) = cont.next.binary_search_by_key(&word, |&(w, _)| w) {
                return cont.next[i].1 as f64 / cont.total as f64;
            }
        }
        self.discount * self.score_ids(word, &ctx[1..])
    }

    fn mass_ids(&self, ctx: &[u32]) -> f64 {
        if ctx.is_empty() {
            return 1.0;
        }
        let lower = self.mass_ids(&ctx[1..]);
        match self.continuations[ctx.len()].get(ctx) {
            Some(cont) => {
                let covered: Vec<f64> = cont.next.iter().map(|&(w, _)| self.score_ids(w, &ctx[1..])).collect();
                1.0 + self.discount * (lower - pairwise_sum(&covered))
            }
            None => self.discount * lower,
        }
    }

    /// Unnormalized stupid-backoff score of a normalized word.
    pub fn backoff_score(&self, word: &str, context: &[&str]) -> f64 {
        self.score_ids(self.id(word), &self.context_ids(context))
    }

    /// Normalized probability of a normalized word after `context`.
    pub fn probability(&self, word: &str, context: &[&str]) -> f64 {
        let ctx = self.context_ids(context);
        self.score_ids(self.id(word), &ctx) / self.mass_ids(&ctx)
    }

    pub fn word_surprisal(&self, word: &str, context: &[&str]) -> f64 {
        surprisal_bits(self.probability(word, context))
    }

    /// Mean surprisal per word, each word conditioned on its left context
    /// padded with [`BOS`]. Raw words are normalized first.
    pub fn sentence_surprisal(&self, sentence: &[&str]) -> Result<f64> {
        let ws: Vec<String> = sentence.iter().filter_map(|w| normalize_word(w)).collect();
        if ws.is_empty() {
            return Err(Error::Empty("sentence"));
        }
        let mut padded: Vec<&str> = vec![BOS; self.order - 1];
        padded.extend(ws.iter().map(String::as_str));
        let bits: Vec<f64> = (self.order - 1..padded.len())
            .map(|i| self.word_surprisal(padded[i], &padded[i + 1 - self.order..i]))
            .collect();
        Ok(pairwise_sum(&bits) / bits.len() as f64)
    }

    /// Mean `-log2` relative unigram frequency of the sentence's words.
    /// Unseen words are floored at a count of 1.
    pub fn unigram_frequency(&self, sentence: &[&str]) -> Result<f64> {
        let ws: Vec<String> = sentence.iter().filter_map(|w| normalize_word(w)).collect();
        if ws.is_empty() {
            return Err(Error::Empty("sentence"));
        }
        let n = self.word_tokens as f64;
        let bits: Vec<f64> = ws.iter().map(|w| surprisal_bits(self.unigram_count(self.id(w)).max(1) as f64 / n)).collect();
        Ok(pairwise_sum(&bits) / bits.len() as f64)
    }
}

/// `-log2 p`.
pub fn surprisal_bits(p: f64) -> f64 {
    let s = -libm::log2(p);
    if s == 0.0 {
        0.0
    } else {
        s
    }
}
