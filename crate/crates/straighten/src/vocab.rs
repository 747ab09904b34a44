//! GPT-2 `vocab.json` / `merges.txt` loading.

use std::collections::HashMap;
use std::path::Path;

use straighten_core::tokenizer::parse_merges;
use straighten_core::Vocabulary;

use crate::error::{read_string, Error, Result};

static GPT2_VOCAB: &str = include_str!("../assets/gpt2/vocab.json");
static GPT2_MERGES: &str = include_str!("../assets/gpt2/merges.txt");

pub fn load_vocabulary(vocab_path: &Path, merges_path: &Path) -> Result<Vocabulary> {
    let vocab = read_string(vocab_path)?;
    let merges = read_string(merges_path)?;
    parse_vocabulary(&vocab, &merges, vocab_path, merges_path)
}

/// The published GPT-2 files bundled with the crate.
pub fn gpt2_vocabulary() -> Vocabulary {
    parse_vocabulary(GPT2_VOCAB, GPT2_MERGES, Path::new("vocab.json"), Path::new("merges.txt"))
        .expect("bundled GPT-2 vocabulary parses")
}

fn parse_vocabulary(vocab: &str, merges: &str, vocab_path: &Path, merges_path: &Path) -> Result<Vocabulary> {
    let map: HashMap<String, u32> = serde_json::from_str(vocab).map_err(|e| Error::json(vocab_path, e))?;
    let merges = parse_merges(merges).map_err(|e| Error::format(merges_path, e.to_string()))?;
    Vocabulary::new(map, &merges).map_err(|e| Error::format(vocab_path, e.to_string()))
}
