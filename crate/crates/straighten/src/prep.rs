//! Corpus filtering and n-gram training commands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use straighten_core::corpus::{check_sentence, FilterOptions, Rejection, Sentence, WordCheck, Wordlist};
use straighten_core::NgramModel;

use crate::error::{read_string, Error, Result};
use crate::formats::{read_corpus, save_ngram, write_json, write_jsonl, CorpusRecord, SUMMARY_JSON};
use crate::manifest::{sha256_file, FileHash, Manifest};

pub const CORPUS_JSONL: &str = "corpus.jsonl";

static BUNDLED_WORDLIST: &str = include_str!("../assets/wordlist/en-100k.txt");

pub fn bundled_wordlist(limit: Option<usize>) -> Wordlist {
    Wordlist::parse(BUNDLED_WORDLIST, limit)
}

pub fn load_wordlist(path: &Path, limit: Option<usize>) -> Result<Wordlist> {
    Ok(Wordlist::parse(&read_string(path)?, limit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub inputs: Vec<PathBuf>,
    /// Bundled 100K list when absent.
    pub wordlist: Option<PathBuf>,
    pub wordlist_limit: Option<usize>,
    pub min_words: usize,
    pub max_words: usize,
    /// `nouns` or `all`.
    pub word_check: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub parsed: usize,
    pub retained: usize,
    pub per_file: BTreeMap<String, (usize, usize)>,
    pub rejections: BTreeMap<String, usize>,
}

fn rejection_kind(r: &Rejection) -> &'static str {
    match r {
        Rejection::Length(_) => "length",
        Rejection::Capitalized(_) => "capitalized",
        Rejection::AllCaps(_) => "all_caps",
        Rejection::Abbreviation(_) => "abbreviation",
        Rejection::NotInWordlist(_) => "not_in_wordlist",
    }
}

/// Filters sentences, tallying why each rejected one failed.
pub fn filter(sentences: &[Sentence], wordlist: &Wordlist, opts: &FilterOptions) -> (Vec<Sentence>, BTreeMap<String, usize>) {
    let mut kept = Vec::new();
    let mut tally = BTreeMap::new();
    for s in sentences {
        match check_sentence(s, wordlist, opts) {
            None => kept.push(s.clone()),
            Some(r) => *tally.entry(rejection_kind(&r).to_string()).or_insert(0) += 1,
        }
    }
    (kept, tally)
}

pub fn run_filter_corpus(params: &FilterParams, out: &Path) -> Result<FilterSummary> {
    let mut manifest = Manifest::new("filter-corpus", params, 0)?;
    let word_check = match params.word_check.as_str() {
        "nouns" => WordCheck::Nouns,
        "all" => WordCheck::AllAlphabetic,
        other => return Err(Error::Config(format!("unknown word check {other:?} (nouns | all)"))),
    };
    let opts = FilterOptions { min_words: params.min_words, max_words: params.max_words, word_check };
    let wordlist = match &params.wordlist {
        Some(p) => load_wordlist(p, params.wordlist_limit)?,
        None => bundled_wordlist(params.wordlist_limit),
    };
    let mut all = Vec::new();
    let mut kept = Vec::new();
    let mut summary = FilterSummary { parsed: 0, retained: 0, per_file: BTreeMap::new(), rejections: BTreeMap::new() };
    for path in &params.inputs {
        let sentences = read_corpus(path)?;
        let (k, tally) = filter(&sentences, &wordlist, &opts);
        summary.per_file.insert(path.display().to_string(), (sentences.len(), k.len()));
        for (reason, n) in tally {
            *summary.rejections.entry(reason).or_insert(0) += n;
        }
        summary.parsed += sentences.len();
        all.push(FileHash { path: path.display().to_string(), sha256: sha256_file(path)? });
        kept.extend(k);
    }
    summary.retained = kept.len();
    write_jsonl(&out.join(CORPUS_JSONL), kept.iter().map(CorpusRecord::from))?;
    write_json(&out.join(SUMMARY_JSON), &summary)?;
    manifest.corpus = all.into_iter().next();
    manifest.finish(out, &[CORPUS_JSONL, SUMMARY_JSON])?;
    Ok(summary)
}

/// Trains on a plain-text corpus (one sentence per line) and writes the
/// binary model plus its JSON sidecar.
pub fn run_train_ngram(corpus: &Path, order: usize, out: &Path) -> Result<NgramModel> {
    let text = read_string(corpus)?;
    let model = NgramModel::train(text.lines(), order)?;
    let hash = sha256_file(corpus)?;
    save_ngram(out, &model, Some((&corpus.display().to_string(), &hash)))?;
    Ok(model)
}
