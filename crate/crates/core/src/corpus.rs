//! CoNLL-U sentence extraction and the sentence filters.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use hashbrown::HashSet;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub file: String,
    /// 1-based line where the sentence block starts.
    pub line: usize,
}

/// A syntactic word from a CoNLL-U token line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    pub form: String,
    pub upos: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub id: String,
    pub text: String,
    pub word_count: usize,
    pub source: Provenance,
    /// Annotated words; empty for plain-text input.
    pub words: Vec<Word>,
}

impl Sentence {
    pub fn plain(id: String, text: String, source: Provenance) -> Self {
        let word_count = text.split_whitespace().count();
        Self { id, text, word_count, source, words: Vec::new() }
    }
}

const COLUMNS: usize = 10;

struct Block {
    start: usize,
    sent_id: Option<String>,
    text: Option<String>,
    words: Vec<Word>,
    /// Surface tokens with their `SpaceAfter=No` flag.
    surface: Vec<(String, bool)>,
    /// Word ids covered by a multiword token range.
    covered_until: usize,
}

impl Block {
    fn new(start: usize) -> Self {
        Self { start, sent_id: None, text: None, words: Vec::new(), surface: Vec::new(), covered_until: 0 }
    }

    fn is_empty(&self) -> bool {
        self.sent_id.is_none() && self.text.is_none() && self.words.is_empty()
    }
}

fn parse_err(line: usize, message: String) -> Error {
    Error::Parse { line, message }
}

fn no_space_after(misc: &str) -> bool {
    misc != "_" && misc.split('|').any(|kv| kv == "SpaceAfter=No")
}

/// Parses CoNLL-U text. `source` names the file for provenance and default ids.
///
/// Sentence text comes from `# text =` when present, otherwise it is rebuilt
/// from surface forms honoring `SpaceAfter=No`. Multiword token ranges supply
/// the surface form for the words they cover; empty nodes are skipped.
pub fn parse_conllu(input: &str, source: &str) -> Result<Vec<Sentence>> {
    let mut out = Vec::new();
    let mut block: Option<Block> = None;
    for (idx, raw) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            if let Some(b) = block.take() {
                out.push(finish(b, source, out.len())?);
            }
            continue;
        }
        let b = block.get_or_insert_with(|| Block::new(line_no));
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                match key.trim() {
                    "text" => b.text = Some(value.trim().to_string()),
                    "sent_id" => b.sent_id = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != COLUMNS {
            return Err(parse_err(line_no, format!("expected {COLUMNS} tab-separated columns, found {}", cols.len())));
        }
        let id = cols[0];
        if id.contains('.') {
            continue;
        }
        if let Some((a, z)) = id.split_once('-') {
            let (a, z): (usize, usize) = match (a.parse(), z.parse()) {
                (Ok(a), Ok(z)) if a >= 1 && z >= a => (a, z),
                _ => return Err(parse_err(line_no, format!("bad multiword token range {id:?}"))),
            };
            if a != b.words.len() + 1 {
                return Err(parse_err(line_no, format!("range {id} does not start at word {}", b.words.len() + 1)));
            }
            b.surface.push((cols[1].to_string(), no_space_after(cols[9])));
            b.covered_until = z;
            continue;
        }
        let n: usize = id.parse().map_err(|_| parse_err(line_no, format!("bad token id {id:?}")))?;
        if n != b.words.len() + 1 {
            return Err(parse_err(line_no, format!("token id {n} out of sequence (expected {})", b.words.len() + 1)));
        }
        let upos = (cols[3] != "_").then(|| cols[3].to_string());
        b.words.push(Word { form: cols[1].to_string(), upos });
        if n > b.covered_until {
            b.surface.push((cols[1].to_string(), no_space_after(cols[9])));
        }
    }
    if let Some(b) = block.take() {
        out.push(finish(b, source, out.len())?);
    }
    Ok(out)
}

fn finish(b: Block, source: &str, index: usize) -> Result<Sentence> {
    if b.is_empty() {
        return Err(parse_err(b.start, "sentence block without words or text".into()));
    }
    let text = match b.text {
        Some(t) => t,
        None => {
            let mut s = String::new();
            for (form, no_space) in &b.surface {
                s.push_str(form);
                if !no_space {
                    s.push(' ');
                }
            }
            s.trim_end().to_string()
        }
    };
    if text.is_empty() {
        return Err(parse_err(b.start, "sentence has empty text".into()));
    }
    let id = b.sent_id.unwrap_or_else(|| format!("{source}#{}", index + 1));
    let word_count = text.split_whitespace().count();
    Ok(Sentence { id, text, word_count, source: Provenance { file: source.to_string(), line: b.start }, words: b.words })
}

/// Plain text, one sentence per non-blank line.
pub fn parse_plain_text(input: &str, source: &str) -> Vec<Sentence> {
    input
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .enumerate()
        .map(|(k, (i, l))| {
            Sentence::plain(format!("{source}#{}", k + 1), l.trim().to_string(), Provenance { file: source.into(), line: i + 1 })
        })
        .collect()
}

/// Frequency-ranked list of lowercase words.
#[derive(Debug, Clone, Default)]
pub struct Wordlist {
    words: HashSet<String>,
}

impl Wordlist {
    /// One word per line; blank lines and `#` comments are ignored. Only the
    /// first `limit` entries are kept when a limit is given.
    pub fn parse(input: &str, limit: Option<usize>) -> Self {
        let words = input
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .take(limit.unwrap_or(usize::MAX))
            .map(|l| l.split_whitespace().next().unwrap_or(l).to_lowercase())
            .collect();
        Self { words }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Which words must appear in the wordlist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WordCheck {
    /// NOUN-tagged words when UPOS tags exist, all alphabetic words otherwise.
    #[default]
    Nouns,
    AllAlphabetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterOptions {
    pub min_words: usize,
    pub max_words: usize,
    pub word_check: WordCheck,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self { min_words: 6, max_words: 19, word_check: WordCheck::Nouns }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rejection {
    Length(usize),
    Capitalized(String),
    AllCaps(String),
    Abbreviation(String),
    NotInWordlist(String),
}

fn strip_punct(w: &str) -> &str {
    w.trim_matches(|c: char| !c.is_alphanumeric())
}

/// First reason `s` fails the filters, if any.
pub fn check_sentence(s: &Sentence, wordlist: &Wordlist, opts: &FilterOptions) -> Option<Rejection> {
    if s.word_count < opts.min_words || s.word_count > opts.max_words {
        return Some(Rejection::Length(s.word_count));
    }
    for (i, raw) in s.text.split_whitespace().enumerate() {
        let tok = strip_punct(raw);
        if tok.chars().filter(|c| c.is_alphabetic()).count() >= 2 && !tok.chars().any(char::is_lowercase) {
            return Some(Rejection::AllCaps(raw.to_string()));
        }
        if tok.contains('.') {
            return Some(Rejection::Abbreviation(raw.to_string()));
        }
        if i > 0 && tok.chars().next().is_some_and(char::is_uppercase) {
            return Some(Rejection::Capitalized(raw.to_string()));
        }
    }
    let has_upos = s.words.iter().any(|w| w.upos.is_some());
    let candidates: Vec<String> = match opts.word_check {
        WordCheck::Nouns if has_upos => s
            .words
            .iter()
            .filter(|w| w.upos.as_deref() == Some("NOUN"))
            .map(|w| strip_punct(&w.form).to_lowercase())
            .collect(),
        _ => s
            .text
            .split_whitespace()
            .map(|w| strip_punct(w).to_lowercase())
            .filter(|w| !w.is_empty() && w.chars().all(char::is_alphabetic))
            .collect(),
    };
    candidates.into_iter().find(|w| !w.is_empty() && !wordlist.contains(w)).map(Rejection::NotInWordlist)
}

/// Sentences passing every filter, in input order.
pub fn filter_sentences(sentences: &[Sentence], wordlist: &Wordlist, opts: &FilterOptions) -> Vec<Sentence> {
    sentences.iter().filter(|s| check_sentence(s, wordlist, opts).is_none()).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE: &str = "# sent_id = s1\n# text = The cat sat.\n\
1\tThe\tthe\tDET\tDT\t_\t2\tdet\t_\t_\n\
2\tcat\tcat\tNOUN\tNN\t_\t3\tnsubj\t_\t_\n\
3\tsat\tsit\tVERB\tVBD\t_\t0\troot\t_\tSpaceAfter=No\n\
4\t.\t.\tPUNCT\t.\t_\t3\tpunct\t_\t_\n\n";

    #[test]
    fn single_sentence() {
        let s = parse_conllu(ONE, "f.conllu").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].id, "s1");
        assert_eq!(s[0].text, "The cat sat.");
        assert_eq!(s[0].word_count, 3);
        assert_eq!(s[0].source, Provenance { file: "f.conllu".into(), line: 1 });
        assert_eq!(s[0].words[1].upos.as_deref(), Some("NOUN"));
    }

    #[test]
    fn reconstructs_text_with_space_after_and_ranges() {
        let input = "1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n\
1\tdo\tdo\tAUX\t_\t_\t0\troot\t_\t_\n\
2\tn't\tnot\tPART\t_\t_\t1\tadvmod\t_\t_\n\
3\tstop\tstop\tVERB\t_\t_\t1\txcomp\t_\tSpaceAfter=No\n\
3.1\tghost\t_\t_\t_\t_\t_\t_\t_\t_\n\
4\t!\t!\tPUNCT\t_\t_\t1\tpunct\t_\t_\n";
        let s = parse_conllu(input, "x").unwrap();
        assert_eq!(s[0].text, "don't stop!");
        assert_eq!(s[0].words.len(), 4);
        assert_eq!(s[0].id, "x#1");
    }

    #[test]
    fn counts_blocks() {
        let two = alloc::format!("{ONE}{}", ONE.replace("s1", "s2"));
        let s = parse_conllu(&two, "f").unwrap();
        assert_eq!(s.iter().map(|s| s.id.as_str()).collect::<Vec<_>>(), ["s1", "s2"]);
        assert_eq!(s[1].source.line, 8);
    }

    #[test]
    fn malformed_lines() {
        let bad = "# text = x\n1\tx\tx\tNOUN\n";
        assert_eq!(parse_conllu(bad, "f").unwrap_err(), Error::Parse { line: 2, message: "expected 10 tab-separated columns, found 4".into() });
        let out_of_order = "1\ta\t_\t_\t_\t_\t_\t_\t_\t_\n3\tb\t_\t_\t_\t_\t_\t_\t_\t_\n";
        assert!(matches!(parse_conllu(out_of_order, "f"), Err(Error::Parse { line: 2, .. })));
    }

    fn wl(words: &str) -> Wordlist {
        Wordlist::parse(&words.split(' ').collect::<Vec<_>>().join("\n"), None)
    }

    fn plain(text: &str) -> Sentence {
        Sentence::plain("t".into(), text.into(), Provenance { file: "t".into(), line: 1 })
    }

    #[test]
    fn length_boundaries() {
        let list = wl("a b c d e f g h i j k l m n o p q r s t u");
        let opts = FilterOptions { word_check: WordCheck::AllAlphabetic, ..Default::default() };
        assert_eq!(check_sentence(&plain("a b c d e"), &list, &opts), Some(Rejection::Length(5)));
        assert_eq!(check_sentence(&plain("a b c d e f"), &list, &opts), None);
        let nineteen = "a b c d e f g h i j k l m n o p q r s";
        assert_eq!(check_sentence(&plain(nineteen), &list, &opts), None);
        let twenty = "a b c d e f g h i j k l m n o p q r s t";
        assert_eq!(check_sentence(&plain(twenty), &list, &opts), Some(Rejection::Length(20)));
    }

    #[test]
    fn capitalization_and_abbreviations() {
        let list = wl("the cat sat on a mat today");
        let opts = FilterOptions { word_check: WordCheck::AllAlphabetic, ..Default::default() };
        assert_eq!(check_sentence(&plain("The cat sat on a mat today."), &list, &opts), None);
        assert!(matches!(check_sentence(&plain("The cat sat on a Mat today."), &list, &opts), Some(Rejection::Capitalized(_))));
        assert!(matches!(check_sentence(&plain("The CAT sat on a mat today."), &list, &opts), Some(Rejection::AllCaps(_))));
        assert!(matches!(check_sentence(&plain("The cat sat on a mat e.g. today."), &list, &opts), Some(Rejection::Abbreviation(_))));
        assert!(matches!(check_sentence(&plain("The dog sat on a mat today."), &list, &opts), Some(Rejection::NotInWordlist(w)) if w == "dog"));
    }

    #[test]
    fn noun_mode_uses_upos() {
        let input = "# text = the cat sat on my old mat\n\
1\tthe\t_\tDET\t_\t_\t_\t_\t_\t_\n2\tcat\t_\tNOUN\t_\t_\t_\t_\t_\t_\n3\tsat\t_\tVERB\t_\t_\t_\t_\t_\t_\n\
4\ton\t_\tADP\t_\t_\t_\t_\t_\t_\n5\tmy\t_\tPRON\t_\t_\t_\t_\t_\t_\n6\told\t_\tADJ\t_\t_\t_\t_\t_\t_\n7\tmat\t_\tNOUN\t_\t_\t_\t_\t_\t_\n";
        let s = parse_conllu(input, "f").unwrap();
        let nouns_only = wl("cat mat");
        assert_eq!(filter_sentences(&s, &nouns_only, &FilterOptions::default()).len(), 1);
        let all = FilterOptions { word_check: WordCheck::AllAlphabetic, ..Default::default() };
        assert!(filter_sentences(&s, &nouns_only, &all).is_empty());
    }

    #[test]
    fn plain_text_lines() {
        let s = parse_plain_text("first line here\n\n second one \n", "p.txt");
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].text, "second one");
        assert_eq!(s[1].source.line, 3);
        assert_eq!(s[1].id, "p.txt#2");
    }
}
