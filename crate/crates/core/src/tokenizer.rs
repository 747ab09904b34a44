//! GPT-2 byte-level BPE.
//!
//! Text is split into pre-tokens with the GPT-2 pattern
//! `'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+`
//! (implemented by hand below), each pre-token's bytes are mapped to printable
//! code points, and merges are applied lowest rank first.
//!
//! Each token is assigned to the whitespace-delimited word containing its first
//! non-whitespace byte; whitespace-only tokens stay with the preceding word.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use hashbrown::HashMap;

use crate::error::{Error, Result};

/// Ids plus one half-open token range per whitespace-delimited word.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub word_spans: Vec<Range<usize>>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn word_count(&self) -> usize {
        self.word_spans.len()
    }
}

/// Printable stand-ins for the 256 byte values, as in the GPT-2 encoder.
pub fn bytes_to_unicode() -> [char; 256] {
    let mut table = ['\0'; 256];
    let mut assigned = [false; 256];
    let printable = (b'!'..=b'~').chain(0xA1u8..=0xAC).chain(0xAEu8..=0xFF);
    for b in printable {
        table[b as usize] = b as char;
        assigned[b as usize] = true;
    }
    let mut next = 256u32;
    for b in 0..256usize {
        if !assigned[b] {
            table[b] = char::from_u32(next).expect("code point below 0x200 is valid");
            next += 1;
        }
    }
    table
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, u32>,
    /// (left id, right id) → (rank, merged id)
    merges: HashMap<(u32, u32), (u32, u32)>,
    byte_ids: [u32; 256],
    byte_encoder: [char; 256],
    byte_decoder: HashMap<char, u8>,
}

impl Vocabulary {
    /// Builds a vocabulary from a token→id map and rank-ordered merges.
    ///
    /// Ids must be dense in `[0, n)`; all 256 byte symbols and every merge
    /// operand and result must be present.
    pub fn new(tokens: impl IntoIterator<Item = (String, u32)>, merges: &[(String, String)]) -> Result<Self> {
        let token_to_id: HashMap<String, u32> = tokens.into_iter().collect();
        let n = token_to_id.len();
        let mut id_to_token: Vec<Option<String>> = vec![None; n];
        for (tok, &id) in &token_to_id {
            let slot = id_to_token
                .get_mut(id as usize)
                .ok_or_else(|| Error::Config(format!("token id {id} not dense in [0, {n})")))?;
            if slot.is_some() {
                return Err(Error::Config(format!("duplicate token id {id}")));
            }
            *slot = Some(tok.clone());
        }
        let id_to_token: Vec<String> = id_to_token.into_iter().map(|t| t.expect("dense ids")).collect();

        let byte_encoder = bytes_to_unicode();
        let mut byte_ids = [0u32; 256];
        let mut byte_decoder = HashMap::with_capacity(256);
        let mut buf = [0u8; 4];
        for (b, &ch) in byte_encoder.iter().enumerate() {
            byte_decoder.insert(ch, b as u8);
            let s: &str = ch.encode_utf8(&mut buf);
            byte_ids[b] = *token_to_id
                .get(s)
                .ok_or_else(|| Error::Config(format!("byte symbol {s:?} (byte {b}) missing from vocabulary")))?;
        }

        let mut merge_table = HashMap::with_capacity(merges.len());
        for (rank, (a, b)) in merges.iter().enumerate() {
            let lookup = |s: &str| {
                token_to_id
                    .get(s)
                    .copied()
                    .ok_or_else(|| Error::Config(format!("merge {} `{a} {b}` references unknown symbol {s:?}", rank + 1)))
            };
            let merged = format!("{a}{b}");
            let key = (lookup(a)?, lookup(b)?);
            let value = (rank as u32, lookup(&merged)?);
            merge_table.entry(key).or_insert(value);
        }

        Ok(Self { id_to_token, token_to_id, merges: merge_table, byte_ids, byte_encoder, byte_decoder })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn merge_count(&self) -> usize {
        self.merges.len()
    }

    pub fn token_id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    /// Raw bytes a token stands for.
    pub fn token_bytes(&self, id: u32) -> Result<Vec<u8>> {
        let tok = self.token(id).ok_or(Error::TokenOutOfRange(id))?;
        tok.chars()
            .map(|c| {
                self.byte_decoder
                    .get(&c)
                    .copied()
                    .ok_or_else(|| Error::Config(format!("token {id} contains unmapped char {c:?}")))
            })
            .collect()
    }

    pub fn encode(&self, text: &str) -> TokenSequence {
        let mut ids = Vec::new();
        let mut starts = Vec::new();
        for piece in pretokenize(text) {
            let mut offset = piece.start;
            for id in self.bpe(&text.as_bytes()[piece]) {
                starts.push(offset);
                offset += self.token_byte_len(id);
                ids.push(id);
            }
        }
        let word_spans = word_spans(text.as_bytes(), &starts);
        TokenSequence { ids, word_spans }
    }

    /// Rebuilds a sequence (with word spans) from ids alone.
    pub fn sequence_from_ids(&self, ids: &[u32]) -> Result<TokenSequence> {
        let mut bytes = Vec::new();
        let mut starts = Vec::with_capacity(ids.len());
        for &id in ids {
            starts.push(bytes.len());
            bytes.extend(self.token_bytes(id)?);
        }
        Ok(TokenSequence { ids: ids.to_vec(), word_spans: word_spans(&bytes, &starts) })
    }

    pub fn decode_bytes(&self, ids: &[u32]) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for &id in ids {
            out.extend(self.token_bytes(id)?);
        }
        Ok(out)
    }

    /// Inverse of [`encode`](Self::encode). Id lists that cut through a UTF-8
    /// sequence decode with replacement characters.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let bytes = self.decode_bytes(ids)?;
        Ok(match String::from_utf8(bytes) {
            Ok(s) => s,
            Err(e) => String::from_utf8_lossy(e.as_bytes()).into_owned(),
        })
    }

    fn token_byte_len(&self, id: u32) -> usize {
        self.id_to_token[id as usize]
            .chars()
            .map(|c| if self.byte_decoder.contains_key(&c) { 1 } else { c.len_utf8() })
            .sum()
    }

    fn bpe(&self, bytes: &[u8]) -> Vec<u32> {
        let mut word: Vec<u32> = bytes.iter().map(|&b| self.byte_ids[b as usize]).collect();
        while word.len() > 1 {
            let best = word
                .windows(2)
                .filter_map(|w| self.merges.get(&(w[0], w[1])).map(|&(rank, _)| (rank, (w[0], w[1]))))
                .min_by_key(|&(rank, _)| rank);
            let Some((_, pair)) = best else { break };
            let merged = self.merges[&pair].1;
            let mut next = Vec::with_capacity(word.len());
            let mut i = 0;
            while i < word.len() {
                if i + 1 < word.len() && (word[i], word[i + 1]) == pair {
                    next.push(merged);
                    i += 2;
                } else {
                    next.push(word[i]);
                    i += 1;
                }
            }
            word = next;
        }
        word
    }

    pub fn byte_encoder(&self) -> &[char; 256] {
        &self.byte_encoder
    }
}

/// Parses `merges.txt`: an optional `#`-prefixed header line, then one
/// space-separated pair per line in rank order.
pub fn parse_merges(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 && line.starts_with('#') {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => {
                out.push((a.to_string(), b.to_string()))
            }
            _ => {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected two space-separated symbols, found {line:?}"),
                })
            }
        }
    }
    Ok(out)
}

fn is_letter(c: char) -> bool {
    c.is_alphabetic() && !c.is_numeric()
}

fn is_number(c: char) -> bool {
    c.is_numeric()
}

fn is_other(c: char) -> bool {
    !c.is_whitespace() && !is_letter(c) && !is_number(c)
}

const CONTRACTIONS: [&str; 7] = ["'s", "'t", "'re", "'ve", "'m", "'ll", "'d"];

/// Byte ranges of GPT-2 pre-tokens.
pub fn pretokenize(text: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < text.len() {
        let end = next_pretoken(text, pos);
        debug_assert!(end > pos);
        out.push(pos..end);
        pos = end;
    }
    out
}

fn run_end(text: &str, from: usize, pred: impl Fn(char) -> bool) -> usize {
    text[from..].char_indices().find(|&(_, c)| !pred(c)).map_or(text.len(), |(i, _)| from + i)
}

fn next_pretoken(text: &str, pos: usize) -> usize {
    let rest = &text[pos..];
    if let Some(c) = CONTRACTIONS.iter().find(|c| rest.starts_with(**c)) {
        return pos + c.len();
    }
    let mut chars = rest.chars();
    let first = chars.next().expect("pos < len");
    let (body_start, body_char) = if first == ' ' {
        (pos + 1, chars.next())
    } else {
        (pos, Some(first))
    };
    if let Some(c) = body_char {
        let classes: [fn(char) -> bool; 3] = [is_letter, is_number, is_other];
        for class in classes {
            if class(c) {
                return run_end(text, body_start, class);
            }
        }
    }
    // Whitespace run. If it is followed by a non-space char, the last
    // whitespace char is left to prefix the next pre-token.
    let ws_end = run_end(text, pos, char::is_whitespace);
    if ws_end == text.len() {
        return ws_end;
    }
    let last_ws_start = text[..ws_end].char_indices().next_back().map(|(i, _)| i).expect("non-empty run");
    if last_ws_start > pos {
        last_ws_start
    } else {
        ws_end
    }
}

/// Word spans from token start offsets into `bytes`.
fn word_spans(bytes: &[u8], token_starts: &[usize]) -> Vec<Range<usize>> {
    // Byte → word index (None for whitespace bytes).
    let mut word_of = vec![None; bytes.len()];
    let mut n_words = 0usize;
    let mut in_word = false;
    let mut mark = |range: Range<usize>, ws: bool, word_of: &mut Vec<Option<usize>>| {
        if ws {
            in_word = false;
        } else {
            if !in_word {
                n_words += 1;
                in_word = true;
            }
            for slot in &mut word_of[range] {
                *slot = Some(n_words - 1);
            }
        }
    };
    match core::str::from_utf8(bytes) {
        Ok(s) => {
            for (i, c) in s.char_indices() {
                mark(i..i + c.len_utf8(), c.is_whitespace(), &mut word_of);
            }
        }
        Err(_) => {
            for (i, b) in bytes.iter().enumerate() {
                mark(i..i + 1, b.is_ascii_whitespace(), &mut word_of);
            }
        }
    }
    if n_words == 0 {
        return Vec::new();
    }

    let mut token_word = Vec::with_capacity(token_starts.len());
    for (t, &start) in token_starts.iter().enumerate() {
        let end = token_starts.get(t + 1).copied().unwrap_or(bytes.len());
        let own = (start..end).find_map(|b| word_of[b]);
        let prev = token_word.last().copied().unwrap_or(0);
        token_word.push(own.unwrap_or(prev));
    }
    let mut spans: Vec<Range<usize>> = Vec::with_capacity(n_words);
    for (t, &w) in token_word.iter().enumerate() {
        if w < spans.len() {
            spans[w].end = t + 1;
        } else {
            spans.push(t..t + 1);
        }
    }
    spans
}

#[cfg(test)]
#[allow(clippy::single_range_in_vec_init)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn byte_vocab(extra: &[&str]) -> Vocabulary {
        let enc = bytes_to_unicode();
        let mut toks: Vec<(String, u32)> = enc.iter().enumerate().map(|(i, c)| (c.to_string(), i as u32)).collect();
        for (i, t) in extra.iter().enumerate() {
            toks.push((t.to_string(), 256 + i as u32));
        }
        let merges: Vec<(String, String)> = Vec::new();
        Vocabulary::new(toks, &merges).unwrap()
    }

    fn pieces(text: &str) -> Vec<&str> {
        pretokenize(text).into_iter().map(|r| &text[r]).collect()
    }

    #[test]
    fn byte_table_is_bijection() {
        let t = bytes_to_unicode();
        let mut seen: Vec<char> = t.to_vec();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 256);
        assert_eq!(t[b' ' as usize], 'Ġ');
        assert_eq!(t[b'\n' as usize], 'Ċ');
        assert_eq!(t[b'A' as usize], 'A');
    }

    #[test]
    fn pretokenizer_matches_gpt2_pattern() {
        assert_eq!(pieces("Hello world"), ["Hello", " world"]);
        assert_eq!(pieces("I'm here, they'll go!"), ["I", "'m", " here", ",", " they", "'ll", " go", "!"]);
        assert_eq!(pieces("a  b"), ["a", " ", " b"]);
        assert_eq!(pieces("x   "), ["x", "   "]);
        assert_eq!(pieces("abc123 45"), ["abc", "123", " 45"]);
        assert_eq!(pieces("hi\n\nthere"), ["hi", "\n", "\n", "there"]);
        assert_eq!(pieces(" !?x"), [" !?", "x"]);
        assert_eq!(pieces("naïve café"), ["naïve", " café"]);
    }

    #[test]
    fn empty_text() {
        let v = byte_vocab(&[]);
        let s = v.encode("");
        assert!(s.is_empty() && s.word_spans.is_empty());
        assert_eq!(v.decode(&[]).unwrap(), "");
    }

    #[test]
    fn byte_level_round_trip_without_merges() {
        let v = byte_vocab(&[]);
        let text = "Grüße, 世界! straightening";
        let s = v.encode(text);
        assert_eq!(s.len(), text.len());
        assert_eq!(v.decode(&s.ids).unwrap(), text);
        assert_eq!(s.word_count(), 3);
    }

    #[test]
    fn merges_apply_by_rank() {
        let enc = bytes_to_unicode();
        let mut toks: Vec<(String, u32)> = enc.iter().enumerate().map(|(i, c)| (c.to_string(), i as u32)).collect();
        for (i, t) in ["ab", "bc", "abc"].iter().enumerate() {
            toks.push((t.to_string(), 256 + i as u32));
        }
        // "bc" outranks "ab", so "abc" → a + bc, then no merge (a, bc) exists.
        let merges = [("b".to_string(), "c".to_string()), ("a".to_string(), "b".to_string())];
        let v = Vocabulary::new(toks.clone(), &merges).unwrap();
        assert_eq!(v.encode("abc").ids, [b'a' as u32, 257]);
        let merges = [
            ("a".to_string(), "b".to_string()),
            ("b".to_string(), "c".to_string()),
            ("ab".to_string(), "c".to_string()),
        ];
        let v = Vocabulary::new(toks, &merges).unwrap();
        assert_eq!(v.encode("abc").ids, [258]);
        assert_eq!(v.encode("ababc").ids, [256, 258]);
    }

    #[test]
    fn whitespace_only_tokens_stay_with_previous_word() {
        let v = byte_vocab(&[]);
        let s = v.encode("ab  c");
        // Without merges each space is its own token and both attach to "ab".
        assert_eq!(s.word_spans, [0..4, 4..5]);
        let s = v.encode("  lead");
        assert_eq!(s.word_spans, [0..6]);
    }

    #[test]
    fn sequence_from_ids_matches_encode() {
        let v = byte_vocab(&[]);
        let s = v.encode("one two three");
        assert_eq!(v.sequence_from_ids(&s.ids).unwrap(), s);
    }

    #[test]
    fn decode_out_of_range() {
        let v = byte_vocab(&[]);
        assert_eq!(v.decode(&[9999]), Err(Error::TokenOutOfRange(9999)));
    }

    #[test]
    fn invalid_vocabularies() {
        let toks = vec![("a".to_string(), 0u32)];
        assert!(Vocabulary::new(toks, &[]).is_err());
        let enc = bytes_to_unicode();
        let toks: Vec<(String, u32)> = enc.iter().enumerate().map(|(i, c)| (c.to_string(), i as u32 + 1)).collect();
        assert!(Vocabulary::new(toks, &[]).is_err());
    }

    #[test]
    fn merges_parsing() {
        let m = parse_merges("#version: 0.2\nĠ t\nh e\n").unwrap();
        assert_eq!(m, [("Ġ".to_string(), "t".to_string()), ("h".to_string(), "e".to_string())]);
        assert!(parse_merges("").unwrap().is_empty());
        match parse_merges("#v\na b\nbad\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    proptest::proptest! {
        #[test]
        fn round_trip_any_string(s in "\\PC{0,40}") {
            let v = byte_vocab(&["Ġt", "he"]);
            let seq = v.encode(&s);
            proptest::prop_assert_eq!(v.decode(&seq.ids).unwrap(), s.clone());
            proptest::prop_assert_eq!(seq.word_count(), s.split_whitespace().count());
            let mut next = 0;
            for span in &seq.word_spans {
                proptest::prop_assert_eq!(span.start, next);
                proptest::prop_assert!(span.end > span.start);
                next = span.end;
            }
            if !seq.word_spans.is_empty() {
                proptest::prop_assert_eq!(next, seq.len());
            }
        }

        #[test]
        fn pretokens_partition(s in "[ a-z0-9'!\\n\\t]{0,30}") {
            let ranges = pretokenize(&s);
            let mut next = 0;
            for r in ranges {
                proptest::prop_assert_eq!(r.start, next);
                next = r.end;
            }
            proptest::prop_assert_eq!(next, s.len());
        }
    }
}
