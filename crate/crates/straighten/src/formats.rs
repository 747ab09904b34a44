//! On-disk formats: CSV tables, JSON lines, and the binary n-gram container.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use straighten_core::corpus::{Provenance, Sentence};
use straighten_core::NgramModel;

use crate::error::{read, Error, Result};

pub const PROFILE_CSV: &str = "profile.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const PAIRS_JSONL: &str = "pairs.jsonl";
pub const CORRELATION_CSV: &str = "correlation.csv";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const SURPRISAL_CSV: &str = "surprisal.csv";

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::format(path, e.to_string())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::json(path, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read(path)?).map_err(|e| Error::json(path, e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = create(path)?;
    for row in rows {
        serde_json::to_writer(&mut w, &row).map_err(|e| Error::json(path, e))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Blank lines are skipped; errors carry the 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line)
            .map_err(|e| Error::Json { path: path.into(), line: i + 1, column: e.column(), message: e.to_string() })?;
        out.push(row);
    }
    Ok(out)
}

/// One row of `profile.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub sentence_id: String,
    pub layer: usize,
    pub curvature_deg: f64,
    pub delta_deg: f64,
}

/// One line of `pairs.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub sentence_id: String,
    pub prompt_text: String,
    pub ground_truth_text: String,
    pub generated_text: String,
    pub strategy: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub file: String,
    pub line: usize,
}

/// One line of a filtered corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub text: String,
    pub word_count: usize,
    pub source: SourceRecord,
}

impl From<&Sentence> for CorpusRecord {
    fn from(s: &Sentence) -> Self {
        Self {
            id: s.id.clone(),
            text: s.text.clone(),
            word_count: s.word_count,
            source: SourceRecord { file: s.source.file.clone(), line: s.source.line },
        }
    }
}

impl From<CorpusRecord> for Sentence {
    fn from(r: CorpusRecord) -> Self {
        let mut s = Sentence::plain(r.id, r.text, Provenance { file: r.source.file, line: r.source.line });
        s.word_count = r.word_count;
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurprisalRow {
    pub sentence_id: String,
    pub surprisal_bits: f64,
    pub unigram_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub word_reduce: String,
    /// `surprisal` or `unigram`.
    pub predictor: String,
    pub layer: usize,
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Reads a corpus by extension: `.conllu`, `.jsonl`, else plain text with
/// one sentence per line.
pub fn read_corpus(path: &Path) -> Result<Vec<Sentence>> {
    let name = path.display().to_string();
    match path.extension().and_then(|e| e.to_str()) {
        Some("conllu") => {
            let text = crate::error::read_string(path)?;
            straighten_core::corpus::parse_conllu(&text, &name).map_err(|e| Error::format(path, e.to_string()))
        }
        Some("jsonl") => Ok(read_jsonl::<CorpusRecord>(path)?.into_iter().map(Sentence::from).collect()),
        _ => Ok(straighten_core::corpus::parse_plain_text(&crate::error::read_string(path)?, &name)),
    }
}

const NGRAM_MAGIC: &[u8; 8] = b"STNGRAM\0";
pub const NGRAM_VERSION: u32 = 1;

/// JSON sidecar written next to a binary n-gram file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramMetadata {
    pub format: String,
    pub version: u32,
    pub order: usize,
    pub discount: f64,
    pub vocab_size: usize,
    pub word_tokens: u64,
    pub total_count: u64,
    pub entries_per_order: Vec<usize>,
    pub training_corpus: Option<String>,
    pub training_corpus_sha256: Option<String>,
}

/// Layout, all integers little-endian: magic, u32 version, u32 order,
/// f64 discount, u64 word tokens, u64 vocabulary size, vocabulary entries as
/// (u32 byte length, UTF-8), then per order k an u64 entry count followed by
/// entries of k u32 ids and an u64 count, sorted by key.
pub fn encode_ngram(m: &NgramModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(NGRAM_MAGIC);
    out.extend(NGRAM_VERSION.to_le_bytes());
    out.extend((m.order() as u32).to_le_bytes());
    out.extend(m.discount().to_le_bytes());
    out.extend(m.word_tokens().to_le_bytes());
    out.extend((m.vocabulary().len() as u64).to_le_bytes());
    for w in m.vocabulary() {
        out.extend((w.len() as u32).to_le_bytes());
        out.extend_from_slice(w.as_bytes());
    }
    for k in 1..=m.order() {
        let table = m.table(k);
        out.extend((table.len() as u64).to_le_bytes());
        for (key, c) in table {
            for id in key {
                out.extend(id.to_le_bytes());
            }
            out.extend(c.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("unexpected end of file at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_ngram(bytes: &[u8]) -> std::result::Result<NgramModel, String> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != NGRAM_MAGIC {
        return Err("not an n-gram file (bad magic)".into());
    }
    let version = c.u32()?;
    if version != NGRAM_VERSION {
        return Err(format!("unsupported n-gram file version {version}"));
    }
    let order = c.u32()? as usize;
    let discount = c.f64()?;
    let word_tokens = c.u64()?;
    let vocab_len = c.u64()? as usize;
    let mut vocab = Vec::with_capacity(vocab_len.min(1 << 24));
    for _ in 0..vocab_len {
        let len = c.u32()? as usize;
        let s = std::str::from_utf8(c.take(len)?).map_err(|e| format!("vocabulary entry: {e}"))?;
        vocab.push(s.to_string());
    }
    let mut tables = Vec::with_capacity(order);
    for k in 1..=order {
        let n = c.u64()? as usize;
        let mut table = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            let key = (0..k).map(|_| c.u32()).collect::<std::result::Result<Vec<_>, _>>()?;
            table.push((key, c.u64()?));
        }
        tables.push(table);
    }
    if c.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - c.pos));
    }
    NgramModel::from_parts(order, discount, vocab, tables, word_tokens).map_err(|e| e.to_string())
}

pub fn ngram_metadata(m: &NgramModel, corpus: Option<(&str, &str)>) -> NgramMetadata {
    NgramMetadata {
        format: "straighten-ngram".into(),
        version: NGRAM_VERSION,
        order: m.order(),
        discount: m.discount(),
        vocab_size: m.vocabulary().len(),
        word_tokens: m.word_tokens(),
        total_count: m.total(),
        entries_per_order: (1..=m.order()).map(|k| m.table(k).len()).collect(),
        training_corpus: corpus.map(|c| c.0.to_string()),
        training_corpus_sha256: corpus.map(|c| c.1.to_string()),
    }
}

/// Writes `path` and `path.json`.
pub fn save_ngram(path: &Path, m: &NgramModel, corpus: Option<(&str, &str)>) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(&encode_ngram(m)).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))?;
    write_json(&sidecar_path(path), &ngram_metadata(m, corpus))
}

pub fn load_ngram(path: &Path) -> Result<NgramModel> {
    decode_ngram(&read(path)?).map_err(|m| Error::format(path, m))
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    name.into()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> NgramModel {
        NgramModel::train(["the cat sat", "the dog sat down", "a cat ran"], 3).unwrap()
    }

    #[test]
    fn ngram_binary_round_trip() {
        let m = toy();
        let back = decode_ngram(&encode_ngram(&m)).unwrap();
        for k in 1..=3 {
            assert_eq!(back.table(k), m.table(k));
        }
        assert_eq!(back.vocabulary(), m.vocabulary());
        assert_eq!(back.word_tokens(), m.word_tokens());
        assert_eq!(back.probability("sat", &["the", "cat"]), m.probability("sat", &["the", "cat"]));
    }

    #[test]
    fn ngram_binary_rejects_damage() {
        let bytes = encode_ngram(&toy());
        assert!(decode_ngram(&bytes[..bytes.len() - 3]).unwrap_err().contains("unexpected end"));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_ngram(&bad).unwrap_err().contains("magic"));
        let mut future = bytes;
        future[8] = 9;
        assert!(decode_ngram(&future).unwrap_err().contains("version"));
    }

    #[test]
    fn csv_headers_are_fixed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(PROFILE_CSV);
        let row = ProfileRow { sentence_id: "s1".into(), layer: 0, curvature_deg: 120.5, delta_deg: 0.0 };
        write_csv(&p, [row.clone()]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("sentence_id,layer,curvature_deg,delta_deg\n"), "{text}");
        assert_eq!(read_csv::<ProfileRow>(&p).unwrap(), vec![row]);
    }

    #[test]
    fn jsonl_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        std::fs::write(&p, "{\"id\":\"a\",\"text\":\"x y\",\"word_count\":2,\"source\":{\"file\":\"f\",\"line\":1}}\n\nnot json\n").unwrap();
        match read_jsonl::<CorpusRecord>(&p).unwrap_err() {
            Error::Json { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
    }
}
