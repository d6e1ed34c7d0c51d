//! Unicode normalization of raw Persian text.
//!
//! Three stages, each skippable: NFKC, a codepoint replacement map that folds
//! Arabic letter variants into their Persian forms, and whitespace collapse.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;
use unicode_normalization::{is_nfkc, UnicodeNormalization};

/// Upper bound on NFKC/map rounds. Two rounds reach the fixed point for every
/// map whose targets are NFKC-stable; the rest is headroom for custom maps.
const MAX_ROUNDS: usize = 4;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("codepoint {0} appears more than once as a char_map source")]
    DuplicateSource(Codepoint),
    #[error("replacement codepoint {0} is also a char_map source")]
    ChainedReplacement(Codepoint),
    #[error("invalid codepoint literal {0:?} (expected U+XXXX)")]
    BadCodepoint(String),
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("document {doc_id}: {source}")]
    Io {
        doc_id: String,
        #[source]
        source: io::Error,
    },
    #[error("document {doc_id}: input is not valid UTF-8")]
    InvalidUtf8 { doc_id: String },
    #[error("document {doc_id}: malformed JSONL record: {message}")]
    BadRecord { doc_id: String, message: String },
}

/// A Unicode scalar value written as `U+XXXX` in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Codepoint(pub char);

impl fmt::Display for Codepoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "U+{:04X}", self.0 as u32)
    }
}

impl FromStr for Codepoint {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let hex = s
            .strip_prefix("U+")
            .or_else(|| s.strip_prefix("u+"))
            .ok_or_else(|| ConfigError::BadCodepoint(s.to_owned()))?;
        u32::from_str_radix(hex, 16)
            .ok()
            .and_then(char::from_u32)
            .map(Codepoint)
            .ok_or_else(|| ConfigError::BadCodepoint(s.to_owned()))
    }
}

impl Serialize for Codepoint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Codepoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One replacement rule. An empty `to` deletes the source codepoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharMapping {
    pub from: Codepoint,
    pub to: Vec<Codepoint>,
}

impl CharMapping {
    pub fn replace(from: char, to: char) -> Self {
        Self { from: Codepoint(from), to: vec![Codepoint(to)] }
    }

    pub fn delete(from: char) -> Self {
        Self { from: Codepoint(from), to: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationConfig {
    pub apply_nfkc: bool,
    pub char_map: Vec<CharMapping>,
    pub collapse_whitespace: bool,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        Self { apply_nfkc: true, char_map: default_char_map(), collapse_whitespace: true }
    }
}

impl NormalizationConfig {
    /// NFKC and whitespace collapse only.
    pub fn without_map() -> Self {
        Self { char_map: Vec::new(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut sources = std::collections::HashSet::new();
        for m in &self.char_map {
            if !sources.insert(m.from) {
                return Err(ConfigError::DuplicateSource(m.from));
            }
        }
        for m in &self.char_map {
            if let Some(cp) = m.to.iter().find(|cp| sources.contains(cp)) {
                return Err(ConfigError::ChainedReplacement(*cp));
            }
        }
        Ok(())
    }
}

/// Arabic to Persian orthography fixes.
pub fn default_char_map() -> Vec<CharMapping> {
    let mut map = vec![
        CharMapping::replace('\u{064A}', '\u{06CC}'), // yeh -> farsi yeh
        CharMapping::replace('\u{0643}', '\u{06A9}'), // kaf -> keheh
        CharMapping::replace('\u{0629}', '\u{0647}'), // teh marbuta -> heh
    ];
    for d in 0..10u32 {
        let from = char::from_u32(0x0660 + d).unwrap();
        let to = char::from_u32(0x06F0 + d).unwrap();
        map.push(CharMapping::replace(from, to));
    }
    map.push(CharMapping::delete('\u{0640}')); // tatweel
    for h in 0x064Bu32..=0x0652 {
        map.push(CharMapping::delete(char::from_u32(h).unwrap()));
    }
    map
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationReport {
    /// Replacement counts keyed by source codepoint.
    pub replacements: BTreeMap<String, u64>,
    /// Input codepoints whose own NFKC form differs from themselves.
    pub nfkc_changed_chars: u64,
    /// Whitespace codepoints dropped or rewritten by the collapse stage.
    pub whitespace_changed_chars: u64,
    pub input_chars: u64,
    pub output_chars: u64,
}

impl NormalizationReport {
    pub fn absorb(&mut self, other: &NormalizationReport) {
        for (k, v) in &other.replacements {
            *self.replacements.entry(k.clone()).or_default() += v;
        }
        self.nfkc_changed_chars += other.nfkc_changed_chars;
        self.whitespace_changed_chars += other.whitespace_changed_chars;
        self.input_chars += other.input_chars;
        self.output_chars += other.output_chars;
    }

    pub fn is_identity(&self) -> bool {
        self.replacements.is_empty()
            && self.nfkc_changed_chars == 0
            && self.whitespace_changed_chars == 0
            && self.input_chars == self.output_chars
    }
}

/// A validated, ready-to-run normalization pipeline.
#[derive(Debug, Clone)]
pub struct Normalizer {
    config: NormalizationConfig,
    map: HashMap<char, String>,
}

impl Normalizer {
    pub fn new(config: NormalizationConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let map = config.char_map.iter().map(|m| (m.from.0, m.to.iter().map(|c| c.0).collect())).collect();
        Ok(Self { config, map })
    }

    pub fn config(&self) -> &NormalizationConfig {
        &self.config
    }

    pub fn normalize(&self, text: &str) -> (String, NormalizationReport) {
        let mut report = NormalizationReport { input_chars: text.chars().count() as u64, ..Default::default() };
        let mut current = if self.config.apply_nfkc && !is_nfkc(text) {
            report.nfkc_changed_chars = count_nfkc_changed(text);
            text.nfkc().collect::<String>()
        } else {
            text.to_owned()
        };

        for _ in 0..MAX_ROUNDS {
            if self.map.is_empty() {
                break;
            }
            let Some(mapped) = self.apply_map(&current, &mut report) else {
                break;
            };
            // Deleting a mark or tatweel can expose a new canonical composition.
            if self.config.apply_nfkc && !is_nfkc(&mapped) {
                current = mapped.nfkc().collect();
            } else {
                current = mapped;
                break;
            }
        }

        if self.config.collapse_whitespace {
            current = collapse_whitespace(&current, &mut report.whitespace_changed_chars);
        }
        report.output_chars = current.chars().count() as u64;
        (current, report)
    }

    fn apply_map(&self, text: &str, report: &mut NormalizationReport) -> Option<String> {
        if !text.chars().any(|c| self.map.contains_key(&c)) {
            return None;
        }
        let mut out = String::with_capacity(text.len());
        for c in text.chars() {
            match self.map.get(&c) {
                Some(rep) => {
                    *report.replacements.entry(Codepoint(c).to_string()).or_default() += 1;
                    out.push_str(rep);
                }
                None => out.push(c),
            }
        }
        Some(out)
    }
}

/// Normalizes one string. Panics if `config` fails validation; use
/// [`Normalizer::new`] to handle that case.
pub fn normalize_text(text: &str, config: &NormalizationConfig) -> (String, NormalizationReport) {
    Normalizer::new(config.clone()).expect("invalid normalization config").normalize(text)
}

fn count_nfkc_changed(text: &str) -> u64 {
    let mut buf = [0u8; 4];
    text.chars()
        .filter(|&c| {
            let s: &str = c.encode_utf8(&mut buf);
            !is_nfkc(s) || s.nfkc().ne(std::iter::once(c))
        })
        .count() as u64
}

/// Runs of whitespace become one space, or one newline when the run holds a
/// newline. Leading and trailing whitespace is dropped.
fn collapse_whitespace(text: &str, changed: &mut u64) -> String {
    let mut out = String::with_capacity(text.len());
    let mut run_len = 0u64;
    let mut run_newline = false;
    let mut run_is_plain = true;
    for c in text.chars() {
        if c.is_whitespace() {
            run_len += 1;
            run_newline |= c == '\n';
            run_is_plain &= c == ' ';
            continue;
        }
        if run_len > 0 {
            if out.is_empty() {
                *changed += run_len;
            } else {
                let keep_as_is = run_len == 1 && (run_is_plain || run_newline);
                if !keep_as_is {
                    *changed += run_len;
                }
                out.push(if run_newline { '\n' } else { ' ' });
            }
        }
        run_len = 0;
        run_newline = false;
        run_is_plain = true;
        out.push(c);
    }
    *changed += run_len;
    out
}

/// A document as read from the raw corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    #[serde(rename = "id")]
    pub doc_id: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocFormat {
    /// One document per line; ids are 1-based line numbers.
    Lines,
    /// One `{"id", "text"}` object per line.
    Jsonl,
}

impl DocFormat {
    /// Picks JSONL for `.jsonl`/`.json` paths, plain lines otherwise.
    pub fn from_path(path: &str) -> Self {
        if path.ends_with(".jsonl") || path.ends_with(".json") {
            DocFormat::Jsonl
        } else {
            DocFormat::Lines
        }
    }
}

/// Streams documents from a reader. Blank lines are skipped in JSONL mode and
/// kept (as empty documents) in line mode.
pub fn read_documents<R: BufRead>(
    mut reader: R,
    format: DocFormat,
) -> impl Iterator<Item = Result<RawDocument, CorpusError>> {
    let mut line_no = 0u64;
    let mut buf = Vec::new();
    std::iter::from_fn(move || loop {
        buf.clear();
        line_no += 1;
        let doc_id = || format!("line {line_no}");
        match reader.read_until(b'\n', &mut buf) {
            Ok(0) => return None,
            Ok(_) => {}
            Err(source) => return Some(Err(CorpusError::Io { doc_id: doc_id(), source })),
        }
        while matches!(buf.last(), Some(b'\n' | b'\r')) {
            buf.pop();
        }
        let text = match std::str::from_utf8(&buf) {
            Ok(t) => t,
            Err(_) => return Some(Err(CorpusError::InvalidUtf8 { doc_id: doc_id() })),
        };
        return Some(match format {
            DocFormat::Lines => Ok(RawDocument { doc_id: line_no.to_string(), text: text.to_owned() }),
            DocFormat::Jsonl => {
                if text.trim().is_empty() {
                    continue;
                }
                serde_json::from_str(text)
                    .map_err(|e| CorpusError::BadRecord { doc_id: doc_id(), message: e.to_string() })
            }
        });
    })
}

pub fn write_document<W: Write>(mut w: W, doc: &RawDocument, format: DocFormat) -> io::Result<()> {
    match format {
        DocFormat::Lines => {
            // Newlines inside a document would split it on re-read.
            let flat = doc.text.replace('\n', " ");
            writeln!(w, "{flat}")
        }
        DocFormat::Jsonl => {
            serde_json::to_writer(&mut w, doc)?;
            writeln!(w)
        }
    }
}

const CORPUS_BATCH: usize = 4096;

/// Normalizes a document stream, preserving order. `emit` receives each
/// normalized document; an error from it aborts with that document's id.
pub fn normalize_corpus<I, F>(docs: I, normalizer: &Normalizer, mut emit: F) -> Result<NormalizationReport, CorpusError>
where
    I: IntoIterator<Item = Result<RawDocument, CorpusError>>,
    F: FnMut(&RawDocument) -> io::Result<()>,
{
    let mut total = NormalizationReport::default();
    let mut batch = Vec::with_capacity(CORPUS_BATCH);
    let mut docs = docs.into_iter();
    loop {
        batch.clear();
        for doc in docs.by_ref().take(CORPUS_BATCH) {
            batch.push(doc?);
        }
        if batch.is_empty() {
            return Ok(total);
        }
        for (doc, report) in normalize_batch(normalizer, &batch) {
            total.absorb(&report);
            emit(&doc).map_err(|source| CorpusError::Io { doc_id: doc.doc_id.clone(), source })?;
        }
    }
}

fn normalize_one(normalizer: &Normalizer, doc: &RawDocument) -> (RawDocument, NormalizationReport) {
    let (text, report) = normalizer.normalize(&doc.text);
    (RawDocument { doc_id: doc.doc_id.clone(), text }, report)
}

#[cfg(feature = "parallel")]
fn normalize_batch(normalizer: &Normalizer, batch: &[RawDocument]) -> Vec<(RawDocument, NormalizationReport)> {
    use rayon::prelude::*;
    batch.par_iter().map(|d| normalize_one(normalizer, d)).collect()
}

#[cfg(not(feature = "parallel"))]
fn normalize_batch(normalizer: &Normalizer, batch: &[RawDocument]) -> Vec<(RawDocument, NormalizationReport)> {
    batch.iter().map(|d| normalize_one(normalizer, d)).collect()
}
