//! Packs the tokenized corpus into fixed-length sequences with no padding.
//!
//! Documents are joined with one `[DOC]` token between neighbours and the
//! resulting stream is cut into consecutive `seq_len` windows; the final
//! partial window is dropped. Each window carries its word boundaries as
//! offsets: consecutive offsets `o[i]..o[i+1]` delimit one segment (a word or
//! a separator). Tokens before the first offset, or after the last, belong to
//! a word cut by the window edge. The offset `seq_len` is present exactly when
//! the window's final segment ends at the window edge.
//!
//! Shard layout, little-endian:
//!
//! ```text
//! "TKPK" | u32 version | u32 seq_len | u64 vocab_hash | u64 count
//! count * seq_len * u32 token ids
//! per sequence: u16 n, then n * u16 offsets
//! ```

use std::borrow::Borrow;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bpe::{Encoding, SpecialTokens, TokenId, Vocab};

pub const SHARD_MAGIC: [u8; 4] = *b"TKPK";
pub const SHARD_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PackerConfig {
    pub seq_len: u32,
    pub doc_separator: TokenId,
    pub shard_capacity: usize,
}

impl Default for PackerConfig {
    fn default() -> Self {
        Self { seq_len: 512, doc_separator: SpecialTokens::FIXED.doc, shard_capacity: 65_536 }
    }
}

impl PackerConfig {
    pub fn validate(&self) -> Result<(), PackError> {
        if self.seq_len < 2 || self.seq_len > u16::MAX as u32 {
            return Err(PackError::Config(format!("seq_len {} outside [2, 65535]", self.seq_len)));
        }
        if self.shard_capacity == 0 {
            return Err(PackError::Config("shard_capacity must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PackError {
    #[error("invalid packer config: {0}")]
    Config(String),
    #[error("document {doc}: token id {id} is outside the vocab of {vocab_size}")]
    InvalidToken { doc: usize, id: TokenId, vocab_size: usize },
    #[error("document {doc}: contains the padding token")]
    PadToken { doc: usize },
    #[error("shard {shard}: {source}")]
    Write {
        shard: String,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Error)]
pub enum ShardError {
    #[error("shard I/O: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {0:?}, expected \"TKPK\"")]
    BadMagic([u8; 4]),
    #[error("unsupported shard version {0}")]
    UnsupportedVersion(u32),
    #[error("vocab hash mismatch: shard has {found:016x}, vocab is {expected:016x}")]
    HashMismatch { expected: u64, found: u64 },
    #[error("shard truncated in {0}")]
    Truncated(&'static str),
    #[error("{0} unexpected bytes after the boundary section")]
    TrailingBytes(usize),
    #[error("invalid seq_len {0}")]
    BadSeqLen(u32),
    #[error("padding token at payload position {0}")]
    PadInPayload(usize),
    #[error("sequence {0}: boundary offsets not strictly increasing within [0, seq_len]")]
    BadBoundaries(usize),
}

/// One packed window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedSequence {
    pub ids: Vec<TokenId>,
    pub boundaries: Vec<u16>,
}

/// A block of packed sequences sharing one header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedShard {
    pub seq_len: u32,
    pub vocab_hash: u64,
    ids: Vec<TokenId>,
    boundaries: Vec<Vec<u16>>,
}

impl PackedShard {
    pub fn new(seq_len: u32, vocab_hash: u64) -> Self {
        Self { seq_len, vocab_hash, ids: Vec::new(), boundaries: Vec::new() }
    }

    pub fn push(&mut self, seq: PackedSequence) {
        assert_eq!(seq.ids.len(), self.seq_len as usize, "sequence length must equal seq_len");
        self.ids.extend_from_slice(&seq.ids);
        self.boundaries.push(seq.boundaries);
    }

    pub fn len(&self) -> usize {
        self.boundaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundaries.is_empty()
    }

    pub fn payload(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn sequence(&self, i: usize) -> &[TokenId] {
        let n = self.seq_len as usize;
        &self.ids[i * n..(i + 1) * n]
    }

    pub fn boundaries(&self, i: usize) -> &[u16] {
        &self.boundaries[i]
    }

    /// Complete segments of sequence `i` as half-open ranges.
    pub fn segments(&self, i: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.boundaries[i].windows(2).map(|w| (w[0] as usize, w[1] as usize))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.ids.len() * 4);
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&SHARD_MAGIC)?;
        w.write_all(&SHARD_VERSION.to_le_bytes())?;
        w.write_all(&self.seq_len.to_le_bytes())?;
        w.write_all(&self.vocab_hash.to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.ids.len() * 4);
        for id in &self.ids {
            buf.extend_from_slice(&id.to_le_bytes());
        }
        for b in &self.boundaries {
            buf.extend_from_slice(&(b.len() as u16).to_le_bytes());
            for o in b {
                buf.extend_from_slice(&o.to_le_bytes());
            }
        }
        w.write_all(&buf)
    }

    /// Parses and validates a shard image. With `expected_hash`, the header's
    /// vocab hash must match it.
    pub fn from_bytes(bytes: &[u8], expected_hash: Option<u64>) -> Result<Self, ShardError> {
        let mut r = Reader { bytes, at: 0 };
        let magic: [u8; 4] = r.take(4, "header")?.try_into().unwrap();
        if magic != SHARD_MAGIC {
            return Err(ShardError::BadMagic(magic));
        }
        let version = r.u32("header")?;
        if version != SHARD_VERSION {
            return Err(ShardError::UnsupportedVersion(version));
        }
        let seq_len = r.u32("header")?;
        if !(2..=u16::MAX as u32).contains(&seq_len) {
            return Err(ShardError::BadSeqLen(seq_len));
        }
        let vocab_hash = r.u64("header")?;
        if let Some(expected) = expected_hash {
            if expected != vocab_hash {
                return Err(ShardError::HashMismatch { expected, found: vocab_hash });
            }
        }
        let count = r.u64("header")? as usize;
        let total = count
            .checked_mul(seq_len as usize)
            .filter(|t| t.checked_mul(4).is_some_and(|b| b <= bytes.len()))
            .ok_or(ShardError::Truncated("payload"))?;
        let raw = r.take(total * 4, "payload")?;
        let ids: Vec<TokenId> = raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
        let pad = SpecialTokens::FIXED.pad;
        if let Some(pos) = ids.iter().position(|&id| id == pad) {
            return Err(ShardError::PadInPayload(pos));
        }
        let mut boundaries = Vec::with_capacity(count);
        for seq in 0..count {
            let n = r.u16("boundaries")? as usize;
            let offs: Vec<u16> = r
                .take(n * 2, "boundaries")?
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let ordered = offs.windows(2).all(|w| w[0] < w[1]);
            if !ordered || offs.last().is_some_and(|&o| o as u32 > seq_len) {
                return Err(ShardError::BadBoundaries(seq));
            }
            boundaries.push(offs);
        }
        if r.at != bytes.len() {
            return Err(ShardError::TrailingBytes(bytes.len() - r.at));
        }
        Ok(Self { seq_len, vocab_hash, ids, boundaries })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, section: &'static str) -> Result<&'a [u8], ShardError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(ShardError::Truncated(section))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u16(&mut self, s: &'static str) -> Result<u16, ShardError> {
        Ok(u16::from_le_bytes(self.take(2, s)?.try_into().unwrap()))
    }

    fn u32(&mut self, s: &'static str) -> Result<u32, ShardError> {
        Ok(u32::from_le_bytes(self.take(4, s)?.try_into().unwrap()))
    }

    fn u64(&mut self, s: &'static str) -> Result<u64, ShardError> {
        Ok(u64::from_le_bytes(self.take(8, s)?.try_into().unwrap()))
    }
}

pub fn read_shard(path: impl AsRef<Path>, expected_hash: Option<u64>) -> Result<PackedShard, ShardError> {
    PackedShard::from_bytes(&fs::read(path)?, expected_hash)
}

pub fn write_shard(path: impl AsRef<Path>, shard: &PackedShard) -> io::Result<()> {
    let mut f = io::BufWriter::new(fs::File::create(path)?);
    shard.write_to(&mut f)?;
    f.flush()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackReport {
    pub documents: u64,
    pub empty_documents: u64,
    /// Stream length including separators.
    pub stream_tokens: u64,
    pub sequences: u64,
    pub shards: u64,
    /// Tokens in the dropped final partial window.
    pub remainder: u64,
}

/// Streaming packer. Feed documents in order, then call [`Packer::finish`].
#[derive(Debug)]
pub struct Packer {
    cfg: PackerConfig,
    vocab_size: usize,
    pad: TokenId,
    window: PackedSequence,
    any_doc: bool,
    report: PackReport,
}

impl Packer {
    pub fn new(cfg: PackerConfig, vocab_size: usize) -> Result<Self, PackError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            vocab_size,
            pad: SpecialTokens::FIXED.pad,
            window: PackedSequence { ids: Vec::with_capacity(cfg.seq_len as usize), boundaries: Vec::new() },
            any_doc: false,
            report: PackReport::default(),
        })
    }

    pub fn push_doc<F>(&mut self, doc: usize, enc: &Encoding, emit: &mut F) -> Result<(), PackError>
    where
        F: FnMut(PackedSequence) -> Result<(), PackError>,
    {
        self.report.documents += 1;
        if enc.ids.is_empty() {
            self.report.empty_documents += 1;
            return Ok(());
        }
        if let Some(&id) = enc.ids.iter().find(|&&id| id as usize >= self.vocab_size) {
            return Err(PackError::InvalidToken { doc, id, vocab_size: self.vocab_size });
        }
        if enc.ids.contains(&self.pad) {
            return Err(PackError::PadToken { doc });
        }
        if self.any_doc {
            self.push_token(self.cfg.doc_separator, true, emit)?;
        }
        self.any_doc = true;
        let mut starts = enc.word_starts.iter().peekable();
        for (i, &id) in enc.ids.iter().enumerate() {
            let mut is_start = i == 0;
            while let Some(&&s) = starts.peek() {
                if s as usize > i {
                    break;
                }
                is_start |= s as usize == i;
                starts.next();
            }
            self.push_token(id, is_start, emit)?;
        }
        Ok(())
    }

    fn push_token<F>(&mut self, id: TokenId, is_start: bool, emit: &mut F) -> Result<(), PackError>
    where
        F: FnMut(PackedSequence) -> Result<(), PackError>,
    {
        let n = self.cfg.seq_len as usize;
        if self.window.ids.len() == n {
            self.flush(is_start, emit)?;
        }
        if is_start {
            self.window.boundaries.push(self.window.ids.len() as u16);
        }
        self.window.ids.push(id);
        self.report.stream_tokens += 1;
        Ok(())
    }

    fn flush<F>(&mut self, next_is_start: bool, emit: &mut F) -> Result<(), PackError>
    where
        F: FnMut(PackedSequence) -> Result<(), PackError>,
    {
        let n = self.cfg.seq_len as usize;
        let mut seq =
            std::mem::replace(&mut self.window, PackedSequence { ids: Vec::with_capacity(n), boundaries: Vec::new() });
        if next_is_start {
            seq.boundaries.push(n as u16);
        }
        self.report.sequences += 1;
        emit(seq)
    }

    pub fn finish<F>(mut self, emit: &mut F) -> Result<PackReport, PackError>
    where
        F: FnMut(PackedSequence) -> Result<(), PackError>,
    {
        if self.window.ids.len() == self.cfg.seq_len as usize {
            self.flush(true, emit)?;
        }
        self.report.remainder = self.window.ids.len() as u64;
        Ok(self.report)
    }
}

/// Packs documents and hands each full shard to `sink`.
pub fn pack_with<I, S>(docs: I, cfg: &PackerConfig, vocab: &Vocab, mut sink: S) -> Result<PackReport, PackError>
where
    I: IntoIterator,
    I::Item: Borrow<Encoding>,
    S: FnMut(usize, PackedShard) -> Result<(), PackError>,
{
    let mut packer = Packer::new(*cfg, vocab.len())?;
    let mut shard = PackedShard::new(cfg.seq_len, vocab.content_hash());
    let mut shard_index = 0usize;
    let mut emit = |seq: PackedSequence| -> Result<(), PackError> {
        shard.push(seq);
        if shard.len() == cfg.shard_capacity {
            let full = std::mem::replace(&mut shard, PackedShard::new(cfg.seq_len, vocab.content_hash()));
            sink(shard_index, full)?;
            shard_index += 1;
        }
        Ok(())
    };
    for (i, enc) in docs.into_iter().enumerate() {
        packer.push_doc(i, enc.borrow(), &mut emit)?;
    }
    let mut report = packer.finish(&mut emit)?;
    if !shard.is_empty() {
        sink(shard_index, shard)?;
        shard_index += 1;
    }
    report.shards = shard_index as u64;
    Ok(report)
}

/// In-memory packing.
pub fn pack<I>(docs: I, cfg: &PackerConfig, vocab: &Vocab) -> Result<(Vec<PackedShard>, PackReport), PackError>
where
    I: IntoIterator,
    I::Item: Borrow<Encoding>,
{
    let mut shards = Vec::new();
    let report = pack_with(docs, cfg, vocab, |_, s| {
        shards.push(s);
        Ok(())
    })?;
    Ok((shards, report))
}

pub fn shard_file_name(index: usize) -> String {
    format!("shard_{index:05}.tkpk")
}

/// Packs into `dir/shard_NNNNN.tkpk` files and returns their paths.
pub fn pack_to_dir<I>(
    docs: I,
    cfg: &PackerConfig,
    vocab: &Vocab,
    dir: &Path,
) -> Result<(Vec<PathBuf>, PackReport), PackError>
where
    I: IntoIterator,
    I::Item: Borrow<Encoding>,
{
    fs::create_dir_all(dir).map_err(|source| PackError::Write { shard: dir.display().to_string(), source })?;
    let mut paths = Vec::new();
    let report = pack_with(docs, cfg, vocab, |i, shard| {
        let path = dir.join(shard_file_name(i));
        write_shard(&path, &shard).map_err(|source| PackError::Write { shard: path.display().to_string(), source })?;
        paths.push(path);
        Ok(())
    })?;
    Ok((paths, report))
}
