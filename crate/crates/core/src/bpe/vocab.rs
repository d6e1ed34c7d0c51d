use rustc_hash::FxHashMap;
use std::io;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub type TokenId = u32;

pub const VOCAB_FORMAT_VERSION: u32 = 1;
pub const NUM_SPECIAL: u32 = 6;
/// Id of the token for byte `0x00`; byte `b` has id `BYTE_OFFSET + b`.
pub const BYTE_OFFSET: u32 = NUM_SPECIAL;
pub(crate) const FIRST_MERGE_ID: u32 = BYTE_OFFSET + 256;

const SPECIAL_NAMES: [&str; NUM_SPECIAL as usize] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "[DOC]"];

/// Fixed ids of the control tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokens {
    pub pad: TokenId,
    pub unk: TokenId,
    pub cls: TokenId,
    pub sep: TokenId,
    pub mask: TokenId,
    pub doc: TokenId,
}

impl SpecialTokens {
    pub const FIXED: SpecialTokens = SpecialTokens { pad: 0, unk: 1, cls: 2, sep: 3, mask: 4, doc: 5 };

    fn by_name(&self) -> IndexMap<String, TokenId> {
        SPECIAL_NAMES
            .iter()
            .zip([self.pad, self.unk, self.cls, self.sep, self.mask, self.doc])
            .map(|(n, id)| (n.to_string(), id))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeRule {
    pub left: TokenId,
    pub right: TokenId,
    pub result: TokenId,
    pub rank: u32,
}

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("vocab I/O: {0}")]
    Io(#[from] io::Error),
    #[error("vocab JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported vocab format version {0}")]
    UnsupportedVersion(u32),
    #[error("token {index}: invalid base64")]
    BadBase64 { index: usize },
    #[error("special token {name} must have id {expected}, found {found:?}")]
    SpecialMismatch { name: String, expected: TokenId, found: Option<TokenId> },
    #[error("token {id} should be the single byte {byte:#04x}")]
    BadByteToken { id: TokenId, byte: u8 },
    #[error("merge rank {rank}: {reason}")]
    InconsistentMerge { rank: usize, reason: String },
    #[error("token table has {tokens} entries but merges define {expected}")]
    TableSize { tokens: usize, expected: usize },
    #[error("content hash mismatch: file says {stored}, contents hash to {computed}")]
    HashMismatch { stored: String, computed: String },
}

/// The tokenizer's complete learned state.
///
/// Layout: ids `0..6` are the special tokens, `6..262` the 256 single bytes,
/// and each merge appends one token in rank order. Two merges may produce the
/// same byte string through different operand splits; ids stay unique.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<Vec<u8>>,
    merges: Vec<MergeRule>,
    specials: SpecialTokens,
    content_hash: u64,
    lookup: FxHashMap<u64, (u32, TokenId)>,
}

#[inline]
pub(crate) fn pair_key(left: TokenId, right: TokenId) -> u64 {
    ((left as u64) << 32) | right as u64
}

impl Vocab {
    /// Special tokens plus the byte alphabet, no merges.
    pub fn base() -> Self {
        let mut tokens: Vec<Vec<u8>> = SPECIAL_NAMES.iter().map(|n| n.as_bytes().to_vec()).collect();
        tokens.extend((0..=255u8).map(|b| vec![b]));
        let mut v = Self {
            tokens,
            merges: Vec::new(),
            specials: SpecialTokens::FIXED,
            content_hash: 0,
            lookup: FxHashMap::default(),
        };
        v.content_hash = v.compute_hash();
        v
    }

    /// Appends the merge `left + right` and returns the new token's id.
    pub(crate) fn push_merge(&mut self, left: TokenId, right: TokenId) -> TokenId {
        let result = self.tokens.len() as TokenId;
        let rank = self.merges.len() as u32;
        let mut bytes = self.tokens[left as usize].clone();
        bytes.extend_from_slice(&self.tokens[right as usize]);
        self.tokens.push(bytes);
        self.merges.push(MergeRule { left, right, result, rank });
        self.lookup.insert(pair_key(left, right), (rank, result));
        result
    }

    pub(crate) fn finish(mut self) -> Self {
        self.content_hash = self.compute_hash();
        self
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[Vec<u8>] {
        &self.tokens
    }

    pub fn merges(&self) -> &[MergeRule] {
        &self.merges
    }

    pub fn specials(&self) -> SpecialTokens {
        self.specials
    }

    pub fn content_hash(&self) -> u64 {
        self.content_hash
    }

    pub fn token_bytes(&self, id: TokenId) -> Option<&[u8]> {
        self.tokens.get(id as usize).map(Vec::as_slice)
    }

    #[inline]
    pub fn byte_token(b: u8) -> TokenId {
        BYTE_OFFSET + b as TokenId
    }

    #[inline]
    pub fn is_special(&self, id: TokenId) -> bool {
        id < NUM_SPECIAL
    }

    #[inline]
    pub fn is_byte(&self, id: TokenId) -> bool {
        (BYTE_OFFSET..FIRST_MERGE_ID).contains(&id)
    }

    /// `(rank, result)` of the merge for this adjacent pair, if one exists.
    #[inline]
    pub fn merge_for(&self, left: TokenId, right: TokenId) -> Option<(u32, TokenId)> {
        self.lookup.get(&pair_key(left, right)).copied()
    }

    /// Display form of a token: UTF-8 where possible, `<0xNN>` byte escapes otherwise.
    pub fn token_display(&self, id: TokenId) -> String {
        let Some(bytes) = self.token_bytes(id) else {
            return format!("<oob:{id}>");
        };
        match std::str::from_utf8(bytes) {
            Ok(s) => s.to_owned(),
            Err(_) => bytes.iter().map(|b| format!("<0x{b:02X}>")).collect(),
        }
    }

    fn compute_hash(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(b"tooka-vocab-v1");
        h.update((self.tokens.len() as u64).to_le_bytes());
        for t in &self.tokens {
            h.update((t.len() as u32).to_le_bytes());
            h.update(t);
        }
        h.update((self.merges.len() as u64).to_le_bytes());
        for m in &self.merges {
            h.update(m.left.to_le_bytes());
            h.update(m.right.to_le_bytes());
            h.update(m.result.to_le_bytes());
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    /// Rebuilds a vocab from its merge list alone. Used as the self-consistency
    /// check on load: the replayed table must equal the stored one.
    pub fn from_merges(pairs: impl IntoIterator<Item = (TokenId, TokenId)>) -> Result<Self, VocabError> {
        let mut v = Self::base();
        for (rank, (left, right)) in pairs.into_iter().enumerate() {
            let next = v.tokens.len() as TokenId;
            for operand in [left, right] {
                if operand >= next || operand < BYTE_OFFSET {
                    return Err(VocabError::InconsistentMerge {
                        rank,
                        reason: format!("operand {operand} is special or not yet created"),
                    });
                }
            }
            if v.lookup.contains_key(&pair_key(left, right)) {
                return Err(VocabError::InconsistentMerge { rank, reason: "duplicate pair".into() });
            }
            v.push_merge(left, right);
        }
        Ok(v.finish())
    }

    pub fn to_json(&self) -> String {
        let file = VocabFile {
            version: VOCAB_FORMAT_VERSION,
            special_tokens: self.specials.by_name(),
            tokens: self.tokens.iter().map(|t| B64.encode(t)).collect(),
            merges: self.merges.iter().map(|m| [m.left, m.right, m.result]).collect(),
            content_hash: format!("{:016x}", self.content_hash),
        };
        serde_json::to_string(&file).expect("vocab serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, VocabError> {
        let file: VocabFile = serde_json::from_str(json)?;
        if file.version != VOCAB_FORMAT_VERSION {
            return Err(VocabError::UnsupportedVersion(file.version));
        }
        for (name, expected) in SpecialTokens::FIXED.by_name() {
            let found = file.special_tokens.get(&name).copied();
            if found != Some(expected) {
                return Err(VocabError::SpecialMismatch { name, expected, found });
            }
        }
        let tokens = file
            .tokens
            .iter()
            .enumerate()
            .map(|(index, t)| B64.decode(t).map_err(|_| VocabError::BadBase64 { index }))
            .collect::<Result<Vec<_>, _>>()?;
        for b in 0..=255u8 {
            let id = Self::byte_token(b);
            if tokens.get(id as usize).map(Vec::as_slice) != Some(&[b][..]) {
                return Err(VocabError::BadByteToken { id, byte: b });
            }
        }
        for (rank, m) in file.merges.iter().enumerate() {
            if m[2] != FIRST_MERGE_ID + rank as u32 {
                return Err(VocabError::InconsistentMerge {
                    rank,
                    reason: format!("result id {} out of creation order", m[2]),
                });
            }
        }
        let replayed = Self::from_merges(file.merges.iter().map(|m| (m[0], m[1])))?;
        if replayed.tokens.len() != tokens.len() {
            return Err(VocabError::TableSize { tokens: tokens.len(), expected: replayed.tokens.len() });
        }
        if let Some(rank) = (FIRST_MERGE_ID as usize..tokens.len()).find(|&i| replayed.tokens[i] != tokens[i]) {
            return Err(VocabError::InconsistentMerge {
                rank: rank - FIRST_MERGE_ID as usize,
                reason: "result bytes differ from operand concatenation".into(),
            });
        }
        let stored = file.content_hash.to_ascii_lowercase();
        let computed = format!("{:016x}", replayed.content_hash);
        if stored != computed {
            return Err(VocabError::HashMismatch { stored, computed });
        }
        Ok(replayed)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), VocabError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VocabError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    version: u32,
    special_tokens: IndexMap<String, TokenId>,
    tokens: Vec<String>,
    merges: Vec<[TokenId; 3]>,
    content_hash: String,
}
