//! Encoding with BPE-dropout, and decoding.
//!
//! Within each word the encoder starts from single-byte tokens and repeatedly
//! applies the lowest-rank applicable merge (leftmost on ties). Under dropout,
//! every candidate merge site at every step is skipped with probability `p`;
//! when all candidates are skipped the word is final. The skip draw is a hash
//! of `(seed, word offset, step, position)`, so results do not depend on call
//! order or threads.

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::pretokenize::pretokenize_with_offsets;
use super::vocab::{TokenId, Vocab};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodeOptions {
    pub dropout_p: f64,
    pub seed: u64,
    pub add_special: bool,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        Self::inference()
    }
}

impl EncodeOptions {
    /// Canonical greedy segmentation, no special tokens.
    pub fn inference() -> Self {
        Self { dropout_p: 0.0, seed: 0, add_special: false }
    }

    pub fn pretraining(seed: u64) -> Self {
        Self { dropout_p: super::PRETRAIN_DROPOUT, seed, add_special: false }
    }

    pub fn with_dropout(dropout_p: f64, seed: u64) -> Self {
        Self { dropout_p, seed, add_special: false }
    }

    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.dropout_p)
    }
}

/// Token ids plus the index of the first token of every word.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoding {
    pub ids: Vec<TokenId>,
    pub word_starts: Vec<u32>,
}

impl Encoding {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Half-open token ranges of each word.
    pub fn word_spans(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let end = self.ids.len();
        self.word_starts.iter().enumerate().map(move |(i, &s)| {
            let e = self.word_starts.get(i + 1).map_or(end, |&n| n as usize);
            (s as usize, e)
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("token id {id} at index {index} is outside the vocab of {vocab_size}")]
    OutOfRange { index: usize, id: TokenId, vocab_size: usize },
}

/// Encoder bound to one vocab, with a word cache for the no-dropout path.
#[derive(Debug)]
pub struct Encoder<'v> {
    vocab: &'v Vocab,
    cache: FxHashMap<Box<[u8]>, Box<[TokenId]>>,
    cache_limit: usize,
}

impl<'v> Encoder<'v> {
    pub fn new(vocab: &'v Vocab) -> Self {
        Self { vocab, cache: FxHashMap::default(), cache_limit: 1 << 20 }
    }

    pub fn vocab(&self) -> &'v Vocab {
        self.vocab
    }

    /// Panics if `opts.dropout_p` is outside `[0, 1]`.
    pub fn encode(&mut self, text: &str, opts: &EncodeOptions) -> Encoding {
        assert!(opts.is_valid(), "dropout_p must lie in [0, 1], got {}", opts.dropout_p);
        let specials = self.vocab.specials();
        let mut out = Encoding::default();
        if opts.add_special {
            out.ids.push(specials.cls);
        }
        let mut scratch = Vec::new();
        for (offset, word) in pretokenize_with_offsets(text) {
            out.word_starts.push(out.ids.len() as u32);
            if opts.dropout_p == 0.0 {
                if let Some(hit) = self.cache.get(word.as_bytes()) {
                    out.ids.extend_from_slice(hit);
                    continue;
                }
                segment_word(self.vocab, word.as_bytes(), opts, offset as u64, &mut scratch);
                if self.cache.len() < self.cache_limit {
                    self.cache.insert(word.as_bytes().into(), scratch.as_slice().into());
                }
            } else {
                segment_word(self.vocab, word.as_bytes(), opts, offset as u64, &mut scratch);
            }
            out.ids.extend_from_slice(&scratch);
        }
        if opts.add_special {
            out.ids.push(specials.sep);
        }
        out
    }
}

fn segment_word(vocab: &Vocab, word: &[u8], opts: &EncodeOptions, offset: u64, ids: &mut Vec<TokenId>) {
    ids.clear();
    ids.extend(word.iter().map(|&b| Vocab::byte_token(b)));
    if opts.dropout_p >= 1.0 {
        return;
    }
    let dropout = opts.dropout_p > 0.0;
    let mut step = 0u64;
    loop {
        let mut best: Option<(u32, usize, TokenId)> = None;
        for i in 0..ids.len().saturating_sub(1) {
            let Some((rank, result)) = vocab.merge_for(ids[i], ids[i + 1]) else {
                continue;
            };
            if best.is_some_and(|(r, _, _)| r <= rank) {
                continue;
            }
            if dropout && rng::unit_f64(opts.seed, &[offset, step, i as u64]) < opts.dropout_p {
                continue;
            }
            best = Some((rank, i, result));
        }
        let Some((_, i, result)) = best else { break };
        ids[i] = result;
        ids.remove(i + 1);
        step += 1;
    }
}

/// Encodes one text. See [`Encoder`] for repeated use.
pub fn encode(text: &str, vocab: &Vocab, opts: &EncodeOptions) -> Encoding {
    Encoder::new(vocab).encode(text, opts)
}

/// Encodes documents in order. Document `i` uses seed `hash(opts.seed, i)`,
/// so the output is identical however the work is split across threads.
pub fn encode_corpus<S: AsRef<str> + Sync>(docs: &[S], vocab: &Vocab, opts: &EncodeOptions) -> Vec<Encoding> {
    encode_batch(docs, 0, vocab, opts)
}

/// [`encode_corpus`] for a slice of a larger stream whose first document has
/// index `first`. Batches encoded this way concatenate to the whole-corpus
/// result.
pub fn encode_batch<S: AsRef<str> + Sync>(
    docs: &[S],
    first: u64,
    vocab: &Vocab,
    opts: &EncodeOptions,
) -> Vec<Encoding> {
    let per_doc = |i: usize| EncodeOptions { seed: rng::hash_key(opts.seed, &[first + i as u64]), ..*opts };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        docs.par_iter()
            .enumerate()
            .map_init(|| Encoder::new(vocab), |enc, (i, d)| enc.encode(d.as_ref(), &per_doc(i)))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut enc = Encoder::new(vocab);
        docs.iter().enumerate().map(|(i, d)| enc.encode(d.as_ref(), &per_doc(i))).collect()
    }
}

/// Concatenates token bytes, skipping special tokens. Invalid UTF-8 (only
/// possible for id sequences no encoder produced) is replaced with U+FFFD.
pub fn decode(ids: &[TokenId], vocab: &Vocab) -> Result<String, DecodeError> {
    let mut bytes = Vec::with_capacity(ids.len() * 3);
    for (index, &id) in ids.iter().enumerate() {
        let Some(t) = vocab.token_bytes(id) else {
            return Err(DecodeError::OutOfRange { index, id, vocab_size: vocab.len() });
        };
        if !vocab.is_special(id) {
            bytes.extend_from_slice(t);
        }
    }
    Ok(match String::from_utf8(bytes) {
        Ok(s) => s,
        Err(e) => String::from_utf8_lossy(e.as_bytes()).into_owned(),
    })
}
