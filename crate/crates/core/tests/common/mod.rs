//! Slow, obviously-correct reference implementations used as oracles.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use tooka_core::bpe::{pretokenize, Encoding, TokenId, BYTE_OFFSET};

/// Brute-force BPE: recount every adjacent pair from scratch each round, take
/// the most frequent (ties: smaller left bytes, smaller right bytes, smaller
/// ids), rewrite every word left to right. Returns the merged id pairs.
pub fn naive_train(docs: &[String], target_vocab: usize, min_freq: u64) -> Vec<(TokenId, TokenId)> {
    let mut words: BTreeMap<Vec<u8>, u64> = BTreeMap::new();
    for d in docs {
        for w in pretokenize(d) {
            *words.entry(w.as_bytes().to_vec()).or_default() += 1;
        }
    }
    let mut bytes: Vec<Vec<u8>> = vec![Vec::new(); BYTE_OFFSET as usize];
    bytes.extend((0..=255u8).map(|b| vec![b]));
    let mut seqs: Vec<(Vec<TokenId>, u64)> =
        words.into_iter().map(|(w, c)| (w.iter().map(|&b| b as TokenId + BYTE_OFFSET).collect(), c)).collect();
    let mut merges = Vec::new();
    while bytes.len() < target_vocab {
        let mut counts: BTreeMap<(TokenId, TokenId), u64> = BTreeMap::new();
        for (s, c) in &seqs {
            for p in s.windows(2) {
                *counts.entry((p[0], p[1])).or_default() += c;
            }
        }
        let Some((&best, &n)) = counts.iter().min_by(|(a, ca), (b, cb)| {
            cb.cmp(ca)
                .then_with(|| bytes[a.0 as usize].cmp(&bytes[b.0 as usize]))
                .then_with(|| bytes[a.1 as usize].cmp(&bytes[b.1 as usize]))
                .then_with(|| a.cmp(b))
        }) else {
            break;
        };
        if n < min_freq {
            break;
        }
        let id = bytes.len() as TokenId;
        bytes.push([bytes[best.0 as usize].clone(), bytes[best.1 as usize].clone()].concat());
        merges.push(best);
        for (s, _) in seqs.iter_mut() {
            let mut out = Vec::with_capacity(s.len());
            let mut i = 0;
            while i < s.len() {
                if i + 1 < s.len() && (s[i], s[i + 1]) == best {
                    out.push(id);
                    i += 2;
                } else {
                    out.push(s[i]);
                    i += 1;
                }
            }
            *s = out;
        }
    }
    merges
}

/// Random text of at most `max_bytes` bytes over a small alphabet, so pair
/// frequencies collide and tie-breaking gets exercised.
pub fn random_corpus(rng: &mut impl Rng, max_bytes: usize) -> Vec<String> {
    const ALPHABET: &[&str] = &["a", "b", "c", " ", " ", "ب", "ی", "ک", "\u{200C}", "،", ".", "1"];
    let mut docs = Vec::new();
    let mut doc = String::new();
    let mut total = 0;
    loop {
        let piece = ALPHABET[rng.gen_range(0..ALPHABET.len())];
        if total + piece.len() > max_bytes {
            break;
        }
        total += piece.len();
        doc.push_str(piece);
        if rng.gen_bool(0.05) {
            docs.push(std::mem::take(&mut doc));
        }
    }
    docs.push(doc);
    docs
}

/// Random text over a wide character mix, including multi-byte scripts,
/// combining marks, emoji, controls and mixed whitespace.
pub fn random_text(rng: &mut impl Rng, max_chars: usize) -> String {
    let n = rng.gen_range(0..=max_chars);
    (0..n)
        .map(|_| match rng.gen_range(0..10) {
            0..=3 => char::from_u32(rng.gen_range(0x0621..=0x064A)).unwrap(),
            4 => ['پ', 'چ', 'ژ', 'گ', 'ک', 'ی', '\u{200C}', '۱', '۲'][rng.gen_range(0..9)],
            5 => [' ', ' ', '\t', '\n', '\u{00A0}', '\u{3000}'][rng.gen_range(0..6)],
            6 => rng.gen_range(b'!'..=b'~') as char,
            7 => char::from_u32(rng.gen_range(0x1F600..=0x1F64F)).unwrap(),
            8 => char::from_u32(rng.gen_range(0x0300..=0x036F)).unwrap(),
            _ => loop {
                if let Some(c) = char::from_u32(rng.gen_range(0..=0x10FFFF)) {
                    break c;
                }
            },
        })
        .collect()
}

/// Separator-joined stream of non-empty documents.
pub fn joined_stream(docs: &[Encoding], sep: TokenId) -> Vec<TokenId> {
    let mut out = Vec::new();
    let mut first = true;
    for d in docs.iter().filter(|d| !d.ids.is_empty()) {
        if !first {
            out.push(sep);
        }
        first = false;
        out.extend_from_slice(&d.ids);
    }
    out
}

/// Random synthetic encodings: ids in `[BYTE_OFFSET, vocab)` split into words
/// of 1..=4 tokens; roughly one document in ten is empty.
pub fn synthetic_docs(rng: &mut impl Rng, total_tokens: usize, vocab: usize) -> Vec<Encoding> {
    let mut docs = Vec::new();
    let mut made = 0;
    while made < total_tokens {
        let len = if rng.gen_bool(0.1) { 0 } else { rng.gen_range(1..=600).min(total_tokens - made) };
        let ids: Vec<TokenId> = (0..len).map(|_| rng.gen_range(BYTE_OFFSET..vocab as TokenId)).collect();
        let mut word_starts = Vec::new();
        let mut i = 0;
        while i < len {
            word_starts.push(i as u32);
            i += rng.gen_range(1..=4);
        }
        made += len;
        docs.push(Encoding { ids, word_starts });
    }
    docs
}
