//! Greedy BPE training with incremental pair counts.
//!
//! Each step merges the most frequent adjacent pair inside words. Ties go to
//! the lexicographically smaller `(left bytes, right bytes)`, then to the
//! smaller id pair. Pair counts are kept incrementally and the max pair is
//! found through a lazily-invalidated heap, which gives the same merge
//! sequence as recounting everything each round.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use rustc_hash::{FxHashMap, FxHashSet};
use thiserror::Error;

use super::pretokenize::pretokenize;
use super::vocab::{pair_key, TokenId, Vocab, NUM_SPECIAL};
use super::{DEFAULT_MIN_PAIR_FREQUENCY, DEFAULT_VOCAB_SIZE};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrainError {
    #[error("training corpus contains no words")]
    EmptyCorpus,
    #[error("target vocab {target} is below the {minimum} special and byte tokens")]
    TargetTooSmall { target: usize, minimum: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainParams {
    pub target_vocab: usize,
    pub min_pair_frequency: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self { target_vocab: DEFAULT_VOCAB_SIZE, min_pair_frequency: DEFAULT_MIN_PAIR_FREQUENCY }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub vocab: Vocab,
    /// False when no pair met `min_pair_frequency` before the target size.
    pub reached_target: bool,
}

/// Word frequencies of a corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordCounts(pub FxHashMap<Vec<u8>, u64>);

impl WordCounts {
    pub fn add_text(&mut self, text: &str) {
        for w in pretokenize(text) {
            if let Some(c) = self.0.get_mut(w.as_bytes()) {
                *c += 1;
            } else {
                self.0.insert(w.as_bytes().to_vec(), 1);
            }
        }
    }

    pub fn merge(mut self, other: WordCounts) -> WordCounts {
        let (mut big, small) = if self.0.len() >= other.0.len() { (self, other) } else { (other, self) };
        for (w, c) in small.0 {
            *big.0.entry(w).or_default() += c;
        }
        self = big;
        self
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Counts words across documents, in parallel when enabled.
pub fn count_words<'a, I>(docs: I) -> WordCounts
where
    I: IntoIterator<Item = &'a str>,
{
    let docs: Vec<&str> = docs.into_iter().collect();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        docs.par_iter()
            .fold(WordCounts::default, |mut acc, d| {
                acc.add_text(d);
                acc
            })
            .reduce(WordCounts::default, WordCounts::merge)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut acc = WordCounts::default();
        for d in docs {
            acc.add_text(d);
        }
        acc
    }
}

pub fn train_bpe<'a, I>(docs: I, params: TrainParams) -> Result<TrainOutcome, TrainError>
where
    I: IntoIterator<Item = &'a str>,
{
    train_from_counts(&count_words(docs), params)
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Candidate {
    count: u64,
    left: Arc<[u8]>,
    right: Arc<[u8]>,
    pair: (TokenId, TokenId),
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| other.left.cmp(&self.left))
            .then_with(|| other.right.cmp(&self.right))
            .then_with(|| other.pair.cmp(&self.pair))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct State {
    words: Vec<Vec<TokenId>>,
    freqs: Vec<u64>,
    bytes: Vec<Arc<[u8]>>,
    pair_counts: FxHashMap<u64, u64>,
    locations: FxHashMap<u64, FxHashSet<usize>>,
    heap: BinaryHeap<Candidate>,
}

impl State {
    fn candidate(&self, l: TokenId, r: TokenId, count: u64) -> Candidate {
        Candidate { count, left: self.bytes[l as usize].clone(), right: self.bytes[r as usize].clone(), pair: (l, r) }
    }
}

pub fn train_from_counts(counts: &WordCounts, params: TrainParams) -> Result<TrainOutcome, TrainError> {
    let minimum = (NUM_SPECIAL + 256) as usize;
    if params.target_vocab < minimum {
        return Err(TrainError::TargetTooSmall { target: params.target_vocab, minimum });
    }
    if counts.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }

    // Sorted so word indices, and therefore everything downstream, are stable.
    let mut entries: Vec<(&Vec<u8>, u64)> = counts.0.iter().map(|(w, c)| (w, *c)).collect();
    entries.sort_unstable();

    let mut vocab = Vocab::base();
    let mut st = State {
        words: entries.iter().map(|(w, _)| w.iter().map(|&b| Vocab::byte_token(b)).collect()).collect(),
        freqs: entries.iter().map(|(_, c)| *c).collect(),
        bytes: vocab.tokens().iter().map(|t| Arc::from(t.as_slice())).collect(),
        pair_counts: FxHashMap::default(),
        locations: FxHashMap::default(),
        heap: BinaryHeap::new(),
    };

    for (wi, word) in st.words.iter().enumerate() {
        for p in word.windows(2) {
            let key = pair_key(p[0], p[1]);
            *st.pair_counts.entry(key).or_default() += st.freqs[wi];
            st.locations.entry(key).or_default().insert(wi);
        }
    }
    let mut initial: Vec<(u64, u64)> = st.pair_counts.iter().map(|(k, c)| (*k, *c)).collect();
    initial.sort_unstable();
    for (key, count) in initial {
        let c = st.candidate((key >> 32) as TokenId, key as TokenId, count);
        st.heap.push(c);
    }

    let mut reached_target = vocab.len() >= params.target_vocab;
    while !reached_target {
        let Some(top) = st.heap.pop() else { break };
        let key = pair_key(top.pair.0, top.pair.1);
        let current = st.pair_counts.get(&key).copied().unwrap_or(0);
        if current != top.count {
            if current > 0 {
                let c = st.candidate(top.pair.0, top.pair.1, current);
                st.heap.push(c);
            }
            continue;
        }
        if current < params.min_pair_frequency.max(1) {
            break;
        }
        let new_id = vocab.push_merge(top.pair.0, top.pair.1);
        st.bytes.push(Arc::from(vocab.token_bytes(new_id).unwrap()));
        apply_merge(&mut st, top.pair, new_id);
        reached_target = vocab.len() >= params.target_vocab;
    }

    Ok(TrainOutcome { vocab: vocab.finish(), reached_target })
}

fn apply_merge(st: &mut State, (l, r): (TokenId, TokenId), new_id: TokenId) {
    let key = pair_key(l, r);
    let mut affected: Vec<usize> = st.locations.remove(&key).unwrap_or_default().into_iter().collect();
    affected.sort_unstable();

    let mut delta: FxHashMap<u64, i64> = FxHashMap::default();
    let mut merged = Vec::new();
    for wi in affected {
        let word = &st.words[wi];
        if !word.windows(2).any(|p| p[0] == l && p[1] == r) {
            continue;
        }
        let f = st.freqs[wi] as i64;
        for p in word.windows(2) {
            *delta.entry(pair_key(p[0], p[1])).or_default() -= f;
        }
        merged.clear();
        let mut i = 0;
        while i < word.len() {
            if i + 1 < word.len() && word[i] == l && word[i + 1] == r {
                merged.push(new_id);
                i += 2;
            } else {
                merged.push(word[i]);
                i += 1;
            }
        }
        for p in merged.windows(2) {
            let k = pair_key(p[0], p[1]);
            *delta.entry(k).or_default() += f;
            if p[0] == new_id || p[1] == new_id {
                st.locations.entry(k).or_default().insert(wi);
            }
        }
        st.words[wi].clone_from(&merged);
    }

    let mut raised = Vec::new();
    for (k, d) in delta {
        if d == 0 {
            continue;
        }
        let entry = st.pair_counts.entry(k).or_default();
        *entry = (*entry as i64 + d) as u64;
        let now = *entry;
        if now == 0 {
            st.pair_counts.remove(&k);
        } else if d > 0 {
            raised.push((k, now));
        }
    }
    raised.sort_unstable();
    for (k, now) in raised {
        let c = st.candidate((k >> 32) as TokenId, k as TokenId, now);
        st.heap.push(c);
    }
}
