//! Whole-word-masked MLM instances generated on demand from packed shards.
//!
//! Per sequence: collect the complete words that hold no control tokens,
//! shuffle them under a key derived from `(seed, shard, sequence)`, and take
//! whole words until the running token count reaches `floor(rate * usable)`
//! (always at least one word when any exist). Each chosen word receives one
//! action for all of its tokens: `[MASK]`, a random non-special token, or the
//! original token.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bpe::{TokenId, Vocab, NUM_SPECIAL};
use crate::pack::PackedShard;
use crate::rng::keyed_rng;

/// Label value at positions that carry no prediction target.
pub const IGNORE_LABEL: u32 = u32::MAX;

pub const INSTANCE_MAGIC: [u8; 4] = *b"TKMI";
pub const INSTANCE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskingPolicy {
    pub mask_rate: f64,
    pub mask_prob: f64,
    pub random_prob: f64,
    pub keep_prob: f64,
    pub whole_word: bool,
    pub seed: u64,
}

impl Default for MaskingPolicy {
    fn default() -> Self {
        Self { mask_rate: 0.15, mask_prob: 0.8, random_prob: 0.1, keep_prob: 0.1, whole_word: true, seed: 0 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("mask_rate {0} outside (0, 1]")]
    Rate(f64),
    #[error("action probabilities must be non-negative and sum to 1, got {0}")]
    Actions(f64),
}

impl MaskingPolicy {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(self.mask_rate > 0.0 && self.mask_rate <= 1.0) {
            return Err(PolicyError::Rate(self.mask_rate));
        }
        let probs = [self.mask_prob, self.random_prob, self.keep_prob];
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|p| p.is_nan() || *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(PolicyError::Actions(sum));
        }
        Ok(())
    }

    fn draw_action(&self, u: f64) -> MaskAction {
        if u < self.mask_prob {
            MaskAction::Mask
        } else if u < self.mask_prob + self.random_prob {
            MaskAction::Random
        } else {
            MaskAction::Keep
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskAction {
    Mask,
    Random,
    Keep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedSpan {
    pub start: usize,
    pub end: usize,
    pub action: MaskAction,
}

impl MaskedSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlmInstance {
    pub input_ids: Vec<TokenId>,
    pub labels: Vec<u32>,
    /// Sorted, non-overlapping.
    pub spans: Vec<MaskedSpan>,
}

/// Complete words of sequence `i` that contain no control tokens.
pub fn maskable_words(shard: &PackedShard, i: usize) -> Vec<(usize, usize)> {
    let seq = shard.sequence(i);
    shard.segments(i).filter(|&(s, e)| e > s && seq[s..e].iter().all(|&id| id >= NUM_SPECIAL)).collect()
}

/// Masks one packed sequence.
pub fn mask_sequence(
    shard: &PackedShard,
    shard_index: u64,
    seq_index: usize,
    policy: &MaskingPolicy,
    vocab: &Vocab,
) -> MlmInstance {
    let ids = shard.sequence(seq_index);
    let mut units = maskable_words(shard, seq_index);
    if !policy.whole_word {
        units = units.into_iter().flat_map(|(s, e)| (s..e).map(|p| (p, p + 1))).collect();
    }
    let usable: usize = units.iter().map(|(s, e)| e - s).sum();
    let budget = (policy.mask_rate * usable as f64).floor() as usize;

    let mut rng = keyed_rng(policy.seed, &[shard_index, seq_index as u64]);
    units.shuffle(&mut rng);
    let mut chosen = Vec::new();
    let mut taken = 0usize;
    for (s, e) in units {
        if !chosen.is_empty() && taken >= budget {
            break;
        }
        taken += e - s;
        chosen.push((s, e));
    }
    chosen.sort_unstable();

    let mask_id = vocab.specials().mask;
    let vocab_size = vocab.len() as u32;
    let mut input_ids = ids.to_vec();
    let mut labels = vec![IGNORE_LABEL; ids.len()];
    let mut spans = Vec::with_capacity(chosen.len());
    for (start, end) in chosen {
        let action = policy.draw_action(rng.gen());
        for p in start..end {
            labels[p] = ids[p];
            match action {
                MaskAction::Mask => input_ids[p] = mask_id,
                MaskAction::Random => input_ids[p] = rng.gen_range(NUM_SPECIAL..vocab_size),
                MaskAction::Keep => {}
            }
        }
        spans.push(MaskedSpan { start, end, action });
    }
    MlmInstance { input_ids, labels, spans }
}

/// All instances of a shard, in sequence order. Panics on an invalid policy.
pub fn build_instances(
    shard: &PackedShard,
    shard_index: u64,
    policy: &MaskingPolicy,
    vocab: &Vocab,
) -> Vec<MlmInstance> {
    policy.validate().expect("invalid masking policy");
    let run = |i| mask_sequence(shard, shard_index, i, policy, vocab);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..shard.len()).into_par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..shard.len()).map(run).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MaskingReport {
    pub instances: u64,
    pub positions: u64,
    pub labeled_tokens: u64,
    pub label_fraction: f64,
    pub mask_tokens: u64,
    pub random_tokens: u64,
    pub keep_tokens: u64,
    pub mask_fraction_of_labeled: f64,
    pub masked_words: u64,
    /// Instances that had no maskable word at all.
    pub instances_without_targets: u64,
    /// Masked word length in tokens -> count.
    pub span_length_histogram: BTreeMap<usize, u64>,
}

impl MaskingReport {
    pub fn add(&mut self, inst: &MlmInstance) {
        self.instances += 1;
        self.positions += inst.input_ids.len() as u64;
        if inst.spans.is_empty() {
            self.instances_without_targets += 1;
        }
        for s in &inst.spans {
            let n = s.len() as u64;
            self.labeled_tokens += n;
            self.masked_words += 1;
            *self.span_length_histogram.entry(s.len()).or_default() += 1;
            match s.action {
                MaskAction::Mask => self.mask_tokens += n,
                MaskAction::Random => self.random_tokens += n,
                MaskAction::Keep => self.keep_tokens += n,
            }
        }
        self.refresh();
    }

    fn refresh(&mut self) {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        self.label_fraction = ratio(self.labeled_tokens, self.positions);
        self.mask_fraction_of_labeled = ratio(self.mask_tokens, self.labeled_tokens);
    }
}

pub fn masking_report<'a>(instances: impl IntoIterator<Item = &'a MlmInstance>) -> MaskingReport {
    let mut r = MaskingReport::default();
    for i in instances {
        r.add(i);
    }
    r
}

/// Writes instances as `"TKMI" | u32 version | u32 seq_len | u64 vocab_hash |
/// u64 count`, the input-id plane, the label plane, then per instance a u16
/// span count and `(u16 start, u16 end)` pairs.
pub fn write_instances<W: Write>(mut w: W, seq_len: u32, vocab_hash: u64, instances: &[MlmInstance]) -> io::Result<()> {
    w.write_all(&INSTANCE_MAGIC)?;
    w.write_all(&INSTANCE_VERSION.to_le_bytes())?;
    w.write_all(&seq_len.to_le_bytes())?;
    w.write_all(&vocab_hash.to_le_bytes())?;
    w.write_all(&(instances.len() as u64).to_le_bytes())?;
    let mut buf = Vec::new();
    for inst in instances {
        for id in &inst.input_ids {
            buf.extend_from_slice(&id.to_le_bytes());
        }
    }
    for inst in instances {
        for l in &inst.labels {
            buf.extend_from_slice(&l.to_le_bytes());
        }
    }
    for inst in instances {
        buf.extend_from_slice(&(inst.spans.len() as u16).to_le_bytes());
        for s in &inst.spans {
            buf.extend_from_slice(&(s.start as u16).to_le_bytes());
            buf.extend_from_slice(&(s.end as u16).to_le_bytes());
        }
    }
    w.write_all(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bpe::Encoding;
    use crate::pack::{pack, PackerConfig};

    fn one_sequence(ids: &[TokenId], starts: &[u32]) -> PackedShard {
        let enc = Encoding { ids: ids.to_vec(), word_starts: starts.to_vec() };
        let cfg = PackerConfig { seq_len: ids.len() as u32, ..Default::default() };
        let (mut shards, _) = pack([&enc], &cfg, &Vocab::base()).unwrap();
        shards.remove(0)
    }

    #[test]
    fn single_word_at_full_rate() {
        // [CLS] w w w [SEP]
        let shard = one_sequence(&[2, 100, 101, 102, 3], &[0, 1, 4]);
        let policy = MaskingPolicy { mask_rate: 1.0, ..Default::default() };
        let inst = mask_sequence(&shard, 0, 0, &policy, &Vocab::base());
        assert_eq!(inst.spans.len(), 1);
        assert_eq!((inst.spans[0].start, inst.spans[0].end), (1, 4));
        assert_eq!(inst.labels, vec![IGNORE_LABEL, 100, 101, 102, IGNORE_LABEL]);
        assert_eq!(inst.input_ids[0], 2);
        assert_eq!(inst.input_ids[4], 3);
    }

    #[test]
    fn tiny_rate_still_masks_one_word() {
        let shard = one_sequence(&[2, 100, 101, 3], &[0, 1, 3]);
        let policy = MaskingPolicy { mask_rate: 1e-9, ..Default::default() };
        let inst = mask_sequence(&shard, 0, 0, &policy, &Vocab::base());
        assert_eq!(inst.spans.len(), 1);
        assert_eq!((inst.spans[0].start, inst.spans[0].end), (1, 3));
    }

    #[test]
    fn nothing_maskable() {
        let shard = one_sequence(&[2, 3, 2, 3], &[0, 1, 2, 3]);
        let inst = mask_sequence(&shard, 0, 0, &MaskingPolicy::default(), &Vocab::base());
        assert!(inst.spans.is_empty());
        assert!(inst.labels.iter().all(|&l| l == IGNORE_LABEL));
        let report = masking_report([&inst]);
        assert_eq!(report.instances_without_targets, 1);
    }

    #[test]
    fn actions_rewrite_inputs() {
        let shard = one_sequence(&(10..40).collect::<Vec<_>>(), &(0..30).step_by(2).collect::<Vec<_>>());
        let vocab = Vocab::base();
        for (mask, random, keep) in [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)] {
            let policy = MaskingPolicy {
                mask_rate: 0.5,
                mask_prob: mask,
                random_prob: random,
                keep_prob: keep,
                ..Default::default()
            };
            let inst = mask_sequence(&shard, 0, 0, &policy, &vocab);
            for s in &inst.spans {
                for p in s.start..s.end {
                    match s.action {
                        MaskAction::Mask => assert_eq!(inst.input_ids[p], 4),
                        MaskAction::Random => assert!(inst.input_ids[p] >= NUM_SPECIAL),
                        MaskAction::Keep => assert_eq!(inst.input_ids[p], shard.sequence(0)[p]),
                    }
                }
            }
        }
    }

    #[test]
    fn policy_validation() {
        assert!(MaskingPolicy::default().validate().is_ok());
        assert_eq!(MaskingPolicy { mask_rate: 0.0, ..Default::default() }.validate(), Err(PolicyError::Rate(0.0)));
        assert!(MaskingPolicy { keep_prob: 0.2, ..Default::default() }.validate().is_err());
        assert!(MaskingPolicy { mask_rate: f64::NAN, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn token_level_mode() {
        let shard = one_sequence(&[100, 101, 102, 103], &[0]);
        let policy = MaskingPolicy { mask_rate: 0.25, whole_word: false, ..Default::default() };
        let inst = mask_sequence(&shard, 0, 0, &policy, &Vocab::base());
        // the only word is 4 tokens but ends at the window edge: complete, so maskable
        assert_eq!(inst.spans.len(), 1);
        assert_eq!(inst.spans[0].len(), 1);
    }
}
