//! Byte-level BPE: vocabulary, training, and dropout-aware encoding.

mod encode;
mod pretokenize;
mod train;
mod vocab;

pub use encode::{decode, encode, encode_batch, encode_corpus, DecodeError, EncodeOptions, Encoder, Encoding};
pub use pretokenize::{is_punctuation, pretokenize, pretokenize_with_offsets};
pub use train::{count_words, train_bpe, train_from_counts, TrainError, TrainOutcome, TrainParams, WordCounts};
pub use vocab::{MergeRule, SpecialTokens, TokenId, Vocab, VocabError, BYTE_OFFSET, NUM_SPECIAL, VOCAB_FORMAT_VERSION};

/// Vocabulary size used for the released tokenizer.
pub const DEFAULT_VOCAB_SIZE: usize = 48_000;
/// Merge-skip probability applied when generating pre-training data.
pub const PRETRAIN_DROPOUT: f64 = 0.1;
pub const DEFAULT_MIN_PAIR_FREQUENCY: u64 = 2;
