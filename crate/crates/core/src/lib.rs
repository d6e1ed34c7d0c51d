//! Data pipeline and evaluation scoring for Persian masked-language-model
//! pre-training.
//!
//! The pipeline runs raw text through [`normalize`], learns and applies a
//! byte-level BPE vocabulary with subword dropout ([`bpe`]), packs the token
//! stream into fixed-length sequences without padding ([`pack`]) and turns
//! packed sequences into whole-word-masked MLM instances ([`mlm`]).
//!
//! The scoring half computes per-task metrics ([`eval`]) and reduces sweeps of
//! fine-tuning runs into leaderboard rows ([`aggregate`]).

pub mod aggregate;
pub mod bpe;
pub mod config;
pub mod eval;
pub mod mlm;
pub mod normalize;
pub mod pack;
pub mod rng;
pub mod sample;

pub use bpe::{EncodeOptions, Encoding, MergeRule, SpecialTokens, Vocab};
pub use normalize::{NormalizationConfig, NormalizationReport};
pub use pack::{PackedShard, PackerConfig};
