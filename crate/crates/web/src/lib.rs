//! Browser demo. The page trains a small vocabulary on a pasted corpus, then
//! lets you normalize text, watch BPE-dropout re-segment it, and preview
//! whole-word masking. Every export returns a JSON string.

use serde::Serialize;
use tooka_core::bpe::{encode, train_bpe, EncodeOptions, TrainParams, Vocab};
use tooka_core::mlm::{mask_sequence, MaskAction, MaskingPolicy, IGNORE_LABEL};
use tooka_core::normalize::{normalize_text, NormalizationConfig};
use tooka_core::pack::{pack, PackerConfig};
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Token {
    id: u32,
    text: String,
    word_start: bool,
}

#[derive(Serialize)]
struct MaskedToken {
    text: String,
    /// Token shown to the model.
    input: String,
    /// "mask", "random", "keep" or empty when unlabeled.
    action: &'static str,
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

#[wasm_bindgen]
pub struct Demo {
    vocab: Vocab,
    reached_target: bool,
}

#[wasm_bindgen]
impl Demo {
    /// Trains on `corpus` (one document per line) after normalizing it.
    #[wasm_bindgen(constructor)]
    pub fn new(corpus: &str, vocab_size: usize) -> Result<Demo, String> {
        let cfg = NormalizationConfig::default();
        let docs: Vec<String> = corpus.lines().map(|l| normalize_text(l, &cfg).0).collect();
        let params = TrainParams { target_vocab: vocab_size, min_pair_frequency: 2 };
        let out = train_bpe(docs.iter().map(String::as_str), params).map_err(|e| e.to_string())?;
        Ok(Demo { vocab: out.vocab, reached_target: out.reached_target })
    }

    #[wasm_bindgen(getter)]
    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    #[wasm_bindgen(getter)]
    pub fn reached_target(&self) -> bool {
        self.reached_target
    }

    /// `{"text", "report"}` for the default Persian normalization.
    pub fn normalize(&self, text: &str) -> String {
        let (out, report) = normalize_text(text, &NormalizationConfig::default());
        to_json(&serde_json::json!({ "text": out, "report": report }))
    }

    /// Tokens of the normalized text under dropout `p` and `seed`.
    pub fn tokenize(&self, text: &str, p: f64, seed: u64) -> String {
        let text = normalize_text(text, &NormalizationConfig::default()).0;
        let e = encode(&text, &self.vocab, &EncodeOptions::with_dropout(p.clamp(0.0, 1.0), seed));
        let starts: std::collections::HashSet<u32> = e.word_starts.iter().copied().collect();
        let tokens: Vec<Token> = e
            .ids
            .iter()
            .enumerate()
            .map(|(i, &id)| Token { id, text: self.vocab.token_display(id), word_start: starts.contains(&(i as u32)) })
            .collect();
        to_json(&tokens)
    }

    /// Packs the text into one window and masks it. Words cut by the window
    /// edge are never masked.
    pub fn mask(&self, text: &str, rate: f64, seed: u64) -> Result<String, String> {
        let text = normalize_text(text, &NormalizationConfig::default()).0;
        let e = encode(&text, &self.vocab, &EncodeOptions::inference());
        if e.ids.len() < 2 {
            return Err("need at least two tokens".into());
        }
        let cfg = PackerConfig { seq_len: e.ids.len().min(512) as u32, ..Default::default() };
        let (shards, _) = pack([&e], &cfg, &self.vocab).map_err(|e| e.to_string())?;
        let policy = MaskingPolicy { mask_rate: rate, seed, ..Default::default() };
        policy.validate().map_err(|e| e.to_string())?;
        let inst = mask_sequence(&shards[0], 0, 0, &policy, &self.vocab);
        let mut action = vec![""; inst.labels.len()];
        for s in &inst.spans {
            let name = match s.action {
                MaskAction::Mask => "mask",
                MaskAction::Random => "random",
                MaskAction::Keep => "keep",
            };
            action[s.start..s.end].fill(name);
        }
        let tokens: Vec<MaskedToken> = shards[0]
            .sequence(0)
            .iter()
            .zip(&inst.input_ids)
            .zip(&inst.labels)
            .zip(action)
            .map(|(((&orig, &input), &label), action)| MaskedToken {
                text: self.vocab.token_display(orig),
                input: self.vocab.token_display(input),
                action: if label == IGNORE_LABEL { "" } else { action },
            })
            .collect();
        Ok(to_json(&tokens))
    }
}
