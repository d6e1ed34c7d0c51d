use std::collections::HashMap;

use super::{EvalError, MetricBundle};
use crate::bpe::is_punctuation;
use crate::normalize::{NormalizationConfig, Normalizer};
use std::sync::OnceLock;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QAExample {
    pub id: String,
    /// Empty means the question has no answer.
    pub gold: Vec<String>,
    /// Empty string means the model predicted "no answer".
    pub prediction: String,
}

impl QAExample {
    pub fn has_answer(&self) -> bool {
        !self.gold.is_empty()
    }
}

fn default_normalizer() -> &'static Normalizer {
    static N: OnceLock<Normalizer> = OnceLock::new();
    N.get_or_init(|| Normalizer::new(NormalizationConfig::default()).expect("default config is valid"))
}

fn answer_pass(text: &str) -> String {
    let (norm, _) = default_normalizer().normalize(text);
    let mut out = String::with_capacity(norm.len());
    for c in norm.chars() {
        if is_punctuation(c) {
            continue;
        }
        if c.is_whitespace() {
            if !out.is_empty() && !out.ends_with(' ') {
                out.push(' ');
            }
        } else {
            out.push(c.to_ascii_lowercase());
        }
    }
    if out.ends_with(' ') {
        out.pop();
    }
    out
}

/// Text normalization for answer comparison: the default text normalizer,
/// ASCII lowercasing, punctuation removal and whitespace collapse.
pub fn answer_normalize(text: &str) -> String {
    let mut current = answer_pass(text);
    // Removing punctuation can bring marks next to a base they compose with.
    for _ in 0..3 {
        let next = answer_pass(&current);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

/// Bag-of-tokens F1 in `[0, 1]` between two normalized strings.
pub fn token_f1(pred: &str, gold: &str) -> f64 {
    let p: Vec<&str> = pred.split_whitespace().collect();
    let g: Vec<&str> = gold.split_whitespace().collect();
    if p.is_empty() || g.is_empty() {
        return if p.is_empty() && g.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0i64;
    for t in &p {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Per-example `(em, f1)` in `[0, 100]`.
fn score_example(ex: &QAExample) -> (f64, f64) {
    let pred = answer_normalize(&ex.prediction);
    if !ex.has_answer() {
        let s = if pred.is_empty() { 100.0 } else { 0.0 };
        return (s, s);
    }
    let golds: Vec<String> = ex.gold.iter().map(|g| answer_normalize(g)).collect();
    let em = if golds.contains(&pred) { 100.0 } else { 0.0 };
    let f1 = golds.iter().map(|g| token_f1(&pred, g)).fold(0.0, f64::max) * 100.0;
    (em, f1)
}

/// `{EM, F1, Has-EM, Has-F1}`; the `Has-` pair averages over answerable
/// questions only and is omitted when there are none.
pub fn qa_metrics(examples: &[QAExample]) -> Result<MetricBundle, EvalError> {
    if examples.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut em, mut f1, mut has_em, mut has_f1, mut has_n) = (0.0, 0.0, 0.0, 0.0, 0usize);
    for ex in examples {
        let (e, f) = score_example(ex);
        em += e;
        f1 += f;
        if ex.has_answer() {
            has_em += e;
            has_f1 += f;
            has_n += 1;
        }
    }
    let n = examples.len() as f64;
    let mut b = MetricBundle::new();
    b.insert("EM", em / n)?;
    b.insert("F1", f1 / n)?;
    if has_n > 0 {
        b.insert("Has-EM", has_em / has_n as f64)?;
        b.insert("Has-F1", has_f1 / has_n as f64)?;
    }
    Ok(b)
}
