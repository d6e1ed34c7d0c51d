use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{pct, EvalError, MetricBundle};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSequence {
    pub id: String,
    #[serde(default)]
    pub tokens: Vec<String>,
    pub gold: Vec<String>,
    pub predicted: Vec<String>,
}

/// What the token accuracy compares.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NerAccuracy {
    /// Entity type per token with the B-/I- prefix dropped (`O` stays `O`).
    #[default]
    EntityType,
    /// The full BIO tag string.
    FullTag,
}

fn split_tag(tag: &str) -> (Option<char>, &str) {
    match tag.split_once('-') {
        Some((p @ ("B" | "I"), ty)) => (p.chars().next(), ty),
        _ => (None, tag),
    }
}

/// Rewrites every `I-X` that does not continue a `B-X`/`I-X` run to `B-X`.
/// Returns the repaired row and the number of repairs.
pub fn repair_bio(tags: &[String]) -> (Vec<String>, usize) {
    let mut out = Vec::with_capacity(tags.len());
    let mut repairs = 0;
    let mut prev_type: Option<String> = None;
    for t in tags {
        let (prefix, ty) = split_tag(t);
        match prefix {
            Some('I') if prev_type.as_deref() != Some(ty) => {
                repairs += 1;
                out.push(format!("B-{ty}"));
                prev_type = Some(ty.to_owned());
            }
            Some(_) => {
                out.push(t.clone());
                prev_type = Some(ty.to_owned());
            }
            None => {
                out.push(t.clone());
                prev_type = None;
            }
        }
    }
    (out, repairs)
}

/// Entity spans `(start, end, type)` of a valid BIO row.
pub fn spans_of(tags: &[String]) -> Vec<(usize, usize, String)> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, String)> = None;
    for (i, t) in tags.iter().enumerate() {
        let (prefix, ty) = split_tag(t);
        let continues = prefix == Some('I') && open.as_ref().is_some_and(|(_, o)| o == ty);
        if !continues {
            if let Some((s, o)) = open.take() {
                spans.push((s, i, o));
            }
            if prefix.is_some() {
                open = Some((i, ty.to_owned()));
            }
        }
    }
    if let Some((s, o)) = open {
        spans.push((s, tags.len(), o));
    }
    spans
}

fn accuracy_key(tag: &str, mode: NerAccuracy) -> &str {
    match mode {
        NerAccuracy::FullTag => tag,
        NerAccuracy::EntityType => split_tag(tag).1,
    }
}

/// `{F1, Acc}`: micro span F1 (exact type and boundaries) and token accuracy.
/// With no entities on either side the span F1 is 100.
pub fn ner_metrics(sequences: &[TaggedSequence], accuracy: NerAccuracy) -> Result<MetricBundle, EvalError> {
    if sequences.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut tp, mut n_gold, mut n_pred) = (0usize, 0usize, 0usize);
    let (mut correct, mut total) = (0usize, 0usize);
    for s in sequences {
        if s.gold.len() != s.predicted.len() {
            return Err(EvalError::LengthMismatch { id: s.id.clone(), gold: s.gold.len(), pred: s.predicted.len() });
        }
        let gold: HashSet<_> = spans_of(&repair_bio(&s.gold).0).into_iter().collect();
        let pred: HashSet<_> = spans_of(&repair_bio(&s.predicted).0).into_iter().collect();
        tp += gold.intersection(&pred).count();
        n_gold += gold.len();
        n_pred += pred.len();
        total += s.gold.len();
        correct += s
            .gold
            .iter()
            .zip(&s.predicted)
            .filter(|(g, p)| accuracy_key(g, accuracy) == accuracy_key(p, accuracy))
            .count();
    }
    let f1 = if n_gold + n_pred == 0 { 100.0 } else { pct(2.0 * tp as f64, (n_gold + n_pred) as f64) };
    let acc = if total == 0 { 100.0 } else { pct(correct as f64, total as f64) };
    let mut b = MetricBundle::new();
    b.insert("F1", f1)?;
    b.insert("Acc", acc)?;
    Ok(b)
}
