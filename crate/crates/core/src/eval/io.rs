//! JSONL adapters for the scorer.
//!
//! Gold records: QA `{"id", "answers": [..], "has_answer"?}` (empty answers
//! means unanswerable), classification `{"id", "label"}`, NER
//! `{"id", "tokens"?, "tags": [..]}`. Prediction records are
//! `{"id", "prediction"}` holding text, a label, or a tag array.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use super::{
    classification_metrics, ner_metrics, qa_metrics, EvalError, F1Average, LabelExample, MetricBundle, NerAccuracy,
    QAExample, TaggedSequence,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Qa,
    Cls,
    Ner,
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "qa" => Ok(Self::Qa),
            "cls" => Ok(Self::Cls),
            "ner" => Ok(Self::Ner),
            other => Err(format!("unknown task kind {other:?} (expected qa, cls or ner)")),
        }
    }
}

#[derive(Deserialize)]
struct QaGold {
    id: Value,
    answers: Vec<String>,
    has_answer: Option<bool>,
}

#[derive(Deserialize)]
struct ClsGold {
    id: Value,
    label: Value,
}

#[derive(Deserialize)]
struct NerGold {
    id: Value,
    #[serde(default)]
    tokens: Vec<String>,
    tags: Vec<String>,
}

#[derive(Deserialize)]
struct Pred {
    id: Value,
    prediction: Value,
}

fn id_str(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn parse_lines<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| EvalError::Parse { line: i + 1, message: e.to_string() }))
        .collect()
}

fn predictions(text: &str) -> Result<HashMap<String, Value>, EvalError> {
    Ok(parse_lines::<Pred>(text)?.into_iter().map(|p| (id_str(&p.id), p.prediction)).collect())
}

fn take_pred(preds: &mut HashMap<String, Value>, id: &str) -> Result<Value, EvalError> {
    preds.remove(id).ok_or_else(|| EvalError::MissingPrediction(id.to_owned()))
}

#[derive(Debug, Clone, Default)]
pub struct ScoreOptions {
    /// Label set for classification; defaults to the sorted union of gold
    /// and predicted labels.
    pub labels: Option<Vec<String>>,
    pub average: F1Average,
    pub ner_accuracy: NerAccuracy,
}

pub fn score_jsonl(task: TaskKind, gold: &str, pred: &str, opts: &ScoreOptions) -> Result<MetricBundle, EvalError> {
    let mut preds = predictions(pred)?;
    match task {
        TaskKind::Qa => {
            let mut examples = Vec::new();
            for g in parse_lines::<QaGold>(gold)? {
                let id = id_str(&g.id);
                if g.has_answer.is_some_and(|h| h == g.answers.is_empty()) {
                    return Err(EvalError::Invalid { id, message: "has_answer disagrees with answers".into() });
                }
                let prediction = match take_pred(&mut preds, &id)? {
                    Value::String(s) => s,
                    Value::Null => String::new(),
                    other => other.to_string(),
                };
                examples.push(QAExample { id, gold: g.answers, prediction });
            }
            qa_metrics(&examples)
        }
        TaskKind::Cls => {
            let mut pairs = Vec::new();
            for g in parse_lines::<ClsGold>(gold)? {
                let id = id_str(&g.id);
                let p = id_str(&take_pred(&mut preds, &id)?);
                pairs.push((id, id_str(&g.label), p));
            }
            let labels = match &opts.labels {
                Some(l) => l.clone(),
                None => pairs
                    .iter()
                    .flat_map(|(_, g, p)| [g.clone(), p.clone()])
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect(),
            };
            let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
            let lookup = |id: &str, l: &str| {
                index.get(l).copied().ok_or_else(|| EvalError::UnknownLabel { id: id.to_owned(), label: l.to_owned() })
            };
            let examples = pairs
                .iter()
                .map(|(id, g, p)| Ok(LabelExample { id: id.clone(), gold: lookup(id, g)?, predicted: lookup(id, p)? }))
                .collect::<Result<Vec<_>, EvalError>>()?;
            classification_metrics(&examples, labels.len(), opts.average)
        }
        TaskKind::Ner => {
            let mut seqs = Vec::new();
            for g in parse_lines::<NerGold>(gold)? {
                let id = id_str(&g.id);
                let predicted: Vec<String> = serde_json::from_value(take_pred(&mut preds, &id)?)
                    .map_err(|e| EvalError::Invalid { id: id.clone(), message: e.to_string() })?;
                seqs.push(TaggedSequence { id, tokens: g.tokens, gold: g.tags, predicted });
            }
            ner_metrics(&seqs, opts.ner_accuracy)
        }
    }
}

pub fn score_files(task: TaskKind, gold: &Path, pred: &Path, opts: &ScoreOptions) -> Result<MetricBundle, EvalError> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| EvalError::Io(format!("{}: {e}", p.display())));
    score_jsonl(task, &read(gold)?, &read(pred)?, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qa_records() {
        let gold = r#"{"id":"1","answers":["پاسخ"]}
{"id":"2","answers":[],"has_answer":false}"#;
        let pred = r#"{"id":"2","prediction":"چیزی"}
{"id":"1","prediction":"پاسخ"}"#;
        let b = score_jsonl(TaskKind::Qa, gold, pred, &ScoreOptions::default()).unwrap();
        assert_eq!(b.get("EM"), Some(50.0));
        assert_eq!(b.get("Has-F1"), Some(100.0));
    }

    #[test]
    fn cls_records_with_label_set() {
        let gold = "{\"id\":1,\"label\":\"pos\"}\n{\"id\":2,\"label\":\"pos\"}\n";
        let pred = "{\"id\":1,\"prediction\":\"pos\"}\n{\"id\":2,\"prediction\":\"pos\"}\n";
        let opts = ScoreOptions { labels: Some(vec!["neg".into(), "pos".into()]), ..Default::default() };
        let b = score_jsonl(TaskKind::Cls, gold, pred, &opts).unwrap();
        assert_eq!(b.get("F1"), Some(50.0));
        let b = score_jsonl(TaskKind::Cls, gold, pred, &ScoreOptions::default()).unwrap();
        assert_eq!(b.get("F1"), Some(100.0));
    }

    #[test]
    fn ner_records() {
        let gold = r#"{"id":"a","tokens":["x","y"],"tags":["B-PER","O"]}"#;
        let pred = r#"{"id":"a","prediction":["B-PER","O"]}"#;
        let b = score_jsonl(TaskKind::Ner, gold, pred, &ScoreOptions::default()).unwrap();
        assert_eq!(b.get("F1"), Some(100.0));
    }

    #[test]
    fn missing_prediction_and_bad_lines() {
        let gold = r#"{"id":"a","label":"x"}"#;
        assert_eq!(
            score_jsonl(TaskKind::Cls, gold, "", &ScoreOptions::default()),
            Err(EvalError::MissingPrediction("a".into()))
        );
        assert!(matches!(
            score_jsonl(TaskKind::Cls, "not json", "", &ScoreOptions::default()),
            Err(EvalError::Parse { line: 1, .. })
        ));
        let bad = r#"{"id":"q","answers":["a"],"has_answer":false}"#;
        assert!(matches!(
            score_jsonl(TaskKind::Qa, bad, r#"{"id":"q","prediction":"a"}"#, &ScoreOptions::default()),
            Err(EvalError::Invalid { .. })
        ));
    }
}
