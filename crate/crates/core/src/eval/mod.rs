//! Task metrics: extractive QA, classification and NER.

mod classify;
mod io;
mod ner;
mod qa;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use classify::{classification_metrics, F1Average, LabelExample};
pub use io::{score_files, score_jsonl, ScoreOptions, TaskKind};
pub use ner::{ner_metrics, repair_bio, spans_of, NerAccuracy, TaggedSequence};
pub use qa::{answer_normalize, qa_metrics, token_f1, QAExample};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no examples to score")]
    Empty,
    #[error("example {id}: gold and predicted tag rows differ in length ({gold} vs {pred})")]
    LengthMismatch { id: String, gold: usize, pred: usize },
    #[error("example {id}: label {label:?} is not in the label set")]
    UnknownLabel { id: String, label: String },
    #[error("example {id}: {message}")]
    Invalid { id: String, message: String },
    #[error("metric {name} = {value} outside [0, 100]")]
    OutOfRange { name: String, value: f64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("example {0} has a gold record but no prediction")]
    MissingPrediction(String),
    #[error("{0}")]
    Io(String),
}

/// Named metric values in `[0, 100]`, in reporting order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricBundle(pub IndexMap<String, f64>);

impl MetricBundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, f64)>) -> Result<Self, EvalError> {
        let mut b = Self::new();
        for (k, v) in pairs {
            b.insert(k, v)?;
        }
        Ok(b)
    }

    pub fn insert(&mut self, name: &str, value: f64) -> Result<(), EvalError> {
        if !(0.0..=100.0).contains(&value) {
            return Err(EvalError::OutOfRange { name: name.to_owned(), value });
        }
        self.0.insert(name.to_owned(), value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        for (k, v) in self.iter() {
            if !(0.0..=100.0).contains(&v) {
                return Err(EvalError::OutOfRange { name: k.to_owned(), value: v });
            }
        }
        Ok(())
    }

    /// Arithmetic mean of all values, `None` when empty.
    pub fn mean(&self) -> Option<f64> {
        (!self.is_empty()).then(|| self.0.values().sum::<f64>() / self.len() as f64)
    }
}

pub(crate) fn pct(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        100.0 * num / den
    }
}
