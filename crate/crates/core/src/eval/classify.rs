use serde::{Deserialize, Serialize};

use super::{pct, EvalError, MetricBundle};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelExample {
    pub id: String,
    /// Index into the label set.
    pub gold: usize,
    pub predicted: usize,
}

/// How per-class F1 is reduced to one number.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum F1Average {
    /// Unweighted mean over every class in the label set; a class with no
    /// gold and no predicted examples contributes 0.
    #[default]
    Macro,
    /// Pooled counts; equals accuracy for single-label data.
    Micro,
    /// F1 of one positive class.
    Binary { positive: usize },
}

/// `{F1, Acc}` over a label set of `num_labels` classes.
pub fn classification_metrics(
    examples: &[LabelExample],
    num_labels: usize,
    average: F1Average,
) -> Result<MetricBundle, EvalError> {
    if examples.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut tp = vec![0u64; num_labels];
    let mut fp = vec![0u64; num_labels];
    let mut fn_ = vec![0u64; num_labels];
    let mut correct = 0u64;
    for ex in examples {
        for l in [ex.gold, ex.predicted] {
            if l >= num_labels {
                return Err(EvalError::UnknownLabel { id: ex.id.clone(), label: l.to_string() });
            }
        }
        if ex.gold == ex.predicted {
            correct += 1;
            tp[ex.gold] += 1;
        } else {
            fp[ex.predicted] += 1;
            fn_[ex.gold] += 1;
        }
    }
    let f1_of = |t: u64, p: u64, n: u64| pct(2.0 * t as f64, (2 * t + p + n) as f64);
    let f1 = match average {
        F1Average::Macro => (0..num_labels).map(|c| f1_of(tp[c], fp[c], fn_[c])).sum::<f64>() / num_labels as f64,
        F1Average::Micro => f1_of(tp.iter().sum(), fp.iter().sum(), fn_.iter().sum()),
        F1Average::Binary { positive } => {
            if positive >= num_labels {
                return Err(EvalError::UnknownLabel { id: "<config>".into(), label: positive.to_string() });
            }
            f1_of(tp[positive], fp[positive], fn_[positive])
        }
    };
    let mut b = MetricBundle::new();
    b.insert("F1", f1)?;
    b.insert("Acc", pct(correct as f64, examples.len() as f64))?;
    Ok(b)
}
