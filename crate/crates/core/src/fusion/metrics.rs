//! Confusion matrices, per-class percent change and precision/recall points.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::videoio::ActionLabel;

/// Rows are true labels, columns predictions, both in [`ActionLabel`] order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 4]; 4],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> [u64; 4] {
        self.counts.map(|r| r.iter().sum())
    }

    /// Diagonal: correctly classified samples per class.
    pub fn per_class_correct(&self) -> [u64; 4] {
        std::array::from_fn(|i| self.counts[i][i])
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>10}", "")?;
        for l in ActionLabel::ALL {
            write!(f, "{:>10}", l.name())?;
        }
        for l in ActionLabel::ALL {
            write!(f, "\n{:>10}", l.name())?;
            for c in self.counts[l.index()] {
                write!(f, "{c:>10}")?;
            }
        }
        Ok(())
    }
}

pub fn confusion_matrix(
    truths: &[ActionLabel],
    predictions: &[ActionLabel],
) -> Result<ConfusionMatrix> {
    if truths.len() != predictions.len() {
        return Err(Error::dim(format!(
            "{} truths but {} predictions",
            truths.len(),
            predictions.len()
        )));
    }
    let mut m = ConfusionMatrix::default();
    for (t, p) in truths.iter().zip(predictions) {
        m.counts[t.index()][p.index()] += 1;
    }
    Ok(m)
}

pub fn accuracy(matrix: &ConfusionMatrix) -> Result<f64> {
    let total = matrix.total();
    if total == 0 {
        return Err(Error::Empty("confusion matrix"));
    }
    Ok(matrix.per_class_correct().iter().sum::<u64>() as f64 / total as f64)
}

/// A percentage that may be `+inf`; serialised as the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PercentChange(pub f64);

impl PercentChange {
    pub fn is_infinite(&self) -> bool {
        self.0.is_infinite()
    }
}

impl fmt::Display for PercentChange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            write!(f, "∞")
        } else {
            write!(f, "{:+.1}%", self.0)
        }
    }
}

impl Serialize for PercentChange {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for PercentChange {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(PercentChange(v)),
            Repr::Str(s) if s == "inf" => Ok(PercentChange(f64::INFINITY)),
            Repr::Str(s) => Err(serde::de::Error::custom(format!(
                "bad percent change {s:?}"
            ))),
        }
    }
}

/// Per-class change of correct counts from a single stream to the fused
/// classifier: `100 * (fused - stream) / stream`, `inf` when the stream got
/// none right but fusion did, 0 when both are zero.
pub fn percent_change(stream_correct: &[i64], fused_correct: &[i64]) -> Result<Vec<PercentChange>> {
    if stream_correct.len() != fused_correct.len() {
        return Err(Error::dim("per-class count vectors differ in length"));
    }
    stream_correct
        .iter()
        .zip(fused_correct)
        .map(|(&s, &f)| {
            if s < 0 || f < 0 {
                return Err(Error::invalid(format!("negative count in ({s}, {f})")));
            }
            Ok(PercentChange(match (s, f) {
                (0, 0) => 0.0,
                (0, _) => f64::INFINITY,
                _ => 100.0 * (f - s) as f64 / s as f64,
            }))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    /// 1.0 by convention when nothing is flagged; see `zero_alerts`.
    pub precision: f64,
    pub recall: f64,
    pub alerts: usize,
    pub true_positives: usize,
    pub zero_alerts: bool,
}

/// Precision and recall of flagging `confidence >= t` for each threshold.
pub fn pr_points(scored: &[(f64, bool)], thresholds: &[f64]) -> Result<Vec<PrPoint>> {
    let positives = scored.iter().filter(|(_, p)| *p).count();
    if positives == 0 {
        return Err(Error::invalid(
            "recall is undefined without positive examples",
        ));
    }
    Ok(thresholds
        .iter()
        .map(|&t| {
            let alerts = scored.iter().filter(|(c, _)| *c >= t).count();
            let tp = scored.iter().filter(|(c, p)| *c >= t && *p).count();
            PrPoint {
                threshold: t,
                precision: if alerts == 0 {
                    1.0
                } else {
                    tp as f64 / alerts as f64
                },
                recall: tp as f64 / positives as f64,
                alerts,
                true_positives: tp,
                zero_alerts: alerts == 0,
            }
        })
        .collect())
}
