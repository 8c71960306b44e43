use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heads::NUM_CLASSES;

pub type Confusion = [[usize; NUM_CLASSES]; NUM_CLASSES];

/// Classification quality over one labelled set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Confusion,
}

/// Per-class ratios use `0` when their denominator is empty.
pub fn compute_metrics(labels: &[usize], predictions: &[usize]) -> Result<Metrics> {
    if labels.is_empty() {
        return Err(Error::EmptyMetrics("no predictions".into()));
    }
    if labels.len() != predictions.len() {
        return Err(Error::Shape(format!(
            "{} labels but {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    let mut confusion = [[0usize; NUM_CLASSES]; NUM_CLASSES];
    for (&t, &p) in labels.iter().zip(predictions) {
        for v in [t, p] {
            if v >= NUM_CLASSES {
                return Err(Error::InvalidLabel { label: v, classes: NUM_CLASSES });
            }
        }
        confusion[t][p] += 1;
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    for c in 0..NUM_CLASSES {
        let tp = confusion[c][c];
        let predicted: usize = (0..NUM_CLASSES).map(|t| confusion[t][c]).sum();
        let actual: usize = confusion[c].iter().sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, actual);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        p_sum += precision;
        r_sum += recall;
        f_sum += f1;
    }
    let trace: usize = (0..NUM_CLASSES).map(|c| confusion[c][c]).sum();
    let k = NUM_CLASSES as f64;
    Ok(Metrics {
        count: labels.len(),
        accuracy: trace as f64 / labels.len() as f64,
        macro_f1: f_sum / k,
        macro_precision: p_sum / k,
        macro_recall: r_sum / k,
        confusion,
    })
}
