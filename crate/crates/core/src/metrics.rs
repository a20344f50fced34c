//! Accuracy and per-class precision/recall of a predictions file against
//! ground truth.

use std::collections::HashMap;

use serde::Serialize;

use crate::corpus::{Class, SampleRecord};
use crate::engine::PredictionRecord;
use crate::nb::PerClass;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreSummary {
    /// Labeled samples that had a matching prediction line.
    pub evaluated: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Predictions that carried an error instead of a label (counted wrong).
    pub failed: usize,
    /// Labeled samples with no prediction line at all.
    pub missing: usize,
    pub per_class: PerClass<ClassMetrics>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn score(predictions: &[PredictionRecord], truth: &[SampleRecord]) -> ScoreSummary {
    let by_id: HashMap<&str, &PredictionRecord> = predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut evaluated = 0;
    let mut correct = 0;
    let mut failed = 0;
    let mut missing = 0;
    let mut tp = PerClass::<usize>::default();
    let mut predicted = PerClass::<usize>::default();
    let mut support = PerClass::<usize>::default();

    for s in truth {
        let Some(actual) = s.label.class() else { continue };
        let Some(p) = by_id.get(s.id.as_str()) else {
            missing += 1;
            continue;
        };
        evaluated += 1;
        *support.get_mut(actual) += 1;
        match p.label {
            Some(guess) => {
                *predicted.get_mut(guess) += 1;
                if guess == actual {
                    correct += 1;
                    *tp.get_mut(actual) += 1;
                }
            }
            None => failed += 1,
        }
    }

    let per_class = PerClass::from_fn(|c: Class| ClassMetrics {
        precision: ratio(*tp.get(c), *predicted.get(c)),
        recall: ratio(*tp.get(c), *support.get(c)),
        support: *support.get(c),
    });
    ScoreSummary {
        evaluated,
        correct,
        accuracy: ratio(correct, evaluated),
        failed,
        missing,
        per_class,
    }
}
