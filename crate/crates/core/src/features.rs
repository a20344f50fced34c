//! Per-group opcode scoring by normalized class-frequency difference.
//!
//! Opcode counts are summed over all samples of a class and divided by the
//! class's total opcode count, giving a frequency profile per class. An
//! opcode's score is the absolute difference between the malware and benign
//! profiles; the top-k scores become the group's features.

use std::collections::BTreeMap;

use crate::corpus::{Class, GroupId, SampleRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassFrequency {
    pub freqs: BTreeMap<String, f64>,
    pub total_count: u64,
}

impl ClassFrequency {
    pub fn get(&self, mnemonic: &str) -> f64 {
        self.freqs.get(mnemonic).copied().unwrap_or(0.0)
    }
}

/// Opcode frequencies aggregated over every sample labeled `class`.
pub fn class_frequency(samples: &[SampleRecord], class: Class) -> ClassFrequency {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    let mut total = 0u64;
    for s in samples.iter().filter(|s| s.label.class() == Some(class)) {
        for (op, c) in s.histogram.iter() {
            *counts.entry(op).or_insert(0) += c;
            total += c;
        }
    }
    let freqs = if total == 0 {
        BTreeMap::new()
    } else {
        counts
            .into_iter()
            .map(|(op, c)| (op.to_string(), c as f64 / total as f64))
            .collect()
    };
    ClassFrequency {
        freqs,
        total_count: total,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub group: GroupId,
    pub scores: BTreeMap<String, f64>,
}

/// Scores every opcode seen in either class of `group_train`.
///
/// Fails when one class has no samples; such groups are expected to have
/// been dropped by [`crate::corpus::trainable_groups`].
pub fn score_opcodes(group: GroupId, group_train: &[SampleRecord]) -> Result<ScoreTable> {
    for class in Class::ALL {
        if !group_train.iter().any(|s| s.label.class() == Some(class)) {
            return Err(Error::InsufficientClass(format!(
                "group {group} has no {class} samples"
            )));
        }
    }
    let fm = class_frequency(group_train, Class::Malware);
    let fb = class_frequency(group_train, Class::Benign);

    let mut scores = BTreeMap::new();
    for op in fm.freqs.keys().chain(fb.freqs.keys()) {
        if !scores.contains_key(op) {
            scores.insert(op.clone(), (fm.get(op) - fb.get(op)).abs());
        }
    }
    Ok(ScoreTable { group, scores })
}

/// Selected opcodes, best first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSet {
    pub opcodes: Vec<String>,
    pub k: usize,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.opcodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opcodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.opcodes.iter().map(String::as_str)
    }
}

/// Top `k` opcodes by descending score; ties go to the lexicographically
/// smaller mnemonic.
pub fn select_top_k(table: &ScoreTable, k: usize) -> Result<FeatureSet> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".to_string()));
    }
    let mut ranked: Vec<(&String, f64)> = table.scores.iter().map(|(op, &s)| (op, s)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(k);
    Ok(FeatureSet {
        opcodes: ranked.into_iter().map(|(op, _)| op.clone()).collect(),
        k,
    })
}
