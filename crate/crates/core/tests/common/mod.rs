//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the library's scoring, selection or model code.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use opcode_nb::corpus::{Label, OpcodeHistogram, SampleRecord};
use rand::Rng;

/// Group of `size` by walking bucket boundaries one at a time.
pub fn scan_group(size: u64, group_size: u64, max_size: u64) -> Option<u32> {
    let mut lower = 0u64;
    let mut idx = 0u32;
    while lower < max_size {
        if size >= lower && size < lower + group_size {
            return Some(idx);
        }
        lower += group_size;
        idx += 1;
    }
    None
}

/// |f_M(o) - f_B(o)| by explicit double loops over samples and opcodes.
pub fn scores(samples: &[SampleRecord]) -> BTreeMap<String, f64> {
    let mut vocab = BTreeSet::new();
    for s in samples {
        for (op, _) in s.histogram.iter() {
            vocab.insert(op.to_string());
        }
    }
    let freq = |label: Label, op: &str| -> f64 {
        let mut num = 0u64;
        let mut den = 0u64;
        for s in samples.iter().filter(|s| s.label == label) {
            for (o, c) in s.histogram.iter() {
                den += c;
                if o == op {
                    num += c;
                }
            }
        }
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    vocab
        .into_iter()
        .map(|op| {
            let d = (freq(Label::Malware, &op) - freq(Label::Benign, &op)).abs();
            (op, d)
        })
        .collect()
}

/// Top-k by repeated selection of the best remaining opcode.
pub fn top_k(scores: &BTreeMap<String, f64>, k: usize) -> Vec<String> {
    let mut left: Vec<(String, f64)> = scores.iter().map(|(o, &s)| (o.clone(), s)).collect();
    let mut out = Vec::new();
    while out.len() < k && !left.is_empty() {
        let mut best = 0;
        for i in 1..left.len() {
            let (ref o, s) = left[i];
            let (ref bo, bs) = left[best];
            if s > bs || (s == bs && o < bo) {
                best = i;
            }
        }
        out.push(left.remove(best).0);
    }
    out
}

/// Posterior (malware, benign) by enumerating every opcode sequence over the
/// feature set whose histogram equals `hist` restricted to the features.
pub fn posterior(train: &[SampleRecord], features: &[String], alpha: f64, hist: &OpcodeHistogram) -> (f64, f64) {
    let m = features.len();
    let target: Vec<u64> = features.iter().map(|f| hist.get(f)).collect();
    let n: u64 = target.iter().sum();

    let class_terms = |label: Label| -> (f64, Vec<f64>) {
        let members: Vec<&SampleRecord> = train.iter().filter(|s| s.label == label).collect();
        let prior = members.len() as f64 / train.iter().filter(|s| s.label != Label::Unknown).count() as f64;
        let counts: Vec<u64> = features
            .iter()
            .map(|f| members.iter().map(|s| s.histogram.get(f)).sum())
            .collect();
        let total: u64 = counts.iter().sum();
        let theta = counts
            .iter()
            .map(|&c| (c as f64 + alpha) / (total as f64 + alpha * m as f64))
            .collect();
        (prior, theta)
    };

    let likelihood = |theta: &[f64]| -> f64 {
        let mut sum = 0.0;
        let mut seq = vec![0usize; n as usize];
        loop {
            let mut h = vec![0u64; m];
            for &i in &seq {
                h[i] += 1;
            }
            if h == target {
                sum += seq.iter().map(|&i| theta[i]).product::<f64>();
            }
            // next sequence in base m
            let mut pos = 0;
            loop {
                if pos == seq.len() {
                    return sum;
                }
                seq[pos] += 1;
                if seq[pos] < m {
                    break;
                }
                seq[pos] = 0;
                pos += 1;
            }
        }
    };

    let (pm, tm) = class_terms(Label::Malware);
    let (pb, tb) = class_terms(Label::Benign);
    let jm = pm * likelihood(&tm);
    let jb = pb * likelihood(&tb);
    (jm / (jm + jb), jb / (jm + jb))
}

/// Serving group by linear scan: itself, else next trained above, else
/// nearest trained below.
pub fn route(trained: &[u32], g: u32) -> Option<u32> {
    if trained.contains(&g) {
        return Some(g);
    }
    let above = trained.iter().copied().filter(|&t| t > g).min();
    above.or_else(|| trained.iter().copied().filter(|&t| t < g).max())
}

fn random_hist(rng: &mut impl Rng, vocab: &[&str], max_total: u64) -> OpcodeHistogram {
    let mut h = OpcodeHistogram::new();
    let total = rng.random_range(0..=max_total);
    for _ in 0..total {
        h.add(vocab[rng.random_range(0..vocab.len())], 1);
    }
    h
}

/// A small labeled corpus with at least one sample per class.
pub fn random_small_corpus(rng: &mut impl Rng, max_samples: usize, max_opcodes: usize) -> Vec<SampleRecord> {
    let names: Vec<String> = (0..max_opcodes)
        .map(|i| format!("o{}", (b'a' + i as u8) as char))
        .collect();
    let vocab_len = rng.random_range(1..=max_opcodes);
    let vocab: Vec<&str> = names[..vocab_len].iter().map(String::as_str).collect();
    let n = rng.random_range(2..=max_samples);
    (0..n)
        .map(|i| {
            let label = match i {
                0 => Label::Malware,
                1 => Label::Benign,
                _ if rng.random_bool(0.5) => Label::Malware,
                _ => Label::Benign,
            };
            let mut h = random_hist(rng, &vocab, 12);
            if h.is_empty() {
                h.add(vocab[0], 1);
            }
            SampleRecord::new(format!("s{i}"), label, 0, h)
        })
        .collect()
}

/// A Naive Bayes micro-instance: training set, feature list, alpha and a
/// query histogram with at most `max_query` feature occurrences.
pub struct MicroInstance {
    pub train: Vec<SampleRecord>,
    pub features: Vec<String>,
    pub alpha: f64,
    pub query: OpcodeHistogram,
}

pub fn random_micro_instance(rng: &mut impl Rng, max_features: usize, max_query: u64) -> MicroInstance {
    let pool = ["add", "call", "jmp", "mov", "push", "xor"];
    let m = rng.random_range(1..=max_features);
    let features: Vec<String> = pool[..m].iter().map(|s| s.to_string()).collect();
    let train_vocab: Vec<&str> = pool.to_vec();
    let n = rng.random_range(2..=8);
    let train = (0..n)
        .map(|i| {
            let label = match i {
                0 => Label::Malware,
                1 => Label::Benign,
                _ if rng.random_bool(0.5) => Label::Malware,
                _ => Label::Benign,
            };
            SampleRecord::new(format!("t{i}"), label, 0, random_hist(rng, &train_vocab, 10))
        })
        .collect();
    let alpha = [0.25, 0.5, 1.0, 2.0][rng.random_range(0..4)];
    let feature_refs: Vec<&str> = features.iter().map(String::as_str).collect();
    let mut query = random_hist(rng, &feature_refs, max_query);
    if rng.random_bool(0.3) {
        query.add("nop", rng.random_range(1..20));
    }
    MicroInstance {
        train,
        features,
        alpha,
        query,
    }
}
