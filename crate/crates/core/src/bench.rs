//! Synthetic corpora, batch construction and the timing sweep.
//!
//! The sweep times [`classify_sequential`] against [`classify_parallel`] for
//! every (k, batch size) cell and reports `Sp = Tc / Tp` from the medians.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Label, OpcodeHistogram, SampleRecord};
use crate::engine::{classify_parallel, classify_sequential, speedup, ModelBundle, Workload};
use crate::error::{Error, Result};

pub const DEFAULT_K_VALUES: [usize; 6] = [20, 40, 80, 100, 160, 200];
pub const DEFAULT_BATCH_COUNTS: [usize; 5] = [1, 2, 4, 8, 16];
pub const DEFAULT_BATCH_MULTIPLE: usize = 768;

pub fn hardware_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchConfig {
    pub k_values: Vec<usize>,
    pub batch_multiple: usize,
    pub batch_counts: Vec<usize>,
    pub lanes: usize,
    pub repetitions: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            k_values: DEFAULT_K_VALUES.to_vec(),
            batch_multiple: DEFAULT_BATCH_MULTIPLE,
            batch_counts: DEFAULT_BATCH_COUNTS.to_vec(),
            lanes: hardware_threads(),
            repetitions: 5,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.k_values.is_empty() || self.batch_counts.is_empty() {
            return bad("k values and batch counts must be non-empty");
        }
        if self.k_values.contains(&0) || self.batch_counts.contains(&0) {
            return bad("k values and batch counts must be positive");
        }
        if self.batch_multiple == 0 || self.lanes == 0 || self.repetitions == 0 {
            return bad("batch multiple, lanes and repetitions must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Mode {
    Sequential,
    Parallel,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Sequential => "sequential",
            Mode::Parallel => "parallel",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub k: usize,
    pub batch_size: usize,
    pub mode: Mode,
    pub lanes: usize,
    pub elapsed_ns_median: u64,
    pub elapsed_ns_min: u64,
    /// Only set on parallel rows.
    pub speedup: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, k: usize, batch_size: usize, mode: Mode) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.k == k && r.batch_size == batch_size && r.mode == mode)
    }
}

/// Parameters of a seeded synthetic corpus.
///
/// Each class draws opcodes from a mixture of a shared base distribution and
/// a class-specific one; the class-specific parts have disjoint supports, so
/// the total-variation distance between the two classes equals `divergence`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub group_count: u32,
    pub samples_per_group_per_class: usize,
    pub vocabulary_size: usize,
    pub divergence: f64,
    pub seed: u64,
    pub group_size_bytes: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            group_count: 10,
            samples_per_group_per_class: 30,
            vocabulary_size: 256,
            divergence: 0.8,
            seed: 0,
            group_size_bytes: 5120,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.group_count == 0 || self.samples_per_group_per_class == 0 || self.group_size_bytes == 0 {
            return Err(Error::InvalidConfig(
                "synthetic corpus sizes must be positive".to_string(),
            ));
        }
        if self.vocabulary_size < 2 {
            return Err(Error::InvalidConfig("vocabulary needs at least 2 opcodes".to_string()));
        }
        if !(0.0..=1.0).contains(&self.divergence) {
            return Err(Error::InvalidConfig(format!(
                "divergence {} not in [0, 1]",
                self.divergence
            )));
        }
        Ok(())
    }

    /// Per-class opcode distributions over the vocabulary.
    pub fn class_distributions(&self, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
        let v = self.vocabulary_size;
        let base = normalize((0..v).map(|_| rng.random_range(0.1..1.0)).collect());
        // even opcodes are malware-only, odd ones benign-only, paired weights
        let mut mal = vec![0.0; v];
        let mut ben = vec![0.0; v];
        for pair in 0..v / 2 {
            let w = rng.random_range(0.1..1.0);
            mal[2 * pair] = w;
            ben[2 * pair + 1] = w;
        }
        let (mal, ben) = (normalize(mal), normalize(ben));
        let d = self.divergence;
        let mix = |own: &[f64]| {
            base.iter()
                .zip(own)
                .map(|(b, o)| (1.0 - d) * b + d * o)
                .collect::<Vec<_>>()
        };
        (mix(&mal), mix(&ben))
    }
}

fn normalize(mut w: Vec<f64>) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    w
}

pub fn opcode_name(i: usize) -> String {
    format!("op{i:03}")
}

/// Number of opcodes drawn for a file of `size_bytes`.
fn opcode_count(size_bytes: u64) -> usize {
    32 + (size_bytes / 64) as usize
}

/// Deterministic corpus: for every group, `samples_per_group_per_class`
/// malware and benign samples with sizes uniform over the group's byte range.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<SampleRecord>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (mal, ben) = spec.class_distributions(&mut rng);
    let names: Vec<String> = (0..spec.vocabulary_size).map(opcode_name).collect();
    let draw = |weights: &[f64]| {
        // zero weights are allowed; all-zero cannot happen after mixing
        WeightedIndex::new(weights).map_err(|e| Error::InvalidConfig(e.to_string()))
    };
    let mal_dist = draw(&mal)?;
    let ben_dist = draw(&ben)?;

    let mut out = Vec::with_capacity(spec.group_count as usize * spec.samples_per_group_per_class * 2);
    for g in 0..u64::from(spec.group_count) {
        let lo = g * spec.group_size_bytes;
        let hi = lo + spec.group_size_bytes;
        for i in 0..spec.samples_per_group_per_class {
            for (label, dist, tag) in [(Label::Malware, &mal_dist, 'm'), (Label::Benign, &ben_dist, 'b')] {
                let size = rng.random_range(lo..hi);
                let mut counts = vec![0u64; names.len()];
                for _ in 0..opcode_count(size) {
                    counts[dist.sample(&mut rng)] += 1;
                }
                let hist: OpcodeHistogram = names.iter().zip(&counts).map(|(n, &c)| (n.as_str(), c)).collect();
                out.push(SampleRecord::new(
                    format!("syn-g{g:03}-{tag}-{i:04}"),
                    label,
                    size,
                    hist,
                ));
            }
        }
    }
    Ok(out)
}

/// `batch_multiple * batch_count` samples, cycling through `test_samples`
/// in order.
pub fn make_batches(
    test_samples: &[SampleRecord],
    batch_multiple: usize,
    batch_count: usize,
    lanes: usize,
) -> Result<Workload> {
    if test_samples.is_empty() {
        return Err(Error::InvalidConfig(
            "cannot build batches from an empty test set".to_string(),
        ));
    }
    let n = batch_multiple * batch_count;
    let samples = test_samples.iter().cycle().take(n).cloned().collect();
    Ok(Workload::new(samples, lanes))
}

fn median(sorted: &[u64]) -> u64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        let (a, b) = (sorted[n / 2 - 1], sorted[n / 2]);
        a / 2 + b / 2 + (a % 2 + b % 2) / 2
    }
}

/// Runs the full sweep. Every (k, batch size) cell gets one discarded
/// warm-up run per mode, then `repetitions` timed runs per mode.
pub fn run_bench(
    bundles: &BTreeMap<usize, ModelBundle>,
    test_samples: &[SampleRecord],
    config: &BenchConfig,
) -> Result<BenchReport> {
    config.validate()?;
    for k in &config.k_values {
        match bundles.get(k) {
            None => return Err(Error::InvalidConfig(format!("no bundle trained for k = {k}"))),
            Some(b) if b.is_empty() => return Err(Error::NoModel),
            Some(_) => {}
        }
    }

    let mut k_values = config.k_values.clone();
    k_values.sort_unstable();
    k_values.dedup();
    let mut batch_counts = config.batch_counts.clone();
    batch_counts.sort_unstable();
    batch_counts.dedup();

    let mut rows = Vec::new();
    for k in k_values {
        let bundle = &bundles[&k];
        for &count in &batch_counts {
            let workload = make_batches(test_samples, config.batch_multiple, count, config.lanes)?;
            classify_sequential(bundle, &workload)?;
            classify_parallel(bundle, &workload)?;

            let mut seq = Vec::with_capacity(config.repetitions);
            let mut par = Vec::with_capacity(config.repetitions);
            for _ in 0..config.repetitions {
                seq.push(classify_sequential(bundle, &workload)?.elapsed_ns);
                par.push(classify_parallel(bundle, &workload)?.elapsed_ns);
            }
            seq.sort_unstable();
            par.sort_unstable();
            let (seq_med, par_med) = (median(&seq), median(&par));
            let batch_size = workload.samples.len();
            rows.push(BenchRow {
                k,
                batch_size,
                mode: Mode::Sequential,
                lanes: 1,
                elapsed_ns_median: seq_med,
                elapsed_ns_min: seq[0],
                speedup: None,
            });
            rows.push(BenchRow {
                k,
                batch_size,
                mode: Mode::Parallel,
                lanes: config.lanes,
                elapsed_ns_median: par_med,
                elapsed_ns_min: par[0],
                speedup: Some(speedup(seq_med, par_med)?),
            });
        }
    }
    Ok(BenchReport { rows })
}

pub const CSV_HEADER: &str = "k,batch_size,mode,lanes,elapsed_ns_median,elapsed_ns_min,speedup";

pub fn emit_csv<W: Write>(report: &BenchReport, mut sink: W) -> Result<()> {
    writeln!(sink, "{CSV_HEADER}")?;
    for r in &report.rows {
        let sp = r.speedup.map(|s| s.to_string()).unwrap_or_default();
        writeln!(
            sink,
            "{},{},{},{},{},{},{}",
            r.k, r.batch_size, r.mode, r.lanes, r.elapsed_ns_median, r.elapsed_ns_min, sp
        )?;
    }
    sink.flush()?;
    Ok(())
}

/// Reads back a report written by [`emit_csv`].
pub fn parse_csv<R: BufRead>(reader: R) -> Result<BenchReport> {
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if idx == 0 {
            if line != CSV_HEADER {
                return Err(Error::Parse {
                    line: 1,
                    message: "unexpected header".to_string(),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Parse {
            line: lineno,
            message: format!("bad {what}"),
        };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(bad("column count"));
        }
        let mode = match cols[2] {
            "sequential" => Mode::Sequential,
            "parallel" => Mode::Parallel,
            _ => return Err(bad("mode")),
        };
        let speedup = if cols[6].is_empty() {
            None
        } else {
            Some(cols[6].parse().map_err(|_| bad("speedup"))?)
        };
        rows.push(BenchRow {
            k: cols[0].parse().map_err(|_| bad("k"))?,
            batch_size: cols[1].parse().map_err(|_| bad("batch_size"))?,
            mode,
            lanes: cols[3].parse().map_err(|_| bad("lanes"))?,
            elapsed_ns_median: cols[4].parse().map_err(|_| bad("elapsed_ns_median"))?,
            elapsed_ns_min: cols[5].parse().map_err(|_| bad("elapsed_ns_min"))?,
            speedup,
        });
    }
    Ok(BenchReport { rows })
}
