//! Corpus ingestion, size grouping and stratified train/test splitting.
//!
//! A corpus is a JSONL stream of pre-extracted opcode histograms, one
//! executable per line:
//!
//! ```text
//! {"id":"a","label":"malware","size_bytes":4000,"opcodes":{"mov":3}}
//! ```
//!
//! Samples are bucketed by file size into fixed-width groups. Each group is
//! later given its own feature set and model.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The two classes a model distinguishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Malware,
    Benign,
}

impl Class {
    pub const ALL: [Class; 2] = [Class::Malware, Class::Benign];

    pub fn as_str(self) -> &'static str {
        match self {
            Class::Malware => "malware",
            Class::Benign => "benign",
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ground-truth label of a sample. `Unknown` only arises for unlabeled
/// classification input and is never accepted from a training corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Malware,
    Benign,
    Unknown,
}

impl Label {
    pub fn class(self) -> Option<Class> {
        match self {
            Label::Malware => Some(Class::Malware),
            Label::Benign => Some(Class::Benign),
            Label::Unknown => None,
        }
    }
}

impl From<Class> for Label {
    fn from(c: Class) -> Self {
        match c {
            Class::Malware => Label::Malware,
            Class::Benign => Label::Benign,
        }
    }
}

/// Opcode mnemonic → occurrence count.
///
/// Kept in canonical form: mnemonics are non-empty and lowercase, and zero
/// counts are never stored.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, u64>")]
pub struct OpcodeHistogram(BTreeMap<String, u64>);

impl OpcodeHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `count` occurrences of `mnemonic`, case-folding it first.
    /// Empty (or all-whitespace) mnemonics are ignored.
    pub fn add(&mut self, mnemonic: &str, count: u64) {
        let key = mnemonic.trim();
        if key.is_empty() || count == 0 {
            return;
        }
        *self.0.entry(key.to_lowercase()).or_insert(0) += count;
    }

    pub fn get(&self, mnemonic: &str) -> u64 {
        self.0.get(mnemonic).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.0.values().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Every count multiplied by `factor`.
    pub fn scaled(&self, factor: u64) -> Self {
        let mut out = Self::new();
        for (k, v) in self.iter() {
            out.add(k, v * factor);
        }
        out
    }
}

impl TryFrom<BTreeMap<String, u64>> for OpcodeHistogram {
    type Error = String;

    fn try_from(raw: BTreeMap<String, u64>) -> std::result::Result<Self, String> {
        let mut hist = Self::new();
        for (k, v) in raw {
            if k.trim().is_empty() {
                return Err("empty opcode mnemonic".to_string());
            }
            hist.add(&k, v);
        }
        Ok(hist)
    }
}

impl<S: AsRef<str>> FromIterator<(S, u64)> for OpcodeHistogram {
    fn from_iter<I: IntoIterator<Item = (S, u64)>>(iter: I) -> Self {
        let mut hist = Self::new();
        for (k, v) in iter {
            hist.add(k.as_ref(), v);
        }
        hist
    }
}

/// One executable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub id: String,
    pub label: Label,
    pub size_bytes: u64,
    pub histogram: OpcodeHistogram,
}

impl SampleRecord {
    pub fn new(id: impl Into<String>, label: Label, size_bytes: u64, histogram: OpcodeHistogram) -> Self {
        Self {
            id: id.into(),
            label,
            size_bytes,
            histogram,
        }
    }
}

#[derive(Deserialize)]
struct RecordIn {
    id: String,
    #[serde(default)]
    label: Option<String>,
    size_bytes: u64,
    opcodes: OpcodeHistogram,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<Class>,
    size_bytes: u64,
    opcodes: &'a OpcodeHistogram,
}

fn parse_lines<R: BufRead>(reader: R, allow_unlabeled: bool) -> Result<Vec<SampleRecord>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RecordIn = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let label = match raw.label.as_deref() {
            Some("malware") => Label::Malware,
            Some("benign") => Label::Benign,
            None if allow_unlabeled => Label::Unknown,
            None => {
                return Err(Error::Parse {
                    line: lineno,
                    message: "missing label".to_string(),
                })
            }
            Some(other) => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("unknown label {other:?}"),
                })
            }
        };
        if raw.id.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                message: "empty id".to_string(),
            });
        }
        if !seen.insert(raw.id.clone()) {
            return Err(Error::DuplicateId(raw.id));
        }
        out.push(SampleRecord {
            id: raw.id,
            label,
            size_bytes: raw.size_bytes,
            histogram: raw.opcodes,
        });
    }
    Ok(out)
}

/// Parses a labeled JSONL corpus. Every record must carry a `malware` or
/// `benign` label and ids must be unique.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Vec<SampleRecord>> {
    parse_lines(reader, false)
}

/// Like [`parse_corpus`], but records without a label are accepted as
/// [`Label::Unknown`]. Used for classification input.
pub fn parse_unlabeled<R: BufRead>(reader: R) -> Result<Vec<SampleRecord>> {
    parse_lines(reader, true)
}

pub fn write_corpus<W: Write>(mut sink: W, samples: &[SampleRecord]) -> Result<()> {
    for s in samples {
        let rec = RecordOut {
            id: &s.id,
            label: s.label.class(),
            size_bytes: s.size_bytes,
            opcodes: &s.histogram,
        };
        serde_json::to_writer(&mut sink, &rec)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

/// Counts first-token mnemonics of a plain-text disassembly dump.
/// Blank lines and lines starting with `;` are skipped; operands are ignored.
pub fn tokenize_disassembly(text: &str) -> OpcodeHistogram {
    let mut hist = OpcodeHistogram::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with(';') {
            continue;
        }
        if let Some(tok) = line.split_whitespace().next() {
            hist.add(tok, 1);
        }
    }
    hist
}

/// Index of a size bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupId(pub u32);

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupingConfig {
    pub group_size_bytes: u64,
    pub max_size_bytes: u64,
    pub min_per_class: usize,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        Self {
            group_size_bytes: 5120,
            max_size_bytes: 512_000,
            min_per_class: 6,
        }
    }
}

impl GroupingConfig {
    pub fn new(group_size_bytes: u64, max_size_bytes: u64, min_per_class: usize) -> Result<Self> {
        let cfg = Self {
            group_size_bytes,
            max_size_bytes,
            min_per_class,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.group_size_bytes == 0 || self.max_size_bytes == 0 || self.min_per_class == 0 {
            return Err(Error::InvalidConfig(
                "group size, max size and min-per-class must be positive".to_string(),
            ));
        }
        if !self.max_size_bytes.is_multiple_of(self.group_size_bytes) {
            return Err(Error::InvalidConfig(format!(
                "max size {} is not a multiple of group size {}",
                self.max_size_bytes, self.group_size_bytes
            )));
        }
        if self.group_count() > u64::from(u32::MAX) {
            return Err(Error::InvalidConfig("too many groups".to_string()));
        }
        Ok(())
    }

    pub fn group_count(&self) -> u64 {
        self.max_size_bytes / self.group_size_bytes
    }
}

/// Maps a file size to its half-open bucket `[i * group_size, (i + 1) * group_size)`.
pub fn assign_group(size_bytes: u64, config: &GroupingConfig) -> Result<GroupId> {
    if size_bytes >= config.max_size_bytes {
        return Err(Error::OutOfRange {
            size_bytes,
            max_size_bytes: config.max_size_bytes,
        });
    }
    Ok(GroupId((size_bytes / config.group_size_bytes) as u32))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupedCorpus {
    pub config: GroupingConfig,
    pub groups: BTreeMap<GroupId, Vec<SampleRecord>>,
}

impl GroupedCorpus {
    pub fn empty(config: GroupingConfig) -> Self {
        Self {
            config,
            groups: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn group(&self, id: GroupId) -> &[SampleRecord] {
        self.groups.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn samples(&self) -> impl Iterator<Item = &SampleRecord> {
        self.groups.values().flatten()
    }

    pub fn count_label(&self, id: GroupId, label: Label) -> usize {
        self.group(id).iter().filter(|s| s.label == label).count()
    }

    /// All samples, group by group, in stored order.
    pub fn into_samples(self) -> Vec<SampleRecord> {
        self.groups.into_values().flatten().collect()
    }
}

/// Output of [`partition_by_group`]: the grouped corpus plus any samples at
/// or above the size cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub corpus: GroupedCorpus,
    pub rejected: Vec<SampleRecord>,
}

pub fn partition_by_group(samples: Vec<SampleRecord>, config: &GroupingConfig) -> Partition {
    let mut corpus = GroupedCorpus::empty(*config);
    let mut rejected = Vec::new();
    for s in samples {
        match assign_group(s.size_bytes, config) {
            Ok(g) => corpus.groups.entry(g).or_default().push(s),
            Err(_) => rejected.push(s),
        }
    }
    Partition { corpus, rejected }
}

/// Train:test proportion, e.g. `2:1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    pub train: u32,
    pub test: u32,
}

impl Ratio {
    pub fn new(train: u32, test: u32) -> Result<Self> {
        if train == 0 || test == 0 {
            return Err(Error::InvalidConfig(format!(
                "ratio components must be positive, got {train}:{test}"
            )));
        }
        Ok(Self { train, test })
    }

    /// Training share of a stratum of `n`, rounded up.
    pub fn train_count(&self, n: usize) -> usize {
        let num = n as u64 * u64::from(self.train);
        let den = u64::from(self.train) + u64::from(self.test);
        num.div_ceil(den) as usize
    }
}

impl Default for Ratio {
    fn default() -> Self {
        Self { train: 2, test: 1 }
    }
}

impl FromStr for Ratio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("ratio must look like 2:1, got {s:?}"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let a = a.trim().parse().map_err(|_| bad())?;
        let b = b.trim().parse().map_err(|_| bad())?;
        Ratio::new(a, b)
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.train, self.test)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub train: GroupedCorpus,
    pub test: GroupedCorpus,
    pub seed: u64,
    pub ratio: Ratio,
}

/// Seeded split, stratified per (group, label).
///
/// Each stratum of `n` samples sends `ratio.train_count(n)` to training and
/// the remainder to test. Strata are visited in (group, label) order from a
/// single ChaCha8 stream, so the result is a pure function of the inputs.
/// Selected samples keep their original relative order.
pub fn split_train_test(grouped: &GroupedCorpus, ratio: Ratio, seed: u64) -> SplitResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = GroupedCorpus::empty(grouped.config);
    let mut test = GroupedCorpus::empty(grouped.config);

    for (&gid, samples) in &grouped.groups {
        let mut in_train = vec![false; samples.len()];
        for label in [Label::Malware, Label::Benign, Label::Unknown] {
            let mut idx: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].label == label).collect();
            if idx.is_empty() {
                continue;
            }
            let n_train = ratio.train_count(idx.len());
            idx.shuffle(&mut rng);
            for &i in &idx[..n_train] {
                in_train[i] = true;
            }
        }
        for (s, &t) in samples.iter().zip(&in_train) {
            let side = if t { &mut train } else { &mut test };
            side.groups.entry(gid).or_default().push(s.clone());
        }
    }

    SplitResult {
        train,
        test,
        seed,
        ratio,
    }
}

/// Groups with at least `min_per_class` malware and benign training samples.
pub fn trainable_groups(train: &GroupedCorpus, config: &GroupingConfig) -> BTreeSet<GroupId> {
    train
        .groups
        .keys()
        .copied()
        .filter(|&g| {
            train.count_label(g, Label::Malware) >= config.min_per_class
                && train.count_label(g, Label::Benign) >= config.min_per_class
        })
        .collect()
}
