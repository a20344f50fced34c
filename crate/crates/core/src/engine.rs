//! Model bundles, fallback routing and batch classification.
//!
//! [`classify_sequential`] is the single-threaded baseline. [`classify_parallel`]
//! splits the workload into contiguous chunks of `ceil(n / lanes)` samples,
//! one per worker lane, all reading the same immutable bundle. Both call the
//! same per-sample routine, so their outputs are bit-identical.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{assign_group, Class, GroupId, GroupingConfig, SampleRecord};
use crate::error::{Error, Result};
use crate::json::{serialize_exact, Exact};
use crate::nb::{predict, GroupModel, PerClass, Prediction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub k: usize,
    #[serde(serialize_with = "serialize_exact")]
    pub alpha: f64,
    pub seed: u64,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub config: GroupingConfig,
    pub models: BTreeMap<GroupId, GroupModel>,
    pub trained_ids: Vec<GroupId>,
    pub meta: BundleMeta,
}

#[derive(Serialize)]
struct BundleOut<'a> {
    config: &'a GroupingConfig,
    meta: &'a BundleMeta,
    models: Vec<&'a GroupModel>,
}

#[derive(Deserialize)]
struct BundleIn {
    config: GroupingConfig,
    meta: BundleMeta,
    models: Vec<GroupModel>,
}

/// Assembles and validates a bundle.
pub fn build_bundle(models: Vec<GroupModel>, config: GroupingConfig, meta: BundleMeta) -> Result<ModelBundle> {
    config.validate()?;
    if meta.k == 0 {
        return Err(Error::InvalidConfig("bundle k must be at least 1".to_string()));
    }
    let mut map = BTreeMap::new();
    for mut model in models {
        let gid = model.group;
        if u64::from(gid.0) >= config.group_count() {
            return Err(Error::Validation {
                group: gid.0,
                message: format!("group id outside [0, {})", config.group_count()),
            });
        }
        model.validate()?;
        if model.features.len() > meta.k {
            return Err(Error::Validation {
                group: gid.0,
                message: format!("{} features exceeds k = {}", model.features.len(), meta.k),
            });
        }
        model.features.k = meta.k;
        if map.insert(gid, model).is_some() {
            return Err(Error::DuplicateGroup(gid.0));
        }
    }
    Ok(ModelBundle {
        config,
        trained_ids: map.keys().copied().collect(),
        models: map,
        meta,
    })
}

impl ModelBundle {
    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn write_json<W: Write>(&self, mut sink: W) -> Result<()> {
        let out = BundleOut {
            config: &self.config,
            meta: &self.meta,
            models: self.models.values().collect(),
        };
        serde_json::to_writer(&mut sink, &out)?;
        sink.write_all(b"\n")?;
        sink.flush()?;
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_json(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    /// Reads and re-validates a bundle document.
    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let raw: BundleIn = serde_json::from_reader(reader)?;
        build_bundle(raw.models, raw.config, raw.meta)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::read_json(text.as_bytes())
    }
}

/// The trained group that serves `group`: itself if trained, else the next
/// trained group above it, else the nearest trained group below it.
pub fn route(bundle: &ModelBundle, group: GroupId) -> Result<GroupId> {
    bundle
        .models
        .range(group..)
        .next()
        .or_else(|| bundle.models.range(..group).next_back())
        .map(|(&g, _)| g)
        .ok_or(Error::NoModel)
}

/// A batch of samples to classify and the number of worker lanes to use.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub samples: Vec<SampleRecord>,
    pub lanes: usize,
}

impl Workload {
    pub fn new(samples: Vec<SampleRecord>, lanes: usize) -> Self {
        Self { samples, lanes }
    }
}

/// Why a single sample could not be classified.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SampleError {
    #[error("size {size_bytes} bytes is outside the admitted range (< {max_size_bytes})")]
    OutOfRange { size_bytes: u64, max_size_bytes: u64 },
}

pub type Outcome = std::result::Result<Prediction, SampleError>;

#[derive(Debug, Clone, PartialEq)]
pub struct TimedRun {
    /// One entry per input sample, in input order.
    pub predictions: Vec<Outcome>,
    /// Wall time of the classification region only.
    pub elapsed_ns: u64,
}

fn classify_one(bundle: &ModelBundle, sample: &SampleRecord) -> Outcome {
    let group = assign_group(sample.size_bytes, &bundle.config).map_err(|_| SampleError::OutOfRange {
        size_bytes: sample.size_bytes,
        max_size_bytes: bundle.config.max_size_bytes,
    })?;
    // non-empty bundle is checked by the callers
    let served = route(bundle, group).expect("bundle has at least one model");
    Ok(predict(&bundle.models[&served], &sample.histogram))
}

fn check_ready(bundle: &ModelBundle) -> Result<()> {
    if bundle.is_empty() {
        return Err(Error::NoModel);
    }
    Ok(())
}

/// Classifies every sample on the calling thread.
pub fn classify_sequential(bundle: &ModelBundle, workload: &Workload) -> Result<TimedRun> {
    check_ready(bundle)?;
    let mut predictions = Vec::with_capacity(workload.samples.len());
    let start = Instant::now();
    for s in &workload.samples {
        predictions.push(classify_one(bundle, s));
    }
    let elapsed_ns = start.elapsed().as_nanos() as u64;
    Ok(TimedRun {
        predictions,
        elapsed_ns,
    })
}

/// Classifies the workload on `workload.lanes` concurrent workers.
///
/// Each worker owns one contiguous chunk of the input and the matching chunk
/// of the output buffer. The first chunk runs on the calling thread.
pub fn classify_parallel(bundle: &ModelBundle, workload: &Workload) -> Result<TimedRun> {
    check_ready(bundle)?;
    if workload.lanes == 0 {
        return Err(Error::InvalidConfig("lanes must be at least 1".to_string()));
    }
    let n = workload.samples.len();
    let chunk = n.div_ceil(workload.lanes).max(1);
    let mut slots: Vec<Option<Outcome>> = vec![None; n];

    let start = Instant::now();
    thread::scope(|scope| {
        let mut parts = workload.samples.chunks(chunk).zip(slots.chunks_mut(chunk));
        let first = parts.next();
        for (input, output) in parts {
            scope.spawn(move || fill(bundle, input, output));
        }
        if let Some((input, output)) = first {
            fill(bundle, input, output);
        }
    });
    let elapsed_ns = start.elapsed().as_nanos() as u64;

    let predictions = slots
        .into_iter()
        .map(|s| s.expect("every slot is written by exactly one lane"))
        .collect();
    Ok(TimedRun {
        predictions,
        elapsed_ns,
    })
}

fn fill(bundle: &ModelBundle, input: &[SampleRecord], output: &mut [Option<Outcome>]) {
    for (s, slot) in input.iter().zip(output) {
        *slot = Some(classify_one(bundle, s));
    }
}

/// `Sp = Tc / Tp`.
pub fn speedup(tc_ns: u64, tp_ns: u64) -> Result<f64> {
    if tp_ns == 0 {
        return Err(Error::InvalidMeasurement("parallel time is zero".to_string()));
    }
    Ok(tc_ns as f64 / tp_ns as f64)
}

#[derive(Serialize)]
struct PredictionOut<'a> {
    id: &'a str,
    label: Class,
    log_posterior: PerClass<Exact>,
    effective_group: GroupId,
}

#[derive(Serialize)]
struct FailureOut<'a> {
    id: &'a str,
    error: String,
}

/// Writes one JSON object per sample. Failed samples get an `error` field
/// instead of a label.
pub fn write_predictions<W: Write>(mut sink: W, samples: &[SampleRecord], outcomes: &[Outcome]) -> Result<()> {
    for (s, o) in samples.iter().zip(outcomes) {
        match o {
            Ok(p) => serde_json::to_writer(
                &mut sink,
                &PredictionOut {
                    id: &s.id,
                    label: p.label,
                    log_posterior: p.log_posterior.map(|&v| Exact(v)),
                    effective_group: p.effective_group,
                },
            )?,
            Err(e) => serde_json::to_writer(
                &mut sink,
                &FailureOut {
                    id: &s.id,
                    error: e.to_string(),
                },
            )?,
        }
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    #[serde(default)]
    pub label: Option<Class>,
    #[serde(default)]
    pub log_posterior: Option<PerClass<f64>>,
    #[serde(default)]
    pub effective_group: Option<GroupId>,
    #[serde(default)]
    pub error: Option<String>,
}

pub fn read_predictions<R: BufRead>(reader: R) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}
