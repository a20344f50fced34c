//! Group-wise Naive Bayes malware classification over opcode histograms.
//!
//! Executables are bucketed by file size, each bucket gets its own top-k
//! opcode features and multinomial Naive Bayes model, and batches are
//! classified either sequentially or across parallel worker lanes with
//! identical results.
//!
//! ```no_run
//! use opcode_nb::{corpus, engine, pipeline};
//!
//! let samples = corpus::parse_corpus(std::io::BufReader::new(std::fs::File::open("corpus.jsonl")?))?;
//! let grouped = corpus::partition_by_group(samples, &corpus::GroupingConfig::default()).corpus;
//! let split = corpus::split_train_test(&grouped, corpus::Ratio::default(), 7);
//! let meta = engine::BundleMeta { k: 20, alpha: 1.0, seed: 7, created_at: 0 };
//! let bundle = pipeline::fit_bundle(&split.train, meta)?;
//! let workload = engine::Workload::new(split.test.into_samples(), 4);
//! let run = engine::classify_parallel(&bundle, &workload)?;
//! println!("{} predictions in {} ns", run.predictions.len(), run.elapsed_ns);
//! # Ok::<(), opcode_nb::Error>(())
//! ```

pub mod bench;
pub mod corpus;
pub mod engine;
mod error;
pub mod features;
mod json;
pub mod metrics;
pub mod nb;
pub mod pipeline;

pub use error::{Error, ErrorKind, Result};
