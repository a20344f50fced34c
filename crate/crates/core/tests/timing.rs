//! Wall-clock behaviour of the classifiers. Kept in its own test binary with
//! a single test so nothing else competes for the CPU while it measures.

use opcode_nb::bench::{generate_synthetic, make_batches, SyntheticSpec};
use opcode_nb::corpus::{partition_by_group, split_train_test, GroupingConfig, Ratio};
use opcode_nb::engine::{classify_parallel, classify_sequential, BundleMeta, ModelBundle, Workload};
use opcode_nb::pipeline::fit_bundle;

const REPS: usize = 7;
/// Doubling the batch must at least multiply time by 2 * (1 - NOISE).
const NOISE: f64 = 0.2;

fn median_ns(bundle: &ModelBundle, w: &Workload, parallel: bool) -> u64 {
    let run = |w: &Workload| {
        if parallel {
            classify_parallel(bundle, w).unwrap().elapsed_ns
        } else {
            classify_sequential(bundle, w).unwrap().elapsed_ns
        }
    };
    run(w);
    let mut t: Vec<u64> = (0..REPS).map(|_| run(w)).collect();
    t.sort_unstable();
    t[REPS / 2]
}

#[test]
fn elapsed_grows_with_batch_size() {
    let spec = SyntheticSpec {
        group_count: 6,
        samples_per_group_per_class: 24,
        vocabulary_size: 128,
        divergence: 0.8,
        seed: 4,
        group_size_bytes: 5120,
    };
    let grouped = partition_by_group(generate_synthetic(&spec).unwrap(), &GroupingConfig::default()).corpus;
    let split = split_train_test(&grouped, Ratio::default(), 4);
    let meta = BundleMeta {
        k: 100,
        alpha: 1.0,
        seed: 4,
        created_at: 0,
    };
    let bundle = fit_bundle(&split.train, meta).unwrap();
    let test = split.test.into_samples();

    for parallel in [false, true] {
        let times: Vec<u64> = [1, 2, 4]
            .iter()
            .map(|&c| median_ns(&bundle, &make_batches(&test, 768, c, 2).unwrap(), parallel))
            .collect();
        for pair in times.windows(2) {
            let ratio = pair[1] as f64 / pair[0] as f64;
            assert!(
                ratio >= 2.0 * (1.0 - NOISE),
                "parallel={parallel}: times {times:?} not monotone in batch size"
            );
        }
    }
}
