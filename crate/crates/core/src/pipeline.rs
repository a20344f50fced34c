//! Training glue: grouped corpus in, model bundle out.

use crate::corpus::{trainable_groups, GroupId, GroupedCorpus, SampleRecord};
use crate::engine::{build_bundle, BundleMeta, ModelBundle};
use crate::error::Result;
use crate::features::{score_opcodes, select_top_k};
use crate::nb::{train_group, GroupModel};

/// Scores, selects the top `k` opcodes, and trains one group.
pub fn fit_group(group: GroupId, samples: &[SampleRecord], k: usize, alpha: f64) -> Result<GroupModel> {
    let table = score_opcodes(group, samples)?;
    let features = select_top_k(&table, k)?;
    train_group(group, samples, &features, alpha)
}

/// Trains every group of `train` that passes the per-class minimum.
/// Groups whose samples carry no opcodes at all are skipped.
pub fn fit_bundle(train: &GroupedCorpus, meta: BundleMeta) -> Result<ModelBundle> {
    let mut models = Vec::new();
    for gid in trainable_groups(train, &train.config) {
        let table = score_opcodes(gid, train.group(gid))?;
        if table.scores.is_empty() {
            continue;
        }
        let features = select_top_k(&table, meta.k)?;
        models.push(train_group(gid, train.group(gid), &features, meta.alpha)?);
    }
    build_bundle(models, train.config, meta)
}
