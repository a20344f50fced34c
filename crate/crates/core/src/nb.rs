//! Multinomial Naive Bayes over a group's selected opcodes, in log space.
//!
//! For a class `c` with training samples restricted to the feature set `F`:
//!
//! ```text
//! log_prior(c)         = ln(n_c / n)
//! log_likelihood(c, o) = ln((count_c(o) + alpha) / (total_c + alpha * |F|))
//! score(c | h)         = log_prior(c) + sum over o in F of h(o) * log_likelihood(c, o)
//! ```
//!
//! The evidence term is class-constant and is not computed for
//! classification; [`normalized_posterior`] provides it for diagnostics.
//! Sums always run in feature-set order so that every caller gets
//! bit-identical scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::{Class, GroupId, OpcodeHistogram, SampleRecord};
use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::json::Exact;

/// Tolerance for the probability-sums-to-one checks.
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

/// One value per class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerClass<T> {
    pub malware: T,
    pub benign: T,
}

impl<T> PerClass<T> {
    pub fn get(&self, class: Class) -> &T {
        match class {
            Class::Malware => &self.malware,
            Class::Benign => &self.benign,
        }
    }

    pub fn get_mut(&mut self, class: Class) -> &mut T {
        match class {
            Class::Malware => &mut self.malware,
            Class::Benign => &mut self.benign,
        }
    }

    pub fn from_fn(mut f: impl FnMut(Class) -> T) -> Self {
        Self {
            malware: f(Class::Malware),
            benign: f(Class::Benign),
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> PerClass<U> {
        PerClass {
            malware: f(&self.malware),
            benign: f(&self.benign),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupModel {
    pub group: GroupId,
    pub features: FeatureSet,
    pub log_prior: PerClass<f64>,
    /// Indexed like `features.opcodes`.
    pub log_likelihood: PerClass<Vec<f64>>,
    pub alpha: f64,
    pub train_counts: PerClass<usize>,
}

impl GroupModel {
    pub fn log_likelihood_of(&self, class: Class, mnemonic: &str) -> Option<f64> {
        let idx = self.features.opcodes.iter().position(|o| o == mnemonic)?;
        Some(self.log_likelihood.get(class)[idx])
    }

    /// Checks the probabilistic invariants of a trained model.
    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Error::Validation {
            group: self.group.0,
            message,
        };
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(fail(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.features.is_empty() {
            return Err(fail("empty feature set".to_string()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.features.iter().find(|o| !seen.insert(*o)) {
            return Err(fail(format!("duplicate feature {dup:?}")));
        }
        let prior_sum: f64 = Class::ALL.iter().map(|&c| self.log_prior.get(c).exp()).sum();
        if (prior_sum - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(fail(format!("priors sum to {prior_sum}")));
        }
        for class in Class::ALL {
            let ll = self.log_likelihood.get(class);
            if ll.len() != self.features.len() {
                return Err(fail(format!(
                    "{class} likelihood has {} entries for {} features",
                    ll.len(),
                    self.features.len()
                )));
            }
            if let Some(bad) = ll.iter().find(|v| !v.is_finite()) {
                return Err(fail(format!("non-finite {class} log-likelihood {bad}")));
            }
            let sum: f64 = ll.iter().map(|v| v.exp()).sum();
            if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
                return Err(fail(format!("{class} likelihoods sum to {sum}")));
            }
            if !self.log_prior.get(class).is_finite() {
                return Err(fail(format!("non-finite {class} log-prior")));
            }
        }
        Ok(())
    }
}

/// Fits one group's model. Samples without a class label are ignored.
pub fn train_group(
    group: GroupId,
    train_samples: &[SampleRecord],
    features: &FeatureSet,
    alpha: f64,
) -> Result<GroupModel> {
    if features.is_empty() {
        return Err(Error::InvalidConfig(format!("group {group}: empty feature set")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidConfig(format!("alpha must be positive, got {alpha}")));
    }

    let mut n = PerClass::<usize>::default();
    let mut counts = PerClass::from_fn(|_| vec![0u64; features.len()]);
    for s in train_samples {
        let Some(class) = s.label.class() else { continue };
        *n.get_mut(class) += 1;
        let row = counts.get_mut(class);
        for (slot, op) in row.iter_mut().zip(features.iter()) {
            *slot += s.histogram.get(op);
        }
    }
    for class in Class::ALL {
        if *n.get(class) == 0 {
            return Err(Error::InsufficientClass(format!(
                "group {group} has no {class} training samples"
            )));
        }
    }

    let n_total = (n.malware + n.benign) as f64;
    let log_prior = PerClass::from_fn(|c| (*n.get(c) as f64 / n_total).ln());
    let width = alpha * features.len() as f64;
    let log_likelihood = counts.map(|row| {
        let total: u64 = row.iter().sum();
        let den = total as f64 + width;
        row.iter().map(|&c| ((c as f64 + alpha) / den).ln()).collect()
    });

    Ok(GroupModel {
        group,
        features: features.clone(),
        log_prior,
        log_likelihood,
        alpha,
        train_counts: n,
    })
}

/// Unnormalized joint log-score per class. Opcodes outside the feature set
/// do not contribute.
pub fn log_posterior(model: &GroupModel, histogram: &OpcodeHistogram) -> PerClass<f64> {
    let mut scores = model.log_prior;
    for (i, op) in model.features.iter().enumerate() {
        let c = histogram.get(op);
        if c == 0 {
            continue;
        }
        let c = c as f64;
        scores.malware += c * model.log_likelihood.malware[i];
        scores.benign += c * model.log_likelihood.benign[i];
    }
    scores
}

/// Posterior probabilities from joint log-scores (log-sum-exp).
pub fn normalized_posterior(scores: &PerClass<f64>) -> PerClass<f64> {
    let m = scores.malware.max(scores.benign);
    let zm = (scores.malware - m).exp();
    let zb = (scores.benign - m).exp();
    let z = zm + zb;
    PerClass {
        malware: zm / z,
        benign: zb / z,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: Class,
    pub log_posterior: PerClass<f64>,
    pub effective_group: GroupId,
}

/// Malware only when its score is strictly higher; ties go to benign.
pub fn decide(scores: &PerClass<f64>) -> Class {
    if scores.malware > scores.benign {
        Class::Malware
    } else {
        Class::Benign
    }
}

pub fn predict(model: &GroupModel, histogram: &OpcodeHistogram) -> Prediction {
    let scores = log_posterior(model, histogram);
    Prediction {
        label: decide(&scores),
        log_posterior: scores,
        effective_group: model.group,
    }
}

#[derive(Serialize, Deserialize)]
struct GroupModelWire {
    group: GroupId,
    features: Vec<String>,
    log_prior: PerClass<Exact>,
    log_likelihood: PerClass<BTreeMap<String, Exact>>,
    alpha: Exact,
    train_counts: PerClass<usize>,
}

impl Serialize for GroupModel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let ll = self.log_likelihood.map(|row| {
            self.features
                .iter()
                .zip(row)
                .map(|(op, &v)| (op.to_string(), Exact(v)))
                .collect()
        });
        GroupModelWire {
            group: self.group,
            features: self.features.opcodes.clone(),
            log_prior: self.log_prior.map(|&v| Exact(v)),
            log_likelihood: ll,
            alpha: Exact(self.alpha),
            train_counts: self.train_counts,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GroupModel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let w = GroupModelWire::deserialize(d)?;
        let mut log_likelihood = PerClass::<Vec<f64>>::default();
        for class in Class::ALL {
            let table = w.log_likelihood.get(class);
            if table.len() != w.features.len() {
                return Err(D::Error::custom(format!(
                    "group {}: {class} likelihood table does not match the feature list",
                    w.group
                )));
            }
            let row =
                w.features
                    .iter()
                    .map(|op| {
                        table.get(op).map(|e| e.0).ok_or_else(|| {
                            D::Error::custom(format!("group {}: no {class} likelihood for {op:?}", w.group))
                        })
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()?;
            *log_likelihood.get_mut(class) = row;
        }
        let k = w.features.len();
        Ok(GroupModel {
            group: w.group,
            features: FeatureSet { opcodes: w.features, k },
            log_prior: w.log_prior.map(|e| e.0),
            log_likelihood,
            alpha: w.alpha.0,
            train_counts: w.train_counts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;

    fn hist(ops: &[(&str, u64)]) -> OpcodeHistogram {
        ops.iter().copied().collect()
    }

    fn fs(ops: &[&str]) -> FeatureSet {
        FeatureSet {
            opcodes: ops.iter().map(|s| s.to_string()).collect(),
            k: ops.len(),
        }
    }

    fn example_model() -> GroupModel {
        let samples = [
            SampleRecord::new("m", Label::Malware, 0, hist(&[("a", 2)])),
            SampleRecord::new("b", Label::Benign, 0, hist(&[("b", 2)])),
        ];
        train_group(GroupId(0), &samples, &fs(&["a", "b"]), 1.0).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-15
    }

    #[test]
    fn train_example() {
        let m = example_model();
        assert!(close(m.log_likelihood_of(Class::Malware, "a").unwrap(), (0.75f64).ln()));
        assert!(close(m.log_likelihood_of(Class::Malware, "b").unwrap(), (0.25f64).ln()));
        assert!(close(m.log_likelihood_of(Class::Benign, "a").unwrap(), (0.25f64).ln()));
        assert!(close(m.log_likelihood_of(Class::Benign, "b").unwrap(), (0.75f64).ln()));
        assert!(close(m.log_prior.malware, (0.5f64).ln()));
        assert!(close(m.log_prior.benign, (0.5f64).ln()));
        m.validate().unwrap();
    }

    #[test]
    fn symmetric_counts_give_identical_likelihoods() {
        let samples = [
            SampleRecord::new("m", Label::Malware, 0, hist(&[("a", 3), ("b", 1)])),
            SampleRecord::new("b", Label::Benign, 0, hist(&[("a", 3), ("b", 1)])),
        ];
        let m = train_group(GroupId(0), &samples, &fs(&["a", "b"]), 1.0).unwrap();
        assert_eq!(m.log_likelihood.malware, m.log_likelihood.benign);
    }

    #[test]
    fn unseen_class_feature_is_uniform() {
        let samples = [
            SampleRecord::new("m", Label::Malware, 0, hist(&[("a", 3)])),
            SampleRecord::new("b", Label::Benign, 0, hist(&[("zzz", 3)])),
        ];
        let m = train_group(GroupId(0), &samples, &fs(&["a", "b", "c"]), 1.0).unwrap();
        for v in &m.log_likelihood.benign {
            assert!(close(*v, (1.0f64 / 3.0).ln()));
        }
    }

    #[test]
    fn train_errors() {
        let only_m = [SampleRecord::new("m", Label::Malware, 0, hist(&[("a", 3)]))];
        assert!(matches!(
            train_group(GroupId(0), &only_m, &fs(&["a"]), 1.0),
            Err(Error::InsufficientClass(_))
        ));
        assert!(matches!(
            train_group(GroupId(0), &only_m, &fs(&[]), 1.0),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            train_group(GroupId(0), &only_m, &fs(&["a"]), 0.0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn posterior_examples() {
        let m = example_model();
        let s = log_posterior(&m, &hist(&[("a", 1)]));
        assert!(close(s.malware, (0.5f64).ln() + (0.75f64).ln()));
        assert!(close(s.benign, (0.5f64).ln() + (0.25f64).ln()));
        assert_eq!(log_posterior(&m, &OpcodeHistogram::new()), m.log_prior);
        assert_eq!(log_posterior(&m, &hist(&[("zzz", 50)])), m.log_prior);
    }

    #[test]
    fn predict_examples() {
        let m = example_model();
        assert_eq!(predict(&m, &hist(&[("a", 1)])).label, Class::Malware);
        assert_eq!(predict(&m, &hist(&[("b", 5)])).label, Class::Benign);
        // equal priors, empty histogram: exact tie
        let tie = predict(&m, &OpcodeHistogram::new());
        assert_eq!(tie.log_posterior.malware, tie.log_posterior.benign);
        assert_eq!(tie.label, Class::Benign);
        assert_eq!(tie.effective_group, GroupId(0));
    }

    #[test]
    fn normalized_posterior_sums_to_one() {
        let m = example_model();
        let p = normalized_posterior(&log_posterior(&m, &hist(&[("a", 1)])));
        assert!(close(p.malware, 0.75));
        assert!(close(p.benign, 0.25));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = example_model();
        let text = serde_json::to_string(&m).unwrap();
        let back: GroupModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }

    #[test]
    fn validation_catches_broken_likelihoods() {
        let mut m = example_model();
        m.log_likelihood.benign[0] = 0.0;
        assert!(matches!(m.validate(), Err(Error::Validation { group: 0, .. })));
    }
}
