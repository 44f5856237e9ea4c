//! Contrastive training-pair construction.
//!
//! Two samples drawn uniformly with replacement form a pair when they share the
//! user but not the behavior (similar, `y_s = 0`, identity label kept) or share
//! the behavior but not the user (dissimilar, `y_s = 1`, identity label `-1`).
//! Every other draw is discarded.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::SignalDataset;
use crate::error::{Error, Result};

/// Default number of accepted pairs.
pub const DEFAULT_PAIRS: usize = 1000;

/// Identity label of dissimilar pairs.
pub const NO_IDENTITY: i64 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairRecord {
    pub idx_a: usize,
    pub idx_b: usize,
    /// 0 = same user, different behavior; 1 = different user, same behavior.
    pub y_s: u8,
    pub id_label: i64,
}

impl PairRecord {
    pub fn is_similar(&self) -> bool {
        self.y_s == 0
    }

    /// Identity class for the identity loss, `None` when masked.
    pub fn identity(&self) -> Option<usize> {
        (self.id_label >= 0).then_some(self.id_label as usize)
    }

    /// Checks the labelling rules against the source labels.
    pub fn validate(&self, ds: &SignalDataset) -> Result<()> {
        let n = ds.len();
        if self.idx_a >= n || self.idx_b >= n {
            return Err(Error::Integrity(format!(
                "pair ({}, {}) indexes past dataset of {n} samples",
                self.idx_a, self.idx_b
            )));
        }
        let ids = ds.identity_labels();
        let beh = ds.behavior_labels();
        let same_id = ids[self.idx_a] == ids[self.idx_b];
        let same_beh = beh[self.idx_a] == beh[self.idx_b];
        let ok = match self.y_s {
            0 => same_id && !same_beh && self.id_label == ids[self.idx_a] as i64,
            1 => !same_id && same_beh && self.id_label == NO_IDENTITY,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Integrity(format!(
                "pair ({}, {}) with y_s={} id_label={} violates the labelling rules \
                 (identities {}/{}, behaviors {}/{})",
                self.idx_a,
                self.idx_b,
                self.y_s,
                self.id_label,
                ids[self.idx_a],
                ids[self.idx_b],
                beh[self.idx_a],
                beh[self.idx_b]
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Balance {
    /// Plain rejection sampling; class proportions follow the data.
    #[default]
    None,
    /// Half of the pairs similar, half dissimilar.
    Equal,
}

impl FromStr for Balance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Balance::None),
            "equal" => Ok(Balance::Equal),
            other => Err(Error::Config(format!(
                "unknown balance mode '{other}' (expected none or equal)"
            ))),
        }
    }
}

impl fmt::Display for Balance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Balance::None => "none",
            Balance::Equal => "equal",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pub records: Vec<PairRecord>,
    pub dataset_id: String,
    pub seed: u64,
    pub target: usize,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// First `n` records, keeping the provenance.
    pub fn prefix(&self, n: usize) -> Self {
        Self {
            records: self.records[..n.min(self.records.len())].to_vec(),
            dataset_id: self.dataset_id.clone(),
            seed: self.seed,
            target: n.min(self.records.len()),
        }
    }
}

/// Which of the two acceptance rules the dataset can satisfy at all.
fn satisfiable(ds: &SignalDataset) -> (bool, bool) {
    let ids = ds.identity_labels();
    let beh = ds.behavior_labels();
    let mut behaviors_per_user: BTreeMap<usize, HashSet<usize>> = BTreeMap::new();
    let mut users_per_behavior: BTreeMap<usize, HashSet<usize>> = BTreeMap::new();
    for (&u, &b) in ids.iter().zip(beh) {
        behaviors_per_user.entry(u).or_default().insert(b);
        users_per_behavior.entry(b).or_default().insert(u);
    }
    (
        behaviors_per_user.values().any(|s| s.len() >= 2),
        users_per_behavior.values().any(|s| s.len() >= 2),
    )
}

pub fn build_pairs(
    ds: &SignalDataset,
    target: usize,
    seed: u64,
    balance: Balance,
    dataset_id: &str,
) -> Result<PairSet> {
    let n = ds.len();
    let users = ds.distinct(crate::dataset::Task::Identity).len();
    let behaviors = ds.distinct(crate::dataset::Task::Behavior).len();
    let (rule0, rule1) = satisfiable(ds);
    if target > 0 {
        if users < 2 || behaviors < 2 {
            return Err(Error::Unsatisfiable(format!(
                "pair construction needs >= 2 users and >= 2 behaviors, dataset has {users} \
                 user(s) and {behaviors} behavior(s){}{}",
                if rule0 { "" } else { "; no user has two behaviors (rule 0 unsatisfiable)" },
                if rule1 { "" } else { "; no behavior has two users (rule 1 unsatisfiable)" },
            )));
        }
        if balance == Balance::Equal && !(rule0 && rule1) {
            let which = if rule0 { "rule 1 (different user, same behavior)" } else { "rule 0 (same user, different behavior)" };
            return Err(Error::Unsatisfiable(format!(
                "balanced pairing needs both rules, but {which} matches no pair of samples"
            )));
        }
        if !rule0 && !rule1 {
            return Err(Error::Unsatisfiable(
                "neither labelling rule matches any pair of samples".into(),
            ));
        }
    }

    let (quota_similar, quota_dissimilar) = match balance {
        Balance::None => (target, target),
        Balance::Equal => (target - target / 2, target / 2),
    };
    let cap = 10u64
        .saturating_mul(target as u64)
        .saturating_mul(n as u64)
        .max(1);
    let ids = ds.identity_labels();
    let beh = ds.behavior_labels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(target);
    let (mut similar, mut dissimilar) = (0usize, 0usize);
    let mut rejections = 0u64;
    while records.len() < target {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let same_id = ids[a] == ids[b];
        let same_beh = beh[a] == beh[b];
        let accepted = if same_id && !same_beh && similar < quota_similar {
            similar += 1;
            Some(PairRecord {
                idx_a: a,
                idx_b: b,
                y_s: 0,
                id_label: ids[a] as i64,
            })
        } else if !same_id && same_beh && dissimilar < quota_dissimilar {
            dissimilar += 1;
            Some(PairRecord {
                idx_a: a,
                idx_b: b,
                y_s: 1,
                id_label: NO_IDENTITY,
            })
        } else {
            None
        };
        match accepted {
            Some(r) => {
                records.push(r);
                rejections = 0;
            }
            None => {
                rejections += 1;
                if rejections >= cap {
                    return Err(Error::Unsatisfiable(format!(
                        "{rejections} consecutive rejections after {} accepted pairs \
                         ({similar} similar, {dissimilar} dissimilar)",
                        records.len()
                    )));
                }
            }
        }
    }
    Ok(PairSet {
        records,
        dataset_id: dataset_id.to_string(),
        seed,
        target,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub total: usize,
    pub similar: usize,
    pub dissimilar: usize,
    /// Record count per identity label (`-1` for dissimilar pairs).
    pub per_identity: BTreeMap<i64, usize>,
    /// Fraction of records whose unordered index pair already occurred earlier.
    pub duplicate_rate: f64,
}

pub fn pair_stats(pairs: &PairSet, ds: &SignalDataset) -> Result<PairStats> {
    let mut per_identity = BTreeMap::new();
    let mut seen = HashSet::new();
    let mut duplicates = 0usize;
    let (mut similar, mut dissimilar) = (0, 0);
    for r in &pairs.records {
        r.validate(ds)?;
        if r.is_similar() {
            similar += 1;
        } else {
            dissimilar += 1;
        }
        *per_identity.entry(r.id_label).or_insert(0) += 1;
        if !seen.insert((r.idx_a.min(r.idx_b), r.idx_a.max(r.idx_b))) {
            duplicates += 1;
        }
    }
    let total = pairs.records.len();
    Ok(PairStats {
        total,
        similar,
        dissimilar,
        per_identity,
        duplicate_rate: if total == 0 {
            0.0
        } else {
            duplicates as f64 / total as f64
        },
    })
}
