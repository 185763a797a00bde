//! Train, validation and test assignment.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

pub const TRAIN_SHARE: f64 = 0.8;
pub const VAL_SHARE: f64 = 0.1;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment(pub BTreeMap<String, Split>);

impl SplitAssignment {
    pub fn get(&self, id: &str) -> Option<Split> {
        self.0.get(id).copied()
    }

    pub fn count(&self, split: Split) -> usize {
        self.0.values().filter(|&&s| s == split).count()
    }
}

fn rank_key(id: &str, seed: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    h.finalize().into()
}

/// Orders ids by a seeded hash and cuts the order at 80 % and 90 %, so the
/// result depends on the id set and the seed but not on input order.
pub fn assign_splits(ids: &[String], seed: u64) -> SplitAssignment {
    let mut ranked: Vec<(&String, [u8; 32])> = ids.iter().map(|id| (id, rank_key(id, seed))).collect();
    ranked.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    ranked.dedup_by(|a, b| a.0 == b.0);
    let n = ranked.len();
    let train = (TRAIN_SHARE * n as f64).round() as usize;
    let val = (VAL_SHARE * n as f64).round() as usize;
    SplitAssignment(
        ranked
            .into_iter()
            .enumerate()
            .map(|(i, (id, _))| {
                let s = if i < train {
                    Split::Train
                } else if i < train + val {
                    Split::Val
                } else {
                    Split::Test
                };
                (id.clone(), s)
            })
            .collect(),
    )
}
