//! Seen/unseen class splits for zero-shot experiments.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::catalog::ClassCatalog;
use crate::rng::{derive_seed, Rng};

use super::EvalError;

/// A zero-shot experiment plan: disjoint seen/unseen target classes plus
/// the scene partition the caller trains and tests on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seen: Vec<String>,
    pub unseen: Vec<String>,
    #[serde(default)]
    pub train_scenes: Vec<String>,
    #[serde(default)]
    pub test_scenes: Vec<String>,
}

impl SplitSpec {
    pub fn unseen_set(&self) -> BTreeSet<String> {
        self.unseen.iter().cloned().collect()
    }
}

/// Deterministically split the child classes into `seen_count`/`unseen_count`
/// so that every unseen class shares a prototype with at least one seen
/// class (the transfer mechanism zero-shot relies on).
pub fn zero_shot_split(
    catalog: &ClassCatalog,
    seen_count: usize,
    unseen_count: usize,
    seed: u64,
) -> Result<SplitSpec, EvalError> {
    let children: Vec<String> = catalog.child_names();
    if seen_count + unseen_count != children.len() || seen_count == 0 {
        return Err(EvalError::InfeasibleSplit(format!(
            "{seen_count}/{unseen_count} split does not cover the {} child classes",
            children.len()
        )));
    }

    // Group children by prototype; each group may surrender all but one
    // member to the unseen side.
    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for name in &children {
        let proto = catalog.require(name).expect("registered").prototype.clone();
        groups.entry(proto).or_default().push(name.clone());
    }
    let spare: usize = groups.values().map(|g| g.len() - 1).sum();
    if unseen_count > spare {
        return Err(EvalError::InfeasibleSplit(format!(
            "{unseen_count} unseen classes requested but only {spare} can keep a seen prototype sibling"
        )));
    }

    let mut rng = Rng::new(derive_seed(seed, 0x5011));
    let mut group_list: Vec<(String, Vec<String>)> = groups.into_iter().collect();
    rng.shuffle(&mut group_list);
    for (_, members) in group_list.iter_mut() {
        rng.shuffle(members);
    }

    // Round-robin: take one member from each group that still has two or
    // more seen members left.
    let mut unseen = Vec::new();
    while unseen.len() < unseen_count {
        let mut progressed = false;
        for (_, members) in group_list.iter_mut() {
            if unseen.len() >= unseen_count {
                break;
            }
            if members.len() >= 2 {
                unseen.push(members.pop().expect("nonempty"));
                progressed = true;
            }
        }
        if !progressed {
            return Err(EvalError::InfeasibleSplit(
                "prototype groups exhausted".into(),
            ));
        }
    }
    let mut seen: Vec<String> = group_list
        .into_iter()
        .flat_map(|(_, members)| members)
        .collect();
    seen.sort();
    unseen.sort();
    Ok(SplitSpec {
        seen,
        unseen,
        train_scenes: vec![],
        test_scenes: vec![],
    })
}
