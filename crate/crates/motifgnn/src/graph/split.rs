//! Stratified train/validation/test splits over the labeled node set.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AttributedGraph;
use crate::{Error, Result};

/// Validation share of the labeled set; the paper specifies only the
/// training ratio, the remainder after validation is the test set.
pub const VAL_RATIO: f64 = 0.2;

/// A disjoint partition of the labeled node set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<u32>,
    pub val: Vec<u32>,
    pub test: Vec<u32>,
    pub seed: u64,
    pub train_ratio: f64,
}

impl Split {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?)
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Split> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Largest-remainder allocation: integer per-class counts that sum to
/// `total` and deviate from `share · class_size` by less than one.
fn allocate(class_sizes: &[usize], caps: &[usize], total: usize, share: f64) -> Vec<usize> {
    let mut alloc: Vec<usize> = Vec::with_capacity(class_sizes.len());
    let mut fracs: Vec<(usize, f64)> = Vec::with_capacity(class_sizes.len());
    let mut assigned = 0usize;
    for (i, &sz) in class_sizes.iter().enumerate() {
        let quota = share * sz as f64;
        let base = (quota.floor() as usize).min(caps[i]);
        alloc.push(base);
        assigned += base;
        fracs.push((i, quota - base as f64));
    }
    // hand out the remainder by descending fractional part, class id as
    // the deterministic tiebreak
    fracs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut remaining = total.saturating_sub(assigned);
    let mut cursor = 0usize;
    while remaining > 0 {
        let (i, _) = fracs[cursor % fracs.len()];
        if alloc[i] < caps[i] {
            alloc[i] += 1;
            remaining -= 1;
        }
        cursor += 1;
        if cursor > fracs.len() * (total + 1) {
            break; // caps exhausted
        }
    }
    alloc
}

/// Stratified split of the labeled nodes: `round(train_ratio · L)`
/// training nodes, `round(0.2 · L)` validation nodes, rest test.
/// Deterministic for a given seed.
pub fn generate_split(g: &AttributedGraph, train_ratio: f64, seed: u64) -> Result<Split> {
    if !(train_ratio > 0.0 && train_ratio < 0.8) {
        return Err(Error::Contract(format!(
            "train_ratio must lie in (0, 0.8), got {train_ratio}"
        )));
    }
    let mut by_class: BTreeMap<u16, Vec<u32>> = BTreeMap::new();
    for v in g.labeled_nodes() {
        by_class
            .entry(g.label(v as usize).unwrap())
            .or_default()
            .push(v);
    }
    if by_class.is_empty() {
        return Err(Error::Stratification("graph has no labeled nodes".into()));
    }
    for (c, nodes) in &by_class {
        if nodes.len() < 3 {
            return Err(Error::Stratification(format!(
                "class {c} has only {} labeled nodes (need at least 3)",
                nodes.len()
            )));
        }
    }

    let labeled_total: usize = by_class.values().map(Vec::len).sum();
    let train_total = (train_ratio * labeled_total as f64).round() as usize;
    let val_total = (VAL_RATIO * labeled_total as f64).round() as usize;

    let classes: Vec<u16> = by_class.keys().copied().collect();
    let sizes: Vec<usize> = by_class.values().map(Vec::len).collect();
    let train_alloc = allocate(&sizes, &sizes, train_total, train_ratio);
    let caps_after: Vec<usize> = sizes
        .iter()
        .zip(&train_alloc)
        .map(|(s, t)| s - t)
        .collect();
    let val_alloc = allocate(&sizes, &caps_after, val_total, VAL_RATIO);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (i, c) in classes.iter().enumerate() {
        let mut nodes = by_class[c].clone();
        nodes.shuffle(&mut rng);
        let (t, rest) = nodes.split_at(train_alloc[i]);
        let (v, rest) = rest.split_at(val_alloc[i]);
        train.extend_from_slice(t);
        val.extend_from_slice(v);
        test.extend_from_slice(rest);
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Split {
        train,
        val,
        test,
        seed,
        train_ratio,
    })
}
