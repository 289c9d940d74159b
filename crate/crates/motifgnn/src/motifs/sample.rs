//! Positive instance sampling and attribute-corrupting negatives.

use rand::Rng;

use super::{InstanceIndex, MotifId, MotifInstance};
use crate::graph::AttributedGraph;
use crate::{Error, Result};

/// Attempts before a negative draw gives up rejecting true instances.
const MAX_REJECTIONS: usize = 10;

/// Uniform sample of `min(q, |I_v|)` distinct instances of motif `t`
/// containing `v`, without replacement. Empty when `v` participates in
/// no instance.
pub fn sample_positive<R: Rng>(
    index: &InstanceIndex,
    motif: MotifId,
    v: usize,
    q: usize,
    rng: &mut R,
) -> Vec<MotifInstance> {
    debug_assert!(q >= 1, "sample_positive requires q >= 1");
    let pool = index.instances_of(motif, v);
    if pool.is_empty() {
        return Vec::new();
    }
    if pool.len() <= q {
        return pool.to_vec();
    }
    // partial Fisher–Yates over indices
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    for i in 0..q {
        let j = rng.random_range(i..idx.len());
        idx.swap(i, j);
    }
    idx[..q].iter().map(|&i| pool[i]).collect()
}

/// A corrupted node triple paired against a positive instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegativeSample {
    /// Sorted triple containing the anchor.
    pub nodes: [u32; 3],
    /// True when rejection sampling exhausted its attempts and the
    /// returned triple is a recorded instance after all.
    pub fallback: bool,
}

/// Draw a topologically equivalent fake instance for anchor `v`:
/// `{v, r1, r2}` with distinct non-anchor nodes drawn uniformly from
/// the rest of the graph. Triples that happen to be recorded instances
/// of the same motif are rejected and resampled up to ten times; if
/// every attempt collides the last draw is returned flagged as a
/// fallback.
pub fn sample_negative<R: Rng>(
    g: &AttributedGraph,
    index: &InstanceIndex,
    motif: MotifId,
    v: usize,
    positive: &MotifInstance,
    rng: &mut R,
) -> Result<NegativeSample> {
    let n = g.num_nodes();
    if n < 3 {
        return Err(Error::Sampling(format!(
            "cannot corrupt instances in a graph with {n} nodes"
        )));
    }
    if !positive.nodes.contains(&(v as u32)) {
        return Err(Error::Contract(format!(
            "anchor {v} is not part of the positive instance {:?}",
            positive.nodes
        )));
    }
    let v = v as u32;
    let mut last = [0u32; 3];
    for _ in 0..MAX_REJECTIONS {
        // r1 uniform over V \ {v}, r2 uniform over V \ {v, r1}
        let mut r1 = rng.random_range(0..n as u32 - 1);
        if r1 >= v {
            r1 += 1;
        }
        let (lo, hi) = (v.min(r1), v.max(r1));
        let mut r2 = rng.random_range(0..n as u32 - 2);
        if r2 >= lo {
            r2 += 1;
        }
        if r2 >= hi {
            r2 += 1;
        }
        let mut triple = [v, r1, r2];
        triple.sort_unstable();
        if !index.contains(motif, &triple) {
            return Ok(NegativeSample {
                nodes: triple,
                fallback: false,
            });
        }
        last = triple;
    }
    Ok(NegativeSample {
        nodes: last,
        fallback: true,
    })
}
