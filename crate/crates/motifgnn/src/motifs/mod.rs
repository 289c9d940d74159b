//! Canonical 3-node motif patterns and the motif registry.
//!
//! A pattern is a connected (induced) subgraph shape over positions
//! `{0, 1, 2}`. Patterns and observed triples are both reduced to a
//! canonical adjacency code — the lexicographically minimal bit
//! encoding over all position permutations — so isomorphism checks are
//! a single byte comparison.

mod enumerate;
mod sample;

pub use enumerate::{brute_force_census, enumerate_instances, BruteForceCensus, InstanceIndex};
pub use sample::{sample_negative, sample_positive, NegativeSample};

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Index of a motif within its registry.
pub type MotifId = usize;

/// Bit order for directed position pairs: (0,1) (0,2) (1,0) (1,2) (2,0) (2,1).
const DIRECTED_PAIRS: [(u8, u8); 6] = [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)];
/// Bit order for undirected position pairs: {0,1} {0,2} {1,2}.
const UNDIRECTED_PAIRS: [(u8, u8); 3] = [(0, 1), (0, 2), (1, 2)];

const PERMUTATIONS: [[u8; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Raw adjacency code of a directed edge set over positions.
fn encode_directed(edges: &[(u8, u8)]) -> u8 {
    let mut code = 0u8;
    for &(u, v) in edges {
        let bit = DIRECTED_PAIRS.iter().position(|&p| p == (u, v)).unwrap();
        code |= 1 << bit;
    }
    code
}

fn encode_undirected(edges: &[(u8, u8)]) -> u8 {
    let mut code = 0u8;
    for &(u, v) in edges {
        let key = (u.min(v), u.max(v));
        let bit = UNDIRECTED_PAIRS.iter().position(|&p| p == key).unwrap();
        code |= 1 << bit;
    }
    code
}

/// Apply a position permutation to a raw code.
fn permute_code(code: u8, perm: &[u8; 3], directed: bool) -> u8 {
    let pairs: &[(u8, u8)] = if directed {
        &DIRECTED_PAIRS
    } else {
        &UNDIRECTED_PAIRS
    };
    let mut out = 0u8;
    for (bit, &(u, v)) in pairs.iter().enumerate() {
        if code & (1 << bit) != 0 {
            let (nu, nv) = (perm[u as usize], perm[v as usize]);
            let target = if directed {
                DIRECTED_PAIRS
                    .iter()
                    .position(|&p| p == (nu, nv))
                    .unwrap()
            } else {
                let key = (nu.min(nv), nu.max(nv));
                UNDIRECTED_PAIRS.iter().position(|&p| p == key).unwrap()
            };
            out |= 1 << target;
        }
    }
    out
}

/// Lexicographically minimal code over all position permutations.
pub fn canonical_code(code: u8, directed: bool) -> u8 {
    PERMUTATIONS
        .iter()
        .map(|p| permute_code(code, p, directed))
        .min()
        .unwrap()
}

/// Is the 3-position shape (weakly) connected?
fn is_connected(code: u8, directed: bool) -> bool {
    let pairs: &[(u8, u8)] = if directed {
        &DIRECTED_PAIRS
    } else {
        &UNDIRECTED_PAIRS
    };
    let mut adj = [[false; 3]; 3];
    for (bit, &(u, v)) in pairs.iter().enumerate() {
        if code & (1 << bit) != 0 {
            adj[u as usize][v as usize] = true;
            adj[v as usize][u as usize] = true;
        }
    }
    let mut seen = [true, false, false];
    for _ in 0..2 {
        for u in 0..3 {
            for v in 0..3 {
                if seen[u] && adj[u][v] {
                    seen[v] = true;
                }
            }
        }
    }
    seen.iter().all(|&s| s)
}

/// A single 3-node motif pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotifPattern {
    pub id: String,
    pub directed: bool,
    /// Position pairs; ordered pairs when directed.
    pub edges: Vec<(u8, u8)>,
    #[serde(skip)]
    canonical: u8,
}

impl MotifPattern {
    pub fn new(id: impl Into<String>, directed: bool, edges: Vec<(u8, u8)>) -> Result<Self> {
        for &(u, v) in &edges {
            if u > 2 || v > 2 || u == v {
                return Err(Error::Contract(format!(
                    "pattern edge ({u}, {v}) is not a pair of distinct positions in 0..3"
                )));
            }
        }
        let raw = if directed {
            encode_directed(&edges)
        } else {
            encode_undirected(&edges)
        };
        if !is_connected(raw, directed) {
            return Err(Error::Contract(format!(
                "motif pattern {:?} is not connected",
                edges
            )));
        }
        Ok(MotifPattern {
            id: id.into(),
            directed,
            edges,
            canonical: canonical_code(raw, directed),
        })
    }

    pub fn canonical(&self) -> u8 {
        self.canonical
    }
}

/// Ordered set of pairwise non-isomorphic motif patterns sharing one
/// directedness.
#[derive(Debug, Clone)]
pub struct MotifRegistry {
    motifs: Vec<MotifPattern>,
    directed: bool,
    by_code: HashMap<u8, MotifId>,
}

impl MotifRegistry {
    pub fn new(mut motifs: Vec<MotifPattern>) -> Result<Self> {
        if motifs.is_empty() {
            return Err(Error::Contract("registry needs at least one motif".into()));
        }
        let directed = motifs[0].directed;
        if motifs.iter().any(|m| m.directed != directed) {
            return Err(Error::Contract(
                "registry mixes directed and undirected motifs".into(),
            ));
        }
        motifs.sort_by_key(|m| m.canonical);
        let mut by_code = HashMap::new();
        for (i, m) in motifs.iter().enumerate() {
            if by_code.insert(m.canonical, i).is_some() {
                return Err(Error::Contract(format!(
                    "motifs {:?} duplicate an isomorphism class",
                    m.id
                )));
            }
        }
        Ok(MotifRegistry {
            motifs,
            directed,
            by_code,
        })
    }

    pub fn len(&self) -> usize {
        self.motifs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.motifs.is_empty()
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    pub fn motifs(&self) -> &[MotifPattern] {
        &self.motifs
    }

    pub fn motif(&self, t: MotifId) -> &MotifPattern {
        &self.motifs[t]
    }

    /// Motif matching a canonical code, if any.
    pub fn lookup(&self, canonical: u8) -> Option<MotifId> {
        self.by_code.get(&canonical).copied()
    }

    /// Load from a JSON array of `{"id", "directed", "edges"}` objects.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        #[derive(Deserialize)]
        struct Entry {
            id: String,
            directed: bool,
            edges: Vec<(u8, u8)>,
        }
        let entries: Vec<Entry> = serde_json::from_str(&text)?;
        let motifs = entries
            .into_iter()
            .map(|e| MotifPattern::new(e.id, e.directed, e.edges))
            .collect::<Result<Vec<_>>>()?;
        MotifRegistry::new(motifs)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(&self.motifs)?)
            .map_err(|e| Error::io(path, e))
    }
}

/// The built-in pattern sets.
///
/// Directed: the five connected 3-node shapes without reciprocal
/// edges — chain, convergent, divergent, feed-forward loop, 3-cycle.
/// Undirected: wedge and triangle. Ids follow registry order
/// (ascending canonical code): M1..M5 directed, M6..M7 undirected.
pub fn default_registry(directed: bool) -> MotifRegistry {
    let shapes: Vec<(&str, Vec<(u8, u8)>)> = if directed {
        vec![
            ("chain", vec![(0, 1), (1, 2)]),
            ("convergent", vec![(0, 1), (2, 1)]),
            ("divergent", vec![(1, 0), (1, 2)]),
            ("feed_forward", vec![(0, 1), (1, 2), (0, 2)]),
            ("cycle", vec![(0, 1), (1, 2), (2, 0)]),
        ]
    } else {
        vec![
            ("wedge", vec![(0, 1), (1, 2)]),
            ("triangle", vec![(0, 1), (1, 2), (0, 2)]),
        ]
    };
    let mut patterns: Vec<MotifPattern> = shapes
        .into_iter()
        .map(|(_, edges)| MotifPattern::new("", directed, edges))
        .collect::<Result<Vec<_>>>()
        .expect("built-in patterns are valid");
    patterns.sort_by_key(|p| p.canonical());
    let base = if directed { 1 } else { 6 };
    for (i, p) in patterns.iter_mut().enumerate() {
        p.id = format!("M{}", base + i);
    }
    MotifRegistry::new(patterns).expect("built-in patterns are pairwise non-isomorphic")
}
