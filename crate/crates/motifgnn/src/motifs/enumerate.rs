//! Exact enumeration of 3-node motif instances.
//!
//! The fast path walks each node's undirected neighborhood and extends
//! edges to triples (O(Σ deg²)); every connected induced 3-node
//! subgraph is discovered exactly once, classified by canonical code,
//! and recorded for each of its nodes. A cubic brute-force census over
//! all triples serves as the independent oracle for small graphs.

use std::collections::HashSet;

use rayon::prelude::*;

use super::{canonical_code, MotifId, MotifRegistry};
use crate::graph::AttributedGraph;
use crate::{Error, Result};

/// One occurrence of a motif: the sorted node triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MotifInstance {
    pub nodes: [u32; 3],
    pub motif: MotifId,
}

/// All enumerated instances, indexed per motif and per node.
#[derive(Debug, Clone)]
pub struct InstanceIndex {
    /// `per_node[t][v]` = instances of motif `t` containing node `v`.
    per_node: Vec<Vec<Vec<MotifInstance>>>,
    /// membership[t] = sorted-triple set for rejection tests
    membership: Vec<HashSet<[u32; 3]>>,
    totals: Vec<usize>,
}

impl InstanceIndex {
    pub fn num_motifs(&self) -> usize {
        self.totals.len()
    }

    pub fn instances_of(&self, t: MotifId, v: usize) -> &[MotifInstance] {
        &self.per_node[t][v]
    }

    pub fn node_count(&self, t: MotifId, v: usize) -> usize {
        self.per_node[t][v].len()
    }

    /// Total unique instances of motif `t` in the graph.
    pub fn total(&self, t: MotifId) -> usize {
        self.totals[t]
    }

    pub fn contains(&self, t: MotifId, sorted_triple: &[u32; 3]) -> bool {
        self.membership[t].contains(sorted_triple)
    }

    /// Sorted triples of motif `t`.
    pub fn triples(&self, t: MotifId) -> Vec<[u32; 3]> {
        let mut v: Vec<[u32; 3]> = self.membership[t].iter().copied().collect();
        v.sort_unstable();
        v
    }
}

/// Canonical code of the induced subgraph on a node triple.
fn classify_triple(g: &AttributedGraph, a: u32, b: u32, c: u32) -> u8 {
    let nodes = [a, b, c];
    let mut raw = 0u8;
    if g.directed() {
        // bit order mirrors DIRECTED_PAIRS in the parent module
        let pairs = [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)];
        for (bit, &(u, v)) in pairs.iter().enumerate() {
            if g.has_arc(nodes[u] as usize, nodes[v]) {
                raw |= 1 << bit;
            }
        }
    } else {
        let pairs = [(0, 1), (0, 2), (1, 2)];
        for (bit, &(u, v)) in pairs.iter().enumerate() {
            if g.has_arc(nodes[u] as usize, nodes[v]) {
                raw |= 1 << bit;
            }
        }
    }
    canonical_code(raw, g.directed())
}

/// Connected 3-node skeletons incident to center `c`, as sorted triples.
/// Wedges are emitted at their unique center; triangles where `c` is the
/// smallest node.
fn skeletons_at(g: &AttributedGraph, c: u32) -> Vec<[u32; 3]> {
    let nb = g.neighbors(c as usize);
    let mut out = Vec::new();
    for i in 0..nb.len() {
        for j in (i + 1)..nb.len() {
            let (a, b) = (nb[i], nb[j]);
            if g.has_und_edge(a as usize, b) {
                if c < a {
                    let mut t = [c, a, b];
                    t.sort_unstable();
                    out.push(t);
                }
            } else {
                let mut t = [a, c, b];
                t.sort_unstable();
                out.push(t);
            }
        }
    }
    out
}

/// Enumerate every induced, connected 3-node subgraph isomorphic to a
/// registry pattern. Deterministic and independent of worker count:
/// per-center shards are merged in node order.
pub fn enumerate_instances(g: &AttributedGraph, reg: &MotifRegistry) -> Result<InstanceIndex> {
    if reg.directed() != g.directed() {
        return Err(Error::Contract(format!(
            "registry targets {} graphs but the graph is {}",
            if reg.directed() { "directed" } else { "undirected" },
            if g.directed() { "directed" } else { "undirected" },
        )));
    }
    let n = g.num_nodes();
    let t_count = reg.len();

    let shards: Vec<Vec<(MotifId, [u32; 3])>> = (0..n as u32)
        .into_par_iter()
        .map(|c| {
            skeletons_at(g, c)
                .into_iter()
                .filter_map(|t| {
                    reg.lookup(classify_triple(g, t[0], t[1], t[2]))
                        .map(|m| (m, t))
                })
                .collect()
        })
        .collect();

    let mut per_node = vec![vec![Vec::new(); n]; t_count];
    let mut membership = vec![HashSet::new(); t_count];
    let mut totals = vec![0usize; t_count];
    for shard in shards {
        for (m, nodes) in shard {
            let inst = MotifInstance { nodes, motif: m };
            for &v in &nodes {
                per_node[m][v as usize].push(inst);
            }
            membership[m].insert(nodes);
            totals[m] += 1;
        }
    }
    Ok(InstanceIndex {
        per_node,
        membership,
        totals,
    })
}

/// Brute-force census over all node triples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BruteForceCensus {
    pub counts: Vec<usize>,
    /// per motif: sorted unique triples
    pub instances: Vec<Vec<[u32; 3]>>,
}

/// O(n³) oracle: classify the induced subgraph of every triple.
/// Refuses graphs with more than 200 nodes.
pub fn brute_force_census(g: &AttributedGraph, reg: &MotifRegistry) -> Result<BruteForceCensus> {
    let n = g.num_nodes();
    if n > 200 {
        return Err(Error::Contract(format!(
            "brute-force census refused for {n} > 200 nodes"
        )));
    }
    let mut counts = vec![0usize; reg.len()];
    let mut instances = vec![Vec::new(); reg.len()];
    for a in 0..n as u32 {
        for b in (a + 1)..n as u32 {
            for c in (b + 1)..n as u32 {
                if let Some(m) = reg.lookup(classify_triple(g, a, b, c)) {
                    counts[m] += 1;
                    instances[m].push([a, b, c]);
                }
            }
        }
    }
    Ok(BruteForceCensus { counts, instances })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Features;
    use crate::motifs::default_registry;
    use crate::synth::erdos_renyi;
    use crate::tensor::CsrMatrix;

    fn plain(n: usize, directed: bool, edges: Vec<(u32, u32)>) -> AttributedGraph {
        AttributedGraph::new(
            n,
            directed,
            edges,
            Features::Sparse(CsrMatrix::identity(n)),
            vec![None; n],
            1,
        )
        .unwrap()
    }

    fn assert_matches_brute_force(g: &AttributedGraph, reg: &MotifRegistry) {
        let idx = enumerate_instances(g, reg).unwrap();
        let oracle = brute_force_census(g, reg).unwrap();
        for t in 0..reg.len() {
            assert_eq!(idx.total(t), oracle.counts[t], "motif {}", reg.motif(t).id);
            assert_eq!(idx.triples(t), oracle.instances[t], "motif {}", reg.motif(t).id);
        }
    }

    #[test]
    fn triangle_graph_has_one_triangle_instance() {
        let g = plain(3, false, vec![(0, 1), (0, 2), (1, 2)]);
        let reg = default_registry(false);
        let idx = enumerate_instances(&g, &reg).unwrap();
        let tri = reg
            .motifs()
            .iter()
            .position(|m| m.edges.len() == 3)
            .unwrap();
        assert_eq!(idx.total(tri), 1);
        for v in 0..3 {
            assert_eq!(idx.node_count(tri, v), 1);
        }
        let wedge = 1 - tri;
        assert_eq!(idx.total(wedge), 0);
    }

    #[test]
    fn four_cycle_counts_match_oracle() {
        // C4 has four induced wedges and no triangle
        let g = plain(4, false, vec![(0, 1), (1, 2), (2, 3), (0, 3)]);
        let reg = default_registry(false);
        let oracle = brute_force_census(&g, &reg).unwrap();
        let wedge = reg
            .motifs()
            .iter()
            .position(|m| m.edges.len() == 2)
            .unwrap();
        assert_eq!(oracle.counts[wedge], 4);
        assert_eq!(oracle.counts[1 - wedge], 0);
        assert_matches_brute_force(&g, &reg);
    }

    #[test]
    fn complete_four_clique_census() {
        // every triple of K4 induces a triangle
        let g = plain(4, false, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        let reg = default_registry(false);
        let oracle = brute_force_census(&g, &reg).unwrap();
        let tri = reg
            .motifs()
            .iter()
            .position(|m| m.edges.len() == 3)
            .unwrap();
        assert_eq!(oracle.counts[tri], 4);
        assert_eq!(oracle.counts[1 - tri], 0);
        assert_matches_brute_force(&g, &reg);
    }

    #[test]
    fn directed_chain_is_the_only_instance() {
        let g = plain(3, true, vec![(0, 1), (1, 2)]);
        let reg = default_registry(true);
        let idx = enumerate_instances(&g, &reg).unwrap();
        let chain = reg
            .motifs()
            .iter()
            .position(|m| {
                m.canonical()
                    == crate::motifs::MotifPattern::new("x", true, vec![(0, 1), (1, 2)])
                        .unwrap()
                        .canonical()
            })
            .unwrap();
        assert_eq!(idx.total(chain), 1);
        assert_eq!(idx.triples(chain), vec![[0, 1, 2]]);
        for t in 0..reg.len() {
            if t != chain {
                assert_eq!(idx.total(t), 0, "unexpected instances of motif {t}");
            }
        }
        assert_matches_brute_force(&g, &reg);
    }

    #[test]
    fn reciprocal_pair_triples_match_no_default_pattern() {
        // 0<->1 plus 1->2: the induced triple carries a reciprocal edge
        let g = plain(3, true, vec![(0, 1), (1, 0), (1, 2)]);
        let reg = default_registry(true);
        assert_matches_brute_force(&g, &reg);
    }

    #[test]
    fn empty_graph_counts_are_zero() {
        let g = plain(5, false, vec![]);
        let reg = default_registry(false);
        let oracle = brute_force_census(&g, &reg).unwrap();
        assert!(oracle.counts.iter().all(|&c| c == 0));
        assert_matches_brute_force(&g, &reg);
    }

    #[test]
    fn brute_force_refuses_large_graphs() {
        let g = plain(201, false, vec![(0, 1)]);
        assert!(brute_force_census(&g, &default_registry(false)).is_err());
    }

    #[test]
    fn node_membership_sums_to_three_per_instance() {
        let g = erdos_renyi(40, 0.15, false, 11);
        let reg = default_registry(false);
        let idx = enumerate_instances(&g, &reg).unwrap();
        for t in 0..reg.len() {
            let sum: usize = (0..g.num_nodes()).map(|v| idx.node_count(t, v)).sum();
            assert_eq!(sum, 3 * idx.total(t));
        }
    }

    #[test]
    fn matches_brute_force_on_random_graphs() {
        for seed in 0..10u64 {
            for &p in &[0.05, 0.1, 0.3] {
                for directed in [false, true] {
                    let g = erdos_renyi(35, p, directed, seed);
                    assert_matches_brute_force(&g, &default_registry(directed));
                }
            }
        }
    }

    #[test]
    fn relabeling_permutes_instances() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let g = erdos_renyi(30, 0.2, true, 3);
        let reg = default_registry(true);
        let idx = enumerate_instances(&g, &reg).unwrap();

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let mut perm: Vec<u32> = (0..30).collect();
        perm.shuffle(&mut rng);
        let edges: Vec<(u32, u32)> = g
            .edges()
            .iter()
            .map(|&(u, v)| (perm[u as usize], perm[v as usize]))
            .collect();
        let h = plain(30, true, edges);
        let hdx = enumerate_instances(&h, &reg).unwrap();

        for t in 0..reg.len() {
            assert_eq!(idx.total(t), hdx.total(t));
            let mut mapped: Vec<[u32; 3]> = idx
                .triples(t)
                .into_iter()
                .map(|tr| {
                    let mut m = [
                        perm[tr[0] as usize],
                        perm[tr[1] as usize],
                        perm[tr[2] as usize],
                    ];
                    m.sort_unstable();
                    m
                })
                .collect();
            mapped.sort_unstable();
            assert_eq!(mapped, hdx.triples(t));
        }
    }

    #[test]
    fn enumeration_is_deterministic_across_repeats() {
        let g = erdos_renyi(50, 0.15, true, 21);
        let reg = default_registry(true);
        let a = enumerate_instances(&g, &reg).unwrap();
        let b = enumerate_instances(&g, &reg).unwrap();
        for t in 0..reg.len() {
            assert_eq!(a.triples(t), b.triples(t));
            for v in 0..g.num_nodes() {
                assert_eq!(a.instances_of(t, v), b.instances_of(t, v));
            }
        }
    }
}
