//! Attributed graph storage: CSR neighborhoods, normalized adjacency
//! operators, k-hop balls, and train/validation/test splits.

mod io;
mod split;

pub use io::{load_dataset, save_dataset, LoadReport};
pub use split::{generate_split, Split};

use crate::tensor::{CsrMatrix, DMat};
use crate::{Error, Result};

/// Node feature matrix, sparse triplet or dense form.
#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    Sparse(CsrMatrix),
    Dense(DMat),
}

impl Features {
    pub fn num_rows(&self) -> usize {
        match self {
            Features::Sparse(m) => m.rows(),
            Features::Dense(m) => m.nrows(),
        }
    }

    pub fn num_cols(&self) -> usize {
        match self {
            Features::Sparse(m) => m.cols(),
            Features::Dense(m) => m.ncols(),
        }
    }

    pub fn to_csr(&self) -> CsrMatrix {
        match self {
            Features::Sparse(m) => m.clone(),
            Features::Dense(m) => {
                let triplets = m
                    .indexed_iter()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|((r, c), &v)| (r, c, v));
                CsrMatrix::from_triplets(m.nrows(), m.ncols(), triplets)
                    .expect("dense matrix has unique coordinates")
            }
        }
    }

    pub fn to_dense(&self) -> DMat {
        match self {
            Features::Sparse(m) => m.to_dense(),
            Features::Dense(m) => m.clone(),
        }
    }

    pub fn row_dense(&self, r: usize) -> Vec<f64> {
        match self {
            Features::Sparse(m) => {
                let mut out = vec![0.0; m.cols()];
                for (c, v) in m.row(r) {
                    out[c] = v;
                }
                out
            }
            Features::Dense(m) => m.row(r).to_vec(),
        }
    }
}

/// CSR-style neighbor lists with sorted targets per node.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborLists {
    indptr: Vec<usize>,
    targets: Vec<u32>,
}

impl NeighborLists {
    fn build(num_nodes: usize, pairs: impl Iterator<Item = (u32, u32)>) -> Self {
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); num_nodes];
        for (u, v) in pairs {
            adj[u as usize].push(v);
        }
        let mut indptr = Vec::with_capacity(num_nodes + 1);
        let mut targets = Vec::new();
        indptr.push(0);
        for mut list in adj {
            list.sort_unstable();
            list.dedup();
            targets.extend_from_slice(&list);
            indptr.push(targets.len());
        }
        NeighborLists { indptr, targets }
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.targets[self.indptr[v]..self.indptr[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.indptr[v + 1] - self.indptr[v]
    }

    pub fn contains(&self, u: usize, v: u32) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }
}

/// Immutable attributed graph with contiguous node ids `0..num_nodes`.
///
/// Directed graphs keep their arc directions (used by motif
/// enumeration) plus an undirected view (used by message passing,
/// BFS, and component logic). Simple by construction: no self-loops,
/// no duplicate edges.
#[derive(Debug, Clone)]
pub struct AttributedGraph {
    num_nodes: usize,
    directed: bool,
    edges: Vec<(u32, u32)>,
    features: Features,
    labels: Vec<Option<u16>>,
    num_classes: usize,
    out_adj: NeighborLists,
    in_adj: NeighborLists,
    und_adj: NeighborLists,
}

impl AttributedGraph {
    /// Build from clean inputs. Self-loops, duplicate edges (in either
    /// orientation for undirected graphs), dangling endpoints, or label
    /// ids outside `[0, num_classes)` are integrity errors. Use
    /// [`AttributedGraph::from_raw_edges`] for inputs that still need
    /// scrubbing.
    pub fn new(
        num_nodes: usize,
        directed: bool,
        mut edges: Vec<(u32, u32)>,
        features: Features,
        labels: Vec<Option<u16>>,
        num_classes: usize,
    ) -> Result<Self> {
        if features.num_rows() != num_nodes {
            return Err(Error::Integrity(format!(
                "feature matrix has {} rows for {} nodes",
                features.num_rows(),
                num_nodes
            )));
        }
        if labels.len() != num_nodes {
            return Err(Error::Integrity(format!(
                "label vector has {} entries for {} nodes",
                labels.len(),
                num_nodes
            )));
        }
        for (v, label) in labels.iter().enumerate() {
            if let Some(c) = label {
                if *c as usize >= num_classes {
                    return Err(Error::Integrity(format!(
                        "node {v} labeled {c}, outside [0, {num_classes})"
                    )));
                }
            }
        }
        if !directed {
            for e in edges.iter_mut() {
                if e.0 > e.1 {
                    *e = (e.1, e.0);
                }
            }
        }
        edges.sort_unstable();
        for &(u, v) in &edges {
            if u == v {
                return Err(Error::Integrity(format!("self-loop at node {u}")));
            }
            if u as usize >= num_nodes || v as usize >= num_nodes {
                return Err(Error::Integrity(format!(
                    "dangling edge ({u}, {v}) for {num_nodes} nodes"
                )));
            }
        }
        if let Some(w) = edges.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Integrity(format!(
                "duplicate edge ({}, {})",
                w[0].0, w[0].1
            )));
        }

        let out_adj = NeighborLists::build(num_nodes, edges.iter().copied());
        let in_adj = NeighborLists::build(num_nodes, edges.iter().map(|&(u, v)| (v, u)));
        let und_adj = NeighborLists::build(
            num_nodes,
            edges.iter().flat_map(|&(u, v)| [(u, v), (v, u)]),
        );
        Ok(AttributedGraph {
            num_nodes,
            directed,
            edges,
            features,
            labels,
            num_classes,
            out_adj,
            in_adj,
            und_adj,
        })
    }

    /// Build from raw edges, dropping self-loops and duplicates.
    /// Returns the graph and the (loops, duplicates) drop counts.
    pub fn from_raw_edges(
        num_nodes: usize,
        directed: bool,
        raw: Vec<(u32, u32)>,
        features: Features,
        labels: Vec<Option<u16>>,
        num_classes: usize,
    ) -> Result<(Self, usize, usize)> {
        let mut seen = std::collections::HashSet::with_capacity(raw.len());
        let mut edges = Vec::with_capacity(raw.len());
        let (mut loops, mut dups) = (0usize, 0usize);
        for (u, v) in raw {
            if u == v {
                loops += 1;
                continue;
            }
            let key = if directed || u < v { (u, v) } else { (v, u) };
            if seen.insert(key) {
                edges.push(key);
            } else {
                dups += 1;
            }
        }
        let g = Self::new(num_nodes, directed, edges, features, labels, num_classes)?;
        Ok((g, loops, dups))
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    /// Stored edges: arcs for directed graphs, canonical `u < v` pairs
    /// for undirected ones.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Unique undirected pairs (the edge count datasets are usually
    /// quoted in).
    pub fn undirected_edge_count(&self) -> usize {
        if !self.directed {
            return self.edges.len();
        }
        let mut pairs: Vec<(u32, u32)> = self
            .edges
            .iter()
            .map(|&(u, v)| if u < v { (u, v) } else { (v, u) })
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        pairs.len()
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    pub fn num_features(&self) -> usize {
        self.features.num_cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn label(&self, v: usize) -> Option<u16> {
        self.labels[v]
    }

    pub fn labels(&self) -> &[Option<u16>] {
        &self.labels
    }

    pub fn labeled_nodes(&self) -> Vec<u32> {
        (0..self.num_nodes as u32)
            .filter(|&v| self.labels[v as usize].is_some())
            .collect()
    }

    pub fn out_neighbors(&self, v: usize) -> &[u32] {
        self.out_adj.neighbors(v)
    }

    pub fn in_neighbors(&self, v: usize) -> &[u32] {
        self.in_adj.neighbors(v)
    }

    /// Neighbors in the undirected view.
    pub fn neighbors(&self, v: usize) -> &[u32] {
        self.und_adj.neighbors(v)
    }

    pub fn degree(&self, v: usize) -> usize {
        self.und_adj.degree(v)
    }

    /// Does the undirected view contain `{u, v}`?
    pub fn has_und_edge(&self, u: usize, v: u32) -> bool {
        self.und_adj.contains(u, v)
    }

    /// Does the graph contain the arc `u -> v` (undirected: the pair)?
    pub fn has_arc(&self, u: usize, v: u32) -> bool {
        self.out_adj.contains(u, v)
    }

    /// Exact BFS ball of radius `k` around `v` (includes `v`), on the
    /// undirected view. Returns sorted node ids.
    pub fn khop_neighborhood(&self, v: usize, k: usize) -> Result<Vec<u32>> {
        if v >= self.num_nodes {
            return Err(Error::NodeOutOfRange(v, self.num_nodes));
        }
        let mut seen = vec![false; self.num_nodes];
        seen[v] = true;
        let mut ball = vec![v as u32];
        let mut frontier = vec![v as u32];
        for _ in 0..k {
            let mut next = Vec::new();
            for &u in &frontier {
                for &w in self.neighbors(u as usize) {
                    if !seen[w as usize] {
                        seen[w as usize] = true;
                        ball.push(w);
                        next.push(w);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        ball.sort_unstable();
        Ok(ball)
    }

    /// Node sets of connected components of the undirected view, largest
    /// first (ties broken by smallest contained id). Component node
    /// lists are sorted.
    pub fn components(&self) -> Vec<Vec<u32>> {
        let mut seen = vec![false; self.num_nodes];
        let mut comps = Vec::new();
        for start in 0..self.num_nodes {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start as u32];
            let mut stack = vec![start as u32];
            while let Some(u) = stack.pop() {
                for &w in self.neighbors(u as usize) {
                    if !seen[w as usize] {
                        seen[w as usize] = true;
                        comp.push(w);
                        stack.push(w);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps.sort_by_key(|c| (std::cmp::Reverse(c.len()), c[0]));
        comps
    }

    /// Induced subgraph on `keep` (sorted ids), re-indexed contiguously.
    pub fn induced_subgraph(&self, keep: &[u32]) -> Result<AttributedGraph> {
        let mut remap = vec![u32::MAX; self.num_nodes];
        for (new, &old) in keep.iter().enumerate() {
            remap[old as usize] = new as u32;
        }
        let edges = self
            .edges
            .iter()
            .filter_map(|&(u, v)| {
                let (nu, nv) = (remap[u as usize], remap[v as usize]);
                (nu != u32::MAX && nv != u32::MAX).then_some((nu, nv))
            })
            .collect();
        let features = match &self.features {
            Features::Sparse(m) => {
                let triplets = keep.iter().enumerate().flat_map(|(new, &old)| {
                    m.row(old as usize).map(move |(c, val)| (new, c, val))
                });
                Features::Sparse(CsrMatrix::from_triplets(keep.len(), m.cols(), triplets)?)
            }
            Features::Dense(m) => {
                let mut out = DMat::zeros((keep.len(), m.ncols()));
                for (new, &old) in keep.iter().enumerate() {
                    out.row_mut(new).assign(&m.row(old as usize));
                }
                Features::Dense(out)
            }
        };
        let labels = keep.iter().map(|&old| self.labels[old as usize]).collect();
        AttributedGraph::new(
            keep.len(),
            self.directed,
            edges,
            features,
            labels,
            self.num_classes,
        )
    }
}

/// Symmetrically normalized adjacency with self-loops:
/// `Â = D^{-1/2} (A + I) D^{-1/2}` over the undirected view, with
/// `d_i = degree_i + 1`.
pub fn normalized_adjacency(g: &AttributedGraph) -> CsrMatrix {
    let n = g.num_nodes();
    let d_inv_sqrt: Vec<f64> = (0..n).map(|v| 1.0 / ((g.degree(v) + 1) as f64).sqrt()).collect();
    let mut triplets = Vec::with_capacity(2 * g.num_edges() + n);
    for v in 0..n {
        triplets.push((v, v, d_inv_sqrt[v] * d_inv_sqrt[v]));
        for &u in g.neighbors(v) {
            triplets.push((v, u as usize, d_inv_sqrt[v] * d_inv_sqrt[u as usize]));
        }
    }
    CsrMatrix::from_triplets(n, n, triplets).expect("neighbor lists are deduplicated")
}
