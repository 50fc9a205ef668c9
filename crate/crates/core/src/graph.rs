//! Undirected oriented graphs and leader/follower partitions.
//!
//! Nodes are indexed from zero. Every edge is stored as `(head, tail)` with
//! `head < tail`; the edge order given at construction is the edge index used
//! by every stacked vector downstream.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl NetworkGraph {
    /// Builds a graph from unordered node pairs. Each pair is oriented so the
    /// smaller index is the head.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGraph(format!(
                "need at least 2 nodes, got {n}"
            )));
        }
        let mut seen = BTreeSet::new();
        let mut oriented = Vec::with_capacity(edges.len());
        for (k, &(a, b)) in edges.iter().enumerate() {
            for node in [a, b] {
                if node >= n {
                    return Err(Error::NodeOutOfRange { node, n });
                }
            }
            if a == b {
                return Err(Error::InvalidGraph(format!(
                    "edge {k} is a self-loop on node {a}"
                )));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::InvalidGraph(format!(
                    "edge {k} duplicates ({}, {})",
                    e.0, e.1
                )));
            }
            oriented.push(e);
        }
        Ok(Self { n, edges: oriented })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Index of the edge joining `a` and `b`, in either order.
    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        let e = (a.min(b), a.max(b));
        self.edges.iter().position(|&x| x == e)
    }

    pub fn neighbors(&self, i: usize) -> Result<BTreeSet<usize>> {
        if i >= self.n {
            return Err(Error::NodeOutOfRange { node: i, n: self.n });
        }
        Ok(self
            .edges
            .iter()
            .filter_map(|&(h, t)| {
                if h == i {
                    Some(t)
                } else if t == i {
                    Some(h)
                } else {
                    None
                }
            })
            .collect())
    }

    /// Incidence matrix `H` (m×n): −1 at the head, +1 at the tail of each edge.
    pub fn incidence_matrix(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.edges.len(), self.n);
        for (k, &(head, tail)) in self.edges.iter().enumerate() {
            h[(k, head)] = -1.0;
            h[(k, tail)] = 1.0;
        }
        h
    }

    /// The `d`-lifted incidence matrix `H ⊗ I_d`.
    pub fn lifted_incidence(&self, d: usize) -> DMatrix<f64> {
        self.incidence_matrix().kronecker(&DMatrix::identity(d, d))
    }

    /// Number of connected components.
    pub fn component_count(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(a, b) in &self.edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
        (0..self.n).filter(|&i| find(&mut parent, i) == i).count()
    }
}

/// Split of the node set into leaders (anchors) and followers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentPartition {
    leaders: Vec<usize>,
    followers: Vec<usize>,
}

impl AgentPartition {
    /// Every node not listed as a leader is a follower.
    pub fn from_leaders(n: usize, leaders: &[usize]) -> Result<Self> {
        let set: BTreeSet<usize> = leaders.iter().copied().collect();
        if set.len() != leaders.len() {
            return Err(Error::Partition("duplicate leader id".into()));
        }
        if let Some(&bad) = set.iter().find(|&&l| l >= n) {
            return Err(Error::NodeOutOfRange { node: bad, n });
        }
        let followers = (0..n).filter(|i| !set.contains(i)).collect();
        Ok(Self {
            leaders: set.into_iter().collect(),
            followers,
        })
    }

    /// Explicit partition; the two sets must be disjoint and cover `0..n`.
    pub fn new(n: usize, leaders: &[usize], followers: &[usize]) -> Result<Self> {
        let l: BTreeSet<usize> = leaders.iter().copied().collect();
        let f: BTreeSet<usize> = followers.iter().copied().collect();
        if l.len() != leaders.len() || f.len() != followers.len() {
            return Err(Error::Partition("duplicate id within a set".into()));
        }
        if let Some(x) = l.intersection(&f).next() {
            return Err(Error::Partition(format!(
                "node {x} is both leader and follower"
            )));
        }
        if l.len() + f.len() != n || l.iter().chain(f.iter()).any(|&i| i >= n) {
            return Err(Error::Partition(format!(
                "leaders and followers must cover exactly 0..{n}"
            )));
        }
        Ok(Self {
            leaders: l.into_iter().collect(),
            followers: f.into_iter().collect(),
        })
    }

    pub fn leaders(&self) -> &[usize] {
        &self.leaders
    }

    pub fn followers(&self) -> &[usize] {
        &self.followers
    }

    pub fn leader_count(&self) -> usize {
        self.leaders.len()
    }

    pub fn follower_count(&self) -> usize {
        self.followers.len()
    }

    pub fn node_count(&self) -> usize {
        self.leaders.len() + self.followers.len()
    }

    /// True when leaders already occupy `0..n_l`.
    pub fn is_canonical(&self) -> bool {
        self.leaders.iter().enumerate().all(|(k, &l)| k == l)
    }

    pub fn require_leaders(&self, min: usize) -> Result<()> {
        if self.leaders.len() < min {
            return Err(Error::Partition(format!(
                "at least {min} leaders required, got {}",
                self.leaders.len()
            )));
        }
        Ok(())
    }
}

/// Node permutation produced by [`canonicalize_partition`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relabeling {
    /// `new_of_old[i]` is the canonical index of original node `i`.
    pub new_of_old: Vec<usize>,
    /// `old_of_new[k]` is the original index of canonical node `k`.
    pub old_of_new: Vec<usize>,
    /// Per edge (in the shared edge order), whether relabeling swapped head and tail.
    pub edge_flipped: Vec<bool>,
}

impl Relabeling {
    pub fn is_identity(&self) -> bool {
        self.new_of_old.iter().enumerate().all(|(i, &k)| i == k)
    }

    /// Reorders per-node blocks of a stacked vector from original to canonical order.
    pub fn to_canonical<T: Clone>(&self, blocks: &[T], d: usize) -> Vec<T> {
        permute_blocks(blocks, d, &self.old_of_new)
    }

    /// Reorders per-node blocks from canonical back to original order.
    pub fn to_original<T: Clone>(&self, blocks: &[T], d: usize) -> Vec<T> {
        permute_blocks(blocks, d, &self.new_of_old)
    }
}

fn permute_blocks<T: Clone>(blocks: &[T], d: usize, source_of_target: &[usize]) -> Vec<T> {
    debug_assert_eq!(blocks.len(), d * source_of_target.len());
    source_of_target
        .iter()
        .flat_map(|&src| blocks[src * d..(src + 1) * d].iter().cloned())
        .collect()
}

/// Relabels nodes so that leaders come first (ascending), followed by
/// followers (ascending). Edge order is preserved; orientation is recomputed.
pub fn canonicalize_partition(
    g: &NetworkGraph,
    p: &AgentPartition,
    min_leaders: usize,
) -> Result<(NetworkGraph, AgentPartition, Relabeling)> {
    if p.node_count() != g.node_count() {
        return Err(Error::Partition(format!(
            "partition covers {} nodes, graph has {}",
            p.node_count(),
            g.node_count()
        )));
    }
    p.require_leaders(min_leaders)?;
    let old_of_new: Vec<usize> = p
        .leaders
        .iter()
        .chain(p.followers.iter())
        .copied()
        .collect();
    let mut new_of_old = vec![0; old_of_new.len()];
    for (new, &old) in old_of_new.iter().enumerate() {
        new_of_old[old] = new;
    }
    let mut edges = Vec::with_capacity(g.edge_count());
    let mut edge_flipped = Vec::with_capacity(g.edge_count());
    for &(h, t) in g.edges() {
        let (a, b) = (new_of_old[h], new_of_old[t]);
        edge_flipped.push(a > b);
        edges.push((a, b));
    }
    let graph = NetworkGraph::new(g.node_count(), &edges)?;
    let n_l = p.leader_count();
    let part = AgentPartition {
        leaders: (0..n_l).collect(),
        followers: (n_l..g.node_count()).collect(),
    };
    Ok((
        graph,
        part,
        Relabeling {
            new_of_old,
            old_of_new,
            edge_flipped,
        },
    ))
}
