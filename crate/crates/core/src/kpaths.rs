//! K shortest loop-free paths under OSPF weights (Yen's algorithm).
//!
//! Paths are totally ordered by `(total_weight, node sequence)`. Node indices
//! follow node-name order, so the secondary key is a lexicographic comparison
//! of node names. Path weights are always summed in path order starting from
//! the source so that equal paths produce bit-identical weights.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::Serialize;
use thiserror::Error;

use crate::topology::{LinkId, NodeIdx, Topology};

/// Number of candidate paths per demand pair used by the experiments.
pub const DEFAULT_K: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum KPathsError {
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("source and destination are both {0}")]
    SameEndpoints(String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("no path from {0} to {1}")]
    Unreachable(String, String),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Path {
    pub src: NodeIdx,
    pub dst: NodeIdx,
    pub links: Vec<LinkId>,
    pub nodes: Vec<NodeIdx>,
    pub total_weight: f64,
}

impl Path {
    /// Builds a path from a node sequence. Returns `None` if two consecutive
    /// nodes are not joined by a link or the sequence is shorter than 2.
    pub fn from_nodes(topo: &Topology, nodes: &[NodeIdx]) -> Option<Self> {
        if nodes.len() < 2 {
            return None;
        }
        let mut links = Vec::with_capacity(nodes.len() - 1);
        let mut weight = 0.0;
        for w in nodes.windows(2) {
            let id = topo.link_id_between(w[0], w[1])?;
            weight += topo.link(id).ospf_weight;
            links.push(id);
        }
        Some(Self {
            src: nodes[0],
            dst: *nodes.last().unwrap(),
            links,
            nodes: nodes.to_vec(),
            total_weight: weight,
        })
    }

    pub fn hop_count(&self) -> usize {
        self.links.len()
    }

    /// Sum of one-way link latencies along the path.
    pub fn latency(&self, topo: &Topology) -> f64 {
        self.links.iter().map(|l| topo.link(*l).latency).sum()
    }

    pub fn is_loop_free(&self) -> bool {
        let set: BTreeSet<_> = self.nodes.iter().collect();
        set.len() == self.nodes.len()
    }

    pub fn is_contiguous(&self, topo: &Topology) -> bool {
        self.links.len() + 1 == self.nodes.len()
            && self.links.iter().enumerate().all(|(i, l)| {
                let link = topo.link(*l);
                link.src == self.nodes[i] && link.dst == self.nodes[i + 1]
            })
    }

    pub fn describe(&self, topo: &Topology) -> String {
        self.nodes
            .iter()
            .map(|n| topo.node_name(*n))
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// Total order used for ranking paths.
pub fn path_order(a: &Path, b: &Path) -> Ordering {
    a.total_weight
        .total_cmp(&b.total_weight)
        .then_with(|| a.nodes.cmp(&b.nodes))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathSet {
    pub src: NodeIdx,
    pub dst: NodeIdx,
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Debug listing: one line per path, node sequence then weight.
    pub fn listing(&self, topo: &Topology) -> String {
        let mut out = String::new();
        for p in &self.paths {
            out.push_str(&format!("{} {}\n", p.describe(topo), p.total_weight));
        }
        out
    }
}

pub type PathSets = BTreeMap<(NodeIdx, NodeIdx), PathSet>;

#[derive(PartialEq)]
struct Label {
    dist: f64,
    seq: Vec<NodeIdx>,
}

impl Eq for Label {}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed for a min-heap
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra over a filtered view of the topology. Labels carry the full
/// node sequence so that equal-weight ties resolve lexicographically; the
/// order is stable under common extension because simple paths ending at the
/// same node cannot be prefixes of one another.
fn filtered_dijkstra(
    topo: &Topology,
    prefix: &[NodeIdx],
    start_dist: f64,
    dst: NodeIdx,
    banned_nodes: &[bool],
    banned_links: &BTreeSet<LinkId>,
) -> Option<(Vec<NodeIdx>, f64)> {
    let n = topo.node_count();
    let mut best: Vec<Option<(f64, Vec<NodeIdx>)>> = vec![None; n];
    let mut done = vec![false; n];
    let src = *prefix.last()?;
    let mut heap = BinaryHeap::new();
    best[src.0] = Some((start_dist, prefix.to_vec()));
    heap.push(Label {
        dist: start_dist,
        seq: prefix.to_vec(),
    });
    while let Some(Label { dist, seq }) = heap.pop() {
        let u = *seq.last().unwrap();
        if done[u.0] {
            continue;
        }
        done[u.0] = true;
        if u == dst {
            return Some((seq, dist));
        }
        for &lid in topo.outgoing(u) {
            if banned_links.contains(&lid) {
                continue;
            }
            let link = topo.link(lid);
            let v = link.dst;
            if banned_nodes[v.0] || done[v.0] {
                continue;
            }
            let nd = dist + link.ospf_weight;
            let mut nseq = seq.clone();
            nseq.push(v);
            let better = match &best[v.0] {
                None => true,
                Some((bd, bseq)) => match nd.total_cmp(bd) {
                    Ordering::Less => true,
                    Ordering::Equal => nseq < *bseq,
                    Ordering::Greater => false,
                },
            };
            if better {
                best[v.0] = Some((nd, nseq.clone()));
                heap.push(Label { dist: nd, seq: nseq });
            }
        }
    }
    None
}

fn resolve(topo: &Topology, name: &str) -> Result<NodeIdx, KPathsError> {
    topo.node_index(name)
        .ok_or_else(|| KPathsError::UnknownNode(name.to_string()))
}

/// Minimum-weight path from `src` to `dst`, ties broken by node sequence.
pub fn dijkstra_shortest(
    topo: &Topology,
    src: NodeIdx,
    dst: NodeIdx,
) -> Result<Option<Path>, KPathsError> {
    if src == dst {
        return Err(KPathsError::SameEndpoints(topo.node_name(src).to_string()));
    }
    let banned = vec![false; topo.node_count()];
    Ok(
        filtered_dijkstra(topo, &[src], 0.0, dst, &banned, &BTreeSet::new())
            .and_then(|(seq, _)| Path::from_nodes(topo, &seq)),
    )
}

/// Name-based wrapper around [`dijkstra_shortest`].
pub fn dijkstra_shortest_by_name(
    topo: &Topology,
    src: &str,
    dst: &str,
) -> Result<Option<Path>, KPathsError> {
    dijkstra_shortest(topo, resolve(topo, src)?, resolve(topo, dst)?)
}

/// Up to `k` loop-free paths from `src` to `dst` in ascending
/// `(weight, node sequence)` order. An unreachable pair yields an empty set.
pub fn yen_k_shortest(
    topo: &Topology,
    src: NodeIdx,
    dst: NodeIdx,
    k: usize,
) -> Result<PathSet, KPathsError> {
    if k == 0 {
        return Err(KPathsError::ZeroK);
    }
    let mut accepted: Vec<Path> = Vec::new();
    let Some(first) = dijkstra_shortest(topo, src, dst)? else {
        return Ok(PathSet {
            src,
            dst,
            paths: accepted,
        });
    };
    accepted.push(first);

    let mut candidates: Vec<Path> = Vec::new();
    let mut seen: BTreeSet<Vec<NodeIdx>> = BTreeSet::new();
    seen.insert(accepted[0].nodes.clone());

    while accepted.len() < k {
        let last = accepted.last().unwrap().clone();
        for i in 0..last.nodes.len() - 1 {
            let root = &last.nodes[..=i];
            let mut banned_links = BTreeSet::new();
            for p in &accepted {
                if p.nodes.len() > i + 1 && &p.nodes[..=i] == root {
                    banned_links.insert(p.links[i]);
                }
            }
            let mut banned_nodes = vec![false; topo.node_count()];
            for n in &root[..i] {
                banned_nodes[n.0] = true;
            }
            let root_weight: f64 = last.links[..i]
                .iter()
                .map(|l| topo.link(*l).ospf_weight)
                .fold(0.0, |acc, w| acc + w);
            if let Some((seq, _)) =
                filtered_dijkstra(topo, root, root_weight, dst, &banned_nodes, &banned_links)
            {
                if seen.insert(seq.clone()) {
                    if let Some(p) = Path::from_nodes(topo, &seq) {
                        candidates.push(p);
                    }
                }
            }
        }
        if candidates.is_empty() {
            break;
        }
        let (best, _) = candidates
            .iter()
            .enumerate()
            .min_by(|a, b| path_order(a.1, b.1))
            .unwrap();
        accepted.push(candidates.swap_remove(best));
    }
    Ok(PathSet {
        src,
        dst,
        paths: accepted,
    })
}

/// Name-based wrapper around [`yen_k_shortest`].
pub fn yen_k_shortest_by_name(
    topo: &Topology,
    src: &str,
    dst: &str,
    k: usize,
) -> Result<PathSet, KPathsError> {
    yen_k_shortest(topo, resolve(topo, src)?, resolve(topo, dst)?, k)
}

/// One path set per demand pair. Unreachable pairs are a hard error.
pub fn build_pathsets(
    topo: &Topology,
    pairs: &[(NodeIdx, NodeIdx)],
    k: usize,
) -> Result<PathSets, KPathsError> {
    let compute = |&(s, d): &(NodeIdx, NodeIdx)| -> Result<((NodeIdx, NodeIdx), PathSet), KPathsError> {
        let ps = yen_k_shortest(topo, s, d, k)?;
        if ps.is_empty() {
            return Err(KPathsError::Unreachable(
                topo.node_name(s).to_string(),
                topo.node_name(d).to_string(),
            ));
        }
        Ok(((s, d), ps))
    };
    #[cfg(feature = "parallel")]
    let results: Vec<_> = {
        use rayon::prelude::*;
        pairs.par_iter().map(compute).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<_> = pairs.iter().map(compute).collect();
    results.into_iter().collect()
}
