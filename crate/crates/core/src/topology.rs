//! Capacitated directed network graph.
//!
//! All quantities are kept in canonical units: bytes, seconds and
//! bytes/second. Topology files carry capacities in Mbps and are converted on
//! ingestion (1 Mbps = 125 000 bytes/s).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Bytes per second in one Mbps.
pub const BYTES_PER_SEC_PER_MBPS: f64 = 125_000.0;

/// Column header of the topology CSV format.
pub const TOPOLOGY_HEADER: &str = "src,dst,capacity_mbps,latency_s,ospf_weight";

const ABILENE_FIXTURE: &str = include_str!("../data/abilene.csv");

/// Dense index of a node. Indices follow the lexicographic order of node
/// names, so comparing index sequences compares name sequences.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct NodeIdx(pub usize);

/// Dense index of a directed link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct LinkId(pub usize);

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Link {
    pub id: LinkId,
    pub src: NodeIdx,
    pub dst: NodeIdx,
    /// Capacity as declared, in Mbps.
    pub capacity_mbps: f64,
    /// Capacity in bytes/second.
    pub capacity: f64,
    /// One-way propagation latency in seconds.
    pub latency: f64,
    pub ospf_weight: f64,
}

/// A directed link as declared by a user, before node resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkSpec {
    pub src: String,
    pub dst: String,
    pub capacity_mbps: f64,
    pub latency: f64,
    pub ospf_weight: f64,
}

impl LinkSpec {
    pub fn new(src: &str, dst: &str, capacity_mbps: f64, latency: f64, ospf_weight: f64) -> Self {
        Self {
            src: src.to_string(),
            dst: dst.to_string(),
            capacity_mbps,
            latency,
            ospf_weight,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("self-loop on node {0}")]
    SelfLoop(String),
    #[error("duplicate link {0} -> {1}")]
    DuplicateLink(String, String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("capacity must be positive, got {0}")]
    NonPositiveCapacity(f64),
    #[error("ospf weight must be positive, got {0}")]
    NonPositiveWeight(f64),
    #[error("latency must be non-negative, got {0}")]
    NegativeLatency(f64),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<TopologyError>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    names: Vec<String>,
    links: Vec<Link>,
    outgoing: Vec<Vec<LinkId>>,
    by_pair: BTreeMap<(NodeIdx, NodeIdx), LinkId>,
}

impl Topology {
    /// Builds a topology from link declarations. `extra_nodes` may declare
    /// isolated nodes; every link endpoint is declared implicitly.
    pub fn new<I, S>(extra_nodes: I, specs: &[LinkSpec]) -> Result<Self, TopologyError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut declared: BTreeSet<String> = extra_nodes.into_iter().map(Into::into).collect();
        for s in specs {
            declared.insert(s.src.clone());
            declared.insert(s.dst.clone());
        }
        let names: Vec<String> = declared.into_iter().collect();
        let index: BTreeMap<&str, NodeIdx> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), NodeIdx(i)))
            .collect();

        let mut links = Vec::with_capacity(specs.len());
        let mut outgoing = vec![Vec::new(); names.len()];
        let mut by_pair = BTreeMap::new();
        for s in specs {
            validate_spec(s)?;
            let src = index[s.src.as_str()];
            let dst = index[s.dst.as_str()];
            let id = LinkId(links.len());
            if by_pair.insert((src, dst), id).is_some() {
                return Err(TopologyError::DuplicateLink(s.src.clone(), s.dst.clone()));
            }
            outgoing[src.0].push(id);
            links.push(Link {
                id,
                src,
                dst,
                capacity_mbps: s.capacity_mbps,
                capacity: s.capacity_mbps * BYTES_PER_SEC_PER_MBPS,
                latency: s.latency,
                ospf_weight: s.ospf_weight,
            });
        }
        Ok(Self {
            names,
            links,
            outgoing,
            by_pair,
        })
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    /// Node names in index order.
    pub fn nodes(&self) -> &[String] {
        &self.names
    }

    pub fn node_index(&self, name: &str) -> Option<NodeIdx> {
        self.names
            .binary_search_by(|n| n.as_str().cmp(name))
            .ok()
            .map(NodeIdx)
    }

    pub fn node_name(&self, idx: NodeIdx) -> &str {
        &self.names[idx.0]
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0]
    }

    pub fn outgoing(&self, node: NodeIdx) -> &[LinkId] {
        &self.outgoing[node.0]
    }

    pub fn link_id_between(&self, u: NodeIdx, v: NodeIdx) -> Option<LinkId> {
        self.by_pair.get(&(u, v)).copied()
    }

    /// Looks up the directed link `u -> v` by node name.
    pub fn link_between(&self, u: &str, v: &str) -> Result<Option<&Link>, TopologyError> {
        let ui = self
            .node_index(u)
            .ok_or_else(|| TopologyError::UnknownNode(u.to_string()))?;
        let vi = self
            .node_index(v)
            .ok_or_else(|| TopologyError::UnknownNode(v.to_string()))?;
        Ok(self.link_id_between(ui, vi).map(|id| self.link(id)))
    }

    /// True when every link has a reverse twin with equal capacity.
    pub fn is_symmetric(&self) -> bool {
        self.links.iter().all(|l| {
            self.link_id_between(l.dst, l.src)
                .map(|r| self.link(r).capacity == l.capacity)
                .unwrap_or(false)
        })
    }

    /// Serializes to the topology CSV format, links sorted by (src, dst).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(TOPOLOGY_HEADER);
        out.push('\n');
        // by_pair is keyed by node index, which follows name order
        for id in self.by_pair.values() {
            let l = self.link(*id);
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.node_name(l.src),
                self.node_name(l.dst),
                l.capacity_mbps,
                l.latency,
                l.ospf_weight
            ));
        }
        out
    }
}

fn validate_spec(s: &LinkSpec) -> Result<(), TopologyError> {
    if s.src == s.dst {
        return Err(TopologyError::SelfLoop(s.src.clone()));
    }
    if !(s.capacity_mbps > 0.0) || !s.capacity_mbps.is_finite() {
        return Err(TopologyError::NonPositiveCapacity(s.capacity_mbps));
    }
    if !(s.ospf_weight > 0.0) || !s.ospf_weight.is_finite() {
        return Err(TopologyError::NonPositiveWeight(s.ospf_weight));
    }
    if !(s.latency >= 0.0) || !s.latency.is_finite() {
        return Err(TopologyError::NegativeLatency(s.latency));
    }
    Ok(())
}

/// Parses the topology CSV format. The header line is optional, `#` starts a
/// comment line and a missing `ospf_weight` column defaults to 1.
pub fn parse_topology(text: &str) -> Result<Topology, TopologyError> {
    let mut specs = Vec::new();
    let mut lines_of = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.first() == Some(&"src") {
            continue;
        }
        if cols.len() != 4 && cols.len() != 5 {
            return Err(TopologyError::Malformed {
                line: line_no,
                message: format!("expected 4 or 5 columns, found {}", cols.len()),
            });
        }
        let num = |idx: usize, what: &str| -> Result<f64, TopologyError> {
            cols[idx].parse::<f64>().map_err(|_| TopologyError::Malformed {
                line: line_no,
                message: format!("invalid {what} {:?}", cols[idx]),
            })
        };
        if cols[0].is_empty() || cols[1].is_empty() {
            return Err(TopologyError::Malformed {
                line: line_no,
                message: "empty node name".into(),
            });
        }
        let weight = if cols.len() == 5 { num(4, "ospf_weight")? } else { 1.0 };
        let spec = LinkSpec::new(
            cols[0],
            cols[1],
            num(2, "capacity_mbps")?,
            num(3, "latency_s")?,
            weight,
        );
        validate_spec(&spec).map_err(|e| TopologyError::AtLine {
            line: line_no,
            source: Box::new(e),
        })?;
        specs.push(spec);
        lines_of.push(line_no);
    }
    // duplicate detection needs the line number of the offending entry
    let mut seen = BTreeSet::new();
    for (s, line) in specs.iter().zip(&lines_of) {
        if !seen.insert((s.src.as_str(), s.dst.as_str())) {
            return Err(TopologyError::AtLine {
                line: *line,
                source: Box::new(TopologyError::DuplicateLink(s.src.clone(), s.dst.clone())),
            });
        }
    }
    Topology::new(std::iter::empty::<String>(), &specs)
}

/// The 11-router Abilene backbone from the shipped fixture.
pub fn build_abilene() -> Topology {
    parse_topology(ABILENE_FIXTURE).expect("shipped Abilene fixture is valid")
}

/// Raw text of the shipped Abilene fixture.
pub fn abilene_fixture() -> &'static str {
    ABILENE_FIXTURE
}
