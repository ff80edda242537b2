//! Path-selection policies over a controller view of link backlog.
//!
//! The view stores, per directed link, the normalized backlog in seconds:
//! remaining bytes of the flows crossing the link divided by its capacity.

use serde::Serialize;
use thiserror::Error;

use crate::kpaths::{Path, PathSet};
use crate::minmlu::{is_probability_vector, Pair, WeightAssignment};
use crate::topology::{LinkId, Topology};
use crate::traffic::{fnv1a, StreamRng};

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("empty path set")]
    EmptyPathSet,
    #[error("link {0} is not part of the controller view")]
    UnknownLink(LinkId),
    #[error("weights must be a probability vector, got {0:?}")]
    MalformedWeights(Vec<f64>),
    #[error("weight vector has {found} entries for {expected} paths")]
    WeightLength { expected: usize, found: usize },
    #[error("no weights for demand pair {0:?}")]
    MissingWeights(Pair),
    #[error("progress must be non-negative, got {0}")]
    NegativeProgress(f64),
    #[error("threshold must be non-negative, got {0}")]
    NegativeThreshold(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ViewMode {
    /// Backlog tracks the exact remaining bytes of every active flow.
    Exact,
    /// Per-link counter: grows by the allocated size and drains by what the
    /// link transmits, capped at capacity.
    CounterEstimate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerView {
    backlog: Vec<f64>,
    capacity: Vec<f64>,
    active: Vec<u32>,
    mode: ViewMode,
}

impl ControllerView {
    pub fn new(topo: &Topology, mode: ViewMode) -> Self {
        Self {
            backlog: vec![0.0; topo.link_count()],
            capacity: topo.links().iter().map(|l| l.capacity).collect(),
            active: vec![0; topo.link_count()],
            mode,
        }
    }

    pub fn mode(&self) -> ViewMode {
        self.mode
    }

    pub fn backlog(&self, link: LinkId) -> Result<f64, PolicyError> {
        self.backlog
            .get(link.0)
            .copied()
            .ok_or(PolicyError::UnknownLink(link))
    }

    pub fn backlogs(&self) -> &[f64] {
        &self.backlog
    }

    /// Overwrites one link's backlog. Intended for tests and demos.
    pub fn set_backlog(&mut self, link: LinkId, seconds: f64) -> Result<(), PolicyError> {
        let slot = self
            .backlog
            .get_mut(link.0)
            .ok_or(PolicyError::UnknownLink(link))?;
        *slot = seconds.max(0.0);
        Ok(())
    }

    /// A flow of `size` bytes was placed on `path`.
    pub fn on_allocation(&mut self, path: &Path, size: f64) -> Result<(), PolicyError> {
        for l in &path.links {
            let c = *self.capacity.get(l.0).ok_or(PolicyError::UnknownLink(*l))?;
            self.backlog[l.0] += size / c;
            self.active[l.0] += 1;
        }
        Ok(())
    }

    /// A flow on `path` transferred `bytes` since the last report.
    pub fn on_progress(&mut self, path: &Path, bytes: f64) -> Result<(), PolicyError> {
        if bytes < 0.0 {
            return Err(PolicyError::NegativeProgress(bytes));
        }
        for l in &path.links {
            self.drain(*l, bytes, f64::INFINITY)?;
        }
        Ok(())
    }

    /// Link-level progress report: `bytes` crossed `link` during `elapsed`
    /// seconds. Equivalent to per-flow reports summed over the link.
    pub fn on_link_progress(
        &mut self,
        link: LinkId,
        bytes: f64,
        elapsed: f64,
    ) -> Result<(), PolicyError> {
        if bytes < 0.0 {
            return Err(PolicyError::NegativeProgress(bytes));
        }
        self.drain(link, bytes, elapsed)
    }

    fn drain(&mut self, link: LinkId, bytes: f64, elapsed: f64) -> Result<(), PolicyError> {
        let c = *self
            .capacity
            .get(link.0)
            .ok_or(PolicyError::UnknownLink(link))?;
        let moved = match self.mode {
            ViewMode::Exact => bytes,
            ViewMode::CounterEstimate => bytes.min(c * elapsed),
        };
        let b = &mut self.backlog[link.0];
        *b = (*b - moved / c).max(0.0);
        Ok(())
    }

    /// A flow on `path` finished with `residual` unreported bytes. Links
    /// left without active flows return to exactly zero.
    pub fn on_completion(&mut self, path: &Path, residual: f64) -> Result<(), PolicyError> {
        for l in &path.links {
            let c = *self.capacity.get(l.0).ok_or(PolicyError::UnknownLink(*l))?;
            let n = &mut self.active[l.0];
            *n = n.saturating_sub(1);
            if *n == 0 {
                self.backlog[l.0] = 0.0;
            } else if self.mode == ViewMode::Exact {
                self.backlog[l.0] = (self.backlog[l.0] - residual / c).max(0.0);
            }
        }
        Ok(())
    }
}

/// Largest link backlog along the path.
pub fn path_backlog(view: &ControllerView, path: &Path) -> Result<f64, PolicyError> {
    path.links
        .iter()
        .try_fold(0.0_f64, |m, l| Ok(m.max(view.backlog(*l)?)))
}

/// Index of the path with the smallest [`path_backlog`]; ties go to the
/// lowest index, i.e. the shortest path.
pub fn select_mbp(view: &ControllerView, pathset: &PathSet) -> Result<usize, PolicyError> {
    let mut best: Option<(usize, f64)> = None;
    for (k, p) in pathset.paths.iter().enumerate() {
        let b = path_backlog(view, p)?;
        if best.map_or(true, |(_, bb)| b < bb) {
            best = Some((k, b));
        }
    }
    best.map(|(k, _)| k).ok_or(PolicyError::EmptyPathSet)
}

/// Draws path `k` with probability `weights[k]` using exactly one uniform.
pub fn select_weighted_random(weights: &[f64], rng: &mut StreamRng) -> Result<usize, PolicyError> {
    if !is_probability_vector(weights) {
        return Err(PolicyError::MalformedWeights(weights.to_vec()));
    }
    let u = rng.uniform();
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return Ok(k);
        }
    }
    // rounding left u above the cumulative sum
    Ok(weights.iter().rposition(|w| *w > 0.0).unwrap_or(0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Branch {
    Mbp,
    Random,
}

impl Branch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::Mbp => "mbp",
            Branch::Random => "random",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Decision {
    pub path_index: usize,
    pub branch: Branch,
    /// Backlog of the chosen path when the view was consulted.
    pub max_backlog: Option<f64>,
}

/// Size-thresholded MBP: flows of at least `threshold` bytes go through
/// [`select_mbp`], smaller ones through [`select_weighted_random`] without
/// reading the view.
pub fn select_thresholded(
    view: &ControllerView,
    pathset: &PathSet,
    size: f64,
    threshold: f64,
    weights: &[f64],
    rng: &mut StreamRng,
) -> Result<Decision, PolicyError> {
    if size >= threshold {
        let k = select_mbp(view, pathset)?;
        Ok(Decision {
            path_index: k,
            branch: Branch::Mbp,
            max_backlog: Some(path_backlog(view, &pathset.paths[k])?),
        })
    } else {
        if weights.len() != pathset.len() {
            return Err(PolicyError::WeightLength {
                expected: pathset.len(),
                found: weights.len(),
            });
        }
        Ok(Decision {
            path_index: select_weighted_random(weights, rng)?,
            branch: Branch::Random,
            max_backlog: None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum PolicyKind {
    Mbp,
    ThresholdedMbp { threshold: f64 },
    WeightedRandom,
}

impl PolicyKind {
    /// Short label used in reports.
    pub fn label(&self) -> String {
        match self {
            PolicyKind::Mbp => "mbp".into(),
            PolicyKind::WeightedRandom => "weighted_random".into(),
            PolicyKind::ThresholdedMbp { threshold } => format!("tmbp_{threshold}"),
        }
    }

    pub fn needs_weights(&self) -> bool {
        !matches!(self, PolicyKind::Mbp)
    }
}

/// A policy instance bound to its weights and its own random stream.
#[derive(Clone, Debug)]
pub struct Policy {
    kind: PolicyKind,
    weights: WeightAssignment,
    rng: StreamRng,
}

/// Stream id of the policy-owned generator, distinct from every traffic
/// stream id in practice.
pub fn policy_stream_id() -> u64 {
    fnv1a(b"policy/weighted-random")
}

impl Policy {
    pub fn new(kind: PolicyKind, weights: WeightAssignment, seed: u64) -> Result<Self, PolicyError> {
        if let PolicyKind::ThresholdedMbp { threshold } = kind {
            if !(threshold >= 0.0) {
                return Err(PolicyError::NegativeThreshold(threshold));
            }
        }
        for (_, w) in weights.iter() {
            if !is_probability_vector(w) {
                return Err(PolicyError::MalformedWeights(w.to_vec()));
            }
        }
        Ok(Self {
            kind,
            weights,
            rng: StreamRng::new(seed, policy_stream_id()),
        })
    }

    pub fn mbp() -> Self {
        Self::new(PolicyKind::Mbp, WeightAssignment::new(), 0).expect("MBP needs no weights")
    }

    pub fn kind(&self) -> &PolicyKind {
        &self.kind
    }

    pub fn decide(
        &mut self,
        view: &ControllerView,
        pathset: &PathSet,
        size: f64,
    ) -> Result<Decision, PolicyError> {
        let pair = (pathset.src, pathset.dst);
        let threshold = match self.kind {
            PolicyKind::Mbp => 0.0,
            PolicyKind::WeightedRandom => f64::INFINITY,
            PolicyKind::ThresholdedMbp { threshold } => threshold,
        };
        let weights: &[f64] = if size >= threshold {
            &[]
        } else {
            self.weights
                .get(pair)
                .ok_or(PolicyError::MissingWeights(pair))?
        };
        select_thresholded(view, pathset, size, threshold, weights, &mut self.rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kpaths::yen_k_shortest_by_name;
    use crate::topology::parse_topology;

    /// Three disjoint two-hop paths from S to D through A, B and C.
    fn diamond() -> (Topology, PathSet) {
        let t = parse_topology(
            "S,A,8,0,1\nA,D,8,0,1\nS,B,8,0,1\nB,D,8,0,1\nS,C,8,0,1\nC,D,8,0,1",
        )
        .unwrap();
        let ps = yen_k_shortest_by_name(&t, "S", "D", 3).unwrap();
        (t, ps)
    }

    fn set_path(view: &mut ControllerView, p: &Path, values: &[f64]) {
        for (l, v) in p.links.iter().zip(values) {
            view.set_backlog(*l, *v).unwrap();
        }
    }

    #[test]
    fn path_backlog_is_max() {
        let (t, ps) = diamond();
        let mut v = ControllerView::new(&t, ViewMode::Exact);
        assert_eq!(path_backlog(&v, &ps.paths[0]).unwrap(), 0.0);
        set_path(&mut v, &ps.paths[0], &[5.0, 2.0]);
        assert_eq!(path_backlog(&v, &ps.paths[0]).unwrap(), 5.0);
    }

    #[test]
    fn three_link_path_backlog() {
        let t = parse_topology("A,B,8,0,1\nB,C,8,0,1\nC,D,8,0,1").unwrap();
        let ps = yen_k_shortest_by_name(&t, "A", "D", 1).unwrap();
        let mut v = ControllerView::new(&t, ViewMode::Exact);
        set_path(&mut v, &ps.paths[0], &[0.1, 0.7, 0.7]);
        assert_eq!(path_backlog(&v, &ps.paths[0]).unwrap(), 0.7);
    }

    #[test]
    fn mbp_argmin_and_ties() {
        let (t, ps) = diamond();
        let mut v = ControllerView::new(&t, ViewMode::Exact);
        assert_eq!(select_mbp(&v, &ps).unwrap(), 0);
        set_path(&mut v, &ps.paths[0], &[5.0, 0.0]);
        set_path(&mut v, &ps.paths[1], &[2.0, 0.0]);
        set_path(&mut v, &ps.paths[2], &[2.0, 1.0]);
        assert_eq!(select_mbp(&v, &ps).unwrap(), 1);
        let empty = PathSet { src: ps.src, dst: ps.dst, paths: vec![] };
        assert_eq!(select_mbp(&v, &empty), Err(PolicyError::EmptyPathSet));
    }

    #[test]
    fn unknown_link_is_reported() {
        let (t, ps) = diamond();
        let small = parse_topology("S,A,8,0,1").unwrap();
        let v = ControllerView::new(&small, ViewMode::Exact);
        assert!(matches!(
            path_backlog(&v, &ps.paths[2]),
            Err(PolicyError::UnknownLink(_))
        ));
        let _ = t;
    }

    #[test]
    fn weighted_random_degenerate_and_malformed() {
        let mut rng = StreamRng::new(1, 2);
        for _ in 0..1000 {
            assert_eq!(select_weighted_random(&[1.0, 0.0, 0.0], &mut rng).unwrap(), 0);
        }
        assert!(select_weighted_random(&[0.5, 0.6], &mut rng).is_err());
        assert!(select_weighted_random(&[], &mut rng).is_err());
    }

    #[test]
    fn weighted_random_one_third_frequency() {
        let mut rng = StreamRng::new(1, policy_stream_id());
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| select_weighted_random(&[1.0 / 3.0, 2.0 / 3.0], &mut rng).unwrap() == 0)
            .count();
        let f = hits as f64 / n as f64;
        assert!((0.328..=0.339).contains(&f), "{f}");
    }

    #[test]
    fn thresholded_branches() {
        let (t, ps) = diamond();
        let v = ControllerView::new(&t, ViewMode::Exact);
        let mut rng = StreamRng::new(3, 0);
        let w = [0.0, 0.0, 1.0];
        let d = select_thresholded(&v, &ps, 3e6, 2.5e6, &w, &mut rng).unwrap();
        assert_eq!(d.branch, Branch::Mbp);
        assert_eq!(d.path_index, 0);
        let d = select_thresholded(&v, &ps, 1e6, 2.5e6, &w, &mut rng).unwrap();
        assert_eq!(d.branch, Branch::Random);
        assert_eq!(d.path_index, 2);
        assert_eq!(d.max_backlog, None);
    }

    #[test]
    fn allocation_progress_completion() {
        let t = parse_topology("A,B,8,0,1").unwrap();
        let ps = yen_k_shortest_by_name(&t, "A", "B", 1).unwrap();
        let p = &ps.paths[0];
        for mode in [ViewMode::Exact, ViewMode::CounterEstimate] {
            let mut v = ControllerView::new(&t, mode);
            v.on_allocation(p, 10e6).unwrap();
            assert_eq!(v.backlog(p.links[0]).unwrap(), 10.0);
            v.on_link_progress(p.links[0], 4e6, 4.0).unwrap();
            assert!((v.backlog(p.links[0]).unwrap() - 6.0).abs() < 1e-12);
            v.on_progress(p, 6e6 - 1.0).unwrap();
            v.on_completion(p, 1.0).unwrap();
            assert_eq!(v.backlog(p.links[0]).unwrap(), 0.0);
            assert_eq!(v.on_progress(p, -1.0), Err(PolicyError::NegativeProgress(-1.0)));
        }
    }

    #[test]
    fn counter_estimate_drains_at_most_capacity() {
        let t = parse_topology("A,B,8,0,1").unwrap();
        let ps = yen_k_shortest_by_name(&t, "A", "B", 1).unwrap();
        let p = &ps.paths[0];
        let mut exact = ControllerView::new(&t, ViewMode::Exact);
        let mut counter = ControllerView::new(&t, ViewMode::CounterEstimate);
        for v in [&mut exact, &mut counter] {
            v.on_allocation(p, 10e6).unwrap();
            // report more bytes than 1 s of capacity allows
            v.on_link_progress(p.links[0], 3e6, 1.0).unwrap();
        }
        assert!((exact.backlog(p.links[0]).unwrap() - 7.0).abs() < 1e-12);
        assert!((counter.backlog(p.links[0]).unwrap() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn policy_threshold_validation_and_missing_weights() {
        assert_eq!(
            Policy::new(PolicyKind::ThresholdedMbp { threshold: -1.0 }, WeightAssignment::new(), 0)
                .unwrap_err(),
            PolicyError::NegativeThreshold(-1.0)
        );
        let (t, ps) = diamond();
        let v = ControllerView::new(&t, ViewMode::Exact);
        let mut wr = Policy::new(PolicyKind::WeightedRandom, WeightAssignment::new(), 0).unwrap();
        assert!(matches!(wr.decide(&v, &ps, 1.0), Err(PolicyError::MissingWeights(_))));
        let mut mbp = Policy::mbp();
        assert_eq!(mbp.decide(&v, &ps, 1.0).unwrap().branch, Branch::Mbp);
    }
}
