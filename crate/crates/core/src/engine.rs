//! Flow-level discrete-event simulator.
//!
//! Flows follow the path chosen at arrival and share links max-min fairly
//! (fluid model). Rates are piecewise constant and only change at arrival
//! and completion events. Completion events are scheduled tentatively and
//! carry a per-flow version; a rate change bumps the version so stale
//! entries are skipped when popped.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use serde::Serialize;
use thiserror::Error;

use crate::kpaths::{Path, PathSets};
use crate::policies::{Branch, ControllerView, Policy, PolicyError, ViewMode};
use crate::topology::{LinkId, NodeIdx, Topology};
use crate::traffic::FlowArrival;

/// Relative slack for the capacity and bottleneck certificates.
pub const CERT_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("flow path references unknown link {0}")]
    UnknownLink(LinkId),
    #[error("no path set for demand pair {0:?}")]
    MissingPathSet((NodeIdx, NodeIdx)),
    #[error("arrivals are not time-sorted at flow {0}")]
    UnsortedArrivals(u64),
    #[error("event time went backwards: {from} -> {to}")]
    NonMonotoneTime { from: f64, to: f64 },
    #[error("flow {0} is still pending")]
    Pending(u64),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Max-min fair rates for flows given as link lists, by progressive filling:
/// repeatedly saturate the link with the smallest fair share among the
/// still-growing flows and freeze the flows crossing it.
pub fn compute_fair_rates(paths: &[&[LinkId]], topo: &Topology) -> Result<Vec<f64>, EngineError> {
    let nl = topo.link_count();
    let mut on_link: Vec<Vec<usize>> = vec![Vec::new(); nl];
    for (f, p) in paths.iter().enumerate() {
        for l in p.iter() {
            on_link
                .get_mut(l.0)
                .ok_or(EngineError::UnknownLink(*l))?
                .push(f);
        }
    }
    let mut spare: Vec<f64> = topo.links().iter().map(|l| l.capacity).collect();
    let mut growing: Vec<usize> = on_link.iter().map(Vec::len).collect();
    let mut rate = vec![0.0; paths.len()];
    let mut frozen = vec![false; paths.len()];
    let mut left = paths.iter().filter(|p| !p.is_empty()).count();
    // a flow with an empty path is unconstrained; leave it at rate 0
    while left > 0 {
        let mut bottleneck: Option<(usize, f64)> = None;
        for e in 0..nl {
            if growing[e] == 0 {
                continue;
            }
            let share = spare[e].max(0.0) / growing[e] as f64;
            if bottleneck.map_or(true, |(_, s)| share < s) {
                bottleneck = Some((e, share));
            }
        }
        let Some((e, share)) = bottleneck else { break };
        for &f in &on_link[e] {
            if frozen[f] {
                continue;
            }
            frozen[f] = true;
            rate[f] = share;
            left -= 1;
            for l in paths[f].iter() {
                spare[l.0] -= share;
                growing[l.0] -= 1;
            }
        }
    }
    Ok(rate)
}

/// Certificate of a max-min allocation: per-link load never exceeds
/// capacity and every flow crosses a saturated link on which no other flow
/// gets more. Returns `(max relative capacity excess, flows without a
/// bottleneck)`.
pub fn check_max_min(paths: &[&[LinkId]], rates: &[f64], topo: &Topology) -> (f64, usize) {
    let nl = topo.link_count();
    let mut load = vec![0.0; nl];
    let mut top = vec![0.0_f64; nl];
    for (p, r) in paths.iter().zip(rates) {
        for l in p.iter() {
            load[l.0] += r;
            top[l.0] = top[l.0].max(*r);
        }
    }
    let mut excess = 0.0_f64;
    for (l, link) in topo.links().iter().enumerate() {
        excess = excess.max((load[l] - link.capacity) / link.capacity);
    }
    let missing = paths
        .iter()
        .zip(rates)
        .filter(|(p, _)| !p.is_empty())
        .filter(|(p, r)| {
            !p.iter().any(|l| {
                let c = topo.link(*l).capacity;
                load[l.0] >= c * (1.0 - CERT_TOL) && **r >= top[l.0] - c * CERT_TOL
            })
        })
        .count();
    (excess.max(0.0), missing)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EngineConfig {
    pub view_mode: ViewMode,
    /// Check the max-min certificate, byte conservation and (in exact mode)
    /// the incremental backlog view at every rate recomputation.
    pub check_invariants: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            view_mode: ViewMode::Exact,
            check_invariants: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowRecord {
    pub id: u64,
    pub src: NodeIdx,
    pub dst: NodeIdx,
    pub size: f64,
    pub arrival: f64,
    /// Time the last byte left the fluid model.
    pub completion: f64,
    pub response_time: f64,
    pub path_index: usize,
    pub branch: Branch,
    /// Backlog of the chosen path when the policy read the view.
    pub max_backlog: Option<f64>,
}

/// Worst values seen by the invariant checks of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct InvariantReport {
    pub recomputations: u64,
    pub max_capacity_excess: f64,
    pub bottleneck_violations: u64,
    pub max_byte_error: f64,
    pub max_view_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunResult {
    /// One record per flow, sorted by flow id.
    pub flows: Vec<FlowRecord>,
    /// Largest instantaneous utilization seen on each link.
    pub link_peak_utilization: Vec<f64>,
    /// Carried bytes over capacity times the run length.
    pub link_mean_utilization: Vec<f64>,
    pub event_count: u64,
    pub end_time: f64,
    pub invariants: Option<InvariantReport>,
}

impl RunResult {
    pub fn delivered_bytes(&self) -> f64 {
        self.flows.iter().map(|f| f.size).sum()
    }

    /// Largest time-averaged link utilization.
    pub fn achieved_mlu(&self) -> f64 {
        self.link_mean_utilization.iter().copied().fold(0.0, f64::max)
    }

    pub fn mbp_allocations(&self) -> usize {
        self.flows.iter().filter(|f| f.branch == Branch::Mbp).count()
    }
}

/// One content transfer inside the simulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Flow {
    pub id: u64,
    pub path: Path,
    pub path_index: usize,
    pub size: f64,
    /// Bytes not yet transferred; never negative.
    pub remaining: f64,
    pub arrival_time: f64,
    pub current_rate: f64,
    pub completion_time: Option<f64>,
    branch: Branch,
    max_backlog: Option<f64>,
    delivered: f64,
    version: u64,
}

impl Flow {
    pub fn new(id: u64, path: Path, path_index: usize, size: f64, arrival_time: f64) -> Self {
        Self {
            id,
            path,
            path_index,
            size,
            remaining: size,
            arrival_time,
            current_rate: 0.0,
            completion_time: None,
            branch: Branch::Mbp,
            max_backlog: None,
            delivered: 0.0,
            version: 0,
        }
    }
}

/// Transfer time plus the one-way path latency and the same latency again
/// for the acknowledgement on the reverse path.
pub fn response_time(flow: &Flow, topo: &Topology) -> Result<f64, EngineError> {
    let done = flow.completion_time.ok_or(EngineError::Pending(flow.id))?;
    Ok(done - flow.arrival_time + 2.0 * flow.path.latency(topo))
}

#[derive(PartialEq)]
struct Completion {
    time: f64,
    flow: u64,
    version: u64,
}

impl Eq for Completion {}

impl Ord for Completion {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.flow.cmp(&other.flow))
            .then(self.version.cmp(&other.version))
    }
}

impl PartialOrd for Completion {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct World<'a> {
    topo: &'a Topology,
    pathsets: &'a PathSets,
    config: EngineConfig,
    now: f64,
    active: BTreeMap<u64, Flow>,
    queue: BinaryHeap<Reverse<Completion>>,
    view: ControllerView,
    carried: Vec<f64>,
    peak: Vec<f64>,
    done: Vec<FlowRecord>,
    events: u64,
    report: InvariantReport,
}

impl<'a> World<'a> {
    fn advance(&mut self, to: f64) -> Result<(), EngineError> {
        if to < self.now {
            return Err(EngineError::NonMonotoneTime {
                from: self.now,
                to,
            });
        }
        let dt = to - self.now;
        if dt > 0.0 {
            let mut moved_on = vec![0.0; self.topo.link_count()];
            for f in self.active.values_mut() {
                let moved = f.current_rate * dt;
                f.delivered += moved;
                f.remaining -= moved;
                if f.remaining < 0.0 {
                    // overshoot by rounding only; completion is already due
                    f.remaining = 0.0;
                }
                for l in &f.path.links {
                    moved_on[l.0] += moved;
                }
            }
            for (l, bytes) in moved_on.into_iter().enumerate() {
                if bytes > 0.0 {
                    self.carried[l] += bytes;
                    self.view.on_link_progress(LinkId(l), bytes, dt)?;
                }
            }
        }
        self.now = to;
        Ok(())
    }

    fn arrive(&mut self, a: FlowArrival, policy: &mut Policy) -> Result<(), EngineError> {
        let pair = (a.src, a.dst);
        let ps = self
            .pathsets
            .get(&pair)
            .ok_or(EngineError::MissingPathSet(pair))?;
        let d = policy.decide(&self.view, ps, a.size)?;
        let path = &ps.paths[d.path_index];
        self.view.on_allocation(path, a.size)?;
        let mut flow = Flow::new(a.flow_id, path.clone(), d.path_index, a.size, a.arrival_time);
        flow.branch = d.branch;
        flow.max_backlog = d.max_backlog;
        self.active.insert(a.flow_id, flow);
        Ok(())
    }

    fn complete(&mut self, id: u64) -> Result<(), EngineError> {
        let mut f = self.active.remove(&id).expect("valid completion event");
        self.view.on_completion(&f.path, f.remaining)?;
        if self.config.check_invariants {
            let err = (f.delivered - f.size).abs() / f.size;
            self.report.max_byte_error = self.report.max_byte_error.max(err);
        }
        f.remaining = 0.0;
        f.completion_time = Some(self.now);
        self.done.push(FlowRecord {
            id,
            src: f.path.src,
            dst: f.path.dst,
            size: f.size,
            arrival: f.arrival_time,
            completion: self.now,
            response_time: response_time(&f, self.topo)?,
            path_index: f.path_index,
            branch: f.branch,
            max_backlog: f.max_backlog,
        });
        Ok(())
    }

    fn recompute(&mut self) -> Result<(), EngineError> {
        let ids: Vec<u64> = self.active.keys().copied().collect();
        let paths: Vec<&[LinkId]> = self.active.values().map(|f| f.path.links.as_slice()).collect();
        let rates = compute_fair_rates(&paths, self.topo)?;
        if self.config.check_invariants {
            let (excess, missing) = check_max_min(&paths, &rates, self.topo);
            self.report.recomputations += 1;
            self.report.max_capacity_excess = self.report.max_capacity_excess.max(excess);
            self.report.bottleneck_violations += missing as u64;
            if self.view.mode() == ViewMode::Exact {
                let scratch = exact_backlog(self.topo, self.active.values().map(|f| (&f.path.links[..], f.remaining)));
                let err = scratch
                    .iter()
                    .zip(self.view.backlogs())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                self.report.max_view_error = self.report.max_view_error.max(err);
            }
        }
        let mut load = vec![0.0; self.topo.link_count()];
        for (id, r) in ids.into_iter().zip(rates) {
            let f = self.active.get_mut(&id).unwrap();
            for l in &f.path.links {
                load[l.0] += r;
            }
            if f.current_rate != r || f.version == 0 {
                f.current_rate = r;
                f.version += 1;
                if r > 0.0 {
                    self.queue.push(Reverse(Completion {
                        time: self.now + f.remaining / r,
                        flow: id,
                        version: f.version,
                    }));
                }
            }
        }
        for (l, link) in self.topo.links().iter().enumerate() {
            self.peak[l] = self.peak[l].max(load[l] / link.capacity);
        }
        if self.queue.len() > 4 * self.active.len() + 64 {
            let active = &self.active;
            let kept: Vec<_> = std::mem::take(&mut self.queue)
                .into_iter()
                .filter(|Reverse(c)| active.get(&c.flow).is_some_and(|f| f.version == c.version))
                .collect();
            self.queue = kept.into();
        }
        Ok(())
    }

    fn next_completion(&mut self) -> Option<(f64, u64)> {
        while let Some(Reverse(c)) = self.queue.peek() {
            match self.active.get(&c.flow) {
                Some(f) if f.version == c.version => return Some((c.time, c.flow)),
                _ => {
                    self.queue.pop();
                }
            }
        }
        None
    }
}

/// Normalized backlog of every link recomputed from scratch:
/// `Σ remaining / capacity` over the flows crossing it.
pub fn exact_backlog<'f>(
    topo: &Topology,
    flows: impl Iterator<Item = (&'f [LinkId], f64)>,
) -> Vec<f64> {
    let mut b = vec![0.0; topo.link_count()];
    for (links, remaining) in flows {
        for l in links {
            b[l.0] += remaining / topo.link(*l).capacity;
        }
    }
    b
}

/// Simulates `arrivals` to drain. Arrivals must be sorted by time; events at
/// the same instant run arrivals first, then completions by flow id.
pub fn run(
    arrivals: &[FlowArrival],
    topo: &Topology,
    pathsets: &PathSets,
    policy: &mut Policy,
    config: &EngineConfig,
) -> Result<RunResult, EngineError> {
    for w in arrivals.windows(2) {
        if w[1].arrival_time < w[0].arrival_time {
            return Err(EngineError::UnsortedArrivals(w[1].flow_id));
        }
    }
    let mut world = World {
        topo,
        pathsets,
        config: *config,
        now: 0.0,
        active: BTreeMap::new(),
        queue: BinaryHeap::new(),
        view: ControllerView::new(topo, config.view_mode),
        carried: vec![0.0; topo.link_count()],
        peak: vec![0.0; topo.link_count()],
        done: Vec::with_capacity(arrivals.len()),
        events: 0,
        report: InvariantReport::default(),
    };
    let mut next = 0;
    loop {
        let arrival_at = arrivals.get(next).map(|a| a.arrival_time);
        let completion = world.next_completion();
        match (arrival_at, completion) {
            (None, None) => break,
            (Some(t), c) if c.map_or(true, |(ct, _)| t <= ct) => {
                world.advance(t)?;
                world.arrive(arrivals[next], policy)?;
                next += 1;
            }
            (_, Some((t, id))) => {
                world.advance(t)?;
                world.complete(id)?;
            }
            (Some(_), None) => unreachable!(),
        }
        world.events += 1;
        world.recompute()?;
    }
    debug_assert!(world.active.is_empty());

    world.done.sort_by_key(|f| f.id);
    let end = world.now;
    let mean = world
        .carried
        .iter()
        .zip(topo.links())
        .map(|(b, l)| if end > 0.0 { b / (l.capacity * end) } else { 0.0 })
        .collect();
    Ok(RunResult {
        flows: world.done,
        link_peak_utilization: world.peak,
        link_mean_utilization: mean,
        event_count: world.events,
        end_time: end,
        invariants: config.check_invariants.then_some(world.report),
    })
}
