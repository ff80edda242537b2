//! Helpers shared by the integration tests: random instances and
//! brute-force oracles.
#![allow(dead_code)]

use mbp_core::kpaths::{build_pathsets, PathSets};
use mbp_core::minmlu::{DemandMatrix, WeightAssignment};
use mbp_core::topology::{LinkSpec, NodeIdx, Topology};
use mbp_core::traffic::StreamRng;

pub fn node_name(i: usize) -> String {
    format!("n{i}")
}

/// Random directed graph on `n` nodes: each ordered pair gets a link with
/// probability `density`, with an integer OSPF weight in `1..=max_weight`
/// and a capacity between 1 and 100 Mbps.
pub fn random_graph(n: usize, density: f64, max_weight: u32, seed: u64) -> Topology {
    let mut rng = StreamRng::new(seed, 0x6772_6170_68);
    let mut specs = Vec::new();
    for s in 0..n {
        for d in 0..n {
            if s == d || rng.uniform() >= density {
                continue;
            }
            let w = 1 + (rng.uniform() * max_weight as f64) as u32 % max_weight;
            let cap = 1.0 + (rng.uniform() * 99.0).floor();
            specs.push(LinkSpec::new(&node_name(s), &node_name(d), cap, 0.001, w as f64));
        }
    }
    Topology::new((0..n).map(node_name), &specs).unwrap()
}

/// Path weight summed link by link in path order.
pub fn sequence_weight(topo: &Topology, nodes: &[NodeIdx]) -> f64 {
    nodes
        .windows(2)
        .map(|w| topo.link(topo.link_id_between(w[0], w[1]).unwrap()).ospf_weight)
        .fold(0.0, |a, b| a + b)
}

/// Every simple path from `s` to `d` by depth-first search.
pub fn all_simple_paths(topo: &Topology, s: NodeIdx, d: NodeIdx) -> Vec<Vec<NodeIdx>> {
    fn dfs(
        topo: &Topology,
        d: NodeIdx,
        stack: &mut Vec<NodeIdx>,
        seen: &mut Vec<bool>,
        out: &mut Vec<Vec<NodeIdx>>,
    ) {
        let u = *stack.last().unwrap();
        if u == d {
            out.push(stack.clone());
            return;
        }
        for v in 0..topo.node_count() {
            if !seen[v] && topo.link_id_between(u, NodeIdx(v)).is_some() {
                seen[v] = true;
                stack.push(NodeIdx(v));
                dfs(topo, d, stack, seen, out);
                stack.pop();
                seen[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    let mut seen = vec![false; topo.node_count()];
    seen[s.0] = true;
    dfs(topo, d, &mut vec![s], &mut seen, &mut out);
    out
}

/// The `k` best simple paths ranked by weight, then by node sequence.
pub fn exhaustive_top_k(topo: &Topology, s: NodeIdx, d: NodeIdx, k: usize) -> Vec<Vec<NodeIdx>> {
    let mut paths: Vec<(f64, Vec<NodeIdx>)> = all_simple_paths(topo, s, d)
        .into_iter()
        .map(|p| (sequence_weight(topo, &p), p))
        .collect();
    paths.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    paths.into_iter().take(k).map(|(_, p)| p).collect()
}

/// A small random min-MLU instance.
pub struct LpInstance {
    pub topo: Topology,
    pub demands: DemandMatrix,
    pub pathsets: PathSets,
}

/// At most 5 nodes, at most 3 demands and at most 3 paths per demand.
pub fn random_lp_instance(seed: u64) -> LpInstance {
    let mut rng = StreamRng::new(seed, 0x6c70);
    loop {
        let n = 2 + (rng.uniform() * 4.0) as usize;
        let topo = random_graph(n, 0.3 + 0.6 * rng.uniform(), 3, rng.uniform().to_bits());
        let k = 1 + (rng.uniform() * 3.0) as usize;
        let wanted = 1 + (rng.uniform() * 3.0) as usize;
        let mut demands = DemandMatrix::new();
        let mut tries = 0;
        while demands.len() < wanted && tries < 50 {
            tries += 1;
            let s = (rng.uniform() * n as f64) as usize;
            let d = (rng.uniform() * n as f64) as usize;
            let pair = (NodeIdx(s), NodeIdx(d));
            if s == d || demands.get(pair).is_some() || all_simple_paths(&topo, pair.0, pair.1).is_empty() {
                continue;
            }
            // 1 to 60 Mbps against 1 to 100 Mbps links
            let load = (1.0 + 59.0 * rng.uniform()) * 125_000.0;
            demands.insert_load(pair, load, 1e6).unwrap();
        }
        if demands.len() == 0 {
            continue;
        }
        let pathsets = build_pathsets(&topo, &demands.pairs(), k).unwrap();
        return LpInstance { topo, demands, pathsets };
    }
}

/// Link utilizations of a split, computed directly from the definition:
/// each path of each demand contributes `load * weight / capacity` to every
/// link it crosses.
pub fn utilizations_by_definition(inst: &LpInstance, weights: &WeightAssignment) -> Vec<f64> {
    let mut u = vec![0.0; inst.topo.link_count()];
    for (pair, d) in inst.demands.iter() {
        let w = weights.get(pair).unwrap();
        for (path, wk) in inst.pathsets[&pair].paths.iter().zip(w) {
            for l in &path.links {
                u[l.0] += d.offered_load() * wk / inst.topo.link(*l).capacity;
            }
        }
    }
    u
}

/// Per demand, the utilization each of its paths adds to each link at full
/// weight: `coef[demand][path][link]`.
fn path_coefficients(inst: &LpInstance) -> Vec<Vec<Vec<f64>>> {
    inst.demands
        .iter()
        .map(|(pair, d)| {
            inst.pathsets[&pair]
                .paths
                .iter()
                .map(|p| {
                    let mut row = vec![0.0; inst.topo.link_count()];
                    for l in &p.links {
                        row[l.0] += d.offered_load() / inst.topo.link(*l).capacity;
                    }
                    row
                })
                .collect()
        })
        .collect()
}

/// Weight vectors of a simplex with `n` entries on a grid of `steps` parts.
fn simplex_grid(n: usize, steps: u32) -> Vec<Vec<f64>> {
    fn rec(n: usize, left: u32, steps: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<f64>>) {
        if n == 1 {
            cur.push(left);
            out.push(cur.iter().map(|&c| c as f64 / steps as f64).collect());
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(n - 1, left - c, steps, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, steps, steps, &mut Vec::new(), &mut out);
    out
}

/// Searches the weight grid of resolution `1/steps` for a split whose
/// maximum utilization is below `bound`. Returns the first one found, or
/// `None` when the whole grid (pruned by exact lower bounds) is at or above
/// `bound`.
pub fn grid_point_below(inst: &LpInstance, steps: u32, bound: f64) -> Option<f64> {
    let coef = path_coefficients(inst);
    let links = inst.topo.link_count();
    // smallest contribution of demands i.. to each link
    let mut tail_min = vec![vec![0.0; links]; coef.len() + 1];
    for i in (0..coef.len()).rev() {
        for e in 0..links {
            let m = coef[i].iter().map(|row| row[e]).fold(f64::INFINITY, f64::min);
            tail_min[i][e] = tail_min[i + 1][e] + m;
        }
    }
    let grids: Vec<Vec<Vec<f64>>> = coef.iter().map(|c| simplex_grid(c.len(), steps)).collect();

    fn search(
        i: usize,
        base: &[f64],
        coef: &[Vec<Vec<f64>>],
        grids: &[Vec<Vec<f64>>],
        tail_min: &[Vec<f64>],
        steps: u32,
        bound: f64,
    ) -> Option<f64> {
        if i + 1 == coef.len() {
            return last_demand_below(base, &coef[i], steps, bound);
        }
        let mut next = vec![0.0; base.len()];
        for w in &grids[i] {
            let mut lower = 0.0f64;
            for e in 0..base.len() {
                let mut x = base[e];
                for (k, wk) in w.iter().enumerate() {
                    x += coef[i][k][e] * wk;
                }
                next[e] = x;
                lower = lower.max(x + tail_min[i + 1][e]);
            }
            if lower >= bound {
                continue;
            }
            if let Some(v) = search(i + 1, &next, coef, grids, tail_min, steps, bound) {
                return Some(v);
            }
        }
        None
    }
    search(0, &vec![0.0; links], &coef, &grids, &tail_min, steps, bound)
}

fn max_utilization(base: &[f64], coef: &[Vec<f64>], w: &[f64]) -> f64 {
    (0..base.len())
        .map(|e| base[e] + coef.iter().zip(w).map(|(row, wk)| row[e] * wk).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Grid search over the split of one demand, given the utilization `base`
/// of all the others. All coordinates but the last two are enumerated; along
/// the last two every link is a linear constraint, so the admissible grid
/// points form an interval that is computed instead of scanned. Points near
/// its ends are checked by direct evaluation.
fn last_demand_below(base: &[f64], coef: &[Vec<f64>], steps: u32, bound: f64) -> Option<f64> {
    let n = coef.len();
    if n == 1 {
        let v = max_utilization(base, coef, &[1.0]);
        return (v < bound).then_some(v);
    }
    let s = steps as f64;
    for prefix in simplex_prefixes(n - 2, steps) {
        let used: u32 = prefix.iter().sum();
        let rest = steps - used;
        let mut w: Vec<f64> = prefix.iter().map(|&c| c as f64 / s).collect();
        w.push(0.0);
        w.push(0.0);
        let (mut lo, mut hi) = (0.0f64, rest as f64);
        for e in 0..base.len() {
            // utilization at j grid steps on the first free path
            let mut c = base[e] + coef[n - 1][e] * rest as f64 / s;
            for k in 0..n - 2 {
                c += coef[k][e] * w[k];
            }
            let slope = (coef[n - 2][e] - coef[n - 1][e]) / s;
            let room = bound - c;
            if slope > 0.0 {
                hi = hi.min(room / slope);
            } else if slope < 0.0 {
                lo = lo.max(room / slope);
            } else if room <= 0.0 {
                hi = -1.0;
            }
        }
        if hi < lo - 1.0 {
            continue;
        }
        let first = lo.ceil().max(0.0) as i64;
        let last = hi.floor().min(rest as f64) as i64;
        let mut candidates: Vec<i64> = if last - first >= 2 {
            vec![(first + last) / 2]
        } else {
            (first - 1..=last + 1).collect()
        };
        candidates.retain(|&j| j >= 0 && j <= rest as i64);
        for j in candidates {
            w[n - 2] = j as f64 / s;
            w[n - 1] = (rest as i64 - j) as f64 / s;
            let v = max_utilization(base, coef, &w);
            if v < bound {
                return Some(v);
            }
        }
    }
    None
}

/// All non-negative integer vectors of length `n` with sum at most `steps`.
fn simplex_prefixes(n: usize, steps: u32) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        let mut next = Vec::new();
        for p in &out {
            let used: u32 = p.iter().sum();
            for c in 0..=steps - used {
                let mut q = p.clone();
                q.push(c);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// Max-min fair rates by water filling: all unfrozen flows grow at the same
/// pace until a link runs full, whose flows then stop. `paths` hold link
/// indices, `caps` capacities in bytes per second.
pub fn water_fill(paths: &[Vec<usize>], caps: &[f64]) -> Vec<f64> {
    let mut on_link: Vec<Vec<usize>> = vec![Vec::new(); caps.len()];
    for (f, p) in paths.iter().enumerate() {
        for &l in p {
            on_link[l].push(f);
        }
    }
    let mut used = vec![0.0; caps.len()];
    let mut growing: Vec<usize> = on_link.iter().map(Vec::len).collect();
    let mut rates = vec![0.0; paths.len()];
    let mut frozen: Vec<bool> = paths.iter().map(|p| p.is_empty()).collect();
    let mut level = 0.0;
    loop {
        // smallest common increment that fills some link
        let step = (0..caps.len())
            .filter(|&e| growing[e] > 0)
            .map(|e| ((caps[e] - used[e]) / growing[e] as f64).max(0.0))
            .fold(f64::INFINITY, f64::min);
        if step.is_infinite() {
            break;
        }
        level += step;
        for e in 0..caps.len() {
            used[e] += step * growing[e] as f64;
        }
        for e in 0..caps.len() {
            if growing[e] == 0 || used[e] < caps[e] * (1.0 - 1e-12) {
                continue;
            }
            for &f in &on_link[e] {
                if !frozen[f] {
                    frozen[f] = true;
                    rates[f] = level;
                    for &l in &paths[f] {
                        growing[l] -= 1;
                    }
                }
            }
        }
    }
    rates
}

/// Max-min certificate of `rates`: the worst relative capacity excess and
/// the number of flows with no bottleneck, i.e. no saturated link on their
/// path where they get at least as much as every other flow.
pub fn max_min_certificate(paths: &[Vec<usize>], rates: &[f64], caps: &[f64], tol: f64) -> (f64, usize) {
    let mut load = vec![0.0; caps.len()];
    let mut top = vec![0.0f64; caps.len()];
    for (p, r) in paths.iter().zip(rates) {
        for &l in p {
            load[l] += r;
            top[l] = top[l].max(*r);
        }
    }
    let excess = load
        .iter()
        .zip(caps)
        .map(|(x, c)| (x - c) / c)
        .fold(0.0f64, f64::max);
    let missing = paths
        .iter()
        .zip(rates)
        .filter(|(p, r)| {
            !p.is_empty()
                && !p.iter().any(|&l| load[l] >= caps[l] * (1.0 - tol) && **r >= top[l] * (1.0 - tol))
        })
        .count();
    (excess, missing)
}

/// Outcome of replaying a finished run with [`water_fill`].
pub struct Replay {
    /// Bytes each flow receives between its arrival and recorded completion.
    pub bytes: Vec<f64>,
    pub intervals: usize,
    pub worst_capacity_excess: f64,
    pub bottleneck_violations: usize,
}

/// Rebuilds the active set between consecutive event instants from the
/// recorded arrival and completion times, allocates max-min rates to it and
/// integrates the bytes of every flow.
pub fn replay(topo: &Topology, pathsets: &PathSets, result: &mbp_core::engine::RunResult) -> Replay {
    let caps: Vec<f64> = topo.links().iter().map(|l| l.capacity).collect();
    let links: Vec<Vec<usize>> = result
        .flows
        .iter()
        .map(|f| {
            pathsets[&(f.src, f.dst)].paths[f.path_index]
                .links
                .iter()
                .map(|l| l.0)
                .collect()
        })
        .collect();
    let mut times: Vec<f64> = result
        .flows
        .iter()
        .flat_map(|f| [f.arrival, f.completion])
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut by_arrival: Vec<usize> = (0..result.flows.len()).collect();
    by_arrival.sort_by(|&a, &b| result.flows[a].arrival.total_cmp(&result.flows[b].arrival));
    let mut out = Replay {
        bytes: vec![0.0; result.flows.len()],
        intervals: 0,
        worst_capacity_excess: 0.0,
        bottleneck_violations: 0,
    };
    let mut active: Vec<usize> = Vec::new();
    let mut next = 0;
    for w in times.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        while next < by_arrival.len() && result.flows[by_arrival[next]].arrival <= t0 {
            active.push(by_arrival[next]);
            next += 1;
        }
        active.retain(|&f| result.flows[f].completion > t0);
        if active.is_empty() {
            continue;
        }
        let paths: Vec<Vec<usize>> = active.iter().map(|&f| links[f].clone()).collect();
        let rates = water_fill(&paths, &caps);
        let (excess, missing) = max_min_certificate(&paths, &rates, &caps, 1e-9);
        out.worst_capacity_excess = out.worst_capacity_excess.max(excess);
        out.bottleneck_violations += missing;
        out.intervals += 1;
        for (&f, r) in active.iter().zip(&rates) {
            out.bytes[f] += r * (t1 - t0);
        }
    }
    out
}
