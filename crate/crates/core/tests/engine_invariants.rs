//! Fair sharing and fluid transfer against independent oracles.

mod common;

use mbp_core::engine::{check_max_min, compute_fair_rates, run, EngineConfig, RunResult};
use mbp_core::experiment::{load_scenario, ExperimentConfig};
use mbp_core::kpaths::{build_pathsets, PathSets};
use mbp_core::minmlu::{compute_min_mlu_weights, DemandMatrix};
use mbp_core::policies::{Policy, PolicyKind};
use mbp_core::topology::{LinkId, NodeIdx, Topology};
use mbp_core::traffic::{generate_arrivals, FlowArrival, SizeDistribution, MB};
use proptest::prelude::*;

use common::{max_min_certificate, random_graph, replay, water_fill};

fn random_flows(topo: &Topology, count: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = mbp_core::traffic::StreamRng::new(seed, 0x666c);
    let n = topo.node_count();
    let mut out = Vec::new();
    for _ in 0..count * 10 {
        if out.len() == count {
            break;
        }
        let s = (rng.uniform() * n as f64) as usize;
        let d = (rng.uniform() * n as f64) as usize;
        if s == d {
            continue;
        }
        if let Ok(ps) = mbp_core::kpaths::yen_k_shortest(topo, NodeIdx(s), NodeIdx(d), 3) {
            if ps.paths.is_empty() {
                continue;
            }
            let k = (rng.uniform() * ps.paths.len() as f64) as usize;
            out.push(ps.paths[k].links.iter().map(|l| l.0).collect());
        }
    }
    out
}

fn capacities(topo: &Topology) -> Vec<f64> {
    topo.links().iter().map(|l| l.capacity).collect()
}

/// Every ordered pair with a path, each offering `mbps`.
fn all_pairs(topo: &Topology, mbps: f64, mean: f64) -> (DemandMatrix, PathSets) {
    let mut dm = DemandMatrix::new();
    for s in 0..topo.node_count() {
        for d in 0..topo.node_count() {
            let pair = (NodeIdx(s), NodeIdx(d));
            if s != d && !common::all_simple_paths(topo, pair.0, pair.1).is_empty() {
                dm.insert_load(pair, mbps * 125_000.0, mean).unwrap();
            }
        }
    }
    let ps = build_pathsets(topo, &dm.pairs(), 3).unwrap();
    (dm, ps)
}

fn assert_conserves_bytes(topo: &Topology, pathsets: &PathSets, result: &RunResult, tol: f64) {
    let r = replay(topo, pathsets, result);
    assert!(r.worst_capacity_excess <= 1e-9);
    assert_eq!(r.bottleneck_violations, 0);
    for (f, got) in result.flows.iter().zip(&r.bytes) {
        assert!(
            (got - f.size).abs() <= tol * f.size,
            "flow {} got {got} of {} bytes",
            f.id,
            f.size
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fair_rates_equal_water_filling(
        n in 2usize..=7,
        seed in any::<u64>(),
        count in 1usize..40,
    ) {
        let topo = random_graph(n, 0.6, 3, seed);
        let flows = random_flows(&topo, count, seed);
        let caps = capacities(&topo);
        let ids: Vec<Vec<LinkId>> = flows.iter().map(|p| p.iter().map(|&l| LinkId(l)).collect()).collect();
        let refs: Vec<&[LinkId]> = ids.iter().map(Vec::as_slice).collect();
        let got = compute_fair_rates(&refs, &topo).unwrap();
        let want = water_fill(&flows, &caps);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-9 * w.max(1.0), "{g} vs {w}");
        }
        let (excess, missing) = max_min_certificate(&flows, &got, &caps, 1e-9);
        prop_assert!(excess <= 1e-9);
        prop_assert_eq!(missing, 0);
        let (excess, missing) = check_max_min(&refs, &got, &topo);
        prop_assert!(excess <= 1e-9);
        prop_assert_eq!(missing, 0);
    }

    #[test]
    fn small_runs_conserve_bytes_and_respect_bottlenecks(
        n in 2usize..=5,
        seed in any::<u64>(),
        mbp in any::<bool>(),
    ) {
        let topo = random_graph(n, 0.7, 3, seed);
        let (dm, ps) = all_pairs(&topo, 2.0, MB);
        prop_assume!(!dm.is_empty());
        let arrivals = generate_arrivals(&topo, &dm, &SizeDistribution::pareto_with_mean(MB, 1.5).unwrap(), 4.0, seed).unwrap();
        prop_assume!(!arrivals.is_empty() && arrivals.len() < 400);
        let mut policy = if mbp {
            Policy::mbp()
        } else {
            let w = compute_min_mlu_weights(&topo, &dm, &ps).unwrap().weights;
            Policy::new(PolicyKind::WeightedRandom, w, seed).unwrap()
        };
        let cfg = EngineConfig { check_invariants: true, ..Default::default() };
        let result = run(&arrivals, &topo, &ps, &mut policy, &cfg).unwrap();
        prop_assert_eq!(result.flows.len(), arrivals.len());
        let inv = result.invariants.clone().unwrap();
        prop_assert!(inv.max_capacity_excess <= 1e-9);
        prop_assert_eq!(inv.bottleneck_violations, 0);
        prop_assert!(inv.max_view_error <= 1e-6);
        assert_conserves_bytes(&topo, &ps, &result, 1e-6);
        for (f, a) in result.flows.iter().zip(&arrivals) {
            prop_assert_eq!(f.id, a.flow_id);
            let path = &ps[&(f.src, f.dst)].paths[f.path_index];
            let slowest = path.links.iter().map(|l| topo.link(*l).capacity).fold(f64::INFINITY, f64::min);
            // never faster than the path's narrowest link alone
            prop_assert!(f.completion - f.arrival >= f.size / slowest * (1.0 - 1e-9));
            let expected = f.completion - f.arrival + 2.0 * path.latency(&topo);
            prop_assert!((f.response_time - expected).abs() <= 1e-12 * expected.max(1.0));
        }
    }
}

fn abilene_run(flows: usize, kind: PolicyKind) -> (Topology, PathSets, Vec<FlowArrival>, RunResult) {
    let scenario = load_scenario(&ExperimentConfig::default()).unwrap();
    let dist = SizeDistribution::pareto_with_mean(3.0 * MB, 1.5).unwrap();
    let rate: f64 = scenario.demands.iter().map(|(_, d)| d.arrival_rate).sum();
    let horizon = 1.2 * flows as f64 / rate;
    let mut arrivals = generate_arrivals(&scenario.topology, &scenario.demands, &dist, horizon, 11).unwrap();
    arrivals.truncate(flows);
    let weights = compute_min_mlu_weights(&scenario.topology, &scenario.demands, &scenario.pathsets)
        .unwrap()
        .weights;
    let mut policy = Policy::new(kind, weights, 11).unwrap();
    let cfg = EngineConfig { check_invariants: true, ..Default::default() };
    let result = run(&arrivals, &scenario.topology, &scenario.pathsets, &mut policy, &cfg).unwrap();
    (scenario.topology, scenario.pathsets, arrivals, result)
}

#[test]
fn abilene_run_matches_the_replay() {
    for kind in [PolicyKind::Mbp, PolicyKind::ThresholdedMbp { threshold: 3.0 * MB }] {
        let (topo, ps, arrivals, result) = abilene_run(2_000, kind);
        assert_eq!(result.flows.len(), arrivals.len());
        let inv = result.invariants.clone().unwrap();
        assert!(inv.recomputations > 0);
        assert!(inv.max_capacity_excess <= 1e-9);
        assert_eq!(inv.bottleneck_violations, 0);
        assert!(inv.max_byte_error <= 1e-6);
        assert!(inv.max_view_error <= 1e-6);
        assert_conserves_bytes(&topo, &ps, &result, 1e-6);
        let carried: f64 = result
            .link_mean_utilization
            .iter()
            .zip(topo.links())
            .map(|(u, l)| u * l.capacity * result.end_time)
            .sum();
        let expected: f64 = result
            .flows
            .iter()
            .map(|f| f.size * ps[&(f.src, f.dst)].paths[f.path_index].links.len() as f64)
            .sum();
        assert!((carried - expected).abs() <= 1e-6 * expected);
    }
}

#[test]
fn runs_are_deterministic() {
    let (_, _, _, a) = abilene_run(500, PolicyKind::WeightedRandom);
    let (_, _, _, b) = abilene_run(500, PolicyKind::WeightedRandom);
    assert_eq!(a, b);
}

#[test]
fn counter_view_matches_exact_view_decisions_on_a_single_link() {
    // with one path per pair, the view cannot change any decision
    let topo = mbp_core::topology::parse_topology("A,B,8,0.001,1").unwrap();
    let (dm, ps) = all_pairs(&topo, 4.0, MB);
    let arrivals = generate_arrivals(&topo, &dm, &SizeDistribution::Deterministic { size: MB }, 50.0, 3).unwrap();
    let mut out = Vec::new();
    for mode in [mbp_core::policies::ViewMode::Exact, mbp_core::policies::ViewMode::CounterEstimate] {
        let cfg = EngineConfig { view_mode: mode, check_invariants: false };
        out.push(run(&arrivals, &topo, &ps, &mut Policy::mbp(), &cfg).unwrap().flows);
    }
    assert_eq!(out[0], out[1]);
}
