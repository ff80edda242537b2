//! The three-node motivating example.
//!
//! Nodes 1, 2, 3 with unit-capacity links 1→2, 2→3 and 1→3 (1 MB/s each, no
//! propagation delay). Node 2 sends to node 3 at intensity 0.5 over its only
//! path; node 1 sends to node 3 at intensity 0.5 and may go direct or via
//! node 2. Contents are 1 MB each. The baseline splits node 1's traffic
//! 1/3 via node 2 and 2/3 direct.

use std::fmt::Write as _;

use serde::Serialize;

use super::ExperimentError;
use crate::engine::{run, EngineConfig};
use crate::kpaths::{build_pathsets, PathSets};
use crate::minmlu::{DemandMatrix, WeightAssignment};
use crate::policies::{Policy, PolicyKind};
use crate::topology::{LinkSpec, Topology};
use crate::traffic::{generate_arrivals, stream_hash, SizeDistribution, MB};

/// Contents sent from node 1 to node 3.
pub const MOTIVATING_CONTENTS: usize = 800;
/// Delivered-content counts at which mean response times are reported.
pub const CHECKPOINTS: [usize; 3] = [200, 400, 800];
/// Seeds of the shipped motivating runs.
pub const MOTIVATING_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
pub const MOTIVATING_HEADER: &str =
    "seed,delivered,mbp_mean_response_s,weighted_random_mean_response_s,gain";

/// Link capacity of the example, 1 MB/s.
const UNIT_MBPS: f64 = 8.0;
const INTENSITY: f64 = 0.5;

pub fn motivating_topology() -> Topology {
    let link = |s: &str, d: &str| LinkSpec::new(s, d, UNIT_MBPS, 0.0, 1.0);
    Topology::new(Vec::<String>::new(), &[link("1", "2"), link("2", "3"), link("1", "3")])
        .expect("motivating topology is valid")
}

/// Demands, paths and the fixed 1/3–2/3 weights of the example.
pub fn motivating_setup(topo: &Topology) -> (DemandMatrix, PathSets, WeightAssignment) {
    let n = |name: &str| topo.node_index(name).expect("node exists");
    let capacity = topo.links()[0].capacity;
    let mut demands = DemandMatrix::new();
    let mut weights = WeightAssignment::new();
    for src in ["1", "2"] {
        demands
            .insert_load((n(src), n("3")), INTENSITY * capacity, MB)
            .expect("valid demand");
    }
    let pathsets = build_pathsets(topo, &demands.pairs(), 2).expect("paths exist");
    // path order is [direct, via node 2]
    weights.insert((n("1"), n("3")), vec![2.0 / 3.0, 1.0 / 3.0]);
    weights.insert((n("2"), n("3")), vec![1.0]);
    (demands, pathsets, weights)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Checkpoint {
    pub delivered: usize,
    pub mbp: f64,
    pub weighted_random: f64,
}

impl Checkpoint {
    pub fn gain(&self) -> f64 {
        super::reduction_gain(self.weighted_random, self.mbp)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MotivatingReport {
    pub seed: u64,
    pub stream_hash: u64,
    pub checkpoints: Vec<Checkpoint>,
}

impl MotivatingReport {
    /// Gain at the last checkpoint.
    pub fn final_gain(&self) -> f64 {
        self.checkpoints.last().map_or(f64::NAN, Checkpoint::gain)
    }
}

/// Mean response time of the first `n` contents delivered, in completion
/// order (ties by flow id).
fn checkpoint_means(mut done: Vec<(f64, u64, f64)>) -> Vec<f64> {
    done.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    CHECKPOINTS
        .iter()
        .map(|&n| done[..n].iter().map(|d| d.2).sum::<f64>() / n as f64)
        .collect()
}

/// Runs MBP and the fixed-split baseline on one arrival stream.
pub fn run_motivating_example(seed: u64) -> Result<MotivatingReport, ExperimentError> {
    let topo = motivating_topology();
    let (demands, pathsets, weights) = motivating_setup(&topo);
    let src = topo.node_index("1").expect("node exists");
    let dist = SizeDistribution::Deterministic { size: MB };
    let rate = demands.get((src, topo.node_index("3").expect("node exists")))
        .expect("demand exists")
        .arrival_rate;

    // Enough time for the contents from node 1; the stream is then cut right
    // after the last of them, keeping node 2's arrivals up to that instant.
    let mut horizon = 2.0 * MOTIVATING_CONTENTS as f64 / rate;
    let arrivals = loop {
        let all = generate_arrivals(&topo, &demands, &dist, horizon, seed)?;
        let cut = all
            .iter()
            .enumerate()
            .filter(|(_, a)| a.src == src)
            .nth(MOTIVATING_CONTENTS - 1)
            .map(|(i, _)| i);
        match cut {
            Some(i) => break all[..=i].to_vec(),
            None => horizon *= 2.0,
        }
    };

    let mut means = Vec::new();
    for kind in [PolicyKind::Mbp, PolicyKind::WeightedRandom] {
        let mut policy = Policy::new(kind, weights.clone(), seed)?;
        let result = run(&arrivals, &topo, &pathsets, &mut policy, &EngineConfig::default())?;
        let done: Vec<_> = result
            .flows
            .iter()
            .filter(|f| f.src == src)
            .map(|f| (f.completion, f.id, f.response_time))
            .collect();
        means.push(checkpoint_means(done));
    }
    let checkpoints = CHECKPOINTS
        .iter()
        .enumerate()
        .map(|(i, &delivered)| Checkpoint {
            delivered,
            mbp: means[0][i],
            weighted_random: means[1][i],
        })
        .collect();
    Ok(MotivatingReport {
        seed,
        stream_hash: stream_hash(&arrivals),
        checkpoints,
    })
}

/// One row per (seed, checkpoint).
pub fn motivating_csv(reports: &[MotivatingReport]) -> String {
    let mut out = format!("{MOTIVATING_HEADER}\n");
    for r in reports {
        for c in &r.checkpoints {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.seed,
                c.delivered,
                c.mbp,
                c.weighted_random,
                c.gain()
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minmlu::link_utilizations;

    #[test]
    fn setup_matches_the_described_example() {
        let topo = motivating_topology();
        let (demands, pathsets, weights) = motivating_setup(&topo);
        let u = link_utilizations(&topo, &demands, &pathsets, &weights).unwrap();
        let util = |s: &str, d: &str| {
            let l = topo.link_between(s, d).unwrap().unwrap();
            u[l.id.0]
        };
        assert!((util("2", "3") - (0.5 + 0.5 / 3.0)).abs() < 1e-12);
        assert!((util("1", "3") - 1.0 / 3.0).abs() < 1e-12);
        assert!((util("1", "2") - 0.5 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn report_has_three_checkpoints_and_is_reproducible() {
        let a = run_motivating_example(1).unwrap();
        assert_eq!(a.checkpoints.len(), 3);
        assert_eq!(
            a.checkpoints.iter().map(|c| c.delivered).collect::<Vec<_>>(),
            CHECKPOINTS
        );
        let b = run_motivating_example(1).unwrap();
        assert_eq!(a, b);
        assert_eq!(motivating_csv(&[a]).lines().count(), 4);
    }
}
