//! Browser bindings for the simulator. Each export returns a JSON string;
//! errors surface as rejected calls with a message.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use mbp_core::experiment::{load_scenario, run_comparison_on, run_motivating_example, ExperimentConfig};
use mbp_core::kpaths::build_pathsets;
use mbp_core::minmlu::{compute_min_mlu_weights, scale_demands};
use mbp_core::topology::parse_topology;
use mbp_core::traffic::{parse_traffic_matrix, MB};

/// Longest arrival horizon the page may request, in seconds.
pub const MAX_DEMO_HORIZON: f64 = 5.0;

#[derive(Serialize)]
struct PathWeight {
    nodes: Vec<String>,
    weight: f64,
}

#[derive(Serialize)]
struct PairWeights {
    src: String,
    dst: String,
    paths: Vec<PathWeight>,
}

#[derive(Serialize)]
struct WeightsOut {
    mlu: f64,
    feasible: bool,
    link_utilization: Vec<(String, String, f64)>,
    pairs: Vec<PairWeights>,
}

#[derive(Serialize)]
struct CompareOut {
    scale: f64,
    lp_t: f64,
    flows: usize,
    weighted_random_s: f64,
    mbp_s: f64,
    gain: f64,
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

/// The three-node example for one seed: mean response times at each
/// checkpoint and the final gain.
pub fn motivating_json(seed: u64) -> Result<String, String> {
    let r = run_motivating_example(seed).map_err(|e| e.to_string())?;
    to_json(&r)
}

/// Min-MLU path weights for a topology and traffic matrix given as CSV text.
/// An empty topology means the built-in Abilene network with its shipped
/// matrix.
pub fn min_mlu_json(topology_csv: &str, traffic_csv: &str, k: usize, scale: f64) -> Result<String, String> {
    let (topo, base) = if topology_csv.trim().is_empty() {
        let s = load_scenario(&ExperimentConfig::default()).map_err(|e| e.to_string())?;
        (s.topology, s.demands)
    } else {
        let topo = parse_topology(topology_csv).map_err(|e| format!("topology: {e}"))?;
        let dm = parse_traffic_matrix(traffic_csv, &topo, MB).map_err(|e| format!("traffic: {e}"))?;
        (topo, dm)
    };
    if k == 0 {
        return Err("k must be at least 1".into());
    }
    let demands = scale_demands(&base, scale).map_err(|e| e.to_string())?;
    let pathsets = build_pathsets(&topo, &demands.pairs(), k).map_err(|e| e.to_string())?;
    let lp = compute_min_mlu_weights(&topo, &demands, &pathsets).map_err(|e| e.to_string())?;
    let name = |n| topo.node_name(n).to_string();
    let pairs = lp
        .weights
        .iter()
        .map(|(pair, w)| PairWeights {
            src: name(pair.0),
            dst: name(pair.1),
            paths: pathsets[&pair]
                .paths
                .iter()
                .zip(w)
                .map(|(p, &weight)| PathWeight {
                    nodes: p.nodes.iter().map(|&n| name(n)).collect(),
                    weight,
                })
                .collect(),
        })
        .collect();
    let link_utilization = topo
        .links()
        .iter()
        .zip(&lp.utilizations)
        .map(|(l, u)| (name(l.src), name(l.dst), *u))
        .collect();
    to_json(&WeightsOut {
        mlu: lp.mlu,
        feasible: lp.feasible,
        link_utilization,
        pairs,
    })
}

/// One replication of MBP against Weighted Random on Abilene at `scale`.
/// The horizon is capped at [`MAX_DEMO_HORIZON`] to keep the page responsive.
pub fn compare_json(scale: f64, horizon: f64, mean_size: f64, seed: u64) -> Result<String, String> {
    if !(horizon > 0.0 && horizon <= MAX_DEMO_HORIZON) {
        return Err(format!("horizon must lie in (0, {MAX_DEMO_HORIZON}] seconds"));
    }
    let mut cfg = ExperimentConfig::default();
    cfg.scales = vec![scale];
    cfg.horizon = horizon;
    cfg.mean_size = mean_size;
    cfg.seed = seed;
    cfg.reps = 1;
    let scenario = load_scenario(&cfg).map_err(|e| e.to_string())?;
    let report = run_comparison_on(&cfg, &scenario).map_err(|e| e.to_string())?;
    let gain = report.gain(scale).ok_or("scale is infeasible (min-MLU above 1)")?;
    let mean = |p: &str| report.policy_mean(scale, p).unwrap_or(f64::NAN);
    to_json(&CompareOut {
        scale,
        lp_t: report.scales[0].lp_t,
        flows: report.rows[0].flows,
        weighted_random_s: mean("weighted_random"),
        mbp_s: mean("mbp"),
        gain,
    })
}

#[wasm_bindgen]
pub fn motivating(seed: u32) -> Result<String, JsValue> {
    motivating_json(seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn min_mlu(topology_csv: &str, traffic_csv: &str, k: u32, scale: f64) -> Result<String, JsValue> {
    min_mlu_json(topology_csv, traffic_csv, k as usize, scale).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn compare(scale: f64, horizon: f64, mean_size: f64, seed: u32) -> Result<String, JsValue> {
    compare_json(scale, horizon, mean_size, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn motivating_reports_three_checkpoints() {
        let v: serde_json::Value = serde_json::from_str(&motivating_json(1).unwrap()).unwrap();
        assert_eq!(v["checkpoints"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn builtin_min_mlu_matches_the_operating_point() {
        let v: serde_json::Value = serde_json::from_str(&min_mlu_json("", "", 3, 1.0).unwrap()).unwrap();
        assert!((v["mlu"].as_f64().unwrap() - 0.603).abs() < 1e-6);
        assert_eq!(v["pairs"].as_array().unwrap().len(), 110);
    }

    #[test]
    fn bad_inputs_are_errors() {
        assert!(min_mlu_json("A,B,x,0,1", "", 3, 1.0).is_err());
        assert!(min_mlu_json("", "", 0, 1.0).is_err());
        assert!(compare_json(1.0, 100.0, MB, 1).is_err());
        assert!(compare_json(3.0, 1.0, MB, 1).is_err());
    }
}
