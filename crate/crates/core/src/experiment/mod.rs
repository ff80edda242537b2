//! Experiment orchestration: policy comparisons across load scales,
//! threshold sweeps, the three-node motivating example, and CSV reports.
//!
//! Every (scale, replication) cell draws one arrival stream from the master
//! seed plus the replication index and replays it under each policy, so the
//! policies are compared on identical inputs. Cells are independent and run
//! in parallel when the `parallel` feature is on; results are always merged
//! in cell order, which keeps reports byte-stable.

pub mod config;
pub mod motivating;
pub mod report;
pub mod synthetic;

use std::path::PathBuf;

use thiserror::Error;

use crate::engine::{run, EngineConfig, EngineError, RunResult};
use crate::kpaths::{build_pathsets, KPathsError, PathSets};
use crate::minmlu::{compute_min_mlu_weights, scale_demands, DemandMatrix, MinMluError};
use crate::policies::{Policy, PolicyError, PolicyKind};
use crate::topology::{build_abilene, parse_topology, Topology, TopologyError};
use crate::traffic::{generate_arrivals, parse_traffic_matrix, stream_hash, TrafficError};

pub use config::{ConfigError, DistKind, ExperimentConfig, TopologySource, TrafficSource};
pub use motivating::{run_motivating_example, MotivatingReport};
pub use report::{emit_report, ComparisonReport, ScaleRow, StreamRow, SummaryRow, ThresholdRow};

use synthetic::{calibrate_to_mlu, gravity_matrix, uniform_masses, CalibrationError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("topology: {0}")]
    Topology(#[from] TopologyError),
    #[error("traffic: {0}")]
    Traffic(#[from] TrafficError),
    #[error("paths: {0}")]
    Paths(#[from] KPathsError),
    #[error("min-MLU: {0}")]
    MinMlu(#[from] MinMluError),
    #[error("calibration: {0}")]
    Calibration(#[from] CalibrationError),
    #[error("simulation: {0}")]
    Engine(#[from] EngineError),
    #[error("policy: {0}")]
    Policy(#[from] PolicyError),
    #[error("no flow arrived after the warm-up at scale {scale}, replication {replication}")]
    NoFlows { scale: f64, replication: usize },
    #[error("every configured scale is infeasible (min-MLU above 1)")]
    AllInfeasible,
    #[error("scenario was loaded with mean size {scenario} B but the configuration asks for {config} B")]
    MeanSizeMismatch { scenario: f64, config: f64 },
}

/// Topology, unscaled demands and candidate paths of an experiment.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub topology: Topology,
    pub demands: DemandMatrix,
    pub pathsets: PathSets,
}

fn read(path: &PathBuf) -> Result<String, ExperimentError> {
    std::fs::read_to_string(path).map_err(|source| ExperimentError::Read {
        path: path.clone(),
        source,
    })
}

/// Loads the topology, loads or synthesizes the demand matrix, and computes
/// the K shortest paths of every demand pair.
pub fn load_scenario(cfg: &ExperimentConfig) -> Result<Scenario, ExperimentError> {
    let topology = match &cfg.topology {
        TopologySource::Abilene => build_abilene(),
        TopologySource::File(p) => parse_topology(&read(p)?)?,
    };
    let demands = match (&cfg.traffic, &cfg.topology) {
        (TrafficSource::File(p), _) => parse_traffic_matrix(&read(p)?, &topology, cfg.mean_size)?,
        (TrafficSource::Builtin, TopologySource::Abilene) => {
            parse_traffic_matrix(synthetic::ABILENE_MATRIX_CSV, &topology, cfg.mean_size)?
        }
        (TrafficSource::Builtin, TopologySource::File(_)) => {
            let base = gravity_matrix(&topology, &uniform_masses(&topology), 1_000.0, cfg.mean_size)?;
            calibrate_to_mlu(&topology, &base, cfg.k, synthetic::ABILENE_TARGET_MLU)?.0
        }
    };
    let pathsets = build_pathsets(&topology, &demands.pairs(), cfg.k)?;
    Ok(Scenario {
        topology,
        demands,
        pathsets,
    })
}

/// The demands fix each pair's arrival rate for one mean size; running them
/// under another configuration would silently change the flow count.
fn check_scenario(cfg: &ExperimentConfig, scenario: &Scenario) -> Result<(), ExperimentError> {
    match scenario.demands.iter().find(|(_, d)| d.mean_size != cfg.mean_size) {
        Some((_, d)) => Err(ExperimentError::MeanSizeMismatch {
            scenario: d.mean_size,
            config: cfg.mean_size,
        }),
        None => Ok(()),
    }
}

/// Seed of replication `rep`.
pub fn replication_seed(master: u64, rep: usize) -> u64 {
    master.wrapping_add(rep as u64)
}

#[cfg(feature = "parallel")]
fn map_cells<T, R, F>(cells: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    cells.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_cells<T, R, F>(cells: Vec<T>, f: F) -> Vec<R>
where
    F: Fn(T) -> R,
{
    cells.into_iter().map(f).collect()
}

/// Mean response time, flow count and MBP-branch count over the flows that
/// arrived at or after `warmup`.
pub fn measured_means(result: &RunResult, warmup: f64) -> (f64, usize, usize) {
    let mut sum = 0.0;
    let mut n = 0;
    let mut mbp = 0;
    for f in result.flows.iter().filter(|f| f.arrival >= warmup) {
        sum += f.response_time;
        n += 1;
        if f.branch == crate::policies::Branch::Mbp {
            mbp += 1;
        }
    }
    (if n == 0 { f64::NAN } else { sum / n as f64 }, n, mbp)
}

/// `(wr - x) / wr`, the relative response-time reduction against Weighted
/// Random.
pub fn reduction_gain(weighted_random: f64, other: f64) -> f64 {
    (weighted_random - other) / weighted_random
}

/// Mean of the per-replication means, summed in replication order.
pub fn mean_over_reps(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

struct CellOutput {
    rows: Vec<SummaryRow>,
    stream: StreamRow,
    exports: Vec<(String, String)>,
}

fn run_cell(
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    scale: f64,
    demands: &DemandMatrix,
    weights: &crate::minmlu::WeightAssignment,
    policies: &[PolicyKind],
    replication: usize,
) -> Result<CellOutput, ExperimentError> {
    let seed = replication_seed(cfg.seed, replication);
    let dist = cfg.size_distribution()?;
    let arrivals = generate_arrivals(&scenario.topology, demands, &dist, cfg.horizon, seed)?;
    let engine_cfg = EngineConfig {
        view_mode: cfg.view,
        ..EngineConfig::default()
    };
    let warmup = cfg.warmup_seconds();
    let mut rows = Vec::with_capacity(policies.len());
    let mut exports = Vec::new();
    for kind in policies {
        let mut policy = Policy::new(kind.clone(), weights.clone(), seed)?;
        let result = run(
            &arrivals,
            &scenario.topology,
            &scenario.pathsets,
            &mut policy,
            &engine_cfg,
        )?;
        let (mean, flows, mbp_allocations) = measured_means(&result, warmup);
        if flows == 0 {
            return Err(ExperimentError::NoFlows { scale, replication });
        }
        log::debug!(
            "scale {scale} rep {replication} {}: {flows} flows, mean {mean}",
            kind.label()
        );
        if cfg.export_flows && replication == 0 {
            let stem = format!("{}_scale{}", kind.label(), scale);
            exports.push((
                format!("flows_{stem}.csv"),
                report::flows_csv(&scenario.topology, &result),
            ));
            exports.push((
                format!("decisions_{stem}.csv"),
                report::decisions_csv(&result, &kind.label()),
            ));
        }
        rows.push(SummaryRow {
            scale,
            policy: kind.label(),
            replication,
            seed,
            flows,
            mean_response: mean,
            peak_mlu: result.achieved_mlu(),
            mbp_allocations,
        });
    }
    Ok(CellOutput {
        rows,
        stream: StreamRow {
            scale,
            replication,
            seed,
            arrivals: arrivals.len(),
            hash: stream_hash(&arrivals),
        },
        exports,
    })
}

struct ScaleSetup {
    row: ScaleRow,
    demands: DemandMatrix,
    weights: crate::minmlu::WeightAssignment,
}

fn setup_scale(scenario: &Scenario, scale: f64) -> Result<ScaleSetup, ExperimentError> {
    let demands = scale_demands(&scenario.demands, scale)?;
    let lp = compute_min_mlu_weights(&scenario.topology, &demands, &scenario.pathsets)?;
    if !lp.feasible {
        log::warn!("scale {scale}: min-MLU {} exceeds 1, scale skipped", lp.mlu);
    }
    Ok(ScaleSetup {
        row: ScaleRow {
            scale,
            lp_t: lp.lp_objective,
            mlu: lp.mlu,
            feasible: lp.feasible,
        },
        demands,
        weights: lp.weights,
    })
}

fn run_grid(
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    setups: &[ScaleSetup],
    policies: &[PolicyKind],
) -> Result<Vec<CellOutput>, ExperimentError> {
    let cells: Vec<(usize, usize)> = setups
        .iter()
        .enumerate()
        .filter(|(_, s)| s.row.feasible)
        .flat_map(|(i, _)| (0..cfg.reps).map(move |r| (i, r)))
        .collect();
    map_cells(cells, |(i, rep)| {
        let s = &setups[i];
        run_cell(cfg, scenario, s.row.scale, &s.demands, &s.weights, policies, rep)
    })
    .into_iter()
    .collect()
}

fn base_report(cfg: &ExperimentConfig) -> ComparisonReport {
    ComparisonReport {
        config_text: cfg.to_text(),
        ..ComparisonReport::default()
    }
}

/// Runs every configured policy at every configured scale.
///
/// Scales whose min-MLU optimum exceeds 1 are reported as infeasible and
/// skipped. A gain row is produced for each scale when both `mbp` and
/// `weighted_random` are among the policies.
pub fn run_comparison(cfg: &ExperimentConfig) -> Result<ComparisonReport, ExperimentError> {
    cfg.validate()?;
    let scenario = load_scenario(cfg)?;
    run_comparison_on(cfg, &scenario)
}

/// [`run_comparison`] on an already loaded scenario.
pub fn run_comparison_on(
    cfg: &ExperimentConfig,
    scenario: &Scenario,
) -> Result<ComparisonReport, ExperimentError> {
    cfg.validate()?;
    check_scenario(cfg, scenario)?;
    let setups: Vec<ScaleSetup> = cfg
        .scales
        .iter()
        .map(|&s| setup_scale(scenario, s))
        .collect::<Result<_, _>>()?;
    if setups.iter().all(|s| !s.row.feasible) {
        return Err(ExperimentError::AllInfeasible);
    }
    let cells = run_grid(cfg, scenario, &setups, &cfg.policies)?;
    let mut report = base_report(cfg);
    report.scales = setups.iter().map(|s| s.row.clone()).collect();
    for cell in cells {
        report.rows.extend(cell.rows);
        report.streams.push(cell.stream);
        report.exports.extend(cell.exports);
    }
    let mbp = PolicyKind::Mbp.label();
    let wr = PolicyKind::WeightedRandom.label();
    for s in report.scales.iter().filter(|s| s.feasible) {
        let (Some(m), Some(w)) = (
            report.policy_mean(s.scale, &mbp),
            report.policy_mean(s.scale, &wr),
        ) else {
            continue;
        };
        report.gains.push((s.scale, reduction_gain(w, m)));
    }
    Ok(report)
}

/// Thresholded MBP at every configured threshold against Weighted Random,
/// at the configured sweep scale.
pub fn run_threshold_sweep(cfg: &ExperimentConfig) -> Result<ComparisonReport, ExperimentError> {
    cfg.validate()?;
    let scenario = load_scenario(cfg)?;
    run_threshold_sweep_on(cfg, &scenario)
}

/// [`run_threshold_sweep`] on an already loaded scenario.
pub fn run_threshold_sweep_on(
    cfg: &ExperimentConfig,
    scenario: &Scenario,
) -> Result<ComparisonReport, ExperimentError> {
    cfg.validate()?;
    check_scenario(cfg, scenario)?;
    let setup = setup_scale(scenario, cfg.sweep_scale)?;
    if !setup.row.feasible {
        return Err(ExperimentError::AllInfeasible);
    }
    let mut policies = vec![PolicyKind::WeightedRandom];
    policies.extend(
        cfg.thresholds
            .iter()
            .map(|&threshold| PolicyKind::ThresholdedMbp { threshold }),
    );
    let setups = [setup];
    let cells = run_grid(cfg, scenario, &setups, &policies)?;
    let mut report = base_report(cfg);
    report.scales = vec![setups[0].row.clone()];
    for cell in cells {
        report.rows.extend(cell.rows);
        report.streams.push(cell.stream);
        report.exports.extend(cell.exports);
    }
    let scale = cfg.sweep_scale;
    let wr = report
        .policy_mean(scale, &PolicyKind::WeightedRandom.label())
        .expect("weighted random always runs");
    for &threshold in &cfg.thresholds {
        let label = PolicyKind::ThresholdedMbp { threshold }.label();
        let mean = report.policy_mean(scale, &label).expect("every threshold runs");
        let (flows, allocations) = report
            .rows
            .iter()
            .filter(|r| r.scale == scale && r.policy == label)
            .fold((0usize, 0usize), |(f, a), r| (f + r.flows, a + r.mbp_allocations));
        report.thresholds.push(ThresholdRow {
            threshold,
            gain: reduction_gain(wr, mean),
            allocation_frequency: allocations as f64 / flows as f64,
        });
    }
    Ok(report)
}
