//! Report tables and their CSV forms.
//!
//! Floats are written in Rust's shortest round-trip notation, so every value
//! read back from a CSV is bit-identical to the one in memory and derived
//! columns can be recomputed exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::ExperimentError;
use crate::engine::RunResult;
use crate::topology::Topology;

pub const SUMMARY_HEADER: &str = "scale,policy,replication,seed,flows,mean_response_s,peak_mlu";
pub const GAINS_HEADER: &str = "scale,gain";
pub const ALLOCATIONS_HEADER: &str = "threshold_bytes,gain,allocation_frequency";
pub const LP_HEADER: &str = "scale,lp_t,mlu,feasible";
pub const STREAMS_HEADER: &str = "scale,replication,seed,arrivals,stream_hash";
pub const FLOWS_HEADER: &str =
    "flow_id,src,dst,size_bytes,arrival_s,completion_s,response_s,path_index,policy_branch";
pub const DECISIONS_HEADER: &str = "flow_id,policy,branch,chosen_path_index,max_backlog_s";

/// One (scale, policy, replication) cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scale: f64,
    pub policy: String,
    pub replication: usize,
    pub seed: u64,
    /// Flows that arrived after the warm-up.
    pub flows: usize,
    pub mean_response: f64,
    /// Largest time-averaged link utilization of the run.
    pub peak_mlu: f64,
    /// Measured flows that took the backlog-aware branch.
    pub mbp_allocations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaleRow {
    pub scale: f64,
    /// Objective of the min-MLU linear program.
    pub lp_t: f64,
    /// Maximum utilization recomputed from the cleaned weights.
    pub mlu: f64,
    pub feasible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdRow {
    pub threshold: f64,
    pub gain: f64,
    pub allocation_frequency: f64,
}

/// Identity of the arrival stream every policy of a cell replayed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StreamRow {
    pub scale: f64,
    pub replication: usize,
    pub seed: u64,
    pub arrivals: usize,
    pub hash: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ComparisonReport {
    /// Key-value echo of the configuration that produced the report.
    pub config_text: String,
    pub scales: Vec<ScaleRow>,
    pub rows: Vec<SummaryRow>,
    /// `(scale, gain)` of MBP against Weighted Random.
    pub gains: Vec<(f64, f64)>,
    pub thresholds: Vec<ThresholdRow>,
    pub streams: Vec<StreamRow>,
    /// Optional per-flow files as `(file name, contents)`.
    #[serde(skip)]
    pub exports: Vec<(String, String)>,
}

impl ComparisonReport {
    /// Mean over replications of a policy's mean response time at `scale`.
    pub fn policy_mean(&self, scale: f64, policy: &str) -> Option<f64> {
        let means: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.scale == scale && r.policy == policy)
            .map(|r| r.mean_response)
            .collect();
        (!means.is_empty()).then(|| super::mean_over_reps(&means))
    }

    pub fn gain(&self, scale: f64) -> Option<f64> {
        self.gains.iter().find(|(s, _)| *s == scale).map(|(_, g)| *g)
    }

    pub fn summary_csv(&self) -> String {
        let mut out = format!("{SUMMARY_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.scale, r.policy, r.replication, r.seed, r.flows, r.mean_response, r.peak_mlu
            );
        }
        out
    }

    pub fn gains_csv(&self) -> String {
        let mut out = format!("{GAINS_HEADER}\n");
        for (s, g) in &self.gains {
            let _ = writeln!(out, "{s},{g}");
        }
        out
    }

    pub fn allocations_csv(&self) -> String {
        let mut out = format!("{ALLOCATIONS_HEADER}\n");
        for t in &self.thresholds {
            let _ = writeln!(out, "{},{},{}", t.threshold, t.gain, t.allocation_frequency);
        }
        out
    }

    pub fn lp_csv(&self) -> String {
        let mut out = format!("{LP_HEADER}\n");
        for s in &self.scales {
            let _ = writeln!(out, "{},{},{},{}", s.scale, s.lp_t, s.mlu, s.feasible);
        }
        out
    }

    pub fn streams_csv(&self) -> String {
        let mut out = format!("{STREAMS_HEADER}\n");
        for s in &self.streams {
            let _ = writeln!(
                out,
                "{},{},{},{},{:016x}",
                s.scale, s.replication, s.seed, s.arrivals, s.hash
            );
        }
        out
    }
}

/// Per-flow records of one run.
pub fn flows_csv(topo: &Topology, result: &RunResult) -> String {
    let mut out = format!("{FLOWS_HEADER}\n");
    for f in &result.flows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            f.id,
            topo.node_name(f.src),
            topo.node_name(f.dst),
            f.size,
            f.arrival,
            f.completion,
            f.response_time,
            f.path_index,
            f.branch.as_str()
        );
    }
    out
}

/// The path decision taken for every flow of one run.
pub fn decisions_csv(result: &RunResult, policy: &str) -> String {
    let mut out = format!("{DECISIONS_HEADER}\n");
    for f in &result.flows {
        let backlog = f.max_backlog.map(|b| b.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            f.id,
            policy,
            f.branch.as_str(),
            f.path_index,
            backlog
        );
    }
    out
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, ExperimentError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| ExperimentError::Write {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes `summary.csv`, `gains.csv`, `allocations.csv`, `lp.csv`,
/// `streams.csv`, the `config.txt` echo and any per-flow exports into `dir`,
/// creating it if needed. Returns the written paths.
pub fn emit_report(report: &ComparisonReport, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = vec![
        write_file(dir, "summary.csv", &report.summary_csv())?,
        write_file(dir, "gains.csv", &report.gains_csv())?,
        write_file(dir, "allocations.csv", &report.allocations_csv())?,
        write_file(dir, "lp.csv", &report.lp_csv())?,
        write_file(dir, "streams.csv", &report.streams_csv())?,
        write_file(dir, "config.txt", &report.config_text)?,
    ];
    for (name, contents) in &report.exports {
        written.push(write_file(dir, name, contents)?);
    }
    Ok(written)
}
