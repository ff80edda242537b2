//! Min-MLU path splitting.
//!
//! Given per-pair offered loads and candidate paths, finds split weights
//! `π[s,d][k]` minimizing the maximum link utilization `t`:
//!
//! ```text
//! minimize t
//!   s.t. Σ_k π[s,d][k] = 1                          for every demand pair
//!        Σ_{(s,d,k) ∋ e} π[s,d][k]·λ[s,d]·z̄[s,d] / c_e <= t   for every link e
//!        π >= 0
//! ```
//!
//! The `t <= 1` stability bound is not imposed on the program; a solution
//! with `t > 1` is returned and flagged infeasible so load sweeps can probe
//! saturation.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::kpaths::PathSets;
use crate::lp::{LinearProgram, LpError, Relation};
use crate::topology::{NodeIdx, Topology};

pub type Pair = (NodeIdx, NodeIdx);

#[derive(Debug, Error, PartialEq)]
pub enum MinMluError {
    #[error("demand {0} -> {1} has no candidate paths")]
    MissingPaths(String, String),
    #[error("demand {0} -> {1} has no weight vector")]
    MissingWeights(String, String),
    #[error("weight vector for {src} -> {dst} has length {found}, expected {expected}")]
    WeightLength {
        src: String,
        dst: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid weights for {0} -> {1}: entries must lie in [0,1] and sum to 1")]
    InvalidWeights(String, String),
    #[error("demand from a node to itself ({0})")]
    SelfDemand(String),
    #[error("arrival rate must be non-negative, got {0}")]
    NegativeRate(f64),
    #[error("mean size must be positive, got {0}")]
    NonPositiveSize(f64),
    #[error("scale factor must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("weights file line {line}: {message}")]
    WeightsFile { line: usize, message: String },
    #[error(transparent)]
    Lp(#[from] LpError),
}

fn pair_names(topo: &Topology, (s, d): Pair) -> (String, String) {
    (topo.node_name(s).to_string(), topo.node_name(d).to_string())
}

/// Poisson arrival rate and mean content size of one demand pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Demand {
    /// Flows per second.
    pub arrival_rate: f64,
    /// Mean content size in bytes.
    pub mean_size: f64,
}

impl Demand {
    /// Offered load in bytes/second.
    pub fn offered_load(&self) -> f64 {
        self.arrival_rate * self.mean_size
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DemandMatrix {
    entries: BTreeMap<Pair, Demand>,
}

impl DemandMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, pair: Pair, demand: Demand) -> Result<(), MinMluError> {
        if pair.0 == pair.1 {
            return Err(MinMluError::SelfDemand(format!("#{}", pair.0 .0)));
        }
        if !(demand.arrival_rate >= 0.0) || !demand.arrival_rate.is_finite() {
            return Err(MinMluError::NegativeRate(demand.arrival_rate));
        }
        if !(demand.mean_size > 0.0) || !demand.mean_size.is_finite() {
            return Err(MinMluError::NonPositiveSize(demand.mean_size));
        }
        self.entries.insert(pair, demand);
        Ok(())
    }

    /// Inserts a pair given its offered load; the arrival rate is derived as
    /// `load / mean_size`.
    pub fn insert_load(
        &mut self,
        pair: Pair,
        load: f64,
        mean_size: f64,
    ) -> Result<(), MinMluError> {
        if !(mean_size > 0.0) {
            return Err(MinMluError::NonPositiveSize(mean_size));
        }
        self.insert(
            pair,
            Demand {
                arrival_rate: load / mean_size,
                mean_size,
            },
        )
    }

    pub fn get(&self, pair: Pair) -> Option<&Demand> {
        self.entries.get(&pair)
    }

    pub fn offered_load(&self, pair: Pair) -> f64 {
        self.get(pair).map_or(0.0, Demand::offered_load)
    }

    /// Entries in sorted `(src, dst)` order.
    pub fn iter(&self) -> impl Iterator<Item = (Pair, &Demand)> {
        self.entries.iter().map(|(p, d)| (*p, d))
    }

    pub fn pairs(&self) -> Vec<Pair> {
        self.entries.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_load(&self) -> f64 {
        self.entries.values().map(Demand::offered_load).sum()
    }

    /// Replaces the mean size of every pair while keeping offered loads.
    pub fn with_mean_size(&self, mean_size: f64) -> Result<Self, MinMluError> {
        let mut out = Self::new();
        for (p, d) in self.iter() {
            out.insert_load(p, d.offered_load(), mean_size)?;
        }
        Ok(out)
    }
}

/// Multiplies every arrival rate by `factor`; mean sizes are unchanged.
pub fn scale_demands(demands: &DemandMatrix, factor: f64) -> Result<DemandMatrix, MinMluError> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(MinMluError::NonPositiveScale(factor));
    }
    let mut out = DemandMatrix::new();
    for (p, d) in demands.iter() {
        out.insert(
            p,
            Demand {
                arrival_rate: d.arrival_rate * factor,
                mean_size: d.mean_size,
            },
        )?;
    }
    Ok(out)
}

/// Per-pair path split probabilities, indexed like the pair's path set.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct WeightAssignment {
    weights: BTreeMap<Pair, Vec<f64>>,
}

impl WeightAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, pair: Pair, w: Vec<f64>) {
        self.weights.insert(pair, w);
    }

    pub fn get(&self, pair: Pair) -> Option<&[f64]> {
        self.weights.get(&pair).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Pair, &[f64])> {
        self.weights.iter().map(|(p, w)| (*p, w.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Every vector must be a probability vector: entries in `[0,1]` summing
    /// to 1 within 1e-9.
    pub fn validate(&self, topo: &Topology) -> Result<(), MinMluError> {
        for (p, w) in self.iter() {
            if !is_probability_vector(w) {
                let (s, d) = pair_names(topo, p);
                return Err(MinMluError::InvalidWeights(s, d));
            }
        }
        Ok(())
    }

    /// One uniform split per pair, e.g. for a path-count-agnostic baseline.
    pub fn uniform(pathsets: &PathSets) -> Self {
        let mut out = Self::new();
        for (p, ps) in pathsets {
            let n = ps.len().max(1);
            out.insert(*p, vec![1.0 / n as f64; n]);
        }
        out
    }

    /// Writes `src,dst,path_index,weight` rows with 12 significant digits.
    /// Path indices are 0-based positions in the pair's path set.
    pub fn to_csv(&self, topo: &Topology) -> String {
        let mut out = String::from("src,dst,path_index,weight\n");
        for ((s, d), w) in self.iter() {
            for (k, v) in w.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    topo.node_name(s),
                    topo.node_name(d),
                    k,
                    format_sig12(*v)
                ));
            }
        }
        out
    }
}

pub fn is_probability_vector(w: &[f64]) -> bool {
    !w.is_empty()
        && w.iter().all(|v| (0.0..=1.0).contains(v))
        && (w.iter().sum::<f64>() - 1.0).abs() <= 1e-9
}

/// Formats with 12 significant digits, trailing zeros trimmed.
pub fn format_sig12(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{}", if v == 0.0 { 0.0 } else { v });
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (11 - magnitude).max(0) as usize;
    let s = format!("{:.*}", decimals, v);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Parses a weight export. Each pair's vector must cover its path set and
/// sum to 1 (within the rounding of 12 significant digits); vectors are
/// renormalized on load.
pub fn parse_weights(
    text: &str,
    topo: &Topology,
    pathsets: &PathSets,
) -> Result<WeightAssignment, MinMluError> {
    let mut raw: BTreeMap<Pair, BTreeMap<usize, f64>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("src,") {
            continue;
        }
        let err = |m: String| MinMluError::WeightsFile {
            line: line_no,
            message: m,
        };
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(err(format!("expected 4 columns, found {}", cols.len())));
        }
        let s = topo
            .node_index(cols[0])
            .ok_or_else(|| err(format!("unknown node {}", cols[0])))?;
        let d = topo
            .node_index(cols[1])
            .ok_or_else(|| err(format!("unknown node {}", cols[1])))?;
        let k: usize = cols[2]
            .parse()
            .map_err(|_| err(format!("invalid path index {:?}", cols[2])))?;
        let w: f64 = cols[3]
            .parse()
            .map_err(|_| err(format!("invalid weight {:?}", cols[3])))?;
        if raw.entry((s, d)).or_default().insert(k, w).is_some() {
            return Err(err(format!("duplicate entry for path {k}")));
        }
    }
    let mut out = WeightAssignment::new();
    for (pair, entries) in raw {
        let (sn, dn) = pair_names(topo, pair);
        let expected = pathsets.get(&pair).map_or(0, |p| p.len());
        if entries.len() != expected || entries.keys().any(|k| *k >= expected) {
            return Err(MinMluError::WeightLength {
                src: sn,
                dst: dn,
                expected,
                found: entries.len(),
            });
        }
        let v: Vec<f64> = entries.into_values().collect();
        let sum: f64 = v.iter().sum();
        if v.iter().any(|x| !(0.0..=1.0).contains(x)) || (sum - 1.0).abs() > 1e-9 {
            return Err(MinMluError::InvalidWeights(sn, dn));
        }
        out.insert(pair, v.into_iter().map(|x| x / sum).collect());
    }
    Ok(out)
}

/// Utilization of every link (indexed by `LinkId`) under the given split:
/// `u_e = Σ λ·π·z̄ / c_e` over the paths crossing `e`.
pub fn link_utilizations(
    topo: &Topology,
    demands: &DemandMatrix,
    pathsets: &PathSets,
    weights: &WeightAssignment,
) -> Result<Vec<f64>, MinMluError> {
    let mut load = vec![0.0; topo.link_count()];
    for (pair, d) in demands.iter() {
        let ps = pathsets.get(&pair);
        let w = weights.get(pair);
        let (ps, w) = match (ps, w) {
            (Some(ps), Some(w)) => (ps, w),
            _ if d.offered_load() == 0.0 => continue,
            (None, _) => {
                let (s, d) = pair_names(topo, pair);
                return Err(MinMluError::MissingPaths(s, d));
            }
            (_, None) => {
                let (s, d) = pair_names(topo, pair);
                return Err(MinMluError::MissingWeights(s, d));
            }
        };
        if w.len() != ps.len() {
            let (s, dn) = pair_names(topo, pair);
            return Err(MinMluError::WeightLength {
                src: s,
                dst: dn,
                expected: ps.len(),
                found: w.len(),
            });
        }
        for (path, pi) in ps.paths.iter().zip(w) {
            let carried = d.offered_load() * pi;
            for l in &path.links {
                load[l.0] += carried;
            }
        }
    }
    Ok(load
        .into_iter()
        .zip(topo.links())
        .map(|(b, l)| b / l.capacity)
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinMluResult {
    pub weights: WeightAssignment,
    /// Maximum link utilization of `weights`.
    pub mlu: f64,
    /// Objective value reported by the solver, before weight cleanup.
    pub lp_objective: f64,
    pub utilizations: Vec<f64>,
    /// False when the optimum exceeds 1, i.e. no split keeps every link
    /// below capacity.
    pub feasible: bool,
}

/// Solves the min-MLU program. Zero-load pairs get weight `(1, 0, …, 0)`.
/// Variables are laid out in sorted pair order then path-set order, which
/// fixes the vertex the simplex returns when the optimum is degenerate.
pub fn compute_min_mlu_weights(
    topo: &Topology,
    demands: &DemandMatrix,
    pathsets: &PathSets,
) -> Result<MinMluResult, MinMluError> {
    let mut weights = WeightAssignment::new();
    let mut active: Vec<(Pair, f64, usize)> = Vec::new();
    let mut num_vars = 0;
    for (pair, d) in demands.iter() {
        let ps = pathsets.get(&pair);
        let n = ps.map_or(0, |p| p.len());
        if d.offered_load() == 0.0 {
            if n > 0 {
                let mut w = vec![0.0; n];
                w[0] = 1.0;
                weights.insert(pair, w);
            }
            continue;
        }
        if n == 0 {
            let (s, d) = pair_names(topo, pair);
            return Err(MinMluError::MissingPaths(s, d));
        }
        active.push((pair, d.offered_load(), num_vars));
        num_vars += n;
    }
    let t_var = num_vars;
    let mut objective = vec![0.0; num_vars + 1];
    objective[t_var] = 1.0;
    let mut lp = LinearProgram::minimize(objective);

    let mut link_rows: Vec<Vec<f64>> = vec![Vec::new(); topo.link_count()];
    for &(pair, load, offset) in &active {
        let ps = &pathsets[&pair];
        let mut row = vec![0.0; num_vars + 1];
        for k in 0..ps.len() {
            row[offset + k] = 1.0;
        }
        lp.add_constraint(row, Relation::Eq, 1.0)?;
        for (k, path) in ps.paths.iter().enumerate() {
            for l in &path.links {
                let r = &mut link_rows[l.0];
                if r.is_empty() {
                    *r = vec![0.0; num_vars + 1];
                    r[t_var] = -1.0;
                }
                r[offset + k] += load / topo.link(*l).capacity;
            }
        }
    }
    for row in link_rows.into_iter().filter(|r| !r.is_empty()) {
        lp.add_constraint(row, Relation::Le, 0.0)?;
    }

    let lp_objective = if active.is_empty() {
        0.0
    } else {
        let sol = lp.solve()?;
        for &(pair, _, offset) in &active {
            let n = pathsets[&pair].len();
            let mut w: Vec<f64> = sol.x[offset..offset + n]
                .iter()
                .map(|v| v.clamp(0.0, 1.0))
                .collect();
            let sum: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= sum);
            weights.insert(pair, w);
        }
        sol.x[t_var]
    };

    let utilizations = link_utilizations(topo, demands, pathsets, &weights)?;
    let mlu = utilizations.iter().copied().fold(0.0, f64::max);
    log::debug!("min-MLU: lp t = {lp_objective}, recomputed mlu = {mlu}");
    Ok(MinMluResult {
        weights,
        mlu,
        lp_objective,
        utilizations,
        feasible: mlu <= 1.0,
    })
}
