//! Poisson content arrivals and traffic-matrix ingestion.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`) seeded with
//! `seed_from_u64(master_seed)`; each demand pair reads its own ChaCha stream
//! whose 64-bit stream id is the FNV-1a hash of `"<src>\0<dst>"`, so adding or
//! removing pairs never perturbs the arrivals of the others. Uniform variates
//! take the top 53 bits of `next_u64`, and every non-uniform draw is an
//! explicit inverse-CDF transform, which keeps streams reproducible outside
//! this crate.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::Serialize;
use thiserror::Error;

use crate::minmlu::{DemandMatrix, MinMluError, Pair};
use crate::topology::{NodeIdx, Topology, BYTES_PER_SEC_PER_MBPS};

pub const KB: f64 = 1e3;
pub const MB: f64 = 1e6;

/// Default mean content size (bytes).
pub const DEFAULT_MEAN_SIZE: f64 = 3.0 * MB;
pub const DEFAULT_PARETO_SHAPE: f64 = 1.5;
pub const DEFAULT_BIMODAL_SMALL: f64 = 10.0 * KB;
pub const DEFAULT_BIMODAL_LARGE: f64 = 10.0 * MB;

/// Column header of the traffic matrix CSV format.
pub const TRAFFIC_HEADER: &str = "src,dst,rate_mbps";

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("pareto shape must exceed 1 for a finite mean, got {0}")]
    UndefinedMean(f64),
    #[error("content sizes must be positive")]
    NonPositiveSize,
    #[error("probability {0} outside [0,1]")]
    BadProbability(f64),
    #[error("mean {mean} is not reachable with sizes {small} and {large}")]
    UnreachableMean { mean: f64, small: f64, large: f64 },
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unknown node {name}")]
    UnknownNode { line: usize, name: String },
    #[error("line {line}: negative rate {rate}")]
    NegativeRate { line: usize, rate: f64 },
    #[error("line {line}: duplicate pair {src} -> {dst}")]
    DuplicatePair {
        line: usize,
        src: String,
        dst: String,
    },
    #[error("line {line}: demand from {name} to itself")]
    SelfPair { line: usize, name: String },
    #[error(transparent)]
    Demand(#[from] MinMluError),
}

/// Content size law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum SizeDistribution {
    Deterministic { size: f64 },
    Pareto { shape: f64, scale: f64 },
    Bimodal { small: f64, large: f64, p_large: f64 },
}

impl SizeDistribution {
    /// Pareto with the given shape and scale chosen so the mean is `mean`.
    pub fn pareto_with_mean(mean: f64, shape: f64) -> Result<Self, TrafficError> {
        if !(shape > 1.0) {
            return Err(TrafficError::UndefinedMean(shape));
        }
        if !(mean > 0.0) {
            return Err(TrafficError::NonPositiveSize);
        }
        Ok(Self::Pareto {
            shape,
            scale: mean * (shape - 1.0) / shape,
        })
    }

    /// Two-point law with `p_large` solved from the target mean.
    pub fn bimodal_with_mean(mean: f64, small: f64, large: f64) -> Result<Self, TrafficError> {
        if !(small > 0.0 && large > 0.0) {
            return Err(TrafficError::NonPositiveSize);
        }
        if !(mean >= small && mean <= large) || small == large && mean != small {
            return Err(TrafficError::UnreachableMean { mean, small, large });
        }
        let p_large = if large == small {
            0.0
        } else {
            (mean - small) / (large - small)
        };
        Ok(Self::Bimodal {
            small,
            large,
            p_large,
        })
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        match *self {
            Self::Deterministic { size } => {
                if !(size > 0.0) {
                    return Err(TrafficError::NonPositiveSize);
                }
            }
            Self::Pareto { shape, scale } => {
                if !(shape > 1.0) {
                    return Err(TrafficError::UndefinedMean(shape));
                }
                if !(scale > 0.0) {
                    return Err(TrafficError::NonPositiveSize);
                }
            }
            Self::Bimodal {
                small,
                large,
                p_large,
            } => {
                if !(small > 0.0 && large > 0.0) {
                    return Err(TrafficError::NonPositiveSize);
                }
                if !(0.0..=1.0).contains(&p_large) {
                    return Err(TrafficError::BadProbability(p_large));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Deterministic { size } => size,
            Self::Pareto { shape, scale } => shape * scale / (shape - 1.0),
            Self::Bimodal {
                small,
                large,
                p_large,
            } => (1.0 - p_large) * small + p_large * large,
        }
    }

    /// Smallest size `x` with `P(Z <= x) >= p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match *self {
            Self::Deterministic { size } => size,
            Self::Pareto { shape, scale } => {
                if p >= 1.0 {
                    f64::INFINITY
                } else {
                    scale * (1.0 - p).powf(-1.0 / shape)
                }
            }
            Self::Bimodal {
                small,
                large,
                p_large,
            } => {
                if p <= 1.0 - p_large {
                    small
                } else {
                    large
                }
            }
        }
    }

    /// Inverse-CDF transform of a uniform variate in `[0, 1)`.
    pub fn sample_from_uniform(&self, u: f64) -> f64 {
        match *self {
            Self::Deterministic { size } => size,
            Self::Pareto { shape, scale } => scale * (1.0 - u).powf(-1.0 / shape),
            Self::Bimodal {
                small,
                large,
                p_large,
            } => {
                if u < p_large {
                    large
                } else {
                    small
                }
            }
        }
    }

    /// Same law family rescaled so that its mean equals `mean`.
    pub fn rescaled_to_mean(&self, mean: f64) -> Self {
        let f = mean / self.mean();
        match *self {
            Self::Deterministic { .. } => Self::Deterministic { size: mean },
            Self::Pareto { shape, scale } => Self::Pareto {
                shape,
                scale: scale * f,
            },
            Self::Bimodal {
                small,
                large,
                p_large,
            } => Self::Bimodal {
                small: small * f,
                large: large * f,
                p_large,
            },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Deterministic { .. } => "deterministic",
            Self::Pareto { .. } => "pareto",
            Self::Bimodal { .. } => "bimodal",
        }
    }
}

/// A seedable uniform stream.
#[derive(Clone, Debug)]
pub struct StreamRng {
    inner: ChaCha8Rng,
}

impl StreamRng {
    pub fn new(master_seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(stream);
        Self { inner }
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Exponential variate with the given rate.
    pub fn exponential(&mut self, rate: f64) -> f64 {
        -(1.0 - self.uniform()).ln() / rate
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Stream id of a demand pair, stable under changes to other pairs.
pub fn pair_stream_id(src: &str, dst: &str) -> u64 {
    let mut key = Vec::with_capacity(src.len() + dst.len() + 1);
    key.extend_from_slice(src.as_bytes());
    key.push(0);
    key.extend_from_slice(dst.as_bytes());
    fnv1a(&key)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FlowArrival {
    pub flow_id: u64,
    pub src: NodeIdx,
    pub dst: NodeIdx,
    /// Seconds.
    pub arrival_time: f64,
    /// Bytes.
    pub size: f64,
}

/// Arrivals of one pair over `[0, horizon)`, in time order, with `flow_id`
/// left at 0.
pub fn generate_pair_arrivals(
    topo: &Topology,
    pair: Pair,
    arrival_rate: f64,
    dist: &SizeDistribution,
    horizon: f64,
    seed: u64,
) -> Vec<FlowArrival> {
    let mut out = Vec::new();
    if arrival_rate <= 0.0 {
        return out;
    }
    let stream = pair_stream_id(topo.node_name(pair.0), topo.node_name(pair.1));
    let mut rng = StreamRng::new(seed, stream);
    let mut t = 0.0;
    loop {
        t += rng.exponential(arrival_rate);
        if t >= horizon {
            break;
        }
        let size = dist.sample_from_uniform(rng.uniform());
        out.push(FlowArrival {
            flow_id: 0,
            src: pair.0,
            dst: pair.1,
            arrival_time: t,
            size,
        });
    }
    out
}

/// Merged, time-sorted arrival stream for every pair of `demands`.
///
/// Each pair arrives at rate `λ` from the matrix with sizes drawn from `dist`
/// rescaled to the pair's mean size (a no-op when the means agree). Flow ids
/// are assigned 0, 1, … in arrival order.
pub fn generate_arrivals(
    topo: &Topology,
    demands: &DemandMatrix,
    dist: &SizeDistribution,
    horizon: f64,
    seed: u64,
) -> Result<Vec<FlowArrival>, TrafficError> {
    dist.validate()?;
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(TrafficError::BadHorizon(horizon));
    }
    let mut all = Vec::new();
    for (pair, d) in demands.iter() {
        let pair_dist = if (d.mean_size - dist.mean()).abs() <= 1e-9 * dist.mean() {
            *dist
        } else {
            dist.rescaled_to_mean(d.mean_size)
        };
        all.extend(generate_pair_arrivals(
            topo,
            pair,
            d.arrival_rate,
            &pair_dist,
            horizon,
            seed,
        ));
    }
    // stable sort keeps per-pair order; pairs break exact time ties
    all.sort_by(|a, b| {
        a.arrival_time
            .total_cmp(&b.arrival_time)
            .then_with(|| (a.src, a.dst).cmp(&(b.src, b.dst)))
    });
    for (i, a) in all.iter_mut().enumerate() {
        a.flow_id = i as u64;
    }
    Ok(all)
}

/// FNV-1a digest of an arrival stream, used to prove that policies shared
/// identical input.
pub fn stream_hash(arrivals: &[FlowArrival]) -> u64 {
    let mut bytes = Vec::with_capacity(arrivals.len() * 32);
    for a in arrivals {
        bytes.extend_from_slice(&a.flow_id.to_le_bytes());
        bytes.extend_from_slice(&(a.src.0 as u64).to_le_bytes());
        bytes.extend_from_slice(&(a.dst.0 as u64).to_le_bytes());
        bytes.extend_from_slice(&a.arrival_time.to_bits().to_le_bytes());
        bytes.extend_from_slice(&a.size.to_bits().to_le_bytes());
    }
    fnv1a(&bytes)
}

/// Parses a `src,dst,rate_mbps` matrix. Rates are average offered loads in
/// Mbps and become arrival rates `load / mean_size`.
pub fn parse_traffic_matrix(
    text: &str,
    topo: &Topology,
    mean_size: f64,
) -> Result<DemandMatrix, TrafficError> {
    if !(mean_size > 0.0) {
        return Err(TrafficError::NonPositiveSize);
    }
    let mut dm = DemandMatrix::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = s.split(',').map(str::trim).collect();
        if cols.first() == Some(&"src") {
            continue;
        }
        if cols.len() != 3 {
            return Err(TrafficError::Malformed {
                line,
                message: format!("expected 3 columns, found {}", cols.len()),
            });
        }
        let node = |name: &str| {
            topo.node_index(name).ok_or_else(|| TrafficError::UnknownNode {
                line,
                name: name.to_string(),
            })
        };
        let (src, dst) = (node(cols[0])?, node(cols[1])?);
        if src == dst {
            return Err(TrafficError::SelfPair {
                line,
                name: cols[0].to_string(),
            });
        }
        let rate: f64 = cols[2].parse().map_err(|_| TrafficError::Malformed {
            line,
            message: format!("invalid rate {:?}", cols[2]),
        })?;
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(TrafficError::NegativeRate { line, rate });
        }
        if dm.get((src, dst)).is_some() {
            return Err(TrafficError::DuplicatePair {
                line,
                src: cols[0].to_string(),
                dst: cols[1].to_string(),
            });
        }
        dm.insert_load((src, dst), rate * BYTES_PER_SEC_PER_MBPS, mean_size)?;
    }
    Ok(dm)
}

/// Serializes offered loads back to the matrix format, in pair order.
pub fn traffic_matrix_to_csv(topo: &Topology, dm: &DemandMatrix) -> String {
    let mut out = format!("{TRAFFIC_HEADER}\n");
    for ((s, d), dem) in dm.iter() {
        out.push_str(&format!(
            "{},{},{}\n",
            topo.node_name(s),
            topo.node_name(d),
            crate::minmlu::format_sig12(dem.offered_load() / BYTES_PER_SEC_PER_MBPS)
        ));
    }
    out
}
