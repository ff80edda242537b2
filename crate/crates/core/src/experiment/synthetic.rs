//! Gravity-model traffic matrices.

use crate::kpaths::{build_pathsets, KPathsError, PathSets};
use crate::minmlu::{compute_min_mlu_weights, scale_demands, DemandMatrix, MinMluError};
use crate::topology::{Topology, BYTES_PER_SEC_PER_MBPS};

/// Equal mass for every node of `topo`: each ordered pair offers the same
/// load, so no pair is favoured by assumption.
pub fn uniform_masses(topo: &Topology) -> Vec<(&str, f64)> {
    topo.nodes().iter().map(|n| (n.as_str(), 1.0)).collect()
}

/// Min-MLU optimum the shipped Abilene matrix is calibrated to.
pub const ABILENE_TARGET_MLU: f64 = 0.603;

/// Offered load `s -> d` proportional to `mass(s)·mass(d)`, normalized so
/// the loads sum to `total_mbps`. Nodes missing from `masses` get none.
pub fn gravity_matrix(
    topo: &Topology,
    masses: &[(&str, f64)],
    total_mbps: f64,
    mean_size: f64,
) -> Result<DemandMatrix, MinMluError> {
    let resolved: Vec<_> = masses
        .iter()
        .filter_map(|(n, m)| topo.node_index(n).map(|i| (i, *m)))
        .collect();
    let mut norm = 0.0;
    for (s, ms) in &resolved {
        for (d, md) in &resolved {
            if s != d {
                norm += ms * md;
            }
        }
    }
    let mut dm = DemandMatrix::new();
    for (s, ms) in &resolved {
        for (d, md) in &resolved {
            if s != d {
                let mbps = total_mbps * ms * md / norm;
                dm.insert_load((*s, *d), mbps * BYTES_PER_SEC_PER_MBPS, mean_size)?;
            }
        }
    }
    Ok(dm)
}

#[derive(Debug, thiserror::Error)]
pub enum CalibrationError {
    #[error(transparent)]
    Paths(#[from] KPathsError),
    #[error(transparent)]
    MinMlu(#[from] MinMluError),
}

/// Rescales `dm` so that its min-MLU optimum over `k` shortest paths equals
/// `target`. The optimum is linear in a common demand scale, so one solve
/// suffices.
pub fn calibrate_to_mlu(
    topo: &Topology,
    dm: &DemandMatrix,
    k: usize,
    target: f64,
) -> Result<(DemandMatrix, PathSets), CalibrationError> {
    let pathsets = build_pathsets(topo, &dm.pairs(), k)?;
    let base = compute_min_mlu_weights(topo, dm, &pathsets)?;
    let scaled = scale_demands(dm, target / base.mlu)?;
    Ok((scaled, pathsets))
}

/// Header comment of the shipped Abilene matrix file.
pub const ABILENE_MATRIX_PREAMBLE: &str = "\
# Synthetic Abilene traffic matrix (offered load per ordered pair, Mbps).
# Uniform gravity model scaled so that the min-MLU optimum over the three
# shortest OSPF paths is 0.603. Regenerate with abilene_matrix_csv().
";

/// The shipped Abilene matrix, as text.
pub const ABILENE_MATRIX_CSV: &str = include_str!("../../data/abilene_tm.csv");

/// Produces the text of the shipped Abilene matrix from scratch.
pub fn abilene_matrix_csv(topo: &Topology) -> Result<String, CalibrationError> {
    let base = gravity_matrix(topo, &uniform_masses(topo), 10_000.0, 1.0)?;
    let (dm, _) = calibrate_to_mlu(topo, &base, crate::kpaths::DEFAULT_K, ABILENE_TARGET_MLU)?;
    Ok(format!(
        "{ABILENE_MATRIX_PREAMBLE}{}",
        crate::traffic::traffic_matrix_to_csv(topo, &dm)
    ))
}
