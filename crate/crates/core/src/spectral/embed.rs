use std::path::Path;

use serde::Serialize;

use super::laplacian::NormalizedLaplacian;
use super::svd::{truncated_svd, SvdOptions, TruncatedSvd};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::sparse::LinearOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMode {
    None,
    Sqrt,
    Linear,
}

impl ScalingMode {
    fn factor(self, sigma: f64) -> f64 {
        match self {
            ScalingMode::None => 1.0,
            ScalingMode::Sqrt => sigma.sqrt(),
            ScalingMode::Linear => sigma,
        }
    }
}

impl std::str::FromStr for ScalingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "sqrt" => Ok(Self::Sqrt),
            "linear" => Ok(Self::Linear),
            _ => Err(Error::Config(format!("unknown scaling mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedPolicy {
    /// Minimum share of total energy a component must explain.
    pub energy_threshold: f64,
    /// Exclude the leading (degree) component from the coordinates.
    pub drop_first: bool,
    pub scaling: ScalingMode,
    /// 2: shares are `s_i^2 / |L|_F^2`. 1: shares are `s_i / sum_j s_j`,
    /// which needs the full spectrum.
    pub share_exponent: u8,
    /// First decomposition rank tried; doubled until the tail drops below threshold.
    pub start_rank: usize,
    pub svd: SvdOptions,
}

impl Default for EmbedPolicy {
    fn default() -> Self {
        Self {
            energy_threshold: 0.01,
            drop_first: true,
            scaling: ScalingMode::Sqrt,
            share_exponent: 2,
            start_rank: 16,
            svd: SvdOptions::default(),
        }
    }
}

/// Cells in the Laplacian eigenspace.
#[derive(Debug, Clone, Serialize)]
pub struct Embedding {
    /// n rows of d coordinates.
    #[serde(skip)]
    pub coords: Vec<Vec<f64>>,
    /// Singular values of the retained components.
    pub singular_values: Vec<f64>,
    pub component_shares: Vec<f64>,
    pub dropped_first: bool,
    /// Leading singular value and share when it was dropped.
    pub dropped_component: Option<(f64, f64)>,
    pub scaling_mode: ScalingMode,
    /// Every singular value computed while choosing the rank.
    pub computed_singular_values: Vec<f64>,
    pub total_energy: f64,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.singular_values.len()
    }

    pub fn n_points(&self) -> usize {
        self.coords.len()
    }

    /// `cell_id  y1 .. yd`
    pub fn write_tsv(&self, path: impl AsRef<Path>, cell_ids: &[String]) -> Result<()> {
        let mut s = String::from("cell_id");
        for c in 0..self.dim() {
            s.push_str(&format!("\ty{}", c + 1));
        }
        s.push('\n');
        for (id, row) in cell_ids.iter().zip(&self.coords) {
            s.push_str(id);
            for v in row {
                s.push_str(&format!("\t{v}"));
            }
            s.push('\n');
        }
        write_atomic(path.as_ref(), s.as_bytes())
    }

    pub fn sidecar_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("embedding metadata serializes")
    }
}

fn shares(svd: &TruncatedSvd, total: f64, exponent: u8) -> Vec<f64> {
    svd.singular_values
        .iter()
        .map(|&s| if total > 0.0 { s.powi(exponent as i32) / total } else { 0.0 })
        .collect()
}

pub fn embed(l: &NormalizedLaplacian, policy: &EmbedPolicy) -> Result<Embedding> {
    if !(policy.energy_threshold > 0.0 && policy.energy_threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "energy threshold {} must be in (0, 1)",
            policy.energy_threshold
        )));
    }
    let max_rank = l.nrows().min(l.ncols());
    let (svd, total) = match policy.share_exponent {
        2 => {
            let mut rank = policy.start_rank.clamp(1, max_rank);
            loop {
                let svd = truncated_svd(l, rank, &policy.svd)?;
                let tail = svd.singular_values[rank - 1].powi(2) / l.frobenius_sq;
                if tail < policy.energy_threshold || rank == max_rank {
                    break (svd, l.frobenius_sq);
                }
                rank = (rank * 2).min(max_rank);
            }
        }
        1 => {
            let svd = truncated_svd(l, max_rank, &policy.svd)?;
            let total = svd.singular_values.iter().sum();
            (svd, total)
        }
        e => return Err(Error::InvalidArgument(format!("share exponent must be 1 or 2, got {e}"))),
    };
    let all_shares = shares(&svd, total, policy.share_exponent);
    let retained = all_shares.iter().take_while(|&&s| s >= policy.energy_threshold).count();
    let first = usize::from(policy.drop_first);
    if retained <= first {
        return Err(Error::Empty(format!(
            "no component explains at least {} of the energy{}; lower the energy threshold",
            policy.energy_threshold,
            if policy.drop_first { " after dropping the leading one" } else { "" }
        )));
    }
    let kept = first..retained;
    let n = l.ncols();
    let coords = (0..n)
        .map(|j| {
            kept.clone()
                .map(|c| svd.right[c][j] * policy.scaling.factor(svd.singular_values[c]))
                .collect()
        })
        .collect();
    Ok(Embedding {
        coords,
        singular_values: svd.singular_values[kept.clone()].to_vec(),
        component_shares: all_shares[kept].to_vec(),
        dropped_first: policy.drop_first,
        dropped_component: policy.drop_first.then(|| (svd.singular_values[0], all_shares[0])),
        scaling_mode: policy.scaling,
        computed_singular_values: svd.singular_values.clone(),
        total_energy: total,
    })
}
