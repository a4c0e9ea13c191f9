use rayon::prelude::*;

use crate::community::{knn, CellGraph};
use crate::error::Result;

const SIGMA_ITERATIONS: usize = 64;
const SIGMA_TOLERANCE: f64 = 1e-5;

/// Symmetrized membership graph with the per-point calibration used to build it.
#[derive(Debug, Clone)]
pub struct FuzzyGraph {
    pub graph: CellGraph,
    /// Distance to the nearest neighbour.
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Fuzzy union: `a + b - a b`.
pub fn fuzzy_union(a: f64, b: f64) -> f64 {
    a + b - a * b
}

/// Bandwidth so that `sum_j exp(-max(0, d_j - rho) / sigma) = log2(k)`.
pub fn solve_sigma(dists: &[f64], rho: f64) -> f64 {
    let target = (dists.len() as f64).log2();
    let (mut lo, mut hi, mut mid) = (0.0_f64, f64::INFINITY, 1.0_f64);
    for _ in 0..SIGMA_ITERATIONS {
        let psum: f64 = dists.iter().map(|&d| (-(d - rho).max(0.0) / mid).exp()).sum();
        if (psum - target).abs() < SIGMA_TOLERANCE {
            break;
        }
        if psum > target {
            hi = mid;
            mid = (lo + hi) / 2.0;
        } else {
            lo = mid;
            mid = if hi.is_infinite() { mid * 2.0 } else { (lo + hi) / 2.0 };
        }
    }
    mid
}

pub fn fuzzy_graph(points: &[Vec<f64>], n_neighbors: usize) -> Result<FuzzyGraph> {
    let nn = knn(points, n_neighbors)?;
    let calib: Vec<(f64, f64)> = nn
        .par_iter()
        .map(|row| {
            let d: Vec<f64> = row.iter().map(|e| e.1).collect();
            let rho = d[0];
            (rho, solve_sigma(&d, rho))
        })
        .collect();
    let mut directed: std::collections::BTreeMap<(usize, usize), (f64, f64)> = Default::default();
    for (i, row) in nn.iter().enumerate() {
        let (rho, sigma) = calib[i];
        for &(j, d) in row {
            let w = (-(d - rho).max(0.0) / sigma).exp();
            let e = directed.entry((i.min(j), i.max(j))).or_insert((0.0, 0.0));
            if i < j {
                e.0 = w;
            } else {
                e.1 = w;
            }
        }
    }
    let edges = directed
        .into_iter()
        .map(|((i, j), (a, b))| (i, j, fuzzy_union(a, b)))
        .filter(|e| e.2 > 0.0);
    Ok(FuzzyGraph {
        graph: CellGraph::new(points.len(), edges)?,
        rho: calib.iter().map(|c| c.0).collect(),
        sigma: calib.iter().map(|c| c.1).collect(),
    })
}
