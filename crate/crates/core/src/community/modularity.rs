use crate::error::{Error, Result};
use crate::labels::ClusterLabels;

use super::graph::CellGraph;

/// Network modularity of a partition, with the expected-edges term scaled
/// by `resolution` (1 gives the plain statistic).
pub fn modularity_with_resolution(g: &CellGraph, labels: &[usize], resolution: f64) -> Result<f64> {
    if labels.len() != g.n_nodes() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} nodes",
            labels.len(),
            g.n_nodes()
        )));
    }
    let deg = g.degrees();
    let total: f64 = deg.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("graph has no edge weight".into()));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut inside = vec![0.0; k];
    let mut tot = vec![0.0; k];
    for &(i, j, w) in g.edges() {
        if labels[i] == labels[j] {
            // both orientations
            inside[labels[i]] += 2.0 * w;
        }
    }
    for (i, d) in deg.iter().enumerate() {
        tot[labels[i]] += d;
    }
    Ok((0..k).map(|c| inside[c] - resolution * tot[c] * tot[c] / total).sum::<f64>() / total)
}

pub fn modularity(g: &CellGraph, labels: &ClusterLabels) -> Result<f64> {
    modularity_with_resolution(g, labels.labels(), 1.0)
}
