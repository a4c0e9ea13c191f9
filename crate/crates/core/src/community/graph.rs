use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::write_atomic;

/// Undirected weighted graph on `n` nodes. Each edge is stored once with
/// `i < j`; self-loops are not allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGraph {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl CellGraph {
    /// Edges may come in either orientation but each pair at most once.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut out: Vec<(usize, usize, f64)> = Vec::new();
        for (i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!("edge ({i}, {j}) outside {n} nodes")));
            }
            if i == j {
                return Err(Error::InvalidArgument(format!("self-loop on node {i}")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidArgument(format!("edge ({i}, {j}) has weight {w}")));
            }
            out.push((i.min(j), i.max(j), w));
        }
        out.sort_by_key(|e| (e.0, e.1));
        if let Some(w) = out.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::InvalidArgument(format!("duplicate edge ({}, {})", w[0].0, w[0].1)));
        }
        Ok(Self { n, edges: out })
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Weighted degree, counting each incident edge once.
    pub fn degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for &(i, j, w) in &self.edges {
            d[i] += w;
            d[j] += w;
        }
        d
    }

    /// Neighbour lists in both orientations, sorted by neighbour.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j, w) in &self.edges {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        for a in adj.iter_mut() {
            a.sort_by_key(|e| e.0);
        }
        adj
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.n, self.edges.iter().map(|&(i, j, w)| (i, j, w * c)))
    }

    /// `i  j  weight`, one line per undirected edge.
    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = String::from("i\tj\tweight\n");
        for (i, j, w) in &self.edges {
            s.push_str(&format!("{i}\t{j}\t{w}\n"));
        }
        write_atomic(path.as_ref(), s.as_bytes())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Exact Euclidean k nearest neighbours of every point, nearest first;
/// equal distances are ordered by index.
pub fn knn(points: &[Vec<f64>], k: usize) -> Result<Vec<Vec<(usize, f64)>>> {
    let n = points.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!("need 1 <= k < n, got k = {k}, n = {n}")));
    }
    let by_dist = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
    Ok(points
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut d: Vec<(usize, f64)> =
                (0..n).filter(|&j| j != i).map(|j| (j, sq_dist(x, &points[j]))).collect();
            if k < d.len() {
                d.select_nth_unstable_by(k - 1, by_dist);
                d.truncate(k);
            }
            d.sort_by(by_dist);
            d.into_iter().map(|(j, s)| (j, s.sqrt())).collect()
        })
        .collect())
}

/// kNN digraph symmetrized by union, unit weights.
pub fn knn_graph(points: &[Vec<f64>], k: usize) -> Result<CellGraph> {
    let nn = knn(points, k)?;
    let mut pairs: Vec<(usize, usize)> = nn
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().map(move |&(j, _)| (i.min(j), i.max(j))))
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    CellGraph::new(points.len(), pairs.into_iter().map(|(i, j)| (i, j, 1.0)))
}
