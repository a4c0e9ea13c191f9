//! Two-phase greedy modularity optimization.

use crate::error::{Error, Result};
use crate::labels::ClusterLabels;
use crate::rng::Rng;

use super::graph::CellGraph;
use super::modularity::modularity_with_resolution;

#[derive(Debug, Clone)]
pub struct LouvainResult {
    pub labels: ClusterLabels,
    pub modularity: f64,
    /// Number of aggregation levels that moved at least one node.
    pub levels: usize,
    /// At the end of each level: (modularity tracked incrementally, recomputed from scratch).
    pub trace: Vec<(f64, f64)>,
}

/// Aggregated graph: neighbour lists without self entries plus the
/// self-loop weight in double-sum convention (A_cc counts both orientations).
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    self_loop: Vec<f64>,
    degree: Vec<f64>,
}

impl Level {
    fn from_graph(g: &CellGraph) -> Self {
        let adj = g.adjacency();
        let degree = g.degrees();
        Self {
            self_loop: vec![0.0; g.n_nodes()],
            adj,
            degree,
        }
    }

    fn n(&self) -> usize {
        self.adj.len()
    }

    fn modularity(&self, comm: &[usize], total: f64, resolution: f64) -> f64 {
        let k = comm.iter().max().map_or(0, |m| m + 1);
        let mut inside = vec![0.0; k];
        let mut tot = vec![0.0; k];
        for i in 0..self.n() {
            inside[comm[i]] += self.self_loop[i];
            tot[comm[i]] += self.degree[i];
            for &(j, w) in &self.adj[i] {
                if comm[j] == comm[i] {
                    inside[comm[i]] += w;
                }
            }
        }
        (0..k).map(|c| inside[c] - resolution * tot[c] * tot[c] / total).sum::<f64>() / total
    }

    fn aggregate(&self, comm: &[usize], k: usize) -> Self {
        let mut self_loop = vec![0.0; k];
        let mut degree = vec![0.0; k];
        let mut maps: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); k];
        for i in 0..self.n() {
            let ci = comm[i];
            self_loop[ci] += self.self_loop[i];
            degree[ci] += self.degree[i];
            for &(j, w) in &self.adj[i] {
                let cj = comm[j];
                if ci == cj {
                    self_loop[ci] += w;
                } else {
                    *maps[ci].entry(cj).or_insert(0.0) += w;
                }
            }
        }
        Self {
            adj: maps.into_iter().map(|m| m.into_iter().collect()).collect(),
            self_loop,
            degree,
        }
    }
}

/// Renumbers communities 0.. in order of first appearance.
fn renumber(comm: &mut [usize]) -> usize {
    let mut map = vec![usize::MAX; comm.len()];
    let mut next = 0;
    for c in comm.iter_mut() {
        if map[*c] == usize::MAX {
            map[*c] = next;
            next += 1;
        }
        *c = map[*c];
    }
    next
}

/// Local-moving phase. Returns whether any node moved and the change in Q.
fn move_nodes(level: &Level, comm: &mut [usize], total: f64, resolution: f64, rng: &mut Rng) -> (bool, f64) {
    let n = level.n();
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut tot = vec![0.0; n];
    for i in 0..n {
        tot[comm[i]] += level.degree[i];
    }
    let mut links = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut moved_any = false;
    let mut dq = 0.0;
    loop {
        let mut moved = false;
        for &i in &order {
            let ki = level.degree[i];
            let own = comm[i];
            for &(j, w) in &level.adj[i] {
                let c = comm[j];
                if links[c] == 0.0 {
                    touched.push(c);
                }
                links[c] += w;
            }
            tot[own] -= ki;
            let gain = |c: usize, links: &[f64], tot: &[f64]| links[c] - resolution * tot[c] * ki / total;
            let stay = gain(own, &links, &tot);
            let mut best = own;
            let mut best_gain = stay;
            touched.sort_unstable();
            for &c in &touched {
                let g = gain(c, &links, &tot);
                if g > best_gain {
                    best_gain = g;
                    best = c;
                }
            }
            // require a real improvement so rounding cannot cycle
            if best != own && (best_gain - stay) * 2.0 / total > 1e-13 {
                dq += (best_gain - stay) * 2.0 / total;
                comm[i] = best;
                moved = true;
                moved_any = true;
            } else {
                best = own;
            }
            tot[best] += ki;
            for &c in &touched {
                links[c] = 0.0;
            }
            touched.clear();
        }
        if !moved {
            break;
        }
    }
    (moved_any, dq)
}

pub fn louvain(g: &CellGraph, seed: u64, resolution: f64) -> Result<LouvainResult> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::InvalidArgument(format!("resolution must be positive, got {resolution}")));
    }
    let total: f64 = g.degrees().iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("graph has no edge weight".into()));
    }
    let mut rng = Rng::stream(seed, 0x10c0);
    let mut level = Level::from_graph(g);
    // community of every original node
    let mut node_comm: Vec<usize> = (0..g.n_nodes()).collect();
    let mut q = level.modularity(&node_comm, total, resolution);
    let mut trace = Vec::new();
    let mut levels = 0;
    loop {
        let mut comm: Vec<usize> = (0..level.n()).collect();
        let (moved, dq) = move_nodes(&level, &mut comm, total, resolution, &mut rng);
        if !moved {
            break;
        }
        levels += 1;
        q += dq;
        let k = renumber(&mut comm);
        for c in node_comm.iter_mut() {
            *c = comm[*c];
        }
        trace.push((q, modularity_with_resolution(g, &node_comm, resolution)?));
        level = level.aggregate(&comm, k);
    }
    let k = renumber(&mut node_comm);
    let modularity = modularity_with_resolution(g, &node_comm, resolution)?;
    Ok(LouvainResult {
        labels: ClusterLabels::new(node_comm, k)?,
        modularity,
        levels,
        trace,
    })
}
