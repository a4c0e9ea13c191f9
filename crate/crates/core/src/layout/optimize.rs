use std::path::Path;

use serde::Serialize;

use crate::community::CellGraph;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::rng::Rng;

const CLIP: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayoutParams {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub epochs: usize,
    pub negative_samples: usize,
    /// Curve `1 / (1 + a d^(2b))`; the defaults fit `min_dist = 0.1`.
    pub a: f64,
    pub b: f64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self {
            n_neighbors: 15,
            min_dist: 0.1,
            epochs: 200,
            negative_samples: 5,
            a: 1.577,
            b: 0.8951,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout2D {
    pub coords: Vec<[f64; 2]>,
    pub seed: u64,
    pub params: LayoutParams,
}

impl Layout2D {
    /// `cell_id  x  y`
    pub fn write_tsv(&self, path: impl AsRef<Path>, cell_ids: &[String]) -> Result<()> {
        let mut s = String::from("cell_id\tx\ty\n");
        for (id, c) in cell_ids.iter().zip(&self.coords) {
            s.push_str(&format!("{id}\t{}\t{}\n", c[0], c[1]));
        }
        write_atomic(path.as_ref(), s.as_bytes())
    }
}

fn sq(p: &[f64; 2], q: &[f64; 2]) -> f64 {
    (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
}

/// Attractive loss of one unit-weight edge, `ln(1 + a d^(2b))`.
pub fn attractive_loss(p: &[f64; 2], q: &[f64; 2], a: f64, b: f64) -> f64 {
    (a * sq(p, q).powf(b)).ln_1p()
}

/// Gradient of [`attractive_loss`] with respect to `p`.
pub fn attractive_gradient(p: &[f64; 2], q: &[f64; 2], a: f64, b: f64) -> [f64; 2] {
    let d2 = sq(p, q);
    if d2 <= 0.0 {
        return [0.0, 0.0];
    }
    let c = 2.0 * a * b * d2.powf(b - 1.0) / (1.0 + a * d2.powf(b));
    [c * (p[0] - q[0]), c * (p[1] - q[1])]
}

/// Repulsive loss of a negative sample, `-ln(1 - 1 / (1 + a d^(2b)))`.
pub fn repulsive_loss(p: &[f64; 2], q: &[f64; 2], a: f64, b: f64) -> f64 {
    let t = a * sq(p, q).powf(b);
    -(t / (1.0 + t)).ln()
}

/// Gradient of [`repulsive_loss`] with respect to `p`, with the usual
/// 0.001 guard against coincident points.
pub fn repulsive_gradient(p: &[f64; 2], q: &[f64; 2], a: f64, b: f64) -> [f64; 2] {
    let d2 = sq(p, q);
    let c = -2.0 * b / ((0.001 + d2) * (1.0 + a * d2.powf(b)));
    [c * (p[0] - q[0]), c * (p[1] - q[1])]
}

fn clip(v: f64) -> f64 {
    v.clamp(-CLIP, CLIP)
}

/// Rescales each coordinate to [0, 10].
pub fn rescale_init(init: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out = init.to_vec();
    for dim in 0..2 {
        let lo = init.iter().map(|p| p[dim]).fold(f64::INFINITY, f64::min);
        let hi = init.iter().map(|p| p[dim]).fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        for p in out.iter_mut() {
            p[dim] = if span > 0.0 { 10.0 * (p[dim] - lo) / span } else { 5.0 };
        }
    }
    out
}

/// Starting coordinates from the first two embedding axes. A one-dimensional
/// embedding gets a seeded uniform second axis.
pub fn initial_coords(points: &[Vec<f64>], seed: u64) -> Result<Vec<[f64; 2]>> {
    let d = points.first().map_or(0, Vec::len);
    if d == 0 {
        return Err(Error::InvalidArgument("layout needs at least one embedding dimension".into()));
    }
    let mut rng = Rng::stream(seed, 0x1a71);
    Ok(points
        .iter()
        .map(|p| [p[0], if d >= 2 { p[1] } else { rng.next_f64() }])
        .collect())
}

/// Stochastic gradient descent on the fuzzy-graph cross-entropy.
pub fn optimize_layout(g: &CellGraph, init: &[[f64; 2]], params: &LayoutParams, seed: u64) -> Result<Layout2D> {
    let n = g.n_nodes();
    if init.len() != n {
        return Err(Error::InvalidArgument(format!("{} initial points for {n} nodes", init.len())));
    }
    if params.epochs == 0 {
        return Err(Error::InvalidArgument("layout needs at least one epoch".into()));
    }
    let (a, b) = (params.a, params.b);
    let mut y = rescale_init(init);
    // both orientations, each moving head and tail
    let max_w = g.edges().iter().map(|e| e.2).fold(0.0, f64::max);
    let floor = max_w / params.epochs as f64;
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    for &(i, j, w) in g.edges() {
        if w >= floor && w > 0.0 {
            edges.push((i, j, max_w / w));
            edges.push((j, i, max_w / w));
        }
    }
    let neg = params.negative_samples as f64;
    let mut next_sample: Vec<f64> = edges.iter().map(|e| e.2).collect();
    let mut next_negative: Vec<f64> = edges.iter().map(|e| e.2 / neg.max(1.0)).collect();
    let mut rng = Rng::stream(seed, 0x1a70);
    for epoch in 0..params.epochs {
        let alpha = 1.0 - epoch as f64 / params.epochs as f64;
        let t = epoch as f64;
        for (e, &(i, j, eps)) in edges.iter().enumerate() {
            if next_sample[e] > t {
                continue;
            }
            let (p, q) = (y[i], y[j]);
            let grad = attractive_gradient(&p, &q, a, b);
            for dim in 0..2 {
                let step = clip(-grad[dim]) * alpha;
                y[i][dim] += step;
                y[j][dim] -= step;
            }
            next_sample[e] += eps;
            if params.negative_samples == 0 {
                continue;
            }
            let eps_neg = eps / neg;
            let n_neg = ((t - next_negative[e]) / eps_neg).floor().max(0.0) as usize;
            for _ in 0..n_neg {
                let k = rng.below(n);
                if k == i {
                    continue;
                }
                let (p, q) = (y[i], y[k]);
                let grad = if sq(&p, &q) > 0.0 { repulsive_gradient(&p, &q, a, b) } else { [-CLIP, -CLIP] };
                for dim in 0..2 {
                    y[i][dim] += clip(-grad[dim]) * alpha;
                }
            }
            next_negative[e] += n_neg as f64 * eps_neg;
        }
    }
    if let Some(i) = y.iter().position(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(Error::Numerical(format!("layout coordinate of point {i} is not finite")));
    }
    Ok(Layout2D {
        coords: y,
        seed,
        params: *params,
    })
}
