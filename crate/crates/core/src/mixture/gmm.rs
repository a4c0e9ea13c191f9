//! Full-covariance Gaussian mixture fitted by EM.

use nalgebra::{Cholesky, DMatrix};
use serde::Serialize;

use super::kmeans::{canonical_order, fit_kmeans};
use crate::error::{Error, Result};
use crate::labels::ClusterLabels;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmConfig {
    pub max_iter: usize,
    pub rel_tol: f64,
    /// Diagonal loading as a fraction of `trace(cov) / d`.
    pub ridge: f64,
    pub n_init: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            rel_tol: 1e-8,
            ridge: 1e-6,
            n_init: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GmmModel {
    pub k: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    #[serde(serialize_with = "serialize_covariances")]
    pub covariances: Vec<DMatrix<f64>>,
    pub log_likelihood: f64,
    pub n_iterations: usize,
    pub converged: bool,
    /// Log-likelihood at every E-step, ending with `log_likelihood`.
    #[serde(skip)]
    pub history: Vec<f64>,
}

fn serialize_covariances<S: serde::Serializer>(covs: &[DMatrix<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<Vec<f64>>> = covs
        .iter()
        .map(|c| (0..c.nrows()).map(|i| c.row(i).iter().copied().collect()).collect())
        .collect();
    serde::Serialize::serialize(&rows, s)
}

/// Per-component terms needed to evaluate log densities.
struct Component {
    log_weight: f64,
    mean: Vec<f64>,
    /// Lower Cholesky factor, row-major.
    lower: Vec<f64>,
    log_norm: f64,
}

impl Component {
    fn new(weight: f64, mean: &[f64], cov: &DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().take(d).map(|v| v.ln()).sum::<f64>();
        let l = chol.l();
        Ok(Self {
            log_weight: weight.ln(),
            mean: mean.to_vec(),
            lower: (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| l[(i, j)]).collect(),
            log_norm: -0.5 * (d as f64 * LN_2PI + log_det),
        })
    }

    /// `z` is scratch space of length d.
    fn log_density(&self, x: &[f64], z: &mut [f64]) -> f64 {
        let d = self.mean.len();
        let mut sq = 0.0;
        for i in 0..d {
            let row = &self.lower[i * d..i * d + i + 1];
            let mut v = x[i] - self.mean[i];
            for j in 0..i {
                v -= row[j] * z[j];
            }
            z[i] = v / row[i];
            sq += z[i] * z[i];
        }
        self.log_norm - 0.5 * sq
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn argmax_low(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

impl GmmModel {
    fn components(&self) -> Result<Vec<Component>> {
        (0..self.k)
            .map(|c| Component::new(self.weights[c], &self.means[c], &self.covariances[c]))
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// Responsibilities (rows sum to one) and total log-likelihood.
    pub fn responsibilities(&self, points: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, f64)> {
        e_step(&self.components()?, points)
    }

    pub fn log_likelihood_of(&self, points: &[Vec<f64>]) -> Result<f64> {
        Ok(self.responsibilities(points)?.1)
    }

    /// Most responsible component per point; ties to the lowest index.
    pub fn predict(&self, points: &[Vec<f64>]) -> Result<Vec<usize>> {
        let (resp, _) = self.responsibilities(points)?;
        Ok(resp.iter().map(|r| argmax_low(r)).collect())
    }

    pub fn to_json(&self, bic: Option<f64>) -> String {
        let mut v = serde_json::to_value(self).expect("model serializes");
        if let (Some(b), Some(obj)) = (bic, v.as_object_mut()) {
            obj.insert("bic".into(), serde_json::json!(b));
        }
        serde_json::to_string_pretty(&v).expect("json")
    }
}

fn e_step(components: &[Component], points: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, f64)> {
    use rayon::prelude::*;
    let d = points.first().map_or(0, Vec::len);
    let rows: Vec<(Vec<f64>, f64)> = points
        .par_iter()
        .with_min_len(256)
        .map_init(|| vec![0.0; d], |z, x| {
            let mut lp: Vec<f64> = components.iter().map(|c| c.log_weight + c.log_density(x, z)).collect();
            let lse = log_sum_exp(&lp);
            for v in lp.iter_mut() {
                *v = (*v - lse).exp();
            }
            (lp, lse)
        })
        .collect();
    // summed serially so the total does not depend on the thread count
    let ll: f64 = rows.iter().map(|r| r.1).sum();
    if !ll.is_finite() {
        return Err(Error::Numerical(format!("non-finite log-likelihood {ll}")));
    }
    Ok((rows.into_iter().map(|r| r.0).collect(), ll))
}

fn weighted_moments(points: &[Vec<f64>], w: impl Fn(usize) -> f64) -> (f64, Vec<f64>, DMatrix<f64>) {
    let d = points[0].len();
    let nk: f64 = (0..points.len()).map(&w).sum();
    let mut mean = vec![0.0; d];
    for (i, x) in points.iter().enumerate() {
        let wi = w(i);
        for (m, v) in mean.iter_mut().zip(x) {
            *m += wi * v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nk);
    let mut cov = DMatrix::zeros(d, d);
    for (i, x) in points.iter().enumerate() {
        let wi = w(i);
        if wi == 0.0 {
            continue;
        }
        for a in 0..d {
            let da = x[a] - mean[a];
            for b in 0..=a {
                cov[(a, b)] += wi * da * (x[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..=a {
            cov[(a, b)] /= nk;
            cov[(b, a)] = cov[(a, b)];
        }
    }
    (nk, mean, cov)
}

/// Adds `ridge * trace(cov) / d` to the diagonal. A zero-trace (collapsed)
/// component falls back to the data-wide scale.
fn regularize(mut cov: DMatrix<f64>, ridge: f64, fallback_scale: f64) -> DMatrix<f64> {
    let d = cov.nrows();
    let scale = cov.trace() / d as f64;
    let load = if scale > 0.0 { ridge * scale } else { ridge * fallback_scale };
    for a in 0..d {
        cov[(a, a)] += load;
    }
    cov
}

struct Params {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covs: Vec<DMatrix<f64>>,
}

fn components_of(p: &Params) -> Result<Vec<Component>> {
    (0..p.weights.len()).map(|c| Component::new(p.weights[c], &p.means[c], &p.covs[c])).collect()
}

fn run_em(points: &[Vec<f64>], init: Params, cfg: &GmmConfig, global_scale: f64) -> Result<GmmModel> {
    let n = points.len();
    let k = init.weights.len();
    let mut params = init;
    let mut history = Vec::new();
    let mut converged = false;
    let mut m_steps = 0;
    loop {
        let (resp, ll) = e_step(&components_of(&params)?, points)?;
        if let Some(&prev) = history.last() {
            let prev: f64 = prev;
            if (ll - prev).abs() <= cfg.rel_tol * prev.abs().max(1.0) {
                converged = true;
            }
        }
        history.push(ll);
        if converged || m_steps >= cfg.max_iter {
            break;
        }
        // M-step
        let slots = params.weights.iter_mut().zip(&mut params.means).zip(&mut params.covs);
        for (c, ((w, m), s)) in slots.enumerate() {
            let (nk, mean, cov) = weighted_moments(points, |i| resp[i][c]);
            *w = nk / n as f64;
            if nk > 1e-10 {
                *m = mean;
                *s = regularize(cov, cfg.ridge, global_scale);
            }
        }
        m_steps += 1;
    }
    Ok(GmmModel {
        k,
        weights: params.weights,
        means: params.means,
        covariances: params.covs,
        log_likelihood: *history.last().expect("at least one E-step"),
        n_iterations: m_steps,
        converged,
        history,
    })
}

fn init_from_kmeans(points: &[Vec<f64>], k: usize, seed: u64, cfg: &GmmConfig, global: &DMatrix<f64>, global_scale: f64) -> Result<Params> {
    let km = fit_kmeans(points, k, seed)?;
    let n = points.len() as f64;
    let mut p = Params {
        weights: Vec::with_capacity(k),
        means: Vec::with_capacity(k),
        covs: Vec::with_capacity(k),
    };
    for (c, members) in km.labels.members().iter().enumerate() {
        p.weights.push(members.len().max(1) as f64 / n);
        p.means.push(km.centroids[c].clone());
        let cov = if members.len() >= 2 {
            let (_, _, cov) = weighted_moments(points, |i| if km.labels.labels()[i] == c { 1.0 } else { 0.0 });
            cov
        } else {
            global.clone()
        };
        p.covs.push(regularize(cov, cfg.ridge, global_scale));
    }
    let total: f64 = p.weights.iter().sum();
    p.weights.iter_mut().for_each(|w| *w /= total);
    Ok(p)
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    pub labels: ClusterLabels,
    /// Components that won no point and were removed from `labels`.
    pub dropped_clusters: Vec<usize>,
}

/// Best of `n_init` EM runs (restart i seeded with `seed + i`), by final log-likelihood.
pub fn fit_gmm(points: &[Vec<f64>], k: usize, seed: u64, cfg: &GmmConfig) -> Result<GmmFit> {
    let n = points.len();
    let d = points.first().map_or(0, Vec::len);
    if d == 0 {
        return Err(Error::InvalidArgument("GMM needs at least one dimension".into()));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("GMM needs 1 <= K <= n, got K = {k}, n = {n}")));
    }
    let (_, _, global) = weighted_moments(points, |_| 1.0);
    let global_scale = (global.trace() / d as f64).max(f64::MIN_POSITIVE);

    let mut best: Option<GmmModel> = None;
    let mut last_err = None;
    for r in 0..cfg.n_init.max(1) {
        let run = init_from_kmeans(points, k, seed.wrapping_add(r as u64), cfg, &global, global_scale)
            .and_then(|init| run_em(points, init, cfg, global_scale));
        match run {
            Ok(m) => {
                if best.as_ref().is_none_or(|b| m.log_likelihood > b.log_likelihood) {
                    best = Some(m);
                }
            }
            Err(e) => {
                log::warn!("GMM restart {r} failed: {e}");
                last_err = Some(e);
            }
        }
    }
    let model = match best {
        Some(m) => canonicalize(m),
        None => return Err(last_err.expect("at least one restart ran")),
    };
    let raw = model.predict(points)?;
    let (labels, dropped_clusters) = ClusterLabels::new(raw, k)?.compact();
    if !dropped_clusters.is_empty() {
        log::warn!("GMM components {dropped_clusters:?} own no points; dropped and relabeled");
    }
    Ok(GmmFit {
        model,
        labels,
        dropped_clusters,
    })
}

/// Sorts components by mean so labels do not depend on input order.
fn canonicalize(m: GmmModel) -> GmmModel {
    let order = canonical_order(&m.means);
    GmmModel {
        weights: order.iter().map(|&c| m.weights[c]).collect(),
        means: order.iter().map(|&c| m.means[c].clone()).collect(),
        covariances: order.iter().map(|&c| m.covariances[c].clone()).collect(),
        ..m
    }
}

/// `ln(n) q - 2 logL` with `q = (K - 1) + K d + K d (d + 1) / 2`; lower is better.
pub fn bic(model: &GmmModel, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("BIC needs n >= 2, got {n}")));
    }
    Ok((n as f64).ln() * free_parameters(model.k, model.dim()) as f64 - 2.0 * model.log_likelihood)
}

pub fn free_parameters(k: usize, d: usize) -> usize {
    (k - 1) + k * d + k * d * (d + 1) / 2
}
