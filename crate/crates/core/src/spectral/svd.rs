//! Truncated SVD by Golub-Kahan-Lanczos bidiagonalization with full
//! reorthogonalization.
//!
//! The Krylov bases grow until the top-k Ritz triplets satisfy
//! `max(|A v - s u|, |A^T u - s v|) <= tol * s_1`, checked explicitly. On
//! breakdown (an invariant subspace) the basis continues from a fresh random
//! vector orthogonal to the current one, so repeated and zero singular
//! values are found too. No restarts: the basis is capped at `max_iter`
//! vectors, which is ample for embedding ranks in the tens.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::sparse::LinearOperator;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvdOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// k left vectors, each of length `nrows`.
    pub left: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    /// k right vectors, each of length `ncols`.
    pub right: Vec<Vec<f64>>,
    /// Explicit residual per triplet.
    pub residuals: Vec<f64>,
    /// Krylov basis size at convergence.
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Two passes of classical Gram-Schmidt against an orthonormal basis.
fn reorthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        let coeffs: Vec<f64> = basis.iter().map(|b| dot(b, w)).collect();
        for (c, b) in coeffs.iter().zip(basis) {
            axpy(-c, b, w);
        }
    }
}

/// Random unit vector orthogonal to `basis`; `None` if the basis spans the space.
fn fresh_direction(rng: &mut Rng, len: usize, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    if basis.len() >= len {
        return None;
    }
    for _ in 0..8 {
        let mut w: Vec<f64> = (0..len).map(|_| rng.normal()).collect();
        let before = norm(&w);
        reorthogonalize(&mut w, basis);
        let after = norm(&w);
        if after > 1e-8 * before {
            w.iter_mut().for_each(|x| *x /= after);
            return Some(w);
        }
    }
    None
}

/// Combination `sum_c coef[c] * basis[c]` over the first `coef.len()` basis vectors.
fn combine(basis: &[Vec<f64>], coef: impl Iterator<Item = f64>, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (b, c) in basis.iter().zip(coef) {
        axpy(c, b, &mut out);
    }
    out
}

struct Ritz {
    values: Vec<f64>,
    /// Columns of the small left factor, one per value.
    left: Vec<Vec<f64>>,
    right: Vec<Vec<f64>>,
}

/// SVD of the small projected matrix, sorted by decreasing value.
fn small_svd(b: DMatrix<f64>) -> Ritz {
    let svd = b.svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    Ritz {
        values: order.iter().map(|&i| svd.singular_values[i]).collect(),
        left: order.iter().map(|&i| u.column(i).iter().copied().collect()).collect(),
        right: order.iter().map(|&i| vt.row(i).iter().copied().collect()).collect(),
    }
}

/// Top-k singular triplets of `op`.
pub fn truncated_svd(op: &impl LinearOperator, k: usize, opts: &SvdOptions) -> Result<TruncatedSvd> {
    let (p, n) = (op.nrows(), op.ncols());
    if k == 0 || k > p.min(n) {
        return Err(Error::InvalidArgument(format!(
            "truncated svd rank {k} must be in 1..={}",
            p.min(n)
        )));
    }
    let mut rng = Rng::stream(opts.seed, 0x5bd);
    let mut us: Vec<Vec<f64>> = Vec::new();
    let mut vs: Vec<Vec<f64>> = vec![fresh_direction(&mut rng, n, &[]).expect("n >= 1")];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut scale = 0.0f64;
    let mut last_check = 0usize;
    let mut best_residuals: Vec<f64> = vec![f64::INFINITY; k];

    let mut z = vec![0.0; p];
    let mut w = vec![0.0; n];
    loop {
        let j = us.len();
        // left step: z = A v_j - beta_{j-1} u_{j-1}
        op.apply(&vs[j], &mut z);
        if j > 0 {
            axpy(-betas[j - 1], &us[j - 1], &mut z);
        }
        reorthogonalize(&mut z, &us);
        let mut alpha = norm(&z);
        scale = scale.max(alpha);
        let u_full = if alpha > 1e-13 * scale.max(f64::MIN_POSITIVE) {
            us.push(z.iter().map(|x| x / alpha).collect());
            false
        } else if let Some(u) = fresh_direction(&mut rng, p, &us) {
            alpha = 0.0;
            us.push(u);
            false
        } else {
            true
        };
        if u_full {
            // U spans R^p: A V = U [B | beta e_m] is exact.
            let m = us.len();
            let mut b = DMatrix::zeros(m, m + 1);
            fill_bidiagonal(&mut b, &alphas, &betas, m, m + 1);
            return finish(op, k, opts, &us, &vs, b, m);
        }
        alphas.push(alpha);

        // right step: w = A^T u_j - alpha_j v_j
        op.apply_transpose(&us[j], &mut w);
        axpy(-alpha, &vs[j], &mut w);
        reorthogonalize(&mut w, &vs);
        let mut beta = norm(&w);
        scale = scale.max(beta);
        let next_v = if beta > 1e-13 * scale.max(f64::MIN_POSITIVE) {
            Some(w.iter().map(|x| x / beta).collect::<Vec<f64>>())
        } else {
            beta = 0.0;
            fresh_direction(&mut rng, n, &vs)
        };
        let m = us.len();
        let exhausted = next_v.is_none() || m >= opts.max_iter;

        let due = m >= k && (exhausted || m - last_check >= 2.max(m / 8) || last_check == 0);
        if due {
            last_check = m;
            let mut b = DMatrix::zeros(m, m);
            fill_bidiagonal(&mut b, &alphas, &betas, m, m);
            let ritz = small_svd(b.clone());
            let sigma1 = ritz.values[0];
            let threshold = opts.tol * sigma1;
            let estimates_ok = (0..k).all(|i| (beta * ritz.left[i][m - 1]).abs() <= threshold);
            if estimates_ok || exhausted {
                let out = assemble(op, k, &us, &vs, &ritz, m);
                if out.residuals.iter().all(|&r| r <= threshold) {
                    return Ok(TruncatedSvd {
                        iterations: m,
                        ..out
                    });
                }
                if out.residuals.iter().cloned().fold(0.0, f64::max)
                    < best_residuals.iter().cloned().fold(0.0, f64::max)
                {
                    best_residuals = out.residuals.clone();
                }
            }
        }
        match next_v {
            Some(v) if m < opts.max_iter => {
                betas.push(beta);
                vs.push(v);
            }
            _ => {
                return Err(Error::NoConvergence {
                    iterations: m,
                    worst_residual: best_residuals.iter().cloned().fold(0.0, f64::max),
                    residuals: best_residuals,
                })
            }
        }
    }
}

fn fill_bidiagonal(b: &mut DMatrix<f64>, alphas: &[f64], betas: &[f64], rows: usize, cols: usize) {
    for i in 0..rows {
        if i < alphas.len() && i < cols {
            b[(i, i)] = alphas[i];
        }
        if i < betas.len() && i + 1 < cols {
            b[(i, i + 1)] = betas[i];
        }
    }
}

fn finish(
    op: &impl LinearOperator,
    k: usize,
    opts: &SvdOptions,
    us: &[Vec<f64>],
    vs: &[Vec<f64>],
    b: DMatrix<f64>,
    m: usize,
) -> Result<TruncatedSvd> {
    let ritz = small_svd(b);
    let out = assemble(op, k, us, vs, &ritz, m);
    let threshold = opts.tol * ritz.values[0];
    if out.residuals.iter().all(|&r| r <= threshold) {
        Ok(out)
    } else {
        Err(Error::NoConvergence {
            iterations: m,
            worst_residual: out.residuals.iter().cloned().fold(0.0, f64::max),
            residuals: out.residuals,
        })
    }
}

/// Lifts the top-k Ritz pairs to full vectors, orients signs and measures residuals.
fn assemble(op: &impl LinearOperator, k: usize, us: &[Vec<f64>], vs: &[Vec<f64>], ritz: &Ritz, m: usize) -> TruncatedSvd {
    let (p, n) = (op.nrows(), op.ncols());
    let mut left = Vec::with_capacity(k);
    let mut right = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    let mut av = vec![0.0; p];
    let mut atu = vec![0.0; n];
    for i in 0..k {
        let mut u = combine(us, ritz.left[i].iter().copied(), p);
        let mut v = combine(vs, ritz.right[i].iter().copied(), n);
        orient(&mut v, &mut u);
        let s = ritz.values[i];
        op.apply(&v, &mut av);
        op.apply_transpose(&u, &mut atu);
        let r1 = av.iter().zip(&u).map(|(a, b)| (a - s * b).powi(2)).sum::<f64>().sqrt();
        let r2 = atu.iter().zip(&v).map(|(a, b)| (a - s * b).powi(2)).sum::<f64>().sqrt();
        residuals.push(r1.max(r2));
        left.push(u);
        right.push(v);
    }
    TruncatedSvd {
        left,
        singular_values: ritz.values[..k].to_vec(),
        right,
        residuals,
        iterations: m,
    }
}

/// Flips the pair so the largest-magnitude coordinate of `v` is positive
/// (first such coordinate on ties).
pub fn orient(v: &mut [f64], u: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
        u.iter_mut().for_each(|x| *x = -*x);
    }
}
