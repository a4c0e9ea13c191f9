//! Overdispersion feature scoring: log variance over log mean per feature,
//! then top-k selection.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::matrix::CountMatrix;

/// Half-width of the excluded window around m = 1, where ln m vanishes.
pub const UNIT_MEAN_WINDOW: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureScore {
    pub mean: f64,
    /// Population variance (divisor n).
    pub variance: f64,
    /// `ln V / ln m`, or `f64::NEG_INFINITY` when the feature is ranked last.
    pub score: f64,
    /// Method-of-moments overdispersion `(V - m) / m^2`; 0 for silent features.
    pub phi_hat: f64,
}

impl FeatureScore {
    pub fn is_sentinel(&self) -> bool {
        self.score == f64::NEG_INFINITY
    }
}

/// Score from the two moments. Features with no variance, a mean below one,
/// or a mean within `UNIT_MEAN_WINDOW` of one get the sentinel.
pub fn score_from_moments(mean: f64, variance: f64) -> f64 {
    if !(variance > 0.0) || !(mean > 1.0 + UNIT_MEAN_WINDOW) {
        return f64::NEG_INFINITY;
    }
    let ln_m = mean.ln();
    if ln_m.abs() <= 1e-12 {
        return f64::NEG_INFINITY;
    }
    variance.ln() / ln_m
}

pub fn dispersion_scores(x: &CountMatrix) -> Result<Vec<FeatureScore>> {
    let n = x.n_cells();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("dispersion scores need at least 2 cells, got {n}")));
    }
    let nf = n as f64;
    Ok((0..x.n_features())
        .map(|i| {
            let (_, vals) = x.row(i);
            let sum: u128 = vals.iter().map(|&v| v as u128).sum();
            let mean = sum as f64 / nf;
            let zeros = (n - vals.len()) as f64;
            let ss: f64 = vals.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() + zeros * mean * mean;
            let variance = ss / nf;
            let phi_hat = if mean > 0.0 { (variance - mean) / (mean * mean) } else { 0.0 };
            FeatureScore {
                mean,
                variance,
                score: score_from_moments(mean, variance),
                phi_hat,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopK {
    pub mask: Vec<bool>,
    /// Selected feature indices, best first.
    pub order: Vec<usize>,
    /// Fewer than k features had a finite score; all of them were taken.
    pub short: bool,
}

/// Selects the k best-scored features, ties going to the lower index.
pub fn select_top_k(scores: &[FeatureScore], k: usize) -> Result<TopK> {
    let p = scores.len();
    if k == 0 {
        return Err(Error::InvalidArgument("top-k selection needs k >= 1".into()));
    }
    if k > p {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds {p} features")));
    }
    let mut idx: Vec<usize> = (0..p).filter(|&i| !scores[i].is_sentinel()).collect();
    idx.sort_by(|&a, &b| scores[b].score.total_cmp(&scores[a].score).then(a.cmp(&b)));
    let short = idx.len() < k;
    if short {
        log::warn!("only {} of {p} features have a finite dispersion score; selecting all of them instead of {k}", idx.len());
    }
    idx.truncate(k);
    let mut mask = vec![false; p];
    for &i in &idx {
        mask[i] = true;
    }
    Ok(TopK {
        mask,
        order: idx,
        short,
    })
}

/// `feature_id  mean  variance  score` with a header line.
pub fn write_scores_tsv(path: impl AsRef<Path>, ids: &[String], scores: &[FeatureScore]) -> Result<()> {
    let mut s = String::from("feature_id\tmean\tvariance\tscore\n");
    for (id, f) in ids.iter().zip(scores) {
        s.push_str(&format!("{id}\t{}\t{}\t{}\n", f.mean, f.variance, f.score));
    }
    write_atomic(path.as_ref(), s.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fs(score: f64) -> FeatureScore {
        FeatureScore {
            mean: 2.0,
            variance: 2.0,
            score,
            phi_hat: 0.0,
        }
    }

    #[test]
    fn score_examples() {
        // m = 2, V = 4
        let x = CountMatrix::from_dense(&[vec![0, 4], vec![5, 5]]).unwrap();
        let s = dispersion_scores(&x).unwrap();
        assert_eq!((s[0].mean, s[0].variance), (2.0, 4.0));
        assert!((s[0].score - 2.0).abs() < 1e-15);
        assert!(s[1].is_sentinel());
        // m = V = 3
        let y = CountMatrix::from_dense(&[vec![0, 4, 4, 4]]).unwrap();
        let s = dispersion_scores(&y).unwrap();
        assert_eq!((s[0].mean, s[0].variance), (3.0, 3.0));
        assert!((s[0].score - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_cell_is_error() {
        let x = CountMatrix::from_dense(&[vec![3]]).unwrap();
        assert!(dispersion_scores(&x).is_err());
    }

    #[test]
    fn low_and_unit_means_rank_last() {
        assert_eq!(score_from_moments(0.5, 0.9), f64::NEG_INFINITY);
        assert_eq!(score_from_moments(1.0 + 1e-7, 2.0), f64::NEG_INFINITY);
        assert_eq!(score_from_moments(1.0, 2.0), f64::NEG_INFINITY);
        assert!(score_from_moments(1.01, 2.0).is_finite());
    }

    #[test]
    fn log_base_invariance() {
        for &(m, v) in &[(2.0, 4.0), (1.7, 9.3), (25.0, 400.0), (3.3, 0.2)] {
            let ln = score_from_moments(m, v);
            let log2 = f64::log2(v) / f64::log2(m);
            assert!((ln - log2).abs() < 1e-12, "{m} {v}");
        }
    }

    #[test]
    fn score_grows_with_overdispersion() {
        for &m in &[1.5, 2.0, 5.0, 20.0, 100.0] {
            let mut prev = f64::NEG_INFINITY;
            for step in 0..=50 {
                let phi = step as f64 * 0.1;
                let s = score_from_moments(m, m + phi * m * m);
                assert!(s > prev, "m={m} phi={phi}");
                prev = s;
            }
        }
    }

    #[test]
    fn top_k_examples() {
        let s = [fs(2.0), fs(1.0), fs(3.0)];
        let t = select_top_k(&s, 2).unwrap();
        assert_eq!(t.order, vec![2, 0]);
        assert_eq!(t.mask, vec![true, false, true]);

        let eq = [fs(1.0), fs(1.0), fs(1.0)];
        assert_eq!(select_top_k(&eq, 2).unwrap().order, vec![0, 1]);
        assert_eq!(select_top_k(&s, 3).unwrap().mask, vec![true; 3]);
        assert!(select_top_k(&s, 4).is_err());
        assert!(select_top_k(&s, 0).is_err());
    }

    #[test]
    fn too_few_finite_scores_flags_shortfall() {
        let s = [fs(f64::NEG_INFINITY), fs(1.0), fs(f64::NEG_INFINITY)];
        let t = select_top_k(&s, 2).unwrap();
        assert!(t.short);
        assert_eq!(t.mask, vec![false, true, false]);
    }

    proptest! {
        #[test]
        fn selection_is_permutation_equivariant(
            raw in prop::collection::vec(0u8..6, 1..12),
            k_frac in 0.0f64..1.0,
            seed in any::<u64>(),
        ) {
            // coarse scores so ties occur
            let scores: Vec<FeatureScore> = raw.iter().map(|&r| fs(r as f64)).collect();
            let p = scores.len();
            let k = 1 + ((p - 1) as f64 * k_frac) as usize;
            let mut perm: Vec<usize> = (0..p).collect();
            crate::rng::Rng::new(seed).shuffle(&mut perm);
            let permuted: Vec<FeatureScore> = perm.iter().map(|&i| scores[i]).collect();
            let a = select_top_k(&scores, k).unwrap();
            let b = select_top_k(&permuted, k).unwrap();
            // strictly-better features are always selected on both sides, and the
            // selected score multisets agree
            let mut sa: Vec<u8> = a.order.iter().map(|&i| raw[i]).collect();
            let mut sb: Vec<u8> = b.order.iter().map(|&i| raw[perm[i]]).collect();
            sa.sort();
            sb.sort();
            prop_assert_eq!(sa, sb);
            // with distinct scores the masks permute exactly
            let mut distinct = raw.clone();
            distinct.sort();
            distinct.dedup();
            if distinct.len() == p {
                for (new_i, &old_i) in perm.iter().enumerate() {
                    prop_assert_eq!(b.mask[new_i], a.mask[old_i]);
                }
            }
            // ties resolve by index within the permuted order
            let cut = b.order.iter().map(|&i| permuted[i].score).fold(f64::INFINITY, f64::min);
            let tied: Vec<usize> = (0..p).filter(|&i| permuted[i].score == cut).collect();
            let chosen: Vec<usize> = tied.iter().copied().filter(|&i| b.mask[i]).collect();
            prop_assert_eq!(&chosen[..], &tied[..chosen.len()]);
        }
    }
}
