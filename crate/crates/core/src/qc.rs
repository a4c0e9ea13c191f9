//! Feature and cell quality-control filters.
//!
//! Features are filtered first, then cells are filtered on the
//! feature-filtered matrix; the pair is applied once, never iterated to a
//! joint fixed point. Every share rule removes a cell when its share is
//! greater than or equal to the threshold.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::CountMatrix;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QcConfig {
    pub min_cells_per_feature: usize,
    pub min_features_per_cell: usize,
    pub max_top_share: f64,
    pub top_share_exclude: Vec<String>,
    /// `None` disables the mitochondrial rule.
    pub max_mito_share: Option<f64>,
    pub mito_prefix: String,
    /// `None` disables the ribosomal rule.
    pub max_ribo_share: Option<f64>,
    pub ribo_prefixes: Vec<String>,
    /// Compute cell totals and shares on the matrix before feature filtering.
    pub shares_before_feature_filter: bool,
}

impl Default for QcConfig {
    fn default() -> Self {
        Self {
            min_cells_per_feature: 50,
            min_features_per_cell: 750,
            max_top_share: 0.10,
            top_share_exclude: vec!["MALAT1".to_string()],
            max_mito_share: Some(0.10),
            mito_prefix: "MT-".to_string(),
            max_ribo_share: Some(0.50),
            ribo_prefixes: vec!["RPS".to_string(), "RPL".to_string()],
            shares_before_feature_filter: false,
        }
    }
}

impl QcConfig {
    /// Thresholds used for the small human-embryo dataset: features need 10
    /// expressing cells and the mitochondrial rule is off.
    pub fn embryo_preset() -> Self {
        Self {
            min_cells_per_feature: 10,
            max_mito_share: None,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let frac = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be in (0, 1], got {v}")))
            }
        };
        frac("qc.max_top_share", self.max_top_share)?;
        if let Some(v) = self.max_mito_share {
            frac("qc.max_mito_share", v)?;
        }
        if let Some(v) = self.max_ribo_share {
            frac("qc.max_ribo_share", v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CellRuleTallies {
    pub min_features: usize,
    pub top_share: usize,
    pub mito_share: usize,
    pub ribo_share: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QcReport {
    pub features_in: usize,
    pub features_removed: usize,
    pub features_out: usize,
    pub cells_in: usize,
    pub cells_removed: usize,
    pub cells_out: usize,
    pub features_removed_min_cells: usize,
    /// Cells failing each rule; a cell failing several rules counts once per rule.
    pub cell_rule_failures: CellRuleTallies,
    pub feature_mask: Vec<bool>,
    pub cell_mask: Vec<bool>,
}

impl QcReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// True for features with non-zero counts in at least `min_cells_per_feature` cells.
pub fn filter_features(x: &CountMatrix, cfg: &QcConfig) -> Vec<bool> {
    x.row_nnz().into_iter().map(|c| c >= cfg.min_cells_per_feature).collect()
}

/// Per-cell verdicts; each field is true when the rule REMOVES the cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CellVerdict {
    pub min_features: bool,
    pub top_share: bool,
    pub mito_share: bool,
    pub ribo_share: bool,
}

impl CellVerdict {
    pub fn retained(&self) -> bool {
        !(self.min_features || self.top_share || self.mito_share || self.ribo_share)
    }
}

/// Evaluates the cell rules. `totals` overrides the per-cell denominators
/// (used when shares are taken before feature filtering).
pub fn cell_verdicts(x: &CountMatrix, cfg: &QcConfig, totals: Option<&[u64]>) -> Vec<CellVerdict> {
    let excluded: Vec<bool> =
        x.feature_ids().iter().map(|id| cfg.top_share_exclude.iter().any(|e| e == id)).collect();
    let mito: Vec<bool> = x.feature_ids().iter().map(|id| id.starts_with(&cfg.mito_prefix)).collect();
    let ribo: Vec<bool> = x
        .feature_ids()
        .iter()
        .map(|id| cfg.ribo_prefixes.iter().any(|p| id.starts_with(p.as_str())))
        .collect();

    (0..x.n_cells())
        .map(|j| {
            let (rows, vals) = x.col(j);
            let own_total: u64 = vals.iter().sum();
            let total = totals.map_or(own_total, |t| t[j]);
            let mut v = CellVerdict {
                min_features: rows.len() < cfg.min_features_per_cell || total == 0,
                ..Default::default()
            };
            if total == 0 {
                return v;
            }
            let total = total as f64;
            let top = rows
                .iter()
                .zip(vals)
                .filter(|(&i, _)| !excluded[i])
                .map(|(_, &c)| c)
                .max()
                .unwrap_or(0);
            v.top_share = top as f64 / total >= cfg.max_top_share;
            if let Some(limit) = cfg.max_mito_share {
                let m: u64 = rows.iter().zip(vals).filter(|(&i, _)| mito[i]).map(|(_, &c)| c).sum();
                v.mito_share = m as f64 / total >= limit;
            }
            if let Some(limit) = cfg.max_ribo_share {
                let r: u64 = rows.iter().zip(vals).filter(|(&i, _)| ribo[i]).map(|(_, &c)| c).sum();
                v.ribo_share = r as f64 / total >= limit;
            }
            v
        })
        .collect()
}

pub fn filter_cells(x: &CountMatrix, cfg: &QcConfig) -> Vec<bool> {
    cell_verdicts(x, cfg, None).iter().map(CellVerdict::retained).collect()
}

/// Features first, then cells on the feature-filtered matrix.
pub fn run_qc(x: &CountMatrix, cfg: &QcConfig) -> Result<(CountMatrix, QcReport)> {
    let feature_mask = filter_features(x, cfg);
    let features_out = feature_mask.iter().filter(|&&b| b).count();
    let mut report = QcReport {
        features_in: x.n_features(),
        features_removed: x.n_features() - features_out,
        features_out,
        cells_in: x.n_cells(),
        cells_removed: x.n_cells(),
        cells_out: 0,
        features_removed_min_cells: x.n_features() - features_out,
        cell_rule_failures: CellRuleTallies::default(),
        feature_mask: feature_mask.clone(),
        cell_mask: vec![false; x.n_cells()],
    };
    if features_out == 0 {
        return Err(Error::EmptyAfterQc {
            report: Box::new(report),
        });
    }
    let filtered = x.submatrix(&feature_mask, &vec![true; x.n_cells()])?;
    let totals = cfg.shares_before_feature_filter.then(|| x.degrees().col_degrees);
    let verdicts = cell_verdicts(&filtered, cfg, totals.as_deref());
    let t = &mut report.cell_rule_failures;
    for v in &verdicts {
        t.min_features += v.min_features as usize;
        t.top_share += v.top_share as usize;
        t.mito_share += v.mito_share as usize;
        t.ribo_share += v.ribo_share as usize;
    }
    let cell_mask: Vec<bool> = verdicts.iter().map(CellVerdict::retained).collect();
    report.cells_out = cell_mask.iter().filter(|&&b| b).count();
    report.cells_removed = report.cells_in - report.cells_out;
    report.cell_mask = cell_mask.clone();
    if report.cells_out == 0 {
        return Err(Error::EmptyAfterQc {
            report: Box::new(report),
        });
    }
    let out = filtered.submatrix(&vec![true; filtered.n_features()], &cell_mask)?;
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn permissive() -> QcConfig {
        QcConfig {
            min_cells_per_feature: 0,
            min_features_per_cell: 0,
            max_top_share: 1.0,
            top_share_exclude: vec![],
            max_mito_share: None,
            max_ribo_share: None,
            ..QcConfig::default()
        }
    }

    /// One feature row expressed in `k` of `n` cells.
    fn row_expressed_in(k: usize, n: usize) -> CountMatrix {
        CountMatrix::from_dense(&[(0..n).map(|j| u64::from(j < k)).collect()]).unwrap()
    }

    #[test]
    fn feature_min_cells_boundary() {
        let cfg = QcConfig {
            min_cells_per_feature: 50,
            ..permissive()
        };
        assert_eq!(filter_features(&row_expressed_in(49, 60), &cfg), vec![false]);
        assert_eq!(filter_features(&row_expressed_in(50, 60), &cfg), vec![true]);
        let zero = QcConfig {
            min_cells_per_feature: 0,
            ..permissive()
        };
        assert_eq!(filter_features(&row_expressed_in(0, 5), &zero), vec![true]);
    }

    /// One cell expressing `k` features with one count each.
    fn cell_with_features(k: usize) -> CountMatrix {
        CountMatrix::from_dense(&(0..k).map(|_| vec![1]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn cell_min_features_boundary() {
        let cfg = QcConfig {
            min_features_per_cell: 750,
            ..permissive()
        };
        assert_eq!(filter_cells(&cell_with_features(749), &cfg), vec![false]);
        assert_eq!(filter_cells(&cell_with_features(750), &cfg), vec![true]);
    }

    #[test]
    fn top_share_at_exactly_ten_percent_removes() {
        // 10 of 100 counts on one feature, the rest spread thinly
        let mut rows = vec![vec![10u64]];
        rows.extend((0..45).map(|_| vec![2u64]));
        let x = CountMatrix::from_dense(&rows).unwrap();
        let cfg = QcConfig {
            max_top_share: 0.10,
            ..permissive()
        };
        assert_eq!(filter_cells(&x, &cfg), vec![false]);
        let mut rows = vec![vec![9u64], vec![1u64]];
        rows.extend((0..45).map(|_| vec![2u64]));
        let x = CountMatrix::from_dense(&rows).unwrap();
        assert_eq!(filter_cells(&x, &cfg), vec![true]);
    }

    #[test]
    fn excluded_feature_is_skipped_for_top_share_but_counts_in_total() {
        // MALAT1 40%, next feature 5%, total 100
        let mut rows = vec![vec![40u64]];
        rows.extend((0..12).map(|_| vec![5u64]));
        let ids: Vec<String> =
            std::iter::once("MALAT1".to_string()).chain((0..12).map(|i| format!("G{i}"))).collect();
        let triplets = rows.iter().enumerate().map(|(i, r)| (i, 0, r[0])).collect();
        let x = CountMatrix::from_triplets(13, 1, triplets, Some(ids), None).unwrap();
        let cfg = QcConfig {
            max_top_share: 0.10,
            top_share_exclude: vec!["MALAT1".into()],
            ..permissive()
        };
        assert_eq!(filter_cells(&x, &cfg), vec![true]);
        let no_exclusion = QcConfig {
            top_share_exclude: vec![],
            ..cfg
        };
        assert_eq!(filter_cells(&x, &no_exclusion), vec![false]);
    }

    #[test]
    fn mito_and_ribo_rules() {
        let ids: Vec<String> = ["MT-CO1", "RPS3", "RPL7", "ACTB"].iter().map(|s| s.to_string()).collect();
        // cell 0: mito 10/100; cell 1: ribo 50/100; cell 2: ok
        let rows = [vec![10, 1, 1], vec![20, 25, 20], vec![20, 25, 20], vec![50, 49, 59]];
        let triplets = rows
            .iter()
            .enumerate()
            .flat_map(|(i, r): (usize, &Vec<u64>)| r.iter().enumerate().map(move |(j, &v)| (i, j, v)))
            .collect();
        let x = CountMatrix::from_triplets(4, 3, triplets, Some(ids), None).unwrap();
        let cfg = QcConfig {
            max_mito_share: Some(0.10),
            max_ribo_share: Some(0.50),
            ..permissive()
        };
        let v = cell_verdicts(&x, &cfg, None);
        assert!(v[0].mito_share && !v[0].ribo_share);
        assert!(v[1].ribo_share && !v[1].mito_share);
        assert!(v[2].retained());
        // prefix match is case-sensitive
        let lower = QcConfig {
            mito_prefix: "mt-".into(),
            ..cfg
        };
        assert!(!cell_verdicts(&x, &lower, None)[0].mito_share);
    }

    #[test]
    fn zero_total_cell_fails_min_features_without_dividing() {
        let x = CountMatrix::from_dense(&[vec![0, 3], vec![0, 2]]).unwrap();
        let v = cell_verdicts(&x, &permissive(), None);
        assert!(v[0].min_features && !v[0].top_share);
        assert!(v[1].retained());
    }

    /// Hand oracle for the 6x4 fixture: applies each rule literally to the
    /// dense table, features first.
    fn hand_apply(dense: &[Vec<u64>], ids: &[&str]) -> (Vec<bool>, Vec<bool>) {
        let fmask: Vec<bool> = dense.iter().map(|r| r.iter().filter(|&&v| v > 0).count() >= 2).collect();
        let n = dense[0].len();
        let cmask = (0..n)
            .map(|j| {
                let kept: Vec<(usize, u64)> =
                    (0..dense.len()).filter(|&i| fmask[i]).map(|i| (i, dense[i][j])).collect();
                let total: u64 = kept.iter().map(|k| k.1).sum();
                let expressed = kept.iter().filter(|k| k.1 > 0).count();
                let top = kept.iter().map(|k| k.1).max().unwrap();
                let mito: u64 = kept.iter().filter(|k| ids[k.0].starts_with("MT-")).map(|k| k.1).sum();
                expressed >= 2 && (top as f64) < 0.6 * total as f64 && (mito as f64) < 0.3 * total as f64
            })
            .collect();
        (fmask, cmask)
    }

    #[test]
    fn run_qc_six_by_four_fixture() {
        let ids = ["A", "B", "C", "D", "MT-1", "E"];
        let dense = vec![
            vec![3, 2, 2, 1],
            vec![2, 3, 2, 1],
            vec![2, 2, 3, 1],
            vec![1, 1, 1, 1],
            vec![1, 1, 1, 4],
            vec![1, 0, 0, 0],
        ];
        let (fmask, cmask) = hand_apply(&dense, &ids);
        assert_eq!(fmask, vec![true, true, true, true, true, false]);
        assert_eq!(cmask, vec![true, true, true, false]);

        let triplets = dense
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, &v)| (i, j, v)))
            .collect();
        let x = CountMatrix::from_triplets(6, 4, triplets, Some(ids.iter().map(|s| s.to_string()).collect()), None)
            .unwrap();
        let cfg = QcConfig {
            min_cells_per_feature: 2,
            min_features_per_cell: 2,
            max_top_share: 0.6,
            top_share_exclude: vec![],
            max_mito_share: Some(0.3),
            max_ribo_share: None,
            ..QcConfig::default()
        };
        let (out, report) = run_qc(&x, &cfg).unwrap();
        assert_eq!((out.n_features(), out.n_cells()), (5, 3));
        assert_eq!(report.feature_mask, fmask);
        assert_eq!(report.cell_mask, cmask);
        assert_eq!(report.features_in - report.features_removed, report.features_out);
        assert_eq!(report.cells_in - report.cells_removed, report.cells_out);
        assert_eq!(report.cell_rule_failures.mito_share, 1);
        assert_eq!(out.cell_ids(), &["c0", "c1", "c2"]);
    }

    #[test]
    fn fixed_point_matrix_is_unchanged() {
        let x = CountMatrix::from_dense(&[vec![1, 2], vec![2, 1], vec![1, 1]]).unwrap();
        let cfg = QcConfig {
            min_cells_per_feature: 2,
            min_features_per_cell: 3,
            max_top_share: 0.9,
            ..permissive()
        };
        let (out, report) = run_qc(&x, &cfg).unwrap();
        assert_eq!(out, x);
        assert_eq!((report.features_removed, report.cells_removed), (0, 0));
    }

    #[test]
    fn empty_result_carries_report() {
        let x = CountMatrix::from_dense(&[vec![1, 0]]).unwrap();
        let cfg = QcConfig {
            min_cells_per_feature: 5,
            ..permissive()
        };
        match run_qc(&x, &cfg) {
            Err(Error::EmptyAfterQc { report }) => assert_eq!(report.features_out, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn raising_feature_threshold_is_monotone() {
        let dense: Vec<Vec<u64>> = (0..20).map(|i| (0..20).map(|j| u64::from((i * 7 + j * 3) % 5 < i % 5)).collect()).collect();
        let x = CountMatrix::from_dense(&dense).unwrap();
        let mut prev = vec![true; 20];
        for t in 0..25 {
            let cfg = QcConfig {
                min_cells_per_feature: t,
                ..permissive()
            };
            let m = filter_features(&x, &cfg);
            assert_eq!(m, filter_features(&x, &cfg));
            for (a, b) in m.iter().zip(&prev) {
                assert!(!a || *b);
            }
            prev = m;
        }
    }

    #[test]
    fn report_json_key_order_is_stable() {
        let x = CountMatrix::from_dense(&[vec![1, 1], vec![1, 2]]).unwrap();
        let (_, r) = run_qc(&x, &permissive()).unwrap();
        let j = r.to_json();
        let a = j.find("features_in").unwrap();
        let b = j.find("cells_in").unwrap();
        let c = j.find("cell_mask").unwrap();
        assert!(a < b && b < c);
    }
}
