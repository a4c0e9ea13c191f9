//! Marker-panel scoring of clusters and marker-based cell gating.

use std::collections::HashSet;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::labels::ClusterLabels;
use crate::matrix::CountMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MarkerPanel {
    pub name: String,
    pub features: Vec<String>,
}

impl MarkerPanel {
    pub fn new(name: impl Into<String>, features: &[&str]) -> Self {
        Self {
            name: name.into(),
            features: features.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Row indices of the panel's features. Unknown ids are dropped with a
    /// warning; it is an error if none remain.
    pub fn resolve(&self, x: &CountMatrix) -> Result<Vec<usize>> {
        let mut idx = Vec::new();
        for f in &self.features {
            match x.feature_index(f) {
                Some(i) => idx.push(i),
                None => log::warn!("panel '{}': feature '{f}' not in matrix, dropped", self.name),
            }
        }
        if idx.is_empty() {
            return Err(Error::InvalidArgument(format!("panel '{}' has no feature present in the matrix", self.name)));
        }
        Ok(idx)
    }
}

/// Reads `type  feature_id` lines (header optional). Panels keep the order
/// in which their type first appears.
pub fn read_panels_tsv(path: impl AsRef<Path>) -> Result<Vec<MarkerPanel>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut panels: Vec<MarkerPanel> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let tok: Vec<&str> = line.split('\t').map(str::trim).collect();
        if tok.len() != 2 || tok.iter().any(|t| t.is_empty()) {
            return Err(Error::parse(path, lineno + 1, "expected 'type<TAB>feature_id'"));
        }
        if lineno == 0 && tok[0] == "type" && tok[1] == "feature_id" {
            continue;
        }
        match panels.iter_mut().find(|p| p.name == tok[0]) {
            Some(p) => p.features.push(tok[1].to_string()),
            None => panels.push(MarkerPanel {
                name: tok[0].to_string(),
                features: vec![tok[1].to_string()],
            }),
        }
    }
    if panels.is_empty() {
        return Err(Error::Empty(format!("no panels in {}", path.display())));
    }
    Ok(panels)
}

fn mean_log_with(x: &CountMatrix, cells: &[usize], features: &[usize], log1p: impl Fn(f64) -> f64) -> Result<f64> {
    if cells.is_empty() || features.is_empty() {
        return Err(Error::Empty("mean log expression over an empty set".into()));
    }
    let mut mask = vec![false; x.n_features()];
    for &f in features {
        mask[f] = true;
    }
    let n_features = mask.iter().filter(|&&m| m).count();
    let mut sum = 0.0;
    for &j in cells {
        let (rows, vals) = x.col(j);
        for (&i, &v) in rows.iter().zip(vals) {
            if mask[i] {
                sum += log1p(v as f64);
            }
        }
    }
    Ok(sum / (cells.len() * n_features) as f64)
}

/// Mean of `ln(1 + count)` over the feature x cell grid, zeros included.
pub fn mean_log_expression(x: &CountMatrix, cells: &[usize], features: &[usize]) -> Result<f64> {
    mean_log_with(x, cells, features, f64::ln_1p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterAssignment {
    pub cluster: usize,
    /// Index into the panel list; `None` for an empty cluster.
    pub panel: Option<usize>,
    pub scores: Vec<f64>,
    /// Several panels shared the top score.
    pub tie: bool,
}

/// Each cluster gets the panel with the highest mean log expression;
/// ties go to the earlier panel.
pub fn assign_cluster_types(x: &CountMatrix, labels: &ClusterLabels, panels: &[MarkerPanel]) -> Result<Vec<ClusterAssignment>> {
    if panels.is_empty() {
        return Err(Error::InvalidArgument("no marker panels".into()));
    }
    let resolved: Vec<Vec<usize>> = panels.iter().map(|p| p.resolve(x)).collect::<Result<_>>()?;
    labels
        .members()
        .into_iter()
        .enumerate()
        .map(|(cluster, cells)| {
            if cells.is_empty() {
                return Ok(ClusterAssignment {
                    cluster,
                    panel: None,
                    scores: vec![],
                    tie: false,
                });
            }
            let scores: Vec<f64> = resolved.iter().map(|f| mean_log_expression(x, &cells, f)).collect::<Result<_>>()?;
            let mut best = 0;
            for (p, s) in scores.iter().enumerate() {
                if *s > scores[best] {
                    best = p;
                }
            }
            let tie = scores.iter().filter(|&&s| s == scores[best]).count() > 1;
            if tie {
                log::warn!("cluster {cluster}: panels tie at {}; assigned '{}'", scores[best], panels[best].name);
            }
            Ok(ClusterAssignment {
                cluster,
                panel: Some(best),
                scores,
                tie,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioDenominator {
    /// All other panels' features pooled into one set.
    Pooled,
    /// Average of the other panels' individual means.
    PerTypeAverage,
}

impl std::str::FromStr for RatioDenominator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(Self::Pooled),
            "per_type_average" => Ok(Self::PerTypeAverage),
            _ => Err(Error::Config(format!("unknown ratio denominator '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub cell_type: String,
    pub n_cells: usize,
    /// `None` when no cluster was assigned this type or the denominator is zero.
    pub pooled: Option<f64>,
    pub per_type_average: Option<f64>,
}

impl RatioRow {
    pub fn ratio(&self, d: RatioDenominator) -> Option<f64> {
        match d {
            RatioDenominator::Pooled => self.pooled,
            RatioDenominator::PerTypeAverage => self.per_type_average,
        }
    }
}

fn ratio_table_with(
    x: &CountMatrix,
    labels: &ClusterLabels,
    panels: &[MarkerPanel],
    log1p: impl Fn(f64) -> f64 + Copy,
) -> Result<Vec<RatioRow>> {
    let assignment = assign_cluster_types(x, labels, panels)?;
    let resolved: Vec<Vec<usize>> = panels.iter().map(|p| p.resolve(x)).collect::<Result<_>>()?;
    let members = labels.members();
    let ratio = |num: f64, den: f64, what: &str, t: &str| {
        if den > 0.0 {
            Some(num / den)
        } else {
            log::warn!("type '{t}': {what} denominator is zero, ratio absent");
            None
        }
    };
    panels
        .iter()
        .enumerate()
        .map(|(t, panel)| {
            let cells: Vec<usize> = assignment
                .iter()
                .filter(|a| a.panel == Some(t))
                .flat_map(|a| members[a.cluster].iter().copied())
                .collect();
            let mut row = RatioRow {
                cell_type: panel.name.clone(),
                n_cells: cells.len(),
                pooled: None,
                per_type_average: None,
            };
            let others: Vec<usize> = (0..panels.len()).filter(|&u| u != t).collect();
            if cells.is_empty() || others.is_empty() {
                return Ok(row);
            }
            let num = mean_log_with(x, &cells, &resolved[t], log1p)?;
            let pooled: Vec<usize> = others
                .iter()
                .flat_map(|&u| resolved[u].iter().copied())
                .collect::<HashSet<_>>()
                .into_iter()
                .collect();
            row.pooled = ratio(num, mean_log_with(x, &cells, &pooled, log1p)?, "pooled", &panel.name);
            let avg = others.iter().map(|&u| mean_log_with(x, &cells, &resolved[u], log1p)).sum::<Result<f64>>()?
                / others.len() as f64;
            row.per_type_average = ratio(num, avg, "per-type", &panel.name);
            Ok(row)
        })
        .collect()
}

/// Per type: mean log expression of its own markers over the cells of the
/// clusters assigned to it, divided by that of the other types' markers.
pub fn marker_ratio_table(x: &CountMatrix, labels: &ClusterLabels, panels: &[MarkerPanel]) -> Result<Vec<RatioRow>> {
    ratio_table_with(x, labels, panels, f64::ln_1p)
}

/// `type  n_cells  ratio  alt_ratio`, the headline column chosen by `primary`.
pub fn write_ratio_tsv(path: impl AsRef<Path>, rows: &[RatioRow], primary: RatioDenominator) -> Result<()> {
    let alt = match primary {
        RatioDenominator::Pooled => RatioDenominator::PerTypeAverage,
        RatioDenominator::PerTypeAverage => RatioDenominator::Pooled,
    };
    let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |r| format!("{r:.6}"));
    let mut s = String::from("type\tn_cells\tratio\talt_ratio\n");
    for r in rows {
        s.push_str(&format!("{}\t{}\t{}\t{}\n", r.cell_type, r.n_cells, fmt(r.ratio(primary)), fmt(r.ratio(alt))));
    }
    write_atomic(path.as_ref(), s.as_bytes())
}

/// Cells with at least `min_pos` counts of every positive marker and at
/// most `max_neg` of every negative marker.
pub fn gate_cells(
    x: &CountMatrix,
    cells: &[usize],
    positive: &[&str],
    negative: &[&str],
    min_pos: u64,
    max_neg: u64,
) -> Result<Vec<usize>> {
    let find = |ids: &[&str]| -> Result<Vec<usize>> {
        ids.iter()
            .map(|id| x.feature_index(id).ok_or_else(|| Error::InvalidArgument(format!("marker '{id}' not in matrix"))))
            .collect()
    };
    let (pos, neg) = (find(positive)?, find(negative)?);
    Ok(cells
        .iter()
        .copied()
        .filter(|&j| pos.iter().all(|&i| x.get(i, j) >= min_pos) && neg.iter().all(|&i| x.get(i, j) <= max_neg))
        .collect())
}
