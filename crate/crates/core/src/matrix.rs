//! Sparse count matrix. The same object is read as the p x n adjacency matrix
//! of a bipartite multi-edge network: feature nodes on rows, cell nodes on
//! columns, and `X[i, j]` parallel edges between feature `i` and cell `j`.

use std::collections::HashSet;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Column-major compressed view.
#[derive(Debug, Clone)]
pub struct CscView {
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<u64>,
}

/// p x n non-negative integer counts, stored row-major with implicit zeros.
#[derive(Debug, Clone)]
pub struct CountMatrix {
    n_features: usize,
    n_cells: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<u64>,
    feature_ids: Vec<String>,
    cell_ids: Vec<String>,
    csc: OnceLock<CscView>,
}

/// Node degrees of the bipartite network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeVectors {
    pub row_degrees: Vec<u64>,
    pub col_degrees: Vec<u64>,
    pub total: u64,
}

pub fn synthetic_ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn check_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::InvalidMatrix(format!("duplicate {what} id '{id}'")));
        }
    }
    Ok(())
}

impl CountMatrix {
    /// Builds a matrix from (feature, cell, count) triplets in any order.
    /// Zero counts are dropped; duplicate coordinates are an error.
    pub fn from_triplets(
        n_features: usize,
        n_cells: usize,
        mut triplets: Vec<(usize, usize, u64)>,
        feature_ids: Option<Vec<String>>,
        cell_ids: Option<Vec<String>>,
    ) -> Result<Self> {
        let feature_ids = feature_ids.unwrap_or_else(|| synthetic_ids("f", n_features));
        let cell_ids = cell_ids.unwrap_or_else(|| synthetic_ids("c", n_cells));
        if feature_ids.len() != n_features {
            return Err(Error::InvalidMatrix(format!(
                "{} feature ids for {} features",
                feature_ids.len(),
                n_features
            )));
        }
        if cell_ids.len() != n_cells {
            return Err(Error::InvalidMatrix(format!(
                "{} cell ids for {} cells",
                cell_ids.len(),
                n_cells
            )));
        }
        check_unique(&feature_ids, "feature")?;
        check_unique(&cell_ids, "cell")?;

        triplets.retain(|t| t.2 > 0);
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n_features + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut prev: Option<(usize, usize)> = None;
        for &(i, j, v) in &triplets {
            if i >= n_features || j >= n_cells {
                return Err(Error::InvalidMatrix(format!(
                    "entry ({i}, {j}) outside {n_features} x {n_cells}"
                )));
            }
            if prev == Some((i, j)) {
                return Err(Error::InvalidMatrix(format!("duplicate coordinate ({i}, {j})")));
            }
            prev = Some((i, j));
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(v);
        }
        for i in 0..n_features {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            n_features,
            n_cells,
            row_ptr,
            col_idx,
            values,
            feature_ids,
            cell_ids,
            csc: OnceLock::new(),
        })
    }

    /// Dense row-major construction with synthetic ids (mostly for tests and demos).
    pub fn from_dense(rows: &[Vec<u64>]) -> Result<Self> {
        let p = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidMatrix(format!("ragged dense row {i}")));
            }
            triplets.extend(row.iter().enumerate().filter(|(_, &v)| v > 0).map(|(j, &v)| (i, j, v)));
        }
        Self::from_triplets(p, n, triplets, None, None)
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn feature_ids(&self) -> &[String] {
        &self.feature_ids
    }

    pub fn cell_ids(&self) -> &[String] {
        &self.cell_ids
    }

    /// Column indices and counts of feature row `i`, sorted by column.
    pub fn row(&self, i: usize) -> (&[usize], &[u64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// Row indices and counts of cell column `j`, sorted by row.
    pub fn col(&self, j: usize) -> (&[usize], &[u64]) {
        let csc = self.csc();
        let r = csc.col_ptr[j]..csc.col_ptr[j + 1];
        (&csc.row_idx[r.clone()], &csc.values[r])
    }

    pub fn csc(&self) -> &CscView {
        self.csc.get_or_init(|| {
            let mut col_ptr = vec![0usize; self.n_cells + 1];
            for &j in &self.col_idx {
                col_ptr[j + 1] += 1;
            }
            for j in 0..self.n_cells {
                col_ptr[j + 1] += col_ptr[j];
            }
            let mut next = col_ptr.clone();
            let mut row_idx = vec![0usize; self.nnz()];
            let mut values = vec![0u64; self.nnz()];
            for i in 0..self.n_features {
                let (cols, vals) = self.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    row_idx[next[j]] = i;
                    values[next[j]] = v;
                    next[j] += 1;
                }
            }
            CscView {
                col_ptr,
                row_idx,
                values,
            }
        })
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0, |k| vals[k])
    }

    /// (feature, cell, count) in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        (0..self.n_features).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<u64>> {
        let mut out = vec![vec![0u64; self.n_cells]; self.n_features];
        for (i, j, v) in self.entries() {
            out[i][j] = v;
        }
        out
    }

    /// Number of non-zero entries in each feature row.
    pub fn row_nnz(&self) -> Vec<usize> {
        (0..self.n_features).map(|i| self.row_ptr[i + 1] - self.row_ptr[i]).collect()
    }

    /// Number of non-zero entries in each cell column.
    pub fn col_nnz(&self) -> Vec<usize> {
        let csc = self.csc();
        (0..self.n_cells).map(|j| csc.col_ptr[j + 1] - csc.col_ptr[j]).collect()
    }

    pub fn degrees(&self) -> DegreeVectors {
        let mut row_degrees = vec![0u64; self.n_features];
        let mut col_degrees = vec![0u64; self.n_cells];
        for (i, j, v) in self.entries() {
            row_degrees[i] += v;
            col_degrees[j] += v;
        }
        let total = row_degrees.iter().sum();
        DegreeVectors {
            row_degrees,
            col_degrees,
            total,
        }
    }

    /// Keeps the rows and columns whose mask entry is true.
    pub fn submatrix(&self, feature_mask: &[bool], cell_mask: &[bool]) -> Result<Self> {
        if feature_mask.len() != self.n_features || cell_mask.len() != self.n_cells {
            return Err(Error::InvalidArgument(format!(
                "mask lengths {} x {} do not match matrix {} x {}",
                feature_mask.len(),
                cell_mask.len(),
                self.n_features,
                self.n_cells
            )));
        }
        let new_row = remap(feature_mask);
        let new_col = remap(cell_mask);
        let p = feature_mask.iter().filter(|&&b| b).count();
        let n = cell_mask.iter().filter(|&&b| b).count();
        if p == 0 || n == 0 {
            return Err(Error::Empty(format!("submatrix selects {p} features and {n} cells")));
        }
        let triplets = self
            .entries()
            .filter_map(|(i, j, v)| Some((new_row[i]?, new_col[j]?, v)))
            .collect();
        let keep = |ids: &[String], mask: &[bool]| -> Vec<String> {
            ids.iter().zip(mask).filter(|(_, &m)| m).map(|(s, _)| s.clone()).collect()
        };
        Self::from_triplets(
            p,
            n,
            triplets,
            Some(keep(&self.feature_ids, feature_mask)),
            Some(keep(&self.cell_ids, cell_mask)),
        )
    }

    /// Column subset by index (order preserved as given).
    pub fn select_cells(&self, cells: &[usize]) -> Result<Self> {
        let mut mask = vec![false; self.n_cells];
        for &c in cells {
            if c >= self.n_cells {
                return Err(Error::InvalidArgument(format!("cell index {c} out of range")));
            }
            mask[c] = true;
        }
        self.submatrix(&vec![true; self.n_features], &mask)
    }

    pub fn feature_index(&self, id: &str) -> Option<usize> {
        self.feature_ids.iter().position(|f| f == id)
    }
}

fn remap(mask: &[bool]) -> Vec<Option<usize>> {
    let mut next = 0;
    mask.iter()
        .map(|&keep| {
            keep.then(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

impl PartialEq for CountMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.n_features == other.n_features
            && self.n_cells == other.n_cells
            && self.row_ptr == other.row_ptr
            && self.col_idx == other.col_idx
            && self.values == other.values
            && self.feature_ids == other.feature_ids
            && self.cell_ids == other.cell_ids
    }
}
