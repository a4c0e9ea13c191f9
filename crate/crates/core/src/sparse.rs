//! Real-valued CSR matrix with a cached CSC copy for transposed products.

use rayon::prelude::*;

/// Rows above which products are split across the rayon pool. Each output
/// element is still summed by one thread in a fixed order, so results do not
/// depend on the thread count.
const PAR_MIN_ROWS: usize = 4096;

pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `y = A x`
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// `y = A^T x`
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]);
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    t_values: Vec<f64>,
}

impl SparseMatrix {
    /// Triplets must not repeat a coordinate; explicit zeros are dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.retain(|t| t.2 != 0.0);
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_ptr = vec![0usize; ncols + 1];
        for &(i, j, _) in &triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            row_ptr[i + 1] += 1;
            col_ptr[j + 1] += 1;
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        for j in 0..ncols {
            col_ptr[j + 1] += col_ptr[j];
        }
        let col_idx = triplets.iter().map(|t| t.1).collect();
        let values = triplets.iter().map(|t| t.2).collect();
        let mut next = col_ptr.clone();
        let mut row_idx = vec![0usize; triplets.len()];
        let mut t_values = vec![0.0; triplets.len()];
        for &(i, j, v) in &triplets {
            row_idx[next[j]] = i;
            t_values[next[j]] = v;
            next[j] += 1;
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
            col_ptr,
            row_idx,
            t_values,
        }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let ncols = rows.first().map_or(0, Vec::len);
        let triplets = rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, &v)| (i, j, v)))
            .collect();
        Self::from_triplets(rows.len(), ncols, triplets)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&j, &x)| (i, j, x))
        })
    }

    /// Sum of squared entries with compensated summation.
    pub fn frobenius_sq(&self) -> f64 {
        neumaier_sum(self.values.iter().map(|v| v * v))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, j, v) in self.entries() {
            out[i][j] = v;
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).1.iter().sum()).collect()
    }
}

pub fn neumaier_sum(it: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in it {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn compressed_product(ptr: &[usize], idx: &[usize], vals: &[f64], x: &[f64], y: &mut [f64]) {
    let row = |i: usize| -> f64 {
        let r = ptr[i]..ptr[i + 1];
        idx[r.clone()].iter().zip(&vals[r]).map(|(&j, &v)| v * x[j]).sum()
    };
    if y.len() >= PAR_MIN_ROWS {
        y.par_iter_mut().enumerate().for_each(|(i, out)| *out = row(i));
    } else {
        for (i, out) in y.iter_mut().enumerate() {
            *out = row(i);
        }
    }
}

impl LinearOperator for SparseMatrix {
    fn nrows(&self) -> usize {
        self.nrows
    }

    fn ncols(&self) -> usize {
        self.ncols
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        compressed_product(&self.row_ptr, &self.col_idx, &self.values, x, y);
    }

    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        compressed_product(&self.col_ptr, &self.row_idx, &self.t_values, x, y);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_match_dense() {
        let dense = vec![vec![1.0, 0.0, 2.0], vec![0.0, -3.0, 0.5]];
        let m = SparseMatrix::from_dense(&dense);
        let mut y = vec![0.0; 2];
        m.apply(&[1.0, 2.0, 3.0], &mut y);
        assert_eq!(y, vec![7.0, -4.5]);
        let mut z = vec![0.0; 3];
        m.apply_transpose(&[1.0, 2.0], &mut z);
        assert_eq!(z, vec![1.0, -6.0, 3.0]);
        assert_eq!(m.frobenius_sq(), 1.0 + 4.0 + 9.0 + 0.25);
        assert_eq!(m.nnz(), 4);
    }

    #[test]
    fn parallel_product_is_bitwise_serial() {
        let n = PAR_MIN_ROWS + 17;
        let triplets = (0..n).flat_map(|i| [(i, i % 7, 0.1 * i as f64), (i, (i * 13) % 11, 1.0 / (1 + i) as f64)]).collect();
        let m = SparseMatrix::from_triplets(n, 11, triplets);
        let x: Vec<f64> = (0..11).map(|j| (j as f64).sin()).collect();
        let mut par = vec![0.0; n];
        m.apply(&x, &mut par);
        let serial: Vec<f64> = (0..n)
            .map(|i| {
                let (c, v) = m.row(i);
                c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum()
            })
            .collect();
        assert_eq!(par, serial);
    }
}
