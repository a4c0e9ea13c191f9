use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::CountMatrix;
use crate::sparse::{LinearOperator, SparseMatrix};

/// Which p x n matrix the embedding decomposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralVariant {
    /// `D_r^{-1/2} X D_c^{-1/2}`
    Normalized,
    /// `D_r^{-1} X`, row-stochastic.
    RandomWalk,
    /// `X` itself (adjacency spectral embedding).
    Adjacency,
}

impl std::str::FromStr for SpectralVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(Self::Normalized),
            "random_walk" => Ok(Self::RandomWalk),
            "adjacency" => Ok(Self::Adjacency),
            _ => Err(Error::Config(format!("unknown spectral variant '{s}'"))),
        }
    }
}

/// Degree-normalized bipartite adjacency, `L_ij = X_ij / sqrt(D_i D_j)`.
/// The other variants reuse the same container with their own scalings.
#[derive(Debug, Clone)]
pub struct NormalizedLaplacian {
    pub matrix: SparseMatrix,
    pub row_scale: Vec<f64>,
    pub col_scale: Vec<f64>,
    pub frobenius_sq: f64,
    pub variant: SpectralVariant,
}

impl NormalizedLaplacian {
    /// Wraps an arbitrary real matrix (unit scalings).
    pub fn from_matrix(matrix: SparseMatrix, variant: SpectralVariant) -> Self {
        let frobenius_sq = matrix.frobenius_sq();
        Self {
            row_scale: vec![1.0; matrix.nrows()],
            col_scale: vec![1.0; matrix.ncols()],
            matrix,
            frobenius_sq,
            variant,
        }
    }
}

impl LinearOperator for NormalizedLaplacian {
    fn nrows(&self) -> usize {
        self.matrix.nrows()
    }
    fn ncols(&self) -> usize {
        self.matrix.ncols()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matrix.apply(x, y)
    }
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        self.matrix.apply_transpose(x, y)
    }
}

fn check_degrees(x: &CountMatrix) -> Result<(Vec<u64>, Vec<u64>)> {
    let d = x.degrees();
    if let Some(i) = d.row_degrees.iter().position(|&v| v == 0) {
        return Err(Error::ZeroDegree {
            axis: "feature",
            id: x.feature_ids()[i].clone(),
        });
    }
    if let Some(j) = d.col_degrees.iter().position(|&v| v == 0) {
        return Err(Error::ZeroDegree {
            axis: "cell",
            id: x.cell_ids()[j].clone(),
        });
    }
    Ok((d.row_degrees, d.col_degrees))
}

pub fn normalized_laplacian(x: &CountMatrix) -> Result<NormalizedLaplacian> {
    let (dr, dc) = check_degrees(x)?;
    let triplets = x
        .entries()
        .map(|(i, j, v)| (i, j, v as f64 / (dr[i] as f64 * dc[j] as f64).sqrt()))
        .collect();
    let matrix = SparseMatrix::from_triplets(x.n_features(), x.n_cells(), triplets);
    Ok(NormalizedLaplacian {
        frobenius_sq: matrix.frobenius_sq(),
        matrix,
        row_scale: dr.iter().map(|&d| 1.0 / (d as f64).sqrt()).collect(),
        col_scale: dc.iter().map(|&d| 1.0 / (d as f64).sqrt()).collect(),
        variant: SpectralVariant::Normalized,
    })
}

pub fn random_walk_laplacian(x: &CountMatrix) -> Result<NormalizedLaplacian> {
    let (dr, _) = check_degrees(x)?;
    let triplets = x.entries().map(|(i, j, v)| (i, j, v as f64 / dr[i] as f64)).collect();
    let matrix = SparseMatrix::from_triplets(x.n_features(), x.n_cells(), triplets);
    Ok(NormalizedLaplacian {
        frobenius_sq: matrix.frobenius_sq(),
        matrix,
        row_scale: dr.iter().map(|&d| 1.0 / d as f64).collect(),
        col_scale: vec![1.0; x.n_cells()],
        variant: SpectralVariant::RandomWalk,
    })
}

/// The raw counts as a real matrix, for adjacency spectral embedding.
pub fn adjacency_matrix(x: &CountMatrix) -> Result<NormalizedLaplacian> {
    check_degrees(x)?;
    let triplets = x.entries().map(|(i, j, v)| (i, j, v as f64)).collect();
    let matrix = SparseMatrix::from_triplets(x.n_features(), x.n_cells(), triplets);
    Ok(NormalizedLaplacian::from_matrix(matrix, SpectralVariant::Adjacency))
}

pub fn spectral_matrix(x: &CountMatrix, variant: SpectralVariant) -> Result<NormalizedLaplacian> {
    match variant {
        SpectralVariant::Normalized => normalized_laplacian(x),
        SpectralVariant::RandomWalk => random_walk_laplacian(x),
        SpectralVariant::Adjacency => adjacency_matrix(x),
    }
}
