//! Bipartite stochastic block model and partition agreement.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{synthetic_ids, CountMatrix};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Independent Poisson counts.
    Poisson,
    /// Each cell draws its total (Poisson with the block-implied mean, or
    /// fixed) and spreads it multinomially with rate-proportional probabilities.
    Multinomial { fixed_total: Option<u64> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SbmConfig {
    pub gene_block_sizes: Vec<usize>,
    pub cell_block_sizes: Vec<usize>,
    /// Poisson mean per (gene block, cell block).
    pub rates: Vec<Vec<f64>>,
    pub seed: u64,
    pub mode: SamplingMode,
}

impl SbmConfig {
    /// Rate `diag` where gene block and cell block indices match, `off` elsewhere.
    pub fn planted(gene_block_sizes: Vec<usize>, cell_block_sizes: Vec<usize>, diag: f64, off: f64, seed: u64) -> Self {
        let rates = (0..gene_block_sizes.len())
            .map(|g| (0..cell_block_sizes.len()).map(|c| if g == c { diag } else { off }).collect())
            .collect();
        Self {
            gene_block_sizes,
            cell_block_sizes,
            rates,
            seed,
            mode: SamplingMode::Poisson,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.gene_block_sizes.len();
        let k = self.cell_block_sizes.len();
        if g == 0 || k == 0 {
            return Err(Error::Config("SBM needs at least one gene block and one cell block".into()));
        }
        if self.gene_block_sizes.iter().chain(&self.cell_block_sizes).any(|&s| s == 0) {
            return Err(Error::Config("SBM block sizes must be positive".into()));
        }
        if self.rates.len() != g || self.rates.iter().any(|r| r.len() != k) {
            return Err(Error::Config(format!("SBM rates must be {g} x {k}")));
        }
        if let Some(r) = self.rates.iter().flatten().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::Config(format!("SBM rate {r} is not a finite non-negative number")));
        }
        Ok(())
    }

    pub fn n_genes(&self) -> usize {
        self.gene_block_sizes.iter().sum()
    }

    pub fn n_cells(&self) -> usize {
        self.cell_block_sizes.iter().sum()
    }
}

fn block_labels(sizes: &[usize]) -> Vec<usize> {
    sizes.iter().enumerate().flat_map(|(b, &s)| std::iter::repeat_n(b, s)).collect()
}

#[derive(Debug, Clone)]
pub struct SbmSample {
    pub matrix: CountMatrix,
    pub cell_labels: Vec<usize>,
    pub gene_labels: Vec<usize>,
}

/// Draws a count matrix. Column `j` uses its own stream of the seed, so the
/// result does not depend on the thread count.
pub fn sample_sbm(cfg: &SbmConfig) -> Result<SbmSample> {
    cfg.validate()?;
    let gene_labels = block_labels(&cfg.gene_block_sizes);
    let cell_labels = block_labels(&cfg.cell_block_sizes);
    let p = gene_labels.len();
    let columns: Vec<Vec<(usize, u64)>> = cell_labels
        .par_iter()
        .enumerate()
        .map(|(j, &c)| {
            let mut rng = Rng::stream(cfg.seed, j as u64);
            let rate = |i: usize| cfg.rates[gene_labels[i]][c];
            match cfg.mode {
                SamplingMode::Poisson => (0..p).map(|i| (i, rng.poisson(rate(i)))).filter(|e| e.1 > 0).collect(),
                SamplingMode::Multinomial { fixed_total } => {
                    let mut cum = Vec::with_capacity(p);
                    let mut acc = 0.0;
                    for i in 0..p {
                        acc += rate(i);
                        cum.push(acc);
                    }
                    if acc <= 0.0 {
                        return Vec::new();
                    }
                    let total = fixed_total.unwrap_or_else(|| rng.poisson(acc));
                    let mut counts = vec![0u64; p];
                    for _ in 0..total {
                        let u = rng.next_f64() * acc;
                        let i = cum.partition_point(|&x| x <= u).min(p - 1);
                        counts[i] += 1;
                    }
                    counts.into_iter().enumerate().filter(|e| e.1 > 0).collect()
                }
            }
        })
        .collect();
    let triplets = columns
        .into_iter()
        .enumerate()
        .flat_map(|(j, col)| col.into_iter().map(move |(i, v)| (i, j, v)))
        .collect();
    let matrix = CountMatrix::from_triplets(
        p,
        cell_labels.len(),
        triplets,
        Some(synthetic_ids("gene", p)),
        Some(synthetic_ids("cell", cell_labels.len())),
    )?;
    Ok(SbmSample {
        matrix,
        cell_labels,
        gene_labels,
    })
}

fn comb2(x: u64) -> f64 {
    (x as f64) * (x as f64 - 1.0) / 2.0
}

/// Adjusted Rand index from the pair-counting contingency table.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!("label lengths differ: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Empty("no labels to compare".into()));
    }
    let mut table: std::collections::HashMap<(usize, usize), u64> = Default::default();
    let mut rows: std::collections::HashMap<usize, u64> = Default::default();
    let mut cols: std::collections::HashMap<usize, u64> = Default::default();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&v| comb2(v)).sum();
    let sum_a: f64 = rows.values().map(|&v| comb2(v)).sum();
    let sum_b: f64 = cols.values().map(|&v| comb2(v)).sum();
    let total = comb2(a.len() as u64);
    let expected = if total > 0.0 { sum_a * sum_b / total } else { 0.0 };
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        // both partitions trivial in the same way
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}
