use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;

/// Cluster assignment of each cell, `labels[i] < k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabels {
    labels: Vec<usize>,
    k: usize,
}

impl ClusterLabels {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidArgument(format!("label {bad} not below K = {k}")));
        }
        if labels.is_empty() {
            return Err(Error::Empty("no labels".into()));
        }
        Ok(Self { labels, k })
    }

    /// K taken as one more than the largest label.
    pub fn from_vec(labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        Self::new(labels, k)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }

    /// Members of each cluster, in index order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            m[l].push(i);
        }
        m
    }

    /// Drops empty clusters, keeping the relative order of the others.
    /// Returns the relabeled set and the ids that were dropped.
    pub fn compact(&self) -> (Self, Vec<usize>) {
        let sizes = self.sizes();
        let mut map = vec![usize::MAX; self.k];
        let mut next = 0;
        let mut dropped = Vec::new();
        for (c, &s) in sizes.iter().enumerate() {
            if s > 0 {
                map[c] = next;
                next += 1;
            } else {
                dropped.push(c);
            }
        }
        let labels = self.labels.iter().map(|&l| map[l]).collect();
        (Self { labels, k: next }, dropped)
    }

    /// `cell_id  cluster`
    pub fn write_tsv(&self, path: impl AsRef<Path>, cell_ids: &[String]) -> Result<()> {
        let mut s = String::from("cell_id\tcluster\n");
        for (id, l) in cell_ids.iter().zip(&self.labels) {
            s.push_str(&format!("{id}\t{l}\n"));
        }
        write_atomic(path.as_ref(), s.as_bytes())
    }

    /// Reads a `cell_id  label` table (header optional). Labels may be any
    /// tokens; they are mapped to 0.. in order of first appearance.
    pub fn read_tsv(path: impl AsRef<Path>) -> Result<(Vec<String>, Self)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        let mut names: HashMap<String, usize> = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let tok: Vec<&str> = line.split('\t').collect();
            if tok.len() < 2 {
                return Err(Error::parse(path, lineno + 1, "expected 'cell_id<TAB>label'"));
            }
            if lineno == 0 && tok[0] == "cell_id" {
                continue;
            }
            let key = tok[1].trim().to_string();
            let next = names.len();
            let id = *names.entry(key).or_insert(next);
            ids.push(tok[0].trim().to_string());
            labels.push(id);
        }
        Ok((ids, Self::from_vec(labels)?))
    }
}
