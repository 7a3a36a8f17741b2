use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected edge set over `0..d`, stored as sorted pairs `(i, j)` with `i < j`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeSet {
    edges: Vec<(usize, usize)>,
}

impl EdgeSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Normalizes each pair to `i < j`, sorts and dedups. Self loops are rejected.
    pub fn new(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in pairs {
            if a == b {
                return Err(Error::invalid(format!("self loop ({a}, {a}) in edge set")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Self {
            edges: set.into_iter().collect(),
        })
    }

    /// All pairs `i < j < d`.
    pub fn complete(d: usize) -> Self {
        let edges = (0..d)
            .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
            .collect();
        Self { edges }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.edges.iter()
    }

    pub fn as_slice(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i.min(j), i.max(j))).is_ok()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.edges.iter().map(|&(_, j)| j).max()
    }

    pub fn intersection_len(&self, other: &Self) -> usize {
        self.edges
            .iter()
            .filter(|&&(i, j)| other.contains(i, j))
            .count()
    }

    pub fn difference(&self, other: &Self) -> Self {
        Self {
            edges: self
                .edges
                .iter()
                .copied()
                .filter(|&(i, j)| !other.contains(i, j))
                .collect(),
        }
    }

    /// Relabels node `k` as `perm[k]`.
    pub fn relabel(&self, perm: &[usize]) -> Self {
        Self::new(self.edges.iter().map(|&(i, j)| (perm[i], perm[j])))
            .expect("a permutation cannot create self loops")
    }

    /// Dense 0/1 boolean mask, `mask[i * d + j]`.
    pub(crate) fn dense_mask(&self, d: usize) -> Vec<bool> {
        let mut m = vec![false; d * d];
        for &(i, j) in &self.edges {
            m[i * d + j] = true;
            m[j * d + i] = true;
        }
        m
    }
}
