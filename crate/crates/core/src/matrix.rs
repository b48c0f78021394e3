//! Small dense square matrices and symmetric pair sets.
//!
//! Product counts stay modest in this pipeline (hundreds), so score and
//! role-adjacency matrices are stored densely; pair-indexed binary relations
//! use an ordered set of normalized `(low, high)` index pairs.

use std::collections::BTreeSet;

/// Row-major dense square matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Zero matrix of side `n`.
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Build from a function of `(row, col)`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = f(i, j);
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    /// Row `i` as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// True when the matrix equals its transpose to within `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if (self.get(i, j) - self.get(j, i)).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Off-diagonal entries strictly greater than zero, as `(i, j, value)`
    /// with `i < j`; for asymmetric matrices both orientations are reported.
    pub fn positive_off_diagonal(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j && self.get(i, j) > 0.0 {
                    out.push((i, j, self.get(i, j)));
                }
            }
        }
        out
    }
}

/// Set of unordered product-index pairs `(i, j)` with `i != j`.
///
/// Pairs are stored normalized as `(min, max)`, which makes the set a binary
/// symmetric matrix with zero diagonal. Iteration order is ascending, so
/// exports built from it are stable.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairSet {
    pairs: BTreeSet<(u32, u32)>,
}

impl PairSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert a pair; diagonal entries are ignored.
    pub fn insert(&mut self, i: u32, j: u32) {
        if i != j {
            self.pairs.insert((i.min(j), i.max(j)));
        }
    }

    pub fn contains(&self, i: u32, j: u32) -> bool {
        i != j && self.pairs.contains(&(i.min(j), i.max(j)))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Normalized pairs in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.pairs.iter().copied()
    }

    /// True when no pair appears in both sets.
    pub fn is_disjoint(&self, other: &PairSet) -> bool {
        self.pairs.is_disjoint(&other.pairs)
    }

    /// Neighbour lists under the pair relation, for `n` products.
    pub fn adjacency(&self, n: usize) -> Vec<BTreeSet<u32>> {
        let mut adj = vec![BTreeSet::new(); n];
        for &(i, j) in &self.pairs {
            adj[i as usize].insert(j);
            adj[j as usize].insert(i);
        }
        adj
    }
}

impl FromIterator<(u32, u32)> for PairSet {
    fn from_iter<T: IntoIterator<Item = (u32, u32)>>(iter: T) -> Self {
        let mut s = PairSet::new();
        for (i, j) in iter {
            s.insert(i, j);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_roundtrip() {
        let mut m = Matrix::zeros(3);
        m.set(0, 2, 1.5);
        m.set(2, 0, 1.5);
        assert_eq!(m.get(0, 2), 1.5);
        assert_eq!(m.get(1, 1), 0.0);
        assert!(m.is_symmetric(0.0));
        m.set(1, 0, 0.1);
        assert!(!m.is_symmetric(1e-12));
    }

    #[test]
    fn pair_set_normalizes_and_skips_diagonal() {
        let mut s = PairSet::new();
        s.insert(3, 1);
        s.insert(1, 3);
        s.insert(2, 2);
        assert_eq!(s.len(), 1);
        assert!(s.contains(1, 3));
        assert!(s.contains(3, 1));
        assert!(!s.contains(2, 2));
    }

    #[test]
    fn adjacency_lists_are_symmetric() {
        let s: PairSet = [(0, 1), (1, 2)].into_iter().collect();
        let adj = s.adjacency(3);
        assert!(adj[0].contains(&1));
        assert!(adj[1].contains(&0));
        assert!(adj[1].contains(&2));
        assert!(adj[2].contains(&1));
        assert!(adj[0].len() == 1 && adj[1].len() == 2);
    }
}
