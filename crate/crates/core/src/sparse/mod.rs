//! Sparse symmetric storage, sparse Cholesky with product-form rank-one
//! updates, and power iteration.

mod cholesky;
mod market;
mod power;

pub use cholesky::{
    cholesky, cholesky_rank_one_bordered, factorize, rank_one_update, CholeskyFactor,
    SymbolicCholesky,
};
pub use market::{read_matrix_market, write_matrix_market};
pub use power::{
    largest_eigenvalue, power_iteration_max, second_smallest_eigenvalue, EigenEstimate, POWER_BLOCK,
    PowerOptions,
};

use nalgebra::DMatrix;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};

/// Symmetric sparse matrix holding only its lower triangle in compressed
/// column form. Row indices within a column are sorted and unique, and the
/// diagonal, when stored, is the first entry of its column.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSymmetric {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymmetric {
    /// Builds a matrix from `(row, col, value)` triplets. Entries from either
    /// triangle are folded into the lower one and duplicates are summed.
    /// Explicit zeros are kept so that the pattern only depends on the input
    /// structure.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; n + 1];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::Parameter(format!(
                    "triplet ({i}, {j}) out of bounds for dimension {n}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::Parameter(format!("non-finite entry at ({i}, {j})")));
            }
            counts[i.min(j) + 1] += 1;
        }
        for k in 0..n {
            counts[k + 1] += counts[k];
        }
        let mut next = counts.clone();
        let mut rows = vec![0usize; triplets.len()];
        let mut vals = vec![0f64; triplets.len()];
        for &(i, j, v) in triplets {
            let (r, c) = if i >= j { (i, j) } else { (j, i) };
            let slot = next[c];
            next[c] += 1;
            rows[slot] = r;
            vals[slot] = v;
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        col_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for c in 0..n {
            scratch.clear();
            scratch.extend((counts[c]..counts[c + 1]).map(|p| (rows[p], vals[p])));
            scratch.sort_by_key(|e| e.0);
            for &(r, v) in &scratch {
                if row_idx.len() > col_ptr[c] && *row_idx.last().unwrap() == r {
                    *values.last_mut().unwrap() += v;
                } else {
                    row_idx.push(r);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Ok(Self {
            n,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    /// Lower triangle of a dense symmetric matrix, dropping exact zeros.
    pub fn from_dense(a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                found: a.ncols(),
            });
        }
        let n = a.nrows();
        let mut t = Vec::new();
        for j in 0..n {
            for i in j..n {
                let v = a[(i, j)];
                if v != 0.0 || i == j {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, &t)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored entries (lower triangle only).
    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_indices(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let span = self.col_ptr[c]..self.col_ptr[c + 1];
        match self.row_idx[span.clone()].binary_search(&r) {
            Ok(p) => self.values[span.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.get(j, j)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n {
            let xj = x[j];
            let mut acc = 0.0;
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[p];
                let a = self.values[p];
                if i == j {
                    acc += a * xj;
                } else {
                    y[i] += a * xj;
                    acc += a * x[i];
                }
            }
            y[j] += acc;
        }
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let y = self.mul_vec(x);
        y.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for j in 0..self.n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[p];
                a[(i, j)] = self.values[p];
                a[(j, i)] = self.values[p];
            }
        }
        a
    }

    /// Iterator over stored lower-triangle entries `(row, col, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |j| {
            (self.col_ptr[j]..self.col_ptr[j + 1])
                .map(move |p| (self.row_idx[p], j, self.values[p]))
        })
    }

    /// Returns `D A D` for the diagonal matrix `D = diag(d)`.
    pub fn scale_symmetric(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.n);
        let mut out = self.clone();
        for j in 0..self.n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                out.values[p] *= d[self.row_idx[p]] * d[j];
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `a * self + b * other` on the union pattern.
    pub fn linear_combination(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        let mut t: Vec<(usize, usize, f64)> = self.iter().map(|(i, j, v)| (i, j, a * v)).collect();
        t.extend(other.iter().map(|(i, j, v)| (i, j, b * v)));
        Self::from_triplets(self.n, &t)
    }

    /// Adds `values[k]` to the diagonal entry `k`.
    pub fn add_diagonal(&self, values: &[f64]) -> Result<Self> {
        let other = Self::from_diagonal(values);
        self.linear_combination(1.0, &other, 1.0)
    }

    /// Principal submatrix `A[idx, idx]` with rows/columns in the order of `idx`.
    pub fn principal_submatrix(&self, idx: &[usize]) -> Result<Self> {
        let mut map = vec![usize::MAX; self.n];
        for (k, &i) in idx.iter().enumerate() {
            if i >= self.n || map[i] != usize::MAX {
                return Err(Error::Parameter(format!(
                    "invalid or repeated submatrix index {i}"
                )));
            }
            map[i] = k;
        }
        let t: Vec<(usize, usize, f64)> = self
            .iter()
            .filter_map(|(i, j, v)| {
                let (a, b) = (map[i], map[j]);
                (a != usize::MAX && b != usize::MAX).then_some((a, b, v))
            })
            .collect();
        Self::from_triplets(idx.len(), &t)
    }

    /// Full (both triangles) column structure: for each column, `(row, value)`.
    fn full_columns(&self) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        let mut counts = vec![0usize; self.n + 1];
        for (i, j, _) in self.iter() {
            counts[j + 1] += 1;
            if i != j {
                counts[i + 1] += 1;
            }
        }
        for k in 0..self.n {
            counts[k + 1] += counts[k];
        }
        let mut next = counts.clone();
        let total = counts[self.n];
        let mut rows = vec![0; total];
        let mut vals = vec![0.0; total];
        // Filling column by column in increasing source column keeps rows sorted:
        // upper entries (i < j) of column j come from earlier source columns.
        for j in 0..self.n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[p];
                let v = self.values[p];
                let s = next[j];
                next[j] += 1;
                rows[s] = i;
                vals[s] = v;
                if i != j {
                    let s = next[i];
                    next[i] += 1;
                    rows[s] = j;
                    vals[s] = v;
                }
            }
        }
        (counts, rows, vals)
    }

    /// Full symmetric pattern as CSC index arrays (used for orderings).
    pub fn full_pattern(&self) -> (Vec<usize>, Vec<usize>) {
        let (cp, ri, _) = self.full_columns();
        (cp, ri)
    }

    /// Returns `A diag(d) A`, the sparse "square" weighted by `d`. The result
    /// pattern is the two-ring of the pattern of `A`.
    pub fn weighted_square(&self, d: &[f64]) -> Result<Self> {
        if d.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: d.len(),
            });
        }
        let (cp, ri, vx) = self.full_columns();
        let n = self.n;
        let mut acc = vec![0.0; n];
        let mut mark = vec![usize::MAX; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut col_ptr = vec![0usize];
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        for j in 0..n {
            touched.clear();
            for p in cp[j]..cp[j + 1] {
                let k = ri[p];
                let akj = vx[p] * d[k];
                for q in cp[k]..cp[k + 1] {
                    let i = ri[q];
                    if i < j {
                        continue;
                    }
                    if mark[i] != j {
                        mark[i] = j;
                        acc[i] = 0.0;
                        touched.push(i);
                    }
                    acc[i] += vx[q] * akj;
                }
            }
            touched.sort_unstable();
            for &i in &touched {
                row_idx.push(i);
                values.push(acc[i]);
            }
            col_ptr.push(row_idx.len());
        }
        Ok(Self {
            n,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.iter()
            .map(|(i, j, v)| if i == j { v * v } else { 2.0 * v * v })
            .sum::<f64>()
            .sqrt()
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        let mut rows = vec![0.0f64; self.n];
        for (i, j, v) in self.iter() {
            rows[i] += v.abs();
            if i != j {
                rows[j] += v.abs();
            }
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    pub(crate) fn pattern_hash(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.n.hash(&mut h);
        self.col_ptr.hash(&mut h);
        self.row_idx.hash(&mut h);
        h.finish()
    }

    pub(crate) fn same_pattern(&self, col_ptr: &[usize], row_idx: &[usize]) -> bool {
        self.col_ptr == col_ptr && self.row_idx == row_idx
    }
}
