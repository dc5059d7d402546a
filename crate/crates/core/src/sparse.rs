//! Compressed sparse row storage with a column-major shadow copy.
//!
//! Transfer operators act on row vectors of bin masses, `v ↦ v·P`. Storing
//! the transpose next to the row layout turns that product into one gather
//! per output entry, accumulated in a fixed order, so results do not depend
//! on how the columns are scheduled across threads.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Column count above which `v·P` is evaluated in parallel.
const PAR_THRESHOLD: usize = 8192;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    // transpose: for each column, the contributing rows in increasing order
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    col_values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are
    /// summed in input order; zero entries are dropped.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(i, j, v) in &triplets {
            if i >= n_rows || j >= n_cols {
                return Err(Error::invalid(format!(
                    "entry ({i}, {j}) outside a {n_rows}x{n_cols} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::invalid(format!("non-finite entry at ({i}, {j})")));
            }
        }
        // stable sort keeps the summation order of duplicates deterministic
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for (i, j, v) in triplets {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => merged.push((i, j, v)),
            }
        }
        merged.retain(|&(_, _, v)| v != 0.0);

        let mut row_ptr = vec![0usize; n_rows + 1];
        for &(i, _, _) in &merged {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx: Vec<usize> = merged.iter().map(|t| t.1).collect();
        let values: Vec<f64> = merged.iter().map(|t| t.2).collect();

        let mut col_ptr = vec![0usize; n_cols + 1];
        for &j in &col_idx {
            col_ptr[j + 1] += 1;
        }
        for j in 0..n_cols {
            col_ptr[j + 1] += col_ptr[j];
        }
        let mut fill = col_ptr.clone();
        let mut row_idx = vec![0usize; merged.len()];
        let mut col_values = vec![0.0; merged.len()];
        for (i, w) in row_ptr.windows(2).enumerate() {
            for k in w[0]..w[1] {
                let j = col_idx[k];
                row_idx[fill[j]] = i;
                col_values[fill[j]] = values[k];
                fill[j] += 1;
            }
        }

        Ok(SparseMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
            col_ptr,
            row_idx,
            col_values,
        })
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut t = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::DimensionMismatch {
                    expected: n_cols,
                    found: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n_rows, n_cols, t)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Nonzeros of row `i` as `(column, value)` pairs in column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    /// All nonzeros in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, j, v) in self.entries() {
            d[i][j] = v;
        }
        d
    }

    /// `out = v·P` for a row vector `v`.
    pub fn left_mul_into(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.n_rows, "left_mul: vector length");
        assert_eq!(out.len(), self.n_cols, "left_mul: output length");
        let gather = |j: usize| -> f64 {
            let mut acc = 0.0;
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                acc += v[self.row_idx[k]] * self.col_values[k];
            }
            acc
        };
        if self.n_cols >= PAR_THRESHOLD {
            out.par_iter_mut().enumerate().for_each(|(j, o)| *o = gather(j));
        } else {
            for (j, o) in out.iter_mut().enumerate() {
                *o = gather(j);
            }
        }
    }

    pub fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        self.left_mul_into(v, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_merge_and_zeros_drop() {
        let m = SparseMatrix::from_triplets(2, 3, vec![(1, 2, 0.5), (0, 1, 0.25), (1, 2, 0.25), (0, 0, 0.0)]).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(1, 2), 0.75);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.row_sums(), vec![0.25, 0.75]);
    }

    #[test]
    fn left_multiplication_matches_dense() {
        let d = vec![vec![0.5, 0.5, 0.0], vec![0.1, 0.0, 0.9], vec![0.0, 1.0, 0.0]];
        let m = SparseMatrix::from_dense(&d).unwrap();
        let v = [0.2, 0.3, 0.5];
        let out = m.left_mul(&v);
        for j in 0..3 {
            let e: f64 = (0..3).map(|i| v[i] * d[i][j]).sum();
            assert!((out[j] - e).abs() < 1e-15);
        }
        assert_eq!(m.to_dense(), d);
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(SparseMatrix::from_triplets(2, 2, vec![(2, 0, 1.0)]).is_err());
        assert!(SparseMatrix::from_dense(&[vec![1.0, 0.0], vec![1.0]]).is_err());
    }

    #[test]
    fn parallel_product_is_deterministic() {
        let n = PAR_THRESHOLD + 17;
        let t: Vec<_> = (0..n)
            .flat_map(|i| [(i, (i * 7) % n, 0.3), (i, (i * 13 + 1) % n, 0.7)])
            .collect();
        let m = SparseMatrix::from_triplets(n, n, t).unwrap();
        let v: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let a = m.left_mul(&v);
        let b = m.left_mul(&v);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
