//! Exact Ulam discretisation of the transfer operator.
//!
//! For a partition `{J_i}` of `[0, 1]` the Ulam matrix has entries
//! `P_ij = leb(J_i ∩ T⁻¹J_j) / leb(J_i)`. Each branch of `T` is increasing
//! and onto, so `T⁻¹J_j` restricted to a branch is the interval between the
//! branch preimages of the endpoints of `J_j`. Assembly therefore reduces to
//! merging two sorted lists of points per branch (the partition edges and
//! their preimages); no quadrature is involved and the cost is `O(N)` root
//! solves plus a linear sweep.

mod io;

pub use io::{load, save, CacheOutcome, MatrixCache};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::{Branch, PMMap};
use crate::sparse::SparseMatrix;

/// Partition of `[0, 1]` into half-open cells `[e_i, e_{i+1})`, the last
/// cell closed.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    edges: Vec<f64>,
    uniform: bool,
}

impl Partition {
    /// `N` bins of width `1/N`.
    pub fn uniform(n_bins: usize) -> Result<Self> {
        if n_bins == 0 {
            return Err(Error::invalid("partition needs at least one bin"));
        }
        let edges = (0..=n_bins).map(|i| i as f64 / n_bins as f64).collect();
        Ok(Partition { edges, uniform: true })
    }

    /// One cell `[0, hole_end)` followed by `n_bins` uniform bins on
    /// `[hole_end, 1]`. Used to realise holes whose boundary is not a
    /// multiple of `1/N`.
    pub fn with_hole_cell(hole_end: f64, n_bins: usize) -> Result<Self> {
        if !(hole_end > 0.0 && hole_end < 1.0) {
            return Err(Error::invalid(format!("hole end {hole_end} must lie in (0, 1)")));
        }
        if n_bins == 0 {
            return Err(Error::invalid("partition needs at least one bin"));
        }
        let width = 1.0 - hole_end;
        let mut edges = Vec::with_capacity(n_bins + 2);
        edges.push(0.0);
        edges.extend((0..n_bins).map(|k| hole_end + width * k as f64 / n_bins as f64));
        edges.push(1.0);
        Ok(Partition { edges, uniform: false })
    }

    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || edges[0] != 0.0 || *edges.last().unwrap() != 1.0 {
            return Err(Error::invalid("partition edges must start at 0 and end at 1"));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("partition edges must be strictly increasing"));
        }
        let n = edges.len() - 1;
        let uniform = edges
            .iter()
            .enumerate()
            .all(|(i, &e)| e == i as f64 / n as f64);
        Ok(Partition { edges, uniform })
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn bin(&self, i: usize) -> (f64, f64) {
        (self.edges[i], self.edges[i + 1])
    }

    pub fn width(&self, i: usize) -> f64 {
        self.edges[i + 1] - self.edges[i]
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        0.5 * (self.edges[i] + self.edges[i + 1])
    }

    /// Index of the bin containing `x`; `x = 1` belongs to the last bin.
    pub fn locate(&self, x: f64) -> Option<usize> {
        if !(0.0..=1.0).contains(&x) {
            return None;
        }
        let k = self.edges.partition_point(|&e| e <= x);
        Some(k.saturating_sub(1).min(self.n_bins() - 1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MatrixKind {
    Closed,
    /// Rows and columns restricted to the bins outside `hole` (0-based bin
    /// indices).
    Open { hole: Vec<usize> },
    /// Mass landing in the first `eps0_bins` bins is pooled and
    /// redistributed with the bin masses `rho`.
    Averaged { eps0_bins: usize, rho: Vec<f64> },
}

impl MatrixKind {
    pub fn name(&self) -> &'static str {
        match self {
            MatrixKind::Closed => "closed",
            MatrixKind::Open { .. } => "open",
            MatrixKind::Averaged { .. } => "averaged",
        }
    }
}

/// Sparse Ulam matrix together with the map and partition it discretises.
#[derive(Debug, Clone, PartialEq)]
pub struct UlamMatrix {
    map: PMMap,
    partition: Partition,
    kind: MatrixKind,
    /// Partition bin represented by each matrix row/column.
    states: Vec<usize>,
    matrix: SparseMatrix,
}

impl UlamMatrix {
    pub(crate) fn from_parts(
        map: PMMap,
        partition: Partition,
        kind: MatrixKind,
        matrix: SparseMatrix,
    ) -> Result<Self> {
        let states: Vec<usize> = match &kind {
            MatrixKind::Open { hole } => survivors(partition.n_bins(), hole)?,
            _ => (0..partition.n_bins()).collect(),
        };
        if matrix.n_rows() != states.len() || !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: states.len(),
                found: matrix.n_rows(),
            });
        }
        Ok(UlamMatrix {
            map,
            partition,
            kind,
            states,
            matrix,
        })
    }

    pub fn map(&self) -> &PMMap {
        &self.map
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn kind(&self) -> &MatrixKind {
        &self.kind
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    /// Matrix dimension (number of surviving bins for open matrices).
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn n_bins(&self) -> usize {
        self.partition.n_bins()
    }

    /// Bin index of each row.
    pub fn states(&self) -> &[usize] {
        &self.states
    }

    /// Restricts a closed matrix to the bins outside `hole_bins`.
    pub fn open_submatrix(&self, hole_bins: &[usize]) -> Result<UlamMatrix> {
        if self.kind != MatrixKind::Closed {
            return Err(Error::invalid("open_submatrix expects a closed matrix"));
        }
        let n = self.n_bins();
        let mut hole: Vec<usize> = hole_bins.to_vec();
        hole.sort_unstable();
        hole.dedup();
        let keep = survivors(n, &hole)?;
        let mut new_index = vec![usize::MAX; n];
        for (k, &b) in keep.iter().enumerate() {
            new_index[b] = k;
        }
        let triplets = self
            .matrix
            .entries()
            .filter(|&(i, j, _)| new_index[i] != usize::MAX && new_index[j] != usize::MAX)
            .map(|(i, j, v)| (new_index[i], new_index[j], v))
            .collect();
        let matrix = SparseMatrix::from_triplets(keep.len(), keep.len(), triplets)?;
        Ok(UlamMatrix {
            map: self.map,
            partition: self.partition.clone(),
            kind: MatrixKind::Open { hole },
            states: keep,
            matrix,
        })
    }

    /// `f ↦ A(f·P)`: after one step of `P`, the mass in `[0, eps0)` is pooled
    /// and spread over those bins in proportion to the push-forward of the
    /// uniform density on `T_right⁻¹[0, eps0)`.
    pub fn averaged_operator(&self, eps0: f64) -> Result<UlamMatrix> {
        let n = self.n_bins() as f64;
        let k = (eps0 * n).round();
        if !(0.0..1.0).contains(&eps0) || (eps0 * n - k).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "eps0 = {eps0} is not aligned to the 1/{} bin grid",
                self.n_bins()
            )));
        }
        self.averaged_operator_bins(k as usize)
    }

    /// [`UlamMatrix::averaged_operator`] with `eps0 = k/N` given by `k`.
    pub fn averaged_operator_bins(&self, k: usize) -> Result<UlamMatrix> {
        if self.kind != MatrixKind::Closed || !self.partition.is_uniform() {
            return Err(Error::invalid(
                "averaged operator expects a closed matrix on a uniform partition",
            ));
        }
        if k >= self.n_bins() {
            return Err(Error::invalid("averaging region must leave at least one bin"));
        }
        let rho = rho_masses(&self.map, &self.partition, k);
        let mut triplets = Vec::with_capacity(self.matrix.nnz() + self.n_bins() * k.min(8));
        for i in 0..self.dim() {
            let mut pooled = 0.0;
            for (j, v) in self.matrix.row(i) {
                if j < k {
                    pooled += v;
                } else {
                    triplets.push((i, j, v));
                }
            }
            if pooled > 0.0 {
                triplets.extend(rho.iter().enumerate().map(|(j, &r)| (i, j, pooled * r)));
            }
        }
        let matrix = SparseMatrix::from_triplets(self.dim(), self.dim(), triplets)?;
        Ok(UlamMatrix {
            map: self.map,
            partition: self.partition.clone(),
            kind: MatrixKind::Averaged { eps0_bins: k, rho },
            states: self.states.clone(),
            matrix,
        })
    }
}

/// `ρ` bin masses on the first `k` bins: `leb(T_right⁻¹(J_j)) / ε₁` with
/// `ε₁ = leb(T_right⁻¹[0, e_k))`.
fn rho_masses(map: &PMMap, partition: &Partition, k: usize) -> Vec<f64> {
    if k == 0 {
        return Vec::new();
    }
    let e = partition.edges();
    let pre: Vec<f64> = e[..=k].iter().map(|&y| map.right_inverse(y)).collect();
    let eps1 = pre[k] - pre[0];
    pre.windows(2).map(|w| (w[1] - w[0]) / eps1).collect()
}

fn survivors(n: usize, hole: &[usize]) -> Result<Vec<usize>> {
    if let Some(&b) = hole.iter().find(|&&b| b >= n) {
        return Err(Error::invalid(format!("hole bin {b} outside 0..{n}")));
    }
    let mut in_hole = vec![false; n];
    for &b in hole {
        in_hole[b] = true;
    }
    let keep: Vec<usize> = (0..n).filter(|&b| !in_hole[b]).collect();
    if keep.is_empty() {
        return Err(Error::invalid("hole covers every bin"));
    }
    Ok(keep)
}

/// Closed Ulam matrix of `map` on `n` uniform bins.
pub fn assemble(map: &PMMap, n: usize) -> Result<UlamMatrix> {
    if n < 2 {
        return Err(Error::invalid(format!("Ulam assembly needs N >= 2, got {n}")));
    }
    assemble_on(map, Partition::uniform(n)?)
}

/// Closed Ulam matrix of `map` on an arbitrary partition.
pub fn assemble_on(map: &PMMap, partition: Partition) -> Result<UlamMatrix> {
    let n = partition.n_bins();
    let edges = partition.edges();
    let mut triplets = Vec::with_capacity(4 * n);
    for branch in [Branch::Left, Branch::Right] {
        let pre = branch_preimages(map, edges, branch)?;
        sweep_intersections(edges, &pre, &mut triplets);
    }
    let matrix = SparseMatrix::from_triplets(n, n, triplets)?;
    UlamMatrix::from_parts(*map, partition, MatrixKind::Closed, matrix)
}

/// Branch preimages of every point in `points` (which must be increasing).
pub(crate) fn branch_preimages(map: &PMMap, points: &[f64], branch: Branch) -> Result<Vec<f64>> {
    points.par_iter().map(|&y| map.branch_inverse(y, branch)).collect()
}

/// Intersects row cells `[edges[i], edges[i+1])` with preimage cells
/// `[pre[j], pre[j+1])` and records `(i, j, length / width_i)`.
///
/// Both point lists are increasing, so a two-pointer merge visits each
/// overlapping pair once.
pub(crate) fn sweep_intersections(edges: &[f64], pre: &[f64], out: &mut Vec<(usize, usize, f64)>) {
    let n_rows = edges.len() - 1;
    let n_cols = pre.len() - 1;
    let mut i = edges.partition_point(|&e| e <= pre[0]).saturating_sub(1);
    let mut j = 0;
    while i < n_rows && j < n_cols {
        let (a, b) = (edges[i], edges[i + 1]);
        let (p, q) = (pre[j], pre[j + 1]);
        let lo = a.max(p);
        let hi = b.min(q);
        if hi > lo {
            out.push((i, j, (hi - lo) / (b - a)));
        }
        if b < q {
            i += 1;
        } else if q < b {
            j += 1;
        } else {
            i += 1;
            j += 1;
        }
    }
}
