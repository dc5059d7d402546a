//! Deterministic power iterations on row-vector transfer matrices.
//!
//! All iterations act on row vectors of bin masses, `v ↦ v·P`. Vectors are
//! kept in L¹ normalisation, so a leading iteration always carries a
//! probability vector and the deflated iteration a zero-sum vector of unit
//! L¹ norm.
//!
//! Cost model: each step is one sparse product (`O(nnz)`). The leading
//! iteration contracts at rate `|λ₂|`, so it needs about
//! `ln(1/tol) / (1 − |λ₂|)` steps; for Ulam matrices of intermittent maps
//! `1 − λ₂ ~ N^{−α}`. The deflated iteration contracts at `|λ₃/λ₂|`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;
use crate::ulam::UlamMatrix;

/// Eigenvalues this close to 1 on the zero-sum subspace mean the chain is
/// not irreducible (or numerically indistinguishable from it).
const DEGENERATE_GAP: f64 = 1e-9;

/// Below this total mass the open iteration is declared to have lost
/// everything through the hole.
const MASS_FLOOR: f64 = 1e-280;

/// Steps between checks for a dominant complex pair.
const OSCILLATION_CHECK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions {
            tol: 1e-10,
            max_iter: 1_000_000,
        }
    }
}

impl SpectralOptions {
    pub fn new(tol: f64, max_iter: usize) -> Result<Self> {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
        }
        if max_iter == 0 {
            return Err(Error::invalid("max_iter must be positive"));
        }
        Ok(SpectralOptions { tol, max_iter })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    /// Stopped at `max_iter`; the fields hold the last iterate.
    MaxIterations,
    /// The dominant part of the deflated spectrum is a complex pair.
    NonRealDominant,
    /// An eigenvalue of modulus 1 survives deflation (reducible chain).
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralResult {
    pub eigenvalue: f64,
    pub eigenvector: Vec<f64>,
    /// `‖v·P − λv‖₁` for the returned vector.
    pub residual: f64,
    pub iterations: usize,
    pub status: Status,
}

impl SpectralResult {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }
}

impl AsRef<SparseMatrix> for SparseMatrix {
    fn as_ref(&self) -> &SparseMatrix {
        self
    }
}

impl AsRef<SparseMatrix> for UlamMatrix {
    fn as_ref(&self) -> &SparseMatrix {
        self.matrix()
    }
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn l1_diff(a: &[f64], b: &[f64], scale: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - scale * y).abs()).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One step of a leading-eigenvector iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerStep {
    /// `‖v·P‖₁` for the pre-step probability vector `v`.
    pub eigenvalue: f64,
    /// `‖v·P − λv‖₁` for the pre-step vector.
    pub residual: f64,
    /// L¹ norm of the post-step vector (1 up to rounding).
    pub mass: f64,
}

/// `v ← v·P / ‖v·P‖₁` from the uniform vector.
#[derive(Debug, Clone)]
pub struct PowerIteration<'a> {
    matrix: &'a SparseMatrix,
    v: Vec<f64>,
    next: Vec<f64>,
    iterations: usize,
}

impl<'a> PowerIteration<'a> {
    pub fn new(matrix: &'a SparseMatrix) -> Result<Self> {
        let n = check_square(matrix)?;
        Ok(PowerIteration {
            matrix,
            v: vec![1.0 / n as f64; n],
            next: vec![0.0; n],
            iterations: 0,
        })
    }

    pub fn vector(&self) -> &[f64] {
        &self.v
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn step(&mut self) -> Result<PowerStep> {
        self.matrix.left_mul_into(&self.v, &mut self.next);
        self.iterations += 1;
        let lambda: f64 = self.next.iter().sum();
        if !(lambda > MASS_FLOOR) {
            return Err(Error::MassUnderflow {
                iterations: self.iterations,
                context: format!("surviving mass {lambda:e} after one step"),
            });
        }
        let residual = l1_diff(&self.next, &self.v, lambda);
        for (v, &w) in self.v.iter_mut().zip(&self.next) {
            *v = w / lambda;
        }
        Ok(PowerStep {
            eigenvalue: lambda,
            residual,
            mass: self.v.iter().sum(),
        })
    }

    fn finish(self, status: Status) -> SpectralResult {
        let w = self.matrix.left_mul(&self.v);
        let lambda: f64 = w.iter().sum();
        SpectralResult {
            eigenvalue: lambda,
            residual: l1_diff(&w, &self.v, lambda),
            eigenvector: self.v,
            iterations: self.iterations,
            status,
        }
    }
}

fn check_square(m: &SparseMatrix) -> Result<usize> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.n_rows(),
            found: m.n_cols(),
        });
    }
    if m.n_rows() == 0 {
        return Err(Error::invalid("empty matrix"));
    }
    Ok(m.n_rows())
}

fn run_power(matrix: &SparseMatrix, opts: SpectralOptions) -> Result<SpectralResult> {
    let mut it = PowerIteration::new(matrix)?;
    let mut prev = f64::NAN;
    for _ in 0..opts.max_iter {
        let s = it.step()?;
        if s.residual <= opts.tol && (s.eigenvalue - prev).abs() <= opts.tol {
            return Ok(it.finish(Status::Converged));
        }
        prev = s.eigenvalue;
    }
    Ok(it.finish(Status::MaxIterations))
}

/// Invariant bin masses of a row-stochastic matrix.
pub fn leading(p: &impl AsRef<SparseMatrix>, opts: SpectralOptions) -> Result<SpectralResult> {
    run_power(p.as_ref(), opts)
}

/// Leading eigenpair of a substochastic matrix; the eigenvalue is the
/// per-step surviving fraction and the vector the conditionally invariant
/// bin masses.
pub fn substochastic_leading(
    p: &impl AsRef<SparseMatrix>,
    opts: SpectralOptions,
) -> Result<SpectralResult> {
    run_power(p.as_ref(), opts)
}

/// One step of the deflated iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeflatedStep {
    /// `⟨w·P, w⟩ / ⟨w, w⟩` for the pre-step vector.
    pub eigenvalue: f64,
    /// `‖w·P − λw‖₁` for the pre-step vector.
    pub residual: f64,
    /// Sum of entries of the post-step vector after re-projection.
    pub projected_sum: f64,
}

/// Power iteration on the zero-sum subspace: after each product the
/// component along the stationary vector `π` is removed,
/// `y ← y − (Σy)·π`, and the result is L¹-normalised.
#[derive(Debug, Clone)]
pub struct DeflatedIteration<'a> {
    matrix: &'a SparseMatrix,
    pi: &'a [f64],
    w: Vec<f64>,
    next: Vec<f64>,
    iterations: usize,
}

impl<'a> DeflatedIteration<'a> {
    /// Starts from `+1` on the first half of the states and `−1` on the
    /// second half, projected and normalised.
    pub fn new(matrix: &'a SparseMatrix, stationary: &'a [f64]) -> Result<Self> {
        let n = check_square(matrix)?;
        if stationary.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: stationary.len(),
            });
        }
        let seed: Vec<f64> = (0..n).map(|i| if 2 * i + 1 < n { 1.0 } else { -1.0 }).collect();
        Self::with_seed(matrix, stationary, seed)
    }

    pub fn with_seed(matrix: &'a SparseMatrix, stationary: &'a [f64], mut seed: Vec<f64>) -> Result<Self> {
        let n = check_square(matrix)?;
        if seed.len() != n || stationary.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: seed.len().min(stationary.len()),
            });
        }
        project(&mut seed, stationary);
        let norm = l1(&seed);
        if !(norm > 0.0) {
            return Err(Error::invalid("seed has no component off the stationary vector"));
        }
        seed.iter_mut().for_each(|x| *x /= norm);
        Ok(DeflatedIteration {
            matrix,
            pi: stationary,
            w: seed,
            next: vec![0.0; n],
            iterations: 0,
        })
    }

    pub fn vector(&self) -> &[f64] {
        &self.w
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn step(&mut self) -> DeflatedStep {
        self.matrix.left_mul_into(&self.w, &mut self.next);
        self.iterations += 1;
        let lambda = dot(&self.next, &self.w) / dot(&self.w, &self.w);
        let residual = l1_diff(&self.next, &self.w, lambda);
        project(&mut self.next, self.pi);
        let norm = l1(&self.next);
        if norm > 0.0 {
            for (w, &y) in self.w.iter_mut().zip(&self.next) {
                *w = y / norm;
            }
        }
        DeflatedStep {
            eigenvalue: lambda,
            residual,
            projected_sum: self.w.iter().sum(),
        }
    }

    /// Tests whether the last three projected iterates obey a two-term
    /// recurrence `u₂ = a·u₁ + b·u₀` with complex characteristic roots while
    /// failing to align with a single real direction.
    fn complex_pair_dominates(&self) -> bool {
        let u0 = &self.w;
        let mut u1 = self.matrix.left_mul(u0);
        project(&mut u1, self.pi);
        let mut u2 = self.matrix.left_mul(&u1);
        project(&mut u2, self.pi);
        let n2 = dot(&u2, &u2).sqrt();
        if n2 == 0.0 {
            return false;
        }
        let one_term = {
            let c = dot(&u2, &u1) / dot(&u1, &u1);
            u2.iter().zip(&u1).map(|(y, x)| (y - c * x).powi(2)).sum::<f64>().sqrt() / n2
        };
        let (g11, g10, g00) = (dot(&u1, &u1), dot(&u1, u0), dot(u0, u0));
        let (r1, r0) = (dot(&u2, &u1), dot(&u2, u0));
        let det = g11 * g00 - g10 * g10;
        if !(det > 1e-300) {
            return false;
        }
        let a = (r1 * g00 - r0 * g10) / det;
        let b = (r0 * g11 - r1 * g10) / det;
        let two_term = u2
            .iter()
            .zip(&u1)
            .zip(u0)
            .map(|((y, x1), x0)| (y - a * x1 - b * x0).powi(2))
            .sum::<f64>()
            .sqrt()
            / n2;
        two_term < 1e-6 && one_term > 1e-3 && a * a + 4.0 * b < 0.0
    }

    fn finish(self, status: Status) -> SpectralResult {
        let y = self.matrix.left_mul(&self.w);
        let lambda = dot(&y, &self.w) / dot(&self.w, &self.w);
        SpectralResult {
            eigenvalue: lambda,
            residual: l1_diff(&y, &self.w, lambda),
            eigenvector: self.w,
            iterations: self.iterations,
            status,
        }
    }
}

fn project(y: &mut [f64], pi: &[f64]) {
    let s: f64 = y.iter().sum();
    for (v, &p) in y.iter_mut().zip(pi) {
        *v -= s * p;
    }
}

/// Second eigenpair of a row-stochastic matrix by deflated power iteration.
///
/// `stationary` must be a converged [`leading`] result for the same matrix.
pub fn second(
    p: &impl AsRef<SparseMatrix>,
    stationary: &SpectralResult,
    opts: SpectralOptions,
) -> Result<SpectralResult> {
    if !stationary.converged() {
        return Err(Error::invalid("stationary vector did not converge"));
    }
    let matrix = p.as_ref();
    let mut it = DeflatedIteration::new(matrix, &stationary.eigenvector)?;
    let mut prev = f64::NAN;
    for k in 1..=opts.max_iter {
        let s = it.step();
        if s.eigenvalue.abs() >= 1.0 - DEGENERATE_GAP && s.residual <= opts.tol.max(1e-8) {
            return Ok(it.finish(Status::Degenerate));
        }
        if s.residual <= opts.tol && (s.eigenvalue - prev).abs() <= opts.tol {
            let status = if s.eigenvalue.abs() >= 1.0 - DEGENERATE_GAP {
                Status::Degenerate
            } else {
                Status::Converged
            };
            return Ok(it.finish(status));
        }
        prev = s.eigenvalue;
        if k % OSCILLATION_CHECK == 0 && it.complex_pair_dominates() {
            return Ok(it.finish(Status::NonRealDominant));
        }
    }
    let status = if it.complex_pair_dominates() {
        Status::NonRealDominant
    } else {
        Status::MaxIterations
    };
    Ok(it.finish(status))
}
