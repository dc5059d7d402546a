//! Quantitative summaries built on the lower modules: the two-state
//! metastable model, log–log fits, total-variation distances, the polynomial
//! escape profile near the neutral fixed point, and the scan pipelines used
//! by the command-line front end.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::PMMap;
use crate::spectral::{leading, second, substochastic_leading, SpectralOptions, Status};
use crate::tower::{epsilons, ulam_eps};
use crate::ulam::{assemble, MatrixCache, UlamMatrix};

/// Reference `(N, 1 − λ₂, ε₂/ε₁)` values for `α = 1/2`.
pub const REFERENCE_TABLE: [(usize, f64, f64); 9] = [
    (100, 0.069494728128226, 0.060750416292176),
    (200, 0.047118990434159, 0.042626262679704),
    (500, 0.028582682402957, 0.026696029895732),
    (1000, 0.019751285772241, 0.018706181316717),
    (2000, 0.013727390048589, 0.013165183357731),
    (5000, 0.008542396305559, 0.008301674655368),
    (10000, 0.005988977377968, 0.005866565930472),
    (20000, 0.004208535921532, 0.004150111773511),
    (50000, 0.002646628586393, 0.002621525600809),
];

pub fn reference_row(n: usize) -> Option<(f64, f64)> {
    REFERENCE_TABLE
        .iter()
        .find(|r| r.0 == n)
        .map(|&(_, l, e)| (l, e))
}

/// Coefficient `c_α` (at `α = 1/2`) for which the `ε₂/ε₁` column of
/// [`REFERENCE_TABLE`] is reproduced asymptotically.
///
/// With `x_n ≈ (α c n)^{−1/α}` one gets `ε₂/ε₁ ≈ c·x_n^α ≈ c·N^{−α}`, so the
/// largest-`N` row pins `c`.
pub fn reference_c_alpha() -> f64 {
    let (n, _, ratio) = REFERENCE_TABLE[REFERENCE_TABLE.len() - 1];
    ratio * (n as f64).sqrt()
}

/// Map instance matching [`REFERENCE_TABLE`].
pub fn reference_map() -> PMMap {
    PMMap::with_coefficient(0.5, reference_c_alpha()).expect("reference coefficient is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoStateWeight {
    Lebesgue,
    Invariant,
}

/// Markov chain on `I₁ = [0, ε₀]` and `I₂ = (ε₀, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoStateModel {
    pub eps0: f64,
    /// Transition probability `I₁ → I₂`.
    pub a: f64,
    /// Transition probability `I₂ → I₁`.
    pub b: f64,
    pub weight: TwoStateWeight,
}

impl TwoStateModel {
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[1.0 - self.a, self.a], [self.b, 1.0 - self.b]]
    }

    pub fn eigenvalues(&self) -> (f64, f64) {
        (1.0, 1.0 - self.a - self.b)
    }

    /// Invariant probability vector `(b, a)/(a + b)`.
    pub fn invariant(&self) -> (f64, f64) {
        let s = self.a + self.b;
        (self.b / s, self.a / s)
    }
}

fn check_eps0(map: &PMMap, eps0: f64) -> Result<()> {
    if !(eps0 > 0.0 && eps0 < map.breakpoint()) {
        return Err(Error::Domain {
            value: eps0,
            domain: "(0, x0)",
        });
    }
    Ok(())
}

/// Two-state model with Lebesgue weights.
pub fn two_state(map: &PMMap, eps0: f64) -> Result<TwoStateModel> {
    check_eps0(map, eps0)?;
    let left = map.left_inverse(eps0)?;
    let right = map.right_inverse(eps0);
    Ok(TwoStateModel {
        eps0,
        a: (eps0 - left) / eps0,
        b: (right - map.breakpoint()) / (1.0 - eps0),
        weight: TwoStateWeight::Lebesgue,
    })
}

/// Two-state model weighted by an invariant density given as bin masses on
/// a uniform partition (piecewise constant within bins).
pub fn two_state_weighted(map: &PMMap, eps0: f64, masses: &[f64]) -> Result<TwoStateModel> {
    check_eps0(map, eps0)?;
    if masses.is_empty() || masses.iter().any(|&m| !(m >= 0.0)) {
        return Err(Error::invalid("weights must be nonnegative bin masses"));
    }
    let n = masses.len() as f64;
    let mut cum = Vec::with_capacity(masses.len() + 1);
    cum.push(0.0);
    for &m in masses {
        cum.push(cum.last().unwrap() + m);
    }
    let mu = |x: f64| -> f64 {
        let t = (x * n).clamp(0.0, n);
        let k = (t.floor() as usize).min(masses.len() - 1);
        cum[k] + masses[k] * (t - k as f64)
    };
    let left = map.left_inverse(eps0)?;
    let right = map.right_inverse(eps0);
    let m1 = mu(eps0);
    let m2 = mu(1.0) - m1;
    if !(m1 > 0.0 && m2 > 0.0) {
        return Err(Error::invalid("weights give an empty state"));
    }
    Ok(TwoStateModel {
        eps0,
        a: (m1 - mu(left)) / m1,
        b: (mu(right) - mu(map.breakpoint())) / m2,
        weight: TwoStateWeight::Invariant,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(ln x, ln y)` pairs used in the fit.
    pub points: Vec<(f64, f64)>,
}

impl ScalingFit {
    pub fn predict(&self, x: f64) -> f64 {
        (self.intercept + self.slope * x.ln()).exp()
    }
}

/// Ordinary least squares of `ln y` on `ln x`.
pub fn scaling_fit(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::invalid(format!("scaling fit needs >= 3 points, got {}", points.len())));
    }
    if let Some(&(x, y)) = points.iter().find(|&&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::invalid(format!("scaling fit needs positive data, got ({x}, {y})")));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::invalid("scaling fit needs at least two distinct x values"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(ScalingFit {
        slope,
        intercept,
        r_squared,
        points: logs,
    })
}

fn check_probability(p: &[f64], name: &str) -> Result<()> {
    if p.is_empty() || p.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::invalid(format!("{name} must be a nonnegative vector")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}

/// Total variation `½ Σ|p_i − q_i|` after refining the coarser vector by
/// splitting each bin's mass evenly; one bin count must divide the other.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    check_probability(p, "p")?;
    check_probability(q, "q")?;
    let (coarse, fine) = if p.len() <= q.len() { (p, q) } else { (q, p) };
    if fine.len() % coarse.len() != 0 {
        return Err(Error::invalid(format!(
            "partitions of {} and {} bins are not nested",
            p.len(),
            q.len()
        )));
    }
    let r = fine.len() / coarse.len();
    let inv = 1.0 / r as f64;
    let l1: f64 = fine
        .iter()
        .enumerate()
        .map(|(i, &f)| (coarse[i / r] * inv - f).abs())
        .sum();
    Ok(0.5 * l1)
}

/// Lebesgue measure of the points of `[0, eps0]` that stay in `[0, eps0]`
/// for `k` steps, `k = 0..=K`. For `eps0 = x_j` this is `x_{j+k}`.
pub fn escape_profile(map: &PMMap, eps0: f64, k_max: usize) -> Result<Vec<f64>> {
    if k_max == 0 {
        return Err(Error::invalid("escape profile needs K >= 1"));
    }
    check_eps0(map, eps0).or_else(|e| if eps0 == map.breakpoint() { Ok(()) } else { Err(e) })?;
    let mut x = map.breakpoint();
    let mut j = 0usize;
    while x > eps0 * (1.0 + 1e-12) {
        x = map.left_inverse(x)?;
        j += 1;
        if j > 100_000_000 {
            return Err(Error::NonConvergence {
                what: "preimage index search",
                iterations: j,
            });
        }
    }
    if (x - eps0).abs() > 1e-12 * eps0 {
        return Err(Error::invalid(format!(
            "eps0 = {eps0} is not a left preimage of the breakpoint (nearest x_{j} = {x})"
        )));
    }
    let mut out = Vec::with_capacity(k_max + 1);
    out.push(eps0);
    let mut y = eps0;
    for _ in 0..k_max {
        y = map.left_inverse(y)?;
        out.push(y);
    }
    Ok(out)
}

/// Log–log slope of the density (mass per width) against the bin midpoint
/// over bins `window` of a uniform partition.
pub fn density_tail_slope(masses: &[f64], window: std::ops::Range<usize>) -> Result<f64> {
    if window.start == 0 {
        return Err(Error::invalid("tail window must exclude the first bin"));
    }
    if window.end > masses.len() || window.start >= window.end {
        return Err(Error::invalid(format!(
            "tail window {window:?} outside 0..{}",
            masses.len()
        )));
    }
    let mid = |i: usize| i as f64 + 0.5;
    if mid(window.end - 1) / mid(window.start) < 10.0 {
        return Err(Error::invalid("tail window must span at least one decade"));
    }
    let n = masses.len() as f64;
    let pts: Vec<(f64, f64)> = window.map(|i| (mid(i) / n, masses[i] * n)).collect();
    Ok(scaling_fit(&pts)?.slope)
}

fn closed(map: &PMMap, n: usize, cache: Option<&MatrixCache>) -> Result<UlamMatrix> {
    match cache {
        Some(c) => Ok(c.closed(map, n)?.0),
        None => assemble(map, n),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub n: usize,
    pub lambda2: f64,
    pub one_minus_lambda2: f64,
    pub iterations: usize,
    pub status: Status,
}

/// Second eigenvalue of the closed Ulam matrix for each `N`.
pub fn gap_scan(map: &PMMap, ns: &[usize], opts: SpectralOptions, cache: Option<&MatrixCache>) -> Result<Vec<GapRow>> {
    ns.par_iter()
        .map(|&n| {
            let p = closed(map, n, cache)?;
            let pi = leading(&p, opts)?;
            if !pi.converged() {
                return Err(Error::NonConvergence {
                    what: "invariant density",
                    iterations: pi.iterations,
                });
            }
            let r = second(&p, &pi, opts)?;
            Ok(GapRow {
                n,
                lambda2: r.eigenvalue,
                one_minus_lambda2: 1.0 - r.eigenvalue,
                iterations: r.iterations,
                status: r.status,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EscapeRow {
    pub n: usize,
    pub lambda1_open: f64,
    pub one_minus: f64,
    pub iterations: usize,
    pub status: Status,
}

/// Leading eigenvalue of the Ulam matrix with the first `hole_bins` bins
/// removed, for each `N`.
pub fn escape_scan(
    map: &PMMap,
    ns: &[usize],
    hole_bins: usize,
    opts: SpectralOptions,
    cache: Option<&MatrixCache>,
) -> Result<Vec<EscapeRow>> {
    if hole_bins == 0 {
        return Err(Error::invalid("escape scan needs a nonempty hole"));
    }
    ns.par_iter()
        .map(|&n| {
            let hole: Vec<usize> = (0..hole_bins).collect();
            let o = closed(map, n, cache)?.open_submatrix(&hole)?;
            let r = substochastic_leading(&o, opts)?;
            Ok(EscapeRow {
                n,
                lambda1_open: r.eigenvalue,
                one_minus: 1.0 - r.eigenvalue,
                iterations: r.iterations,
                status: r.status,
            })
        })
        .collect()
}

/// Conditionally invariant bin masses of the `N`-bin Ulam matrix with hole
/// `[0, 1/N)`, padded with zero on the hole bin.
pub fn hole_accim(p: &UlamMatrix, opts: SpectralOptions) -> Result<(Vec<f64>, f64, Status)> {
    let o = p.open_submatrix(&[0])?;
    let r = substochastic_leading(&o, opts)?;
    let mut full = vec![0.0; p.n_bins()];
    for (&b, &v) in o.states().iter().zip(&r.eigenvector) {
        full[b] = v;
    }
    let s: f64 = full.iter().sum();
    full.iter_mut().for_each(|x| *x /= s);
    Ok((full, r.eigenvalue, r.status))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TvRow {
    pub n: usize,
    pub tv: f64,
    pub lambda1_open: f64,
    pub status: Status,
}

/// TV distance between the hole-`[0, 1/N)` ACCIM at each `N` and the ACIM
/// at `n_ref` bins. Every `N` must divide `n_ref`.
pub fn accim_tv_scan(
    map: &PMMap,
    ns: &[usize],
    n_ref: usize,
    opts: SpectralOptions,
    cache: Option<&MatrixCache>,
) -> Result<Vec<TvRow>> {
    if let Some(&n) = ns.iter().find(|&&n| !n_ref.is_multiple_of(n)) {
        return Err(Error::invalid(format!("N = {n} does not divide the reference N* = {n_ref}")));
    }
    let reference = leading(&closed(map, n_ref, cache)?, opts)?;
    if !reference.converged() {
        return Err(Error::NonConvergence {
            what: "reference invariant density",
            iterations: reference.iterations,
        });
    }
    ns.par_iter()
        .map(|&n| {
            let (accim, lambda, status) = hole_accim(&closed(map, n, cache)?, opts)?;
            Ok(TvRow {
                n,
                tv: tv_distance(&accim, &reference.eigenvector)?,
                lambda1_open: lambda,
                status,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Row {
    pub n: usize,
    pub one_minus_lambda2: Option<f64>,
    /// `1 − λ₂` of the averaged operator with `ε₀ = ⌈N·x_{n−1}⌉/N`.
    pub averaged_one_minus_lambda2: Option<f64>,
    pub eps2_over_eps1: Option<f64>,
    pub bound_hi: Option<f64>,
    pub tower_n: Option<usize>,
    pub eps0_bins: Option<usize>,
    pub reference_one_minus_lambda2: Option<f64>,
    pub reference_eps2_over_eps1: Option<f64>,
    pub status: Option<Status>,
    pub error: Option<String>,
}

impl Table1Row {
    /// Whether the averaged `1 − λ₂` lies strictly inside `(ε₂/ε₁, 2ε₂/ε₁)`.
    pub fn within_bound(&self) -> Option<bool> {
        let v = self.averaged_one_minus_lambda2?;
        Some(v > self.eps2_over_eps1? && v < self.bound_hi?)
    }
}

struct Table1Values {
    plain: f64,
    averaged: f64,
    tower_n: usize,
    eps0_bins: usize,
    lo: f64,
    hi: f64,
    status: Status,
}

fn table1_values(map: &PMMap, n: usize, opts: SpectralOptions, cache: Option<&MatrixCache>) -> Result<Table1Values> {
    let e = epsilons(map, ulam_eps(map, n))?;
    let p = closed(map, n, cache)?;
    let pi = leading(&p, opts)?;
    if !pi.converged() {
        return Err(Error::NonConvergence {
            what: "invariant density",
            iterations: pi.iterations,
        });
    }
    let plain = second(&p, &pi, opts)?;

    let x_prev = e.eps1 / (1.0 - map.breakpoint());
    let k = ((n as f64 * x_prev).ceil() as usize).max(1);
    let a = p.averaged_operator_bins(k)?;
    let pa = leading(&a, opts)?;
    let avg = second(&a, &pa, opts)?;
    let status = if plain.converged() { avg.status } else { plain.status };
    Ok(Table1Values {
        plain: 1.0 - plain.eigenvalue,
        averaged: 1.0 - avg.eigenvalue,
        tower_n: e.n,
        eps0_bins: k,
        lo: e.bound_lo,
        hi: e.bound_hi,
        status,
    })
}

/// Second-eigenvalue table with the `(ε₂/ε₁, 2ε₂/ε₁)` interval for each `N`,
/// using `ε = 1/(N·T′(x₀⁺))`. A failing row records its error and the
/// remaining rows are still computed.
pub fn table1(map: &PMMap, ns: &[usize], opts: SpectralOptions, cache: Option<&MatrixCache>) -> Result<Vec<Table1Row>> {
    if ns.is_empty() {
        return Err(Error::invalid("table needs at least one N"));
    }
    let reference_ok = map.alpha() == 0.5;
    Ok(ns
        .par_iter()
        .map(|&n| {
            let reference = if reference_ok { reference_row(n) } else { None };
            let mut row = Table1Row {
                n,
                one_minus_lambda2: None,
                averaged_one_minus_lambda2: None,
                eps2_over_eps1: None,
                bound_hi: None,
                tower_n: None,
                eps0_bins: None,
                reference_one_minus_lambda2: reference.map(|r| r.0),
                reference_eps2_over_eps1: reference.map(|r| r.1),
                status: None,
                error: None,
            };
            match table1_values(map, n, opts, cache) {
                Ok(v) => {
                    row.one_minus_lambda2 = Some(v.plain);
                    row.averaged_one_minus_lambda2 = Some(v.averaged);
                    row.eps2_over_eps1 = Some(v.lo);
                    row.bound_hi = Some(v.hi);
                    row.tower_n = Some(v.tower_n);
                    row.eps0_bins = Some(v.eps0_bins);
                    row.status = Some(v.status);
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::SparseMatrix;
    use proptest::prelude::*;

    fn lsv(alpha: f64) -> PMMap {
        PMMap::lsv(alpha).unwrap()
    }

    #[test]
    fn two_state_affine_b() {
        let m = lsv(0.5);
        for eps0 in [0.1, 0.01, 1e-4] {
            let t = two_state(&m, eps0).unwrap();
            assert!((t.b - 0.5 * eps0 / (1.0 - eps0)).abs() < 1e-15);
        }
        let t = two_state(&m, 1e-8).unwrap();
        assert!((t.b / 1e-8 - 0.5).abs() < 1e-6);
        assert!(two_state(&m, 0.5).is_err());
        assert!(two_state(&m, 0.0).is_err());
    }

    #[test]
    fn two_state_scalings() {
        let m = lsv(0.5);
        let eps: Vec<f64> = (0..=12).map(|k| 1e-3 * 10f64.powf(-(k as f64) / 4.0)).collect();
        let a: Vec<(f64, f64)> = eps.iter().map(|&e| (e, two_state(&m, e).unwrap().a)).collect();
        assert!((scaling_fit(&a).unwrap().slope - 0.5).abs() < 0.1);
        let inv: Vec<(f64, f64)> = eps.iter().map(|&e| (e, two_state(&m, e).unwrap().invariant().0)).collect();
        assert!((scaling_fit(&inv).unwrap().slope - 0.5).abs() < 0.1);
    }

    #[test]
    fn two_state_matches_iteration() {
        let m = lsv(0.5);
        for eps0 in [0.3, 0.05, 0.001] {
            let t = two_state(&m, eps0).unwrap();
            let mm = t.matrix();
            let p = SparseMatrix::from_dense(&[mm[0].to_vec(), mm[1].to_vec()]).unwrap();
            let opts = SpectralOptions::default();
            let pi = leading(&p, opts).unwrap();
            let r = second(&p, &pi, opts).unwrap();
            assert!((r.eigenvalue - t.eigenvalues().1).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_two_state_with_uniform_weights() {
        let m = lsv(0.5);
        let w = vec![0.01; 100];
        let a = two_state_weighted(&m, 0.05, &w).unwrap();
        let b = two_state(&m, 0.05).unwrap();
        assert!((a.a - b.a).abs() < 1e-12);
        // Lebesgue b normalises by 1 − eps0 of mass, as does the weighted form
        assert!((a.b - b.b).abs() < 1e-12);
    }

    #[test]
    fn fit_exact_power_law() {
        let pts: Vec<(f64, f64)> = (1..=10).map(|k| (k as f64, 3.0 * (k as f64).powf(-0.7))).collect();
        let f = scaling_fit(&pts).unwrap();
        assert!((f.slope + 0.7).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let c = scaling_fit(&[(1.0, 2.0), (2.0, 2.0), (5.0, 2.0)]).unwrap();
        assert_eq!(c.slope, 0.0);
        assert_eq!(c.r_squared, 1.0);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(scaling_fit(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
        assert!(scaling_fit(&[(1.0, 1.0), (2.0, -2.0), (3.0, 1.0)]).is_err());
        assert!(scaling_fit(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)]).is_err());
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        let d = tv_distance(&[0.5, 0.5], &[0.25, 0.25, 0.5, 0.0]).unwrap();
        assert!((d - 0.25).abs() < 1e-15);
        assert!(tv_distance(&[0.5, 0.5], &[0.2, 0.3, 0.5]).is_err());
        assert!(tv_distance(&[0.5, 0.6], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn escape_profile_examples() {
        let m = lsv(0.5);
        let xs = m.preimage_sequence(5).unwrap();
        let p = escape_profile(&m, xs.values()[3], 2).unwrap();
        assert_eq!(p[0], xs.values()[3]);
        assert_eq!(&p[1..], &xs.values()[4..6]);
        assert!(escape_profile(&m, 0.3, 4).is_err());
        assert!(escape_profile(&m, xs.values()[2], 0).is_err());
    }

    #[test]
    fn escape_profile_is_polynomial() {
        for alpha in [0.25, 0.5, 0.75] {
            let m = lsv(alpha);
            let eps0 = m.preimage_sequence(3).unwrap().values()[3];
            let p = escape_profile(&m, eps0, 10_000).unwrap();
            assert!(p.windows(2).all(|w| w[1] < w[0]));
            let pts: Vec<(f64, f64)> = (100..=10_000).step_by(100).map(|k| (k as f64, p[k])).collect();
            let slope = scaling_fit(&pts).unwrap().slope;
            assert!((slope + 1.0 / alpha).abs() < 0.1, "alpha={alpha}: {slope}");
            let ratios: Vec<f64> = (1000..=10_000).step_by(1000).map(|k| p[k] / p[k - 1]).collect();
            assert!(ratios.windows(2).all(|w| w[1] > w[0]));
            assert!(*ratios.last().unwrap() > 0.999);
        }
    }

    #[test]
    fn synthetic_tail_slopes() {
        let n = 10_000;
        let alpha = 0.5;
        let f = |x: f64| x.powf(1.0 - alpha) / (1.0 - alpha);
        let masses: Vec<f64> = (0..n).map(|i| f((i + 1) as f64 / n as f64) - f(i as f64 / n as f64)).collect();
        let s = density_tail_slope(&masses, 1..1000).unwrap();
        assert!((s + alpha).abs() < 0.02, "{s}");
        let flat = vec![1.0 / n as f64; n];
        assert!(density_tail_slope(&flat, 1..1000).unwrap().abs() < 1e-12);
        assert!(density_tail_slope(&flat, 0..1000).is_err());
        assert!(density_tail_slope(&flat, 10..50).is_err());
    }

    #[test]
    fn reference_coefficient() {
        let c = reference_c_alpha();
        assert!((c - 0.5862).abs() < 1e-3);
        let map = reference_map();
        for &(n, _, ratio) in &REFERENCE_TABLE[..5] {
            let e = epsilons(&map, ulam_eps(&map, n)).unwrap();
            let r = e.bound_lo / ratio;
            assert!(r > 0.8 && r < 1.25, "N={n}: {r}");
        }
    }

    #[test]
    fn table_continues_past_errors() {
        let rows = table1(&lsv(0.5), &[1, 100], SpectralOptions::default(), None).unwrap();
        assert!(rows[0].error.is_some());
        let r = &rows[1];
        assert!(r.error.is_none());
        assert!(r.one_minus_lambda2.unwrap() > r.eps2_over_eps1.unwrap());
        assert_eq!(r.reference_one_minus_lambda2, Some(0.069494728128226));
    }

    proptest! {
        #[test]
        fn tv_is_a_metric(raw in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 8)) {
            let norm = |v: Vec<f64>| { let s: f64 = v.iter().sum::<f64>() + 1e-9; v.iter().map(|x| (x + 1e-9 / 8.0) / s).collect::<Vec<f64>>() };
            let p = norm(raw.iter().map(|t| t.0).collect());
            let q = norm(raw.iter().map(|t| t.1).collect());
            let r = norm(raw.iter().map(|t| t.2).collect());
            let pq = tv_distance(&p, &q).unwrap();
            prop_assert!((pq - tv_distance(&q, &p).unwrap()).abs() < 1e-12);
            prop_assert!(pq <= tv_distance(&p, &r).unwrap() + tv_distance(&r, &q).unwrap() + 1e-12);
            prop_assert!(tv_distance(&p, &p).unwrap() == 0.0);
        }

        #[test]
        fn fit_scale_invariant(ys in prop::collection::vec(0.01f64..100.0, 3..12), c in 0.001f64..1000.0) {
            let pts: Vec<(f64, f64)> = ys.iter().enumerate().map(|(i, &y)| ((i + 1) as f64, y)).collect();
            let scaled: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x, c * y)).collect();
            let a = scaling_fit(&pts).unwrap();
            let b = scaling_fit(&scaled).unwrap();
            prop_assert!((a.slope - b.slope).abs() < 1e-12);
            prop_assert!((a.r_squared - b.r_squared).abs() < 1e-9);
        }
    }
}
