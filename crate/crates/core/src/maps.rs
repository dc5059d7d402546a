//! Two-branch intermittent interval maps.
//!
//! The family implemented here is
//!
//! ```text
//! T(x) = x (1 + c_α x^α)        on [0, x₀)
//! T(x) = (x − x₀) / (1 − x₀)    on [x₀, 1]
//! ```
//!
//! with `x₀` the point where the left branch reaches 1. The
//! Liverani–Saussol–Vaienti map (`c_α = 2^α`, `x₀ = 1/2`, right branch
//! `2x − 1`) is the default instance. Both branches are increasing and onto,
//! `T(0) = 0` and `T′(0) = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Iteration cap for the left-branch inverse. Newton from the right of the
/// root converges monotonically on a convex branch, so this is never reached
/// for valid input.
const MAX_ROOT_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Left,
    Right,
}

/// Side from which a one-sided derivative at the breakpoint is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PMMap {
    alpha: f64,
    c_alpha: f64,
    breakpoint: f64,
    lsv: bool,
}

impl PMMap {
    /// Liverani–Saussol–Vaienti map with intermittency exponent `alpha`.
    pub fn lsv(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(PMMap {
            alpha,
            c_alpha: 2f64.powf(alpha),
            breakpoint: 0.5,
            lsv: true,
        })
    }

    /// General member of the family with coefficient `c_alpha` on the
    /// `x^{1+α}` term; the breakpoint solves `x₀ + c_α x₀^{1+α} = 1`.
    pub fn with_coefficient(alpha: f64, c_alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(c_alpha.is_finite() && c_alpha > 0.0) {
            return Err(Error::invalid(format!("c_alpha must be positive, got {c_alpha}")));
        }
        let f = |x: f64| x + c_alpha * x.powf(1.0 + alpha);
        let df = |x: f64| 1.0 + c_alpha * (1.0 + alpha) * x.powf(alpha);
        let breakpoint = solve_increasing_convex(f, df, 1.0, 0.0, 1.0)?;
        Ok(PMMap {
            alpha,
            c_alpha,
            breakpoint,
            lsv: false,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn c_alpha(&self) -> f64 {
        self.c_alpha
    }

    /// Branch boundary `x₀`.
    pub fn breakpoint(&self) -> f64 {
        self.breakpoint
    }

    pub fn is_lsv(&self) -> bool {
        self.lsv
    }

    /// Short family tag used in file metadata.
    pub fn family(&self) -> &'static str {
        if self.lsv {
            "lsv"
        } else {
            "pm"
        }
    }

    /// Constant slope of the affine right branch, `T′(x₀⁺)`.
    pub fn right_slope(&self) -> f64 {
        1.0 / (1.0 - self.breakpoint)
    }

    fn left(&self, x: f64) -> f64 {
        x * (1.0 + self.c_alpha * x.powf(self.alpha))
    }

    /// `T(x) − x = c_α x^{1+α}` on the left branch, without cancellation.
    pub fn left_increment(&self, x: f64) -> f64 {
        self.c_alpha * x.powf(1.0 + self.alpha)
    }

    fn left_derivative(&self, x: f64) -> f64 {
        1.0 + self.c_alpha * (1.0 + self.alpha) * x.powf(self.alpha)
    }

    pub fn evaluate(&self, x: f64) -> Result<f64> {
        check_unit(x)?;
        if x < self.breakpoint {
            Ok(self.left(x))
        } else {
            Ok((x - self.breakpoint) * self.right_slope())
        }
    }

    /// `T′(x)` away from the breakpoint. Use [`PMMap::one_sided_derivative`]
    /// at `x₀`.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        check_unit(x)?;
        if x == self.breakpoint {
            return Err(Error::invalid(
                "derivative is two-valued at the breakpoint; use one_sided_derivative",
            ));
        }
        if x < self.breakpoint {
            Ok(self.left_derivative(x))
        } else {
            Ok(self.right_slope())
        }
    }

    pub fn one_sided_derivative(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.left_derivative(self.breakpoint),
            Side::Right => self.right_slope(),
        }
    }

    /// The unique `x` in the branch domain with `T(x) = y`.
    ///
    /// The left branch accepts `y = 1` and returns its closure point `x₀`.
    pub fn branch_inverse(&self, y: f64, branch: Branch) -> Result<f64> {
        check_unit(y)?;
        match branch {
            Branch::Right => Ok(self.right_inverse(y)),
            Branch::Left => self.left_inverse(y),
        }
    }

    pub(crate) fn right_inverse(&self, y: f64) -> f64 {
        if y >= 1.0 {
            1.0
        } else {
            self.breakpoint + (1.0 - self.breakpoint) * y
        }
    }

    pub(crate) fn left_inverse(&self, y: f64) -> Result<f64> {
        if y <= 0.0 {
            return Ok(0.0);
        }
        if y >= 1.0 {
            return Ok(self.breakpoint);
        }
        solve_increasing_convex(
            |x| self.left(x),
            |x| self.left_derivative(x),
            y,
            0.0,
            self.breakpoint,
        )
    }

    /// `x₀ > x₁ > … > x_n` with `x_k` the left preimage of `x_{k−1}`.
    pub fn preimage_sequence(&self, n: usize) -> Result<PreimageSequence> {
        if n == 0 {
            return Err(Error::invalid("preimage sequence needs n >= 1"));
        }
        let mut values = Vec::with_capacity(n + 1);
        values.push(self.breakpoint);
        for k in 1..=n {
            let prev = values[k - 1];
            let x = self.left_inverse(prev)?;
            if (self.left(x) - prev).abs() > 1e-12 {
                return Err(Error::NonConvergence {
                    what: "preimage sequence verification",
                    iterations: k,
                });
            }
            values.push(x);
        }
        Ok(PreimageSequence { values })
    }

    /// `γ₁ … γ_n` with `γ_k` the right preimage of `x_{k−1}`; these decrease
    /// toward `x₀` and bound the return-time columns.
    pub fn gamma_sequence(&self, n: usize) -> Result<Vec<f64>> {
        let xs = self.preimage_sequence(n)?;
        Ok(xs.values[..n].iter().map(|&x| self.right_inverse(x)).collect())
    }
}

/// Decreasing left-branch preimage chain of the breakpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreimageSequence {
    values: Vec<f64>,
}

impl PreimageSequence {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of entries, `n + 1` for a sequence `x₀ … x_n`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, k: usize) -> Option<f64> {
        self.values.get(k).copied()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain {
            value: x,
            domain: "[0, 1]",
        })
    }
}

/// Solves `f(x) = y` for an increasing convex `f` on `[lo, hi]` with
/// `f(lo) ≤ y ≤ f(hi)`.
///
/// Newton steps are taken from the right end of the bracket; on a convex
/// increasing function they approach the root from above without
/// overshooting, so the iteration runs to full relative precision. Any step
/// that leaves the bracket falls back to bisection.
fn solve_increasing_convex(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    y: f64,
    mut lo: f64,
    mut hi: f64,
) -> Result<f64> {
    // The root of x + c x^{1+α} = y is never above y, so start there if
    // that tightens the bracket.
    let mut x = hi.min(y.max(lo));
    for _ in 0..MAX_ROOT_ITER {
        let fx = f(x) - y;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let mut next = x - fx / df(x);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - x).abs();
        x = next;
        if step <= 2.0 * f64::EPSILON * x.abs() || hi - lo <= 2.0 * f64::EPSILON * hi.abs() {
            return Ok(x);
        }
    }
    Err(Error::NonConvergence {
        what: "left branch inverse",
        iterations: MAX_ROOT_ITER,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisect(f: impl Fn(f64) -> f64, y: f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn evaluate_examples() {
        let m = PMMap::lsv(0.5).unwrap();
        assert_eq!(m.evaluate(0.0).unwrap(), 0.0);
        let near = m.evaluate(0.5 - 1e-12).unwrap();
        assert!((near - 1.0).abs() < 1e-10 && near < 1.0);
        let expected = 0.25 * (1.0 + 2f64.sqrt() * 0.5);
        assert!((m.evaluate(0.25).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.426777).abs() < 1e-6);
        assert_eq!(m.evaluate(1.0).unwrap(), 1.0);
        assert_eq!(m.evaluate(0.5).unwrap(), 0.0);
    }

    #[test]
    fn domain_violations() {
        let m = PMMap::lsv(0.5).unwrap();
        assert!(matches!(m.evaluate(-0.1), Err(Error::Domain { .. })));
        assert!(matches!(m.evaluate(1.5), Err(Error::Domain { .. })));
        assert!(m.branch_inverse(1.01, Branch::Right).is_err());
        assert!(m.derivative(0.5).is_err());
        assert!(PMMap::lsv(1.0).is_err());
        assert!(PMMap::lsv(0.0).is_err());
        assert!(PMMap::with_coefficient(0.5, -1.0).is_err());
    }

    #[test]
    fn inverse_examples() {
        let m = PMMap::lsv(0.5).unwrap();
        assert_eq!(m.branch_inverse(0.0, Branch::Left).unwrap(), 0.0);
        assert_eq!(m.branch_inverse(0.0, Branch::Right).unwrap(), 0.5);
        let oracle = bisect(|x| x + 2f64.sqrt() * x.powf(1.5), 0.5, 0.0, 0.5);
        let x1 = m.branch_inverse(0.5, Branch::Left).unwrap();
        assert!((x1 - oracle).abs() < 1e-12);
        assert!((x1 - 0.28494).abs() < 1e-4);
    }

    #[test]
    fn derivative_examples() {
        let m = PMMap::lsv(0.5).unwrap();
        assert_eq!(m.derivative(0.0).unwrap(), 1.0);
        assert_eq!(m.one_sided_derivative(Side::Right), 2.0);
        let h = 1e-6;
        let fd = (m.evaluate(0.25 + h).unwrap() - m.evaluate(0.25 - h).unwrap()) / (2.0 * h);
        let d = m.derivative(0.25).unwrap();
        assert!((d - fd).abs() < 1e-5);
        assert!((d - (1.0 + 1.5 * 2f64.sqrt() * 0.5)).abs() < 1e-14);
        assert!((d - 2.06066).abs() < 1e-5);
        // left-side derivative at x₀: 1 + 1.5·√2·√0.5 = 2.5
        assert!((m.one_sided_derivative(Side::Left) - 2.5).abs() < 1e-14);
    }

    #[test]
    fn preimage_and_gamma_examples() {
        let m = PMMap::lsv(0.5).unwrap();
        let seq = m.preimage_sequence(1).unwrap();
        assert_eq!(seq.len(), 2);
        assert_eq!(seq.get(0), Some(0.5));
        let oracle = bisect(|x| x + 2f64.sqrt() * x.powf(1.5), 0.5, 0.0, 0.5);
        assert!((seq.get(1).unwrap() - oracle).abs() < 1e-12);

        let g = m.gamma_sequence(2).unwrap();
        assert_eq!(g[0], 0.75);
        assert!((g[1] - (1.0 + oracle) / 2.0).abs() < 1e-12);
        assert!((g[1] - 0.64247).abs() < 1e-4);
        assert!(m.preimage_sequence(0).is_err());
    }

    #[test]
    fn gamma_offsets_are_scaled_preimages() {
        for alpha in [0.25, 0.5, 0.75] {
            let m = PMMap::lsv(alpha).unwrap();
            let xs = m.preimage_sequence(30).unwrap();
            let g = m.gamma_sequence(30).unwrap();
            for k in 1..=30 {
                let lhs = g[k - 1] - m.breakpoint();
                let rhs = xs.values()[k - 1] / m.one_sided_derivative(Side::Right);
                assert!((lhs - rhs).abs() < 1e-15, "k={k}");
                if k > 1 {
                    assert!(g[k - 1] < g[k - 2]);
                }
            }
        }
    }

    #[test]
    fn general_coefficient_breakpoint() {
        let m = PMMap::with_coefficient(0.5, 1.0).unwrap();
        let x0 = m.breakpoint();
        assert!((x0 + x0.powf(1.5) - 1.0).abs() < 1e-14);
        assert!(!m.is_lsv());
        // generic constructor at c = 2^α reproduces the LSV breakpoint
        let g = PMMap::with_coefficient(0.5, 2f64.sqrt()).unwrap();
        assert!((g.breakpoint() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tail_law_slope() {
        for alpha in [0.25, 0.5, 0.75] {
            let m = PMMap::lsv(alpha).unwrap();
            let xs = m.preimage_sequence(10_000).unwrap();
            let ns: Vec<usize> = (0..=20).map(|k| (100.0 * 100f64.powf(k as f64 / 20.0)).round() as usize).collect();
            let pts: Vec<(f64, f64)> = ns.iter().map(|&n| ((n as f64).ln(), xs.values()[n].ln())).collect();
            let slope = ols_slope(&pts);
            assert!((slope + 1.0 / alpha).abs() < 0.05, "alpha={alpha} slope={slope}");
            // x_n·n^{1/α} stays in a fixed positive band
            let scaled: Vec<f64> = ns.iter().map(|&n| xs.values()[n] * (n as f64).powf(1.0 / alpha)).collect();
            let (lo, hi) = scaled.iter().fold((f64::MAX, 0f64), |(a, b), &v| (a.min(v), b.max(v)));
            assert!(lo > 0.0 && hi / lo < 2.0, "alpha={alpha}: {lo}..{hi}");
        }
    }

    fn ols_slope(pts: &[(f64, f64)]) -> f64 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn monotone_on_each_branch() {
        for alpha in [0.25, 0.5, 0.75] {
            let m = PMMap::lsv(alpha).unwrap();
            let grid: Vec<f64> = (0..=20_000).map(|i| i as f64 / 20_000.0).collect();
            for w in grid.windows(2) {
                let same_branch = (w[0] < 0.5) == (w[1] < 0.5);
                if same_branch {
                    assert!(m.evaluate(w[1]).unwrap() > m.evaluate(w[0]).unwrap());
                }
            }
        }
    }

    #[test]
    fn expanding_away_from_zero() {
        let m = PMMap::lsv(0.5).unwrap();
        for i in 1..1000 {
            let x = i as f64 / 1000.0;
            if x != 0.5 {
                assert!(m.derivative(x).unwrap() > 1.0);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn round_trip_both_branches(y in 0.0f64..1.0, ai in 0usize..3) {
                let alpha = [0.25, 0.5, 0.75][ai];
                let m = PMMap::lsv(alpha).unwrap();
                let xl = m.branch_inverse(y, Branch::Left).unwrap();
                prop_assert!((0.0..0.5).contains(&xl));
                prop_assert!((m.evaluate(xl).unwrap() - y).abs() < 1e-12);
                let xr = m.branch_inverse(y, Branch::Right).unwrap();
                prop_assert!((0.5..=1.0).contains(&xr));
                prop_assert!((m.evaluate(xr).unwrap() - y).abs() < 1e-12);
            }

            #[test]
            fn derivative_matches_central_differences(x in 0.01f64..0.99) {
                prop_assume!((x - 0.5).abs() > 0.01);
                let m = PMMap::lsv(0.5).unwrap();
                let h = 1e-6;
                let fd = (m.evaluate(x + h).unwrap() - m.evaluate(x - h).unwrap()) / (2.0 * h);
                prop_assert!((m.derivative(x).unwrap() - fd).abs() < 1e-5);
            }
        }
    }
}
