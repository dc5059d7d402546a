use intermit::analysis::{
    accim_tv_scan, density_tail_slope, escape_scan, gap_scan, scaling_fit, table1, two_state, two_state_weighted,
    ScalingFit, TwoStateModel,
};
use intermit::sparse::SparseMatrix;
use intermit::spectral::{leading, second, substochastic_leading};
use intermit::tower::{accim_bounds_check, accim_fixed_point};
use intermit::ulam::{assemble, assemble_on, MatrixCache};
use intermit::{PMMap, Partition, Status, UlamMatrix};
use serde::Serialize;
use serde_json::json;

use crate::config::{Command, RunConfig};
use crate::output::{status_name, Cell, CliError, Writer};

/// Runs `cmd`, writes its artifacts and returns the problems that should turn
/// into a numerical-failure exit after everything has been written.
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    let cache = cfg.cache.as_ref().map(MatrixCache::new).transpose()?;
    let w = Writer::new(cfg)?;
    let cache = cache.as_ref();
    match cmd {
        Command::Acim => acim(cfg, &w, cache),
        Command::GapScan => gap(cfg, &w, cache),
        Command::EscapeScan => escape(cfg, &w, cache),
        Command::AccimConverge => accim_converge(cfg, &w, cache),
        Command::Table1 => table(cfg, &w, cache),
        Command::Tower => tower(cfg, &w),
        Command::Twostate => twostate(cfg, &w, cache),
    }
}

fn closed(map: &PMMap, n: usize, cache: Option<&MatrixCache>) -> Result<UlamMatrix, CliError> {
    Ok(match cache {
        Some(c) => c.closed(map, n)?.0,
        None => assemble(map, n)?,
    })
}

fn check_status(failures: &mut Vec<String>, what: impl FnOnce() -> String, status: Status) {
    if status != Status::Converged {
        failures.push(format!("{}: {}", what(), status_name(status)));
    }
}

#[derive(Serialize)]
struct FitSummary {
    alpha: f64,
    slope: f64,
    intercept: f64,
    r_squared: f64,
    expected_slope: f64,
    points: usize,
}

fn fit_summary(alpha: f64, expected_slope: f64, fit: &ScalingFit) -> FitSummary {
    FitSummary {
        alpha,
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        expected_slope,
        points: fit.points.len(),
    }
}

fn acim(cfg: &RunConfig, w: &Writer, cache: Option<&MatrixCache>) -> Result<Vec<String>, CliError> {
    let mut failures = Vec::new();
    for map in &cfg.maps {
        for &n in &cfg.n {
            let p = closed(map, n, cache)?;
            let r = leading(&p, cfg.spectral())?;
            let scale = n as f64;
            let rows: Vec<Vec<Cell>> = r
                .eigenvector
                .iter()
                .enumerate()
                .map(|(i, &v)| vec![((i as f64 + 0.5) / scale).into(), (v * scale).into()])
                .collect();
            let stem = format!("acim_alpha{}_N{n}", map.alpha());
            w.csv(&format!("{stem}.csv"), &[], &["midpoint", "density"], &rows)?;

            // the density behaves like x^(-alpha) near the fixed point; further out
            // the next-order term flattens the slope, and the first bins are smoothed
            let start = (n / 2000).max(1);
            let window = start..(n / 100).max(20 * start).min(n);
            let tail = density_tail_slope(&r.eigenvector, window.clone())
                .ok()
                .map(|slope| json!({ "window": [window.start, window.end], "slope": slope }));
            w.json(
                &format!("{stem}.json"),
                json!({
                    "alpha": map.alpha(),
                    "c_alpha": map.c_alpha(),
                    "n": n,
                    "lambda1": r.eigenvalue,
                    "residual": r.residual,
                    "iterations": r.iterations,
                    "status": r.status,
                    "mass": r.eigenvector.iter().sum::<f64>(),
                    "tail_slope": tail,
                }),
            )?;
            check_status(&mut failures, || format!("acim alpha={} N={n}", map.alpha()), r.status);
        }
    }
    Ok(failures)
}

fn gap(cfg: &RunConfig, w: &Writer, cache: Option<&MatrixCache>) -> Result<Vec<String>, CliError> {
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for map in &cfg.maps {
        let a = map.alpha();
        let scan = gap_scan(map, &cfg.n, cfg.spectral(), cache)?;
        for r in &scan {
            rows.push(vec![
                a.into(),
                r.n.into(),
                r.lambda2.into(),
                r.one_minus_lambda2.into(),
                r.iterations.into(),
                status_name(r.status).as_str().into(),
            ]);
            check_status(&mut failures, || format!("gap alpha={a} N={}", r.n), r.status);
        }
        let pts: Vec<(f64, f64)> = scan.iter().map(|r| (r.n as f64, r.one_minus_lambda2)).collect();
        let fit = scaling_fit(&pts).map_err(|e| CliError::numerical(format!("gap fit alpha={a}: {e}")))?;
        fits.push(fit_summary(a, -a, &fit));
    }
    w.csv(
        "gap_scan.csv",
        &[],
        &["alpha", "N", "lambda2", "one_minus_lambda2", "iterations", "status"],
        &rows,
    )?;
    w.json("gap_scan.json", json!({ "fit": "ln(1 - lambda2) on ln N", "fits": fits }))?;
    Ok(failures)
}

fn escape(cfg: &RunConfig, w: &Writer, cache: Option<&MatrixCache>) -> Result<Vec<String>, CliError> {
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for map in &cfg.maps {
        let a = map.alpha();
        let scan = escape_scan(map, &cfg.n, cfg.hole_bins, cfg.spectral(), cache)?;
        for r in &scan {
            rows.push(vec![
                a.into(),
                r.n.into(),
                r.lambda1_open.into(),
                r.one_minus.into(),
                r.iterations.into(),
                status_name(r.status).as_str().into(),
            ]);
            check_status(&mut failures, || format!("escape alpha={a} N={}", r.n), r.status);
        }
        let pts: Vec<(f64, f64)> = scan.iter().map(|r| (r.n as f64, r.one_minus)).collect();
        let fit = scaling_fit(&pts).map_err(|e| CliError::numerical(format!("escape fit alpha={a}: {e}")))?;
        fits.push(fit_summary(a, -1.0, &fit));
    }
    w.csv(
        "escape_scan.csv",
        &[],
        &["alpha", "N", "lambda1_open", "one_minus", "iterations", "status"],
        &rows,
    )?;
    w.json("escape_scan.json", json!({ "fit": "ln(1 - lambda1_open) on ln N", "fits": fits }))?;
    Ok(failures)
}

fn accim_converge(cfg: &RunConfig, w: &Writer, cache: Option<&MatrixCache>) -> Result<Vec<String>, CliError> {
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for map in &cfg.maps {
        let a = map.alpha();
        let scan = accim_tv_scan(map, &cfg.n, cfg.reference_n, cfg.spectral(), cache)?;
        for r in &scan {
            rows.push(vec![
                a.into(),
                r.n.into(),
                r.tv.into(),
                r.lambda1_open.into(),
                status_name(r.status).as_str().into(),
            ]);
            check_status(&mut failures, || format!("accim alpha={a} N={}", r.n), r.status);
        }
        let (first, last) = (scan.first().unwrap(), scan.last().unwrap());
        summaries.push(json!({
            "alpha": a,
            "first": { "n": first.n, "tv": first.tv },
            "last": { "n": last.n, "tv": last.tv },
            "decreasing": last.tv < first.tv,
        }));
    }
    let note = format!(
        "tv = 0.5 * sum |p - q| over bin masses after refining each ACCIM to the N* = {} grid",
        cfg.reference_n
    );
    w.csv(
        "accim_converge.csv",
        &[note],
        &["alpha", "N", "tv", "lambda1_open", "status"],
        &rows,
    )?;
    w.json("accim_converge.json", json!({ "reference_n": cfg.reference_n, "alphas": summaries }))?;
    Ok(failures)
}

fn table(cfg: &RunConfig, w: &Writer, cache: Option<&MatrixCache>) -> Result<Vec<String>, CliError> {
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for map in &cfg.maps {
        let a = map.alpha();
        let t = table1(map, &cfg.n, cfg.spectral(), cache)?;
        for r in &t {
            let within = r.within_bound().map(|b| if b { "true" } else { "false" });
            rows.push(vec![
                a.into(),
                r.n.into(),
                r.one_minus_lambda2.into(),
                r.averaged_one_minus_lambda2.into(),
                r.eps2_over_eps1.into(),
                r.bound_hi.into(),
                within.into(),
                r.tower_n.into(),
                r.eps0_bins.into(),
                r.reference_one_minus_lambda2.into(),
                r.reference_eps2_over_eps1.into(),
                r.status.map(status_name).as_deref().into(),
                r.error.as_deref().into(),
            ]);
            if let Some(e) = &r.error {
                failures.push(format!("table1 alpha={a} N={}: {e}", r.n));
            }
            if let Some(s) = r.status {
                check_status(&mut failures, || format!("table1 alpha={a} N={}", r.n), s);
            }
        }
        summaries.push(json!({
            "alpha": a,
            "c_alpha": map.c_alpha(),
            "rows": t.len(),
            "within_bound": t.iter().filter(|r| r.within_bound() == Some(true)).count(),
            "failed": t.iter().filter(|r| r.error.is_some()).count(),
        }));
    }
    w.csv(
        "table1.csv",
        &[],
        &[
            "alpha",
            "N",
            "one_minus_lambda2",
            "averaged_one_minus_lambda2",
            "eps2_over_eps1",
            "bound_hi",
            "within_bound",
            "tower_n",
            "eps0_bins",
            "reference_one_minus_lambda2",
            "reference_eps2_over_eps1",
            "status",
            "error",
        ],
        &rows,
    )?;
    w.json("table1.json", json!({ "alphas": summaries }))?;
    Ok(failures)
}

fn tower(cfg: &RunConfig, w: &Writer) -> Result<Vec<String>, CliError> {
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for map in &cfg.maps {
        let a = map.alpha();
        let mut results = Vec::new();
        let mut worst: f64 = 0.0;
        for &depth in &cfg.n {
            let t = accim_fixed_point(map, depth, cfg.m, cfg.spectral())?;
            // same hole pulled back to [0, x_{n-1}) on an interval partition of matching resolution
            let x_prev = map.preimage_sequence(depth)?.values()[depth - 1];
            let open = assemble_on(map, Partition::with_hole_cell(x_prev, cfg.m)?)?.open_submatrix(&[0])?;
            let interval = substochastic_leading(&open, cfg.spectral())?;
            let diff = (t.lambda - interval.eigenvalue).abs();
            worst = worst.max(diff);
            rows.push(vec![
                a.into(),
                depth.into(),
                cfg.m.into(),
                t.lambda.into(),
                (1.0 - t.lambda).into(),
                t.hole_measure.into(),
                t.hole_mass.into(),
                t.escape_ratio().into(),
                interval.eigenvalue.into(),
                diff.into(),
                t.iterations.into(),
                status_name(t.status).as_str().into(),
            ]);
            check_status(&mut failures, || format!("tower alpha={a} n={depth}"), t.status);
            check_status(&mut failures, || format!("interval alpha={a} n={depth}"), interval.status);

            let base: Vec<Vec<Cell>> = t
                .base_edges
                .windows(2)
                .zip(t.base_density())
                .map(|(e, d)| vec![e[0].into(), e[1].into(), d.into()])
                .collect();
            w.csv(
                &format!("tower_alpha{a}_n{depth}_base.csv"),
                &[],
                &["left", "right", "density"],
                &base,
            )?;
            results.push(t);
        }
        let bounds = accim_bounds_check(&results)?;
        summaries.push(json!({
            "alpha": a,
            "max_lambda_diff": worst,
            "bounds": bounds,
        }));
    }
    w.csv(
        "tower.csv",
        &[],
        &[
            "alpha",
            "n",
            "M",
            "lambda",
            "one_minus_lambda",
            "hole_measure",
            "hole_mass",
            "escape_ratio",
            "interval_lambda",
            "lambda_diff",
            "iterations",
            "status",
        ],
        &rows,
    )?;
    w.json("tower.json", json!({ "alphas": summaries }))?;
    Ok(failures)
}

fn model_row(a: f64, m: &TwoStateModel, iterated: f64) -> Vec<Cell> {
    let (p1, p2) = m.invariant();
    let weight = match serde_json::to_value(m.weight) {
        Ok(serde_json::Value::String(s)) => s,
        _ => format!("{:?}", m.weight),
    };
    vec![
        a.into(),
        m.eps0.into(),
        weight.as_str().into(),
        m.a.into(),
        m.b.into(),
        m.eigenvalues().1.into(),
        iterated.into(),
        p1.into(),
        p2.into(),
    ]
}

/// `λ₂` of the 2×2 chain by deflated iteration, as a check on `1 − a − b`.
fn iterated_lambda2(m: &TwoStateModel, opts: intermit::SpectralOptions) -> Result<f64, CliError> {
    let p = SparseMatrix::from_dense(&m.matrix().map(|r| r.to_vec()))?;
    let pi = leading(&p, opts)?;
    Ok(second(&p, &pi, opts)?.eigenvalue)
}

fn twostate(cfg: &RunConfig, w: &Writer, cache: Option<&MatrixCache>) -> Result<Vec<String>, CliError> {
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    let n = cfg.n[0];
    for map in &cfg.maps {
        let a = map.alpha();
        let acim = leading(&closed(map, n, cache)?, cfg.spectral())?;
        check_status(&mut failures, || format!("twostate weights alpha={a} N={n}"), acim.status);
        for &eps0 in &cfg.eps0 {
            for m in [two_state(map, eps0)?, two_state_weighted(map, eps0, &acim.eigenvector)?] {
                let it = iterated_lambda2(&m, cfg.spectral())?;
                worst = worst.max((it - m.eigenvalues().1).abs());
                rows.push(model_row(a, &m, it));
            }
        }
    }
    let note = format!("invariant weights from the ACIM on N = {n} bins");
    w.csv(
        "twostate.csv",
        &[note],
        &["alpha", "eps0", "weight", "a", "b", "lambda2", "lambda2_iterated", "invariant1", "invariant2"],
        &rows,
    )?;
    w.json("twostate.json", json!({ "weights_n": n, "max_lambda2_diff": worst }))?;
    Ok(failures)
}
