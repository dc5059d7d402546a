use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use intermit::analysis::reference_c_alpha;
use intermit::{PMMap, SpectralOptions};
use serde::{Deserialize, Serialize};

use crate::output::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Invariant density of the closed Ulam matrix.
    Acim,
    /// Spectral gap 1 − λ₂ against N.
    GapScan,
    /// Escape rate through the first bins against N.
    EscapeScan,
    /// TV distance of hole ACCIMs to a fine-grid ACIM.
    AccimConverge,
    /// Second eigenvalue table with the tower bound interval.
    Table1,
    /// Truncated-tower ACCIMs and escape rates.
    Tower,
    /// Two-state Markov model.
    Twostate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Acim => "acim",
            Command::GapScan => "gap-scan",
            Command::EscapeScan => "escape-scan",
            Command::AccimConverge => "accim-converge",
            Command::Table1 => "table1",
            Command::Tower => "tower",
            Command::Twostate => "twostate",
        }
    }
}

/// Grid of bin counts (or tower depths): `1000`, `100,200,500` or
/// `start:end:factor`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid(pub Vec<usize>);

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.contains(':') {
            let parts: Vec<&str> = s.split(':').collect();
            let [a, b, f] = parts.as_slice() else {
                return Err(format!("grid `{s}` must be start:end:factor"));
            };
            let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("grid `{s}`: {e}"));
            let (start, end, factor) = (num(a)?, num(b)?, num(f)?);
            if start == 0 || factor < 2 || end < start {
                return Err(format!("grid `{s}` needs 0 < start <= end and factor >= 2"));
            }
            let mut out = Vec::new();
            let mut n = start;
            while n <= end {
                out.push(n);
                n = n.checked_mul(factor).ok_or_else(|| format!("grid `{s}` overflows"))?;
            }
            return Ok(Grid(out));
        }
        s.split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|e| format!("bad grid value `{t}`: {e}")))
            .collect::<Result<_, _>>()
            .map(Grid)
    }
}

/// Left-branch coefficient: the LSV default, the calibrated reference value
/// or an explicit number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coefficient {
    Lsv,
    Reference,
    Value(f64),
}

impl FromStr for Coefficient {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "lsv" => Ok(Coefficient::Lsv),
            "reference" => Ok(Coefficient::Reference),
            t => t
                .parse::<f64>()
                .map(Coefficient::Value)
                .map_err(|_| format!("c-alpha `{t}` is not a number, `lsv` or `reference`")),
        }
    }
}

impl fmt::Display for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Lsv => f.write_str("lsv"),
            Coefficient::Reference => f.write_str("reference"),
            Coefficient::Value(v) => write!(f, "{v}"),
        }
    }
}

fn float_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad number `{t}`: {e}")))
        .collect()
}

/// Command-line flags. Every field is optional so a JSON config file can
/// fill the gaps; flags win over the file.
#[derive(Debug, Default, Clone, Args)]
pub struct Flags {
    /// Map exponents, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    /// Left-branch coefficient: `lsv`, `reference` or a number.
    #[arg(long)]
    pub c_alpha: Option<Coefficient>,
    /// Bin counts (tower depths for `tower`): `N`, `N1,N2,..` or `start:end:factor`.
    #[arg(long)]
    pub n: Option<Grid>,
    /// Number of leading bins removed as the hole in `escape-scan`.
    #[arg(long)]
    pub hole_bins: Option<usize>,
    /// Base resolution of the tower.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Reference bin count N* for `accim-converge`.
    #[arg(long)]
    pub reference_n: Option<usize>,
    /// Partition points of the two-state model, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub eps0: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Matrix cache directory.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// JSON file with the same keys as the flags (snake_case).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Numbers {
    One(f64),
    Many(Vec<f64>),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Scalar {
    Num(f64),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    alpha: Option<Numbers>,
    c_alpha: Option<Scalar>,
    n: Option<Numbers>,
    hole_bins: Option<usize>,
    m: Option<usize>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    reference_n: Option<usize>,
    eps0: Option<Numbers>,
    out: Option<PathBuf>,
    cache: Option<PathBuf>,
}

fn floats(v: Numbers) -> Result<Vec<f64>, String> {
    match v {
        Numbers::One(x) => Ok(vec![x]),
        Numbers::Many(xs) => Ok(xs),
        Numbers::Text(s) => float_list(&s),
    }
}

fn counts(v: Numbers) -> Result<Grid, String> {
    let whole = |x: f64| -> Result<usize, String> {
        if x >= 0.0 && x.fract() == 0.0 && x < 1e15 {
            Ok(x as usize)
        } else {
            Err(format!("`{x}` is not a valid count"))
        }
    };
    match v {
        Numbers::One(x) => Ok(Grid(vec![whole(x)?])),
        Numbers::Many(xs) => xs.into_iter().map(whole).collect::<Result<_, _>>().map(Grid),
        Numbers::Text(s) => s.parse(),
    }
}

impl Flags {
    /// Fills unset flags from the file named by `--config`, if any.
    pub fn merge_file(mut self) -> Result<Self, CliError> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let file: FileConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let bad = |e: String| CliError::config(format!("{}: {e}", path.display()));

        if self.alpha.is_none() {
            self.alpha = file.alpha.map(floats).transpose().map_err(bad)?;
        }
        if self.c_alpha.is_none() {
            self.c_alpha = match file.c_alpha {
                None => None,
                Some(Scalar::Num(v)) => Some(Coefficient::Value(v)),
                Some(Scalar::Text(s)) => Some(s.parse().map_err(bad)?),
            };
        }
        if self.n.is_none() {
            self.n = file.n.map(counts).transpose().map_err(bad)?;
        }
        if self.eps0.is_none() {
            self.eps0 = file.eps0.map(floats).transpose().map_err(bad)?;
        }
        self.hole_bins = self.hole_bins.or(file.hole_bins);
        self.m = self.m.or(file.m);
        self.tol = self.tol.or(file.tol);
        self.max_iter = self.max_iter.or(file.max_iter);
        self.reference_n = self.reference_n.or(file.reference_n);
        // relative paths in the file are taken relative to the file itself
        let base = path.parent().unwrap_or(Path::new("."));
        self.out = self.out.or(file.out.map(|p| base.join(p)));
        self.cache = self.cache.or(file.cache.map(|p| base.join(p)));
        Ok(self)
    }
}

/// Fully resolved and validated run parameters. Output and cache paths are
/// left out of the serialized form so artifacts do not depend on where they
/// were written.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub alpha: Vec<f64>,
    pub c_alpha: String,
    pub n: Vec<usize>,
    pub hole_bins: usize,
    pub m: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub reference_n: usize,
    pub eps0: Vec<f64>,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub cache: Option<PathBuf>,
    #[serde(skip)]
    pub maps: Vec<PMMap>,
}

fn default_grid(cmd: Command) -> Vec<usize> {
    match cmd {
        Command::Acim => vec![1000],
        Command::GapScan | Command::EscapeScan => vec![128, 256, 512, 1024, 2048, 4096, 8192],
        Command::AccimConverge => vec![100, 200, 500, 1000, 2000, 5000],
        Command::Table1 => vec![100, 200, 500, 1000, 2000, 5000, 10000, 20000, 50000],
        Command::Tower => vec![4, 8, 16, 32],
        Command::Twostate => vec![1000],
    }
}

fn default_alpha(cmd: Command) -> Vec<f64> {
    match cmd {
        Command::GapScan | Command::EscapeScan | Command::AccimConverge => vec![0.25, 0.5, 0.75],
        _ => vec![0.5],
    }
}

impl RunConfig {
    pub fn resolve(cmd: Command, flags: Flags) -> Result<Self, CliError> {
        let flags = flags.merge_file()?;
        let coefficient = flags.c_alpha.unwrap_or(match cmd {
            Command::Table1 => Coefficient::Reference,
            _ => Coefficient::Lsv,
        });
        let cfg = RunConfig {
            command: cmd.name(),
            alpha: flags.alpha.unwrap_or_else(|| default_alpha(cmd)),
            c_alpha: coefficient.to_string(),
            n: flags.n.map(|g| g.0).unwrap_or_else(|| default_grid(cmd)),
            hole_bins: flags.hole_bins.unwrap_or(1),
            m: flags.m.unwrap_or(intermit::tower::DEFAULT_M),
            tol: flags.tol.unwrap_or(1e-10),
            max_iter: flags.max_iter.unwrap_or(1_000_000),
            reference_n: flags.reference_n.unwrap_or(20_000),
            eps0: flags.eps0.unwrap_or_else(|| vec![0.1, 0.01, 1e-3, 1e-4]),
            out: flags.out.unwrap_or_else(|| PathBuf::from("out")),
            cache: flags.cache,
            maps: Vec::new(),
        };
        cfg.validate(cmd, coefficient)
    }

    pub fn spectral(&self) -> SpectralOptions {
        SpectralOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }

    fn validate(mut self, cmd: Command, coefficient: Coefficient) -> Result<Self, CliError> {
        let fail = |msg: String| Err(CliError::config(msg));
        SpectralOptions::new(self.tol, self.max_iter)?;
        if self.alpha.is_empty() {
            return fail("at least one alpha is required".into());
        }
        if coefficient == Coefficient::Reference && self.alpha.iter().any(|&a| a != 0.5) {
            return fail("c-alpha `reference` is calibrated for alpha = 0.5 only".into());
        }
        self.maps = self
            .alpha
            .iter()
            .map(|&a| match coefficient {
                Coefficient::Lsv => PMMap::lsv(a),
                Coefficient::Reference => PMMap::with_coefficient(a, reference_c_alpha()),
                Coefficient::Value(c) => PMMap::with_coefficient(a, c),
            })
            .collect::<Result<_, _>>()?;

        if self.n.is_empty() {
            return fail("the N grid is empty".into());
        }
        let mut sorted = self.n.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.n.len() {
            return fail(format!("the N grid {:?} has repeated values", self.n));
        }
        let min_n = sorted[0];
        let max_n = *sorted.last().unwrap();
        if min_n < 2 {
            return fail(format!("N = {min_n} is below the minimum of 2"));
        }

        match cmd {
            Command::GapScan | Command::EscapeScan if self.n.len() < 4 => {
                return fail(format!("{} needs at least 4 distinct N values, got {}", cmd.name(), self.n.len()));
            }
            Command::EscapeScan if self.hole_bins == 0 || self.hole_bins >= min_n => {
                return fail(format!("hole-bins = {} must lie in [1, {min_n})", self.hole_bins));
            }
            Command::AccimConverge => {
                if self.n.len() < 2 {
                    return fail("accim-converge needs at least 2 N values".into());
                }
                if let Some(&n) = self.n.iter().find(|&&n| !self.reference_n.is_multiple_of(n)) {
                    return fail(format!("N = {n} does not divide reference-n = {}", self.reference_n));
                }
                if self.reference_n < max_n {
                    return fail(format!("reference-n = {} is below the largest N", self.reference_n));
                }
            }
            Command::Tower if self.m < 16 => {
                return fail(format!("m = {} is below the minimum of 16", self.m));
            }
            Command::Twostate => {
                if self.eps0.is_empty() {
                    return fail("at least one eps0 is required".into());
                }
                for map in &self.maps {
                    if let Some(&e) = self.eps0.iter().find(|&&e| !(e > 0.0 && e < map.breakpoint())) {
                        return fail(format!(
                            "eps0 = {e} must lie in (0, {}) for alpha = {}",
                            map.breakpoint(),
                            map.alpha()
                        ));
                    }
                }
            }
            _ => {}
        }
        Ok(self)
    }
}
