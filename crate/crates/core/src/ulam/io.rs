//! Matrix Market persistence and an on-disk cache of closed matrices.
//!
//! Files use the coordinate/real/general layout. Comment lines after the
//! banner carry `key=value` metadata describing the map, partition and kind,
//! and a SHA-256 digest of the data section (size line plus entry lines).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{assemble, MatrixKind, Partition, UlamMatrix};
use crate::error::{Error, Result};
use crate::maps::PMMap;
use crate::sparse::SparseMatrix;

const BANNER: &str = "%%MatrixMarket matrix coordinate real general";

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Renders the file contents. Values carry 17 significant digits, enough to
/// round-trip every `f64`.
pub(crate) fn render(p: &UlamMatrix) -> String {
    let m = p.map();
    let mut head = String::new();
    head.push_str(BANNER);
    head.push('\n');
    let _ = writeln!(
        head,
        "% map={} alpha={} N={} kind={}",
        m.family(),
        m.alpha(),
        p.n_bins(),
        p.kind().name()
    );
    let _ = writeln!(head, "% c_alpha={} breakpoint={}", m.c_alpha(), m.breakpoint());
    if p.partition().is_uniform() {
        head.push_str("% partition=uniform\n");
    } else {
        let _ = writeln!(head, "% partition=edges edges={}", join(p.partition().edges()));
    }
    match p.kind() {
        MatrixKind::Closed => {}
        MatrixKind::Open { hole } => {
            let one_based: Vec<usize> = hole.iter().map(|b| b + 1).collect();
            let _ = writeln!(head, "% hole={}", join(&one_based));
        }
        MatrixKind::Averaged { eps0_bins, rho } => {
            let _ = writeln!(head, "% eps0_bins={eps0_bins} rho={}", join(rho));
        }
    }

    let a = p.matrix();
    let mut data = String::with_capacity(48 * a.nnz() + 32);
    let _ = writeln!(data, "{} {} {}", a.n_rows(), a.n_cols(), a.nnz());
    for (i, j, v) in a.entries() {
        let _ = writeln!(data, "{} {} {:.16e}", i + 1, j + 1, v);
    }
    let digest = hex(&Sha256::digest(data.as_bytes()));
    let _ = writeln!(head, "% sha256={digest}");
    head + &data
}

/// Writes `p` to `path` in Matrix Market format.
pub fn save(p: &UlamMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render(p)).map_err(|e| io_err(path, e))
}

/// Reads a matrix written by [`save`], verifying its checksum.
pub fn load(path: impl AsRef<Path>) -> Result<UlamMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse(&text, path)
}

pub(crate) fn parse(text: &str, path: &Path) -> Result<UlamMatrix> {
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let lines: Vec<&str> = text.lines().collect();
    match lines.first() {
        Some(l) if l.trim().eq_ignore_ascii_case(BANNER) => {}
        _ => return Err(perr(1, "missing Matrix Market banner".into())),
    }

    let mut meta: HashMap<String, (usize, String)> = HashMap::new();
    let mut k = 1;
    while k < lines.len() && lines[k].starts_with('%') {
        for tok in lines[k].trim_start_matches('%').split_whitespace() {
            if let Some((key, val)) = tok.split_once('=') {
                meta.insert(key.to_string(), (k + 1, val.to_string()));
            }
        }
        k += 1;
    }
    let data_start = k;

    let get = |key: &str| -> Result<(usize, &str)> {
        meta.get(key)
            .map(|(l, v)| (*l, v.as_str()))
            .ok_or_else(|| perr(data_start, format!("missing metadata key `{key}`")))
    };
    fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str, path: &Path) -> Result<T> {
        v.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("bad value `{v}` for `{key}`"),
        })
    }
    fn list<T: std::str::FromStr>(line: usize, key: &str, v: &str, path: &Path) -> Result<Vec<T>> {
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',').map(|s| num(line, key, s, path)).collect()
    }

    let (l, family) = get("map")?;
    let (la, alpha) = get("alpha")?;
    let alpha: f64 = num(la, "alpha", alpha, path)?;
    let (lc, c_alpha) = get("c_alpha")?;
    let c_alpha: f64 = num(lc, "c_alpha", c_alpha, path)?;
    let map = match family {
        "lsv" => PMMap::lsv(alpha)?,
        "pm" => PMMap::with_coefficient(alpha, c_alpha)?,
        other => return Err(perr(l, format!("unknown map family `{other}`"))),
    };
    if map.c_alpha() != c_alpha {
        return Err(perr(lc, "c_alpha does not match the map family".into()));
    }
    let (ln, n_bins) = get("N")?;
    let n_bins: usize = num(ln, "N", n_bins, path)?;

    let (lp, part_kind) = get("partition")?;
    let partition = match part_kind {
        "uniform" => Partition::uniform(n_bins)?,
        "edges" => {
            let (le, e) = get("edges")?;
            Partition::from_edges(list(le, "edges", e, path)?)?
        }
        other => return Err(perr(lp, format!("unknown partition `{other}`"))),
    };
    if partition.n_bins() != n_bins {
        return Err(perr(ln, format!("N={n_bins} but partition has {} bins", partition.n_bins())));
    }

    let (lk, kind) = get("kind")?;
    let kind = match kind {
        "closed" => MatrixKind::Closed,
        "open" => {
            let (lh, h) = get("hole")?;
            let one_based: Vec<usize> = list(lh, "hole", h, path)?;
            if one_based.contains(&0) {
                return Err(perr(lh, "hole indices are 1-based".into()));
            }
            MatrixKind::Open {
                hole: one_based.iter().map(|b| b - 1).collect(),
            }
        }
        "averaged" => {
            let (lb, b) = get("eps0_bins")?;
            let (lr, r) = get("rho")?;
            MatrixKind::Averaged {
                eps0_bins: num(lb, "eps0_bins", b, path)?,
                rho: list(lr, "rho", r, path)?,
            }
        }
        other => return Err(perr(lk, format!("unknown kind `{other}`"))),
    };
    let (_, expected) = get("sha256")?;

    let size_line = data_start + 1;
    let size = lines
        .get(data_start)
        .ok_or_else(|| perr(size_line, "missing size line".into()))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|s| num(size_line, "size", s, path))
        .collect::<Result<_>>()?;
    let [rows, cols, nnz] = dims[..] else {
        return Err(perr(size_line, "size line needs `rows cols nnz`".into()));
    };

    let mut hasher = Sha256::new();
    hasher.update(size.as_bytes());
    hasher.update(b"\n");
    let mut triplets = Vec::with_capacity(nnz);
    for e in 0..nnz {
        let line_no = size_line + 1 + e;
        let line = lines.get(data_start + 1 + e).ok_or_else(|| {
            perr(line_no, format!("file truncated: expected {nnz} entries, found {e}"))
        })?;
        let mut it = line.split_whitespace();
        let (Some(i), Some(j), Some(v), None) = (it.next(), it.next(), it.next(), it.next()) else {
            return Err(perr(line_no, format!("malformed entry `{line}`")));
        };
        let i: usize = num(line_no, "row", i, path)?;
        let j: usize = num(line_no, "column", j, path)?;
        let v: f64 = num(line_no, "value", v, path)?;
        if i == 0 || j == 0 || i > rows || j > cols {
            return Err(perr(line_no, format!("index ({i}, {j}) out of range")));
        }
        triplets.push((i - 1, j - 1, v));
        hasher.update(line.as_bytes());
        hasher.update(b"\n");
    }
    if let Some(extra) = lines[data_start + 1 + nnz..].iter().position(|l| !l.trim().is_empty()) {
        return Err(perr(
            size_line + 1 + nnz + extra,
            format!("unexpected content after {nnz} entries"),
        ));
    }
    let actual = hex(&hasher.finalize());
    if actual != expected {
        return Err(Error::Checksum {
            path: path.to_path_buf(),
            expected: expected.to_string(),
            actual,
        });
    }

    let matrix = SparseMatrix::from_triplets(rows, cols, triplets)?;
    UlamMatrix::from_parts(map, partition, kind, matrix)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheOutcome {
    /// Loaded from disk.
    Hit,
    /// No file existed; assembled and stored.
    Miss,
    /// A file existed but was unreadable or described a different matrix.
    Rebuilt,
}

/// Directory of closed Ulam matrices keyed by map parameters and `N`.
#[derive(Debug, Clone)]
pub struct MatrixCache {
    dir: PathBuf,
}

impl MatrixCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(MatrixCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, map: &PMMap, n: usize) -> PathBuf {
        self.dir.join(format!(
            "{}_alpha{}_c{}_N{}_closed.mtx",
            map.family(),
            map.alpha(),
            map.c_alpha(),
            n
        ))
    }

    /// Closed matrix of `map` on `n` uniform bins, from disk when a matching
    /// file exists.
    pub fn closed(&self, map: &PMMap, n: usize) -> Result<(UlamMatrix, CacheOutcome)> {
        let path = self.path_for(map, n);
        let outcome = if path.exists() {
            match load(&path) {
                Ok(p)
                    if p.map() == map
                        && p.n_bins() == n
                        && p.partition().is_uniform()
                        && *p.kind() == MatrixKind::Closed =>
                {
                    return Ok((p, CacheOutcome::Hit));
                }
                _ => CacheOutcome::Rebuilt,
            }
        } else {
            CacheOutcome::Miss
        };
        let p = assemble(map, n)?;
        save(&p, &path)?;
        Ok((p, outcome))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> UlamMatrix {
        assemble(&PMMap::lsv(0.5).unwrap(), 50).unwrap()
    }

    #[test]
    fn round_trip_all_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let p = sample();
        let variants = [
            p.clone(),
            p.open_submatrix(&[0, 3]).unwrap(),
            p.averaged_operator_bins(4).unwrap(),
            super::super::assemble_on(
                &PMMap::with_coefficient(0.5, 0.6).unwrap(),
                Partition::with_hole_cell(0.013, 20).unwrap(),
            )
            .unwrap(),
        ];
        for (k, q) in variants.iter().enumerate() {
            let f = dir.path().join(format!("m{k}.mtx"));
            save(q, &f).unwrap();
            let r = load(&f).unwrap();
            assert_eq!(&r, q, "variant {k}");
        }
    }

    #[test]
    fn header_layout() {
        let text = render(&sample());
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(BANNER));
        assert_eq!(lines.next(), Some("% map=lsv alpha=0.5 N=50 kind=closed"));
        assert!(text.contains("% sha256="));
    }

    #[test]
    fn truncated_file_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("t.mtx");
        let text = render(&sample());
        let keep: Vec<&str> = text.lines().collect();
        let cut = keep.len() - 5;
        fs::write(&f, keep[..cut].join("\n")).unwrap();
        match load(&f) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, cut + 1);
                assert!(message.contains("truncated"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn corrupted_value_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("c.mtx");
        let text = render(&sample());
        let last = text.trim_end().rsplit_once('\n').unwrap().1.to_string();
        let (ij, _) = last.rsplit_once(' ').unwrap();
        let bad = text.replace(&last, &format!("{ij} 1.0000000000000000e-1"));
        fs::write(&f, bad).unwrap();
        assert!(matches!(load(&f), Err(Error::Checksum { .. })));
    }

    #[test]
    fn malformed_entry_names_line() {
        let text = render(&sample());
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let idx = lines.len() - 2;
        lines[idx] = "3 x 0.5".into();
        match parse(&lines.join("\n"), Path::new("mem")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, idx + 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn cache_hits_and_rebuilds() {
        let dir = tempfile::tempdir().unwrap();
        let cache = MatrixCache::new(dir.path().join("cache")).unwrap();
        let map = PMMap::lsv(0.25).unwrap();
        let (a, o1) = cache.closed(&map, 40).unwrap();
        assert_eq!(o1, CacheOutcome::Miss);
        let (b, o2) = cache.closed(&map, 40).unwrap();
        assert_eq!(o2, CacheOutcome::Hit);
        assert_eq!(a, b);

        // a file with mismatching metadata under the expected name
        let other = assemble(&map, 41).unwrap();
        save(&other, cache.path_for(&map, 40)).unwrap();
        let (c, o3) = cache.closed(&map, 40).unwrap();
        assert_eq!(o3, CacheOutcome::Rebuilt);
        assert_eq!(c, a);

        fs::write(cache.path_for(&map, 40), "garbage").unwrap();
        assert_eq!(cache.closed(&map, 40).unwrap().1, CacheOutcome::Rebuilt);
    }
}
