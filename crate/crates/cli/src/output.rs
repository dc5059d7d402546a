use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use intermit::error::ErrorCategory;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            kind: "config",
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            kind: "numerical",
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError {
            code: 4,
            kind: "io",
            message: format!("{}: {e}", path.display()),
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": { "kind": self.kind, "code": self.code, "message": self.message } }).to_string()
    }
}

impl From<intermit::Error> for CliError {
    fn from(e: intermit::Error) -> Self {
        let message = e.to_string();
        match e.category() {
            ErrorCategory::Config => CliError::config(message),
            ErrorCategory::Numerical => CliError::numerical(message),
            ErrorCategory::Io => CliError {
                code: 4,
                kind: "io",
                message,
            },
        }
    }
}

/// A CSV cell. Floats use the shortest representation that parses back to
/// the same value.
pub enum Cell {
    F(f64),
    U(usize),
    S(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::U(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

fn render_cell(c: &Cell, out: &mut String) {
    match c {
        Cell::F(v) => write!(out, "{v}").unwrap(),
        Cell::U(v) => write!(out, "{v}").unwrap(),
        Cell::S(s) if s.contains([',', '"', '\n']) => write!(out, "\"{}\"", s.replace('"', "\"\"")).unwrap(),
        Cell::S(s) => out.push_str(s),
        Cell::Empty => {}
    }
}

pub struct Writer<'a> {
    cfg: &'a RunConfig,
    config_json: String,
}

impl<'a> Writer<'a> {
    pub fn new(cfg: &'a RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
        Ok(Writer {
            cfg,
            config_json: serde_json::to_string(cfg).expect("config serializes"),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    /// Writes a CSV whose first lines are `#` metadata: version, command,
    /// the full config and any `notes`.
    pub fn csv(&self, name: &str, notes: &[String], columns: &[&str], rows: &[Vec<Cell>]) -> Result<PathBuf, CliError> {
        let mut s = String::new();
        writeln!(s, "# intermit {VERSION}").unwrap();
        writeln!(s, "# command: {}", self.cfg.command).unwrap();
        writeln!(s, "# config: {}", self.config_json).unwrap();
        for n in notes {
            writeln!(s, "# {n}").unwrap();
        }
        s.push_str(&columns.join(","));
        s.push('\n');
        for row in rows {
            debug_assert_eq!(row.len(), columns.len());
            for (i, c) in row.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                render_cell(c, &mut s);
            }
            s.push('\n');
        }
        let path = self.path(name);
        fs::write(&path, s).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    /// Writes a pretty JSON object carrying version, command and config next
    /// to `body`.
    pub fn json(&self, name: &str, body: impl Serialize) -> Result<PathBuf, CliError> {
        let doc = json!({
            "version": VERSION,
            "command": self.cfg.command,
            "config": self.cfg,
            "results": body,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("summary serializes");
        s.push('\n');
        let path = self.path(name);
        fs::write(&path, s).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

pub fn status_name(s: intermit::Status) -> String {
    match serde_json::to_value(s) {
        Ok(Value::String(v)) => v,
        _ => format!("{s:?}"),
    }
}
