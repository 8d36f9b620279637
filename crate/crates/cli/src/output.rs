//! CSV and JSON writers. Every CSV starts with `#` metadata lines (toolkit
//! version, config hash, seed, command) followed by a header row.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::Config;
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(config: &Config, command: &str, header: &[&str]) -> Self {
        let mut text = String::new();
        let _ = writeln!(text, "# opsize {VERSION}");
        let _ = writeln!(text, "# command {command}");
        let _ = writeln!(text, "# config_sha256 {}", config.hash());
        let _ = writeln!(text, "# seed {}", config.seed);
        let _ = writeln!(text, "{}", header.join(","));
        Self { text, columns: header.len() }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        debug_assert_eq!(cells.len(), self.columns);
        let line: Vec<String> = cells.iter().map(Cell::render).collect();
        let _ = writeln!(self.text, "{}", line.join(","));
    }

    pub fn write(&self, dir: &Path, name: &str) -> Result<PathBuf, CliError> {
        let path = dir.join(name);
        std::fs::write(&path, &self.text).map_err(|e| CliError::Io(path.display().to_string(), e))?;
        Ok(path)
    }
}

pub enum Cell {
    F(f64),
    U(u64),
    S(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            // Shortest round-trip representation; scientific outside
            // [1e-5, 1e16) to keep dust and huge values short.
            Cell::F(x) if *x == 0.0 || (1e-5..1e16).contains(&x.abs()) => format!("{x}"),
            Cell::F(x) => format!("{x:e}"),
            Cell::U(x) => x.to_string(),
            Cell::S(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).expect("summary serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| CliError::Io(path.display().to_string(), e))?;
    Ok(path)
}

pub fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.display().to_string(), e))
}

/// Metadata block shared by the JSON summaries.
#[derive(Serialize)]
pub struct Meta<'a> {
    pub version: &'a str,
    pub command: &'a str,
    pub config_sha256: String,
    pub seed: u64,
    /// Resolved config without the output directory.
    pub config: Config,
}

impl<'a> Meta<'a> {
    pub fn new(config: &'a Config, command: &'a str) -> Self {
        let mut config = config.clone();
        config.out = None;
        Self { version: VERSION, command, config_sha256: config.hash(), seed: config.seed, config }
    }
}
