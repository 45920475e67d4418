//! Deterministic CSV and plot-script output.
//!
//! Every file starts with one `#` line carrying the tool version, the
//! command and the config hash. Numbers are written in a fixed `{:.12e}`
//! format, so identical inputs give identical bytes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.12e}")
    }
}

/// File-name tag for one `h` value, e.g. `h0.05`.
pub fn h_tag(h: f64) -> String {
    format!("h{h}")
}

pub struct Outputs {
    dir: PathBuf,
    header: String,
    written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(dir: &Path, command: &str, config_hash: &str) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        let header = format!("# cylscat {VERSION} command={command} config_sha256={config_hash}");
        Ok(Self { dir: dir.to_path_buf(), header, written: Vec::new() })
    }

    pub fn header(&self) -> &str {
        &self.header
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Write a CSV table and return its path.
    pub fn table(&mut self, name: &str, columns: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
        let mut buf = Vec::new();
        writeln!(buf, "{}", self.header).expect("write to memory");
        {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut buf);
            w.write_record(columns).map_err(|e| CliError::Io(e.to_string()))?;
            for row in rows {
                debug_assert_eq!(row.len(), columns.len());
                w.write_record(row).map_err(|e| CliError::Io(e.to_string()))?;
            }
            w.flush().map_err(|e| CliError::Io(e.to_string()))?;
        }
        self.raw(name, &buf)
    }

    /// Write a text file; `#` comment lines from `body` are kept as is.
    pub fn text(&mut self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        let content = format!("{}\n{body}", self.header);
        self.raw(name, content.as_bytes())
    }

    fn raw(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path.clone());
        Ok(path)
    }
}

/// Gnuplot preamble for the CSV files written here.
pub fn gnuplot_preamble(output: &str) -> String {
    format!(
        "set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\n\
         set terminal pngcairo size 900,600\nset output '{output}'\n"
    )
}
