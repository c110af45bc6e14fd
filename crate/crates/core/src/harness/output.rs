use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub(crate) fn sha256(bytes: &[u8]) -> Vec<u8> {
    Sha256::digest(bytes).to_vec()
}

/// One emitted file, relative to the run directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
    pub description: String,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

/// Write `bytes` to `dir/name` and return its manifest entry.
pub fn write_file(dir: &Path, name: &str, bytes: &[u8], description: &str) -> Result<FileEntry> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
    Ok(FileEntry {
        path: PathBuf::from(name),
        sha256: hex::encode(sha256(bytes)),
        bytes: bytes.len() as u64,
        description: description.to_string(),
    })
}

/// Column-oriented numeric table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn new() -> Self {
        Table {
            headers: Vec::new(),
            columns: Vec::new(),
        }
    }

    pub fn column(mut self, name: &str, values: Vec<f64>) -> Self {
        self.headers.push(name.to_string());
        self.columns.push(values);
        self
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.headers.iter().position(|h| h == name).map(|i| self.columns[i].as_slice())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let n = self.rows();
        if self.columns.iter().any(|c| c.len() != n) {
            return Err(Error::Numerical("ragged table".into()));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.headers).map_err(fail)?;
        for i in 0..n {
            w.write_record(self.columns.iter().map(|c| format!("{:e}", c[i]))).map_err(fail)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.to_string()))
    }

    /// Whitespace-separated columns with a `#` header line.
    pub fn to_dat(&self) -> Vec<u8> {
        let mut s = format!("# {}\n", self.headers.join(" "));
        for i in 0..self.rows() {
            let row: Vec<String> = self.columns.iter().map(|c| format!("{:.10e}", c[i])).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s.into_bytes()
    }

    pub fn read_csv(path: &Path) -> Result<Table> {
        let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
        let headers: Vec<String> = r.headers().map_err(|e| io_err(path, e))?.iter().map(String::from).collect();
        let mut columns = vec![Vec::new(); headers.len()];
        for rec in r.records() {
            let rec = rec.map_err(|e| io_err(path, e))?;
            for (c, field) in columns.iter_mut().zip(rec.iter()) {
                c.push(field.parse::<f64>().map_err(|e| io_err(path, e))?);
            }
        }
        Ok(Table { headers, columns })
    }
}

impl Default for Table {
    fn default() -> Self {
        Self::new()
    }
}

pub fn write_table(dir: &Path, name: &str, table: &Table, description: &str) -> Result<FileEntry> {
    write_file(dir, name, &table.to_csv()?, description)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T, description: &str) -> Result<FileEntry> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    bytes.push(b'\n');
    write_file(dir, name, &bytes, description)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let t = Table::new()
            .column("t", vec![0.0, 1e-300, 0.1])
            .column("p", vec![1.0, -2.5e7, std::f64::consts::PI]);
        let e = write_table(dir.path(), "x.csv", &t, "test").unwrap();
        let back = Table::read_csv(&dir.path().join("x.csv")).unwrap();
        assert_eq!(back, t);
        let bytes = std::fs::read(dir.path().join("x.csv")).unwrap();
        assert_eq!(e.sha256, hex::encode(sha256(&bytes)));
        assert_eq!(e.bytes, bytes.len() as u64);
    }

    #[test]
    fn ragged_table_rejected() {
        let t = Table::new().column("a", vec![1.0]).column("b", vec![]);
        assert!(t.to_csv().is_err());
    }
}
