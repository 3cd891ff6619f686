//! Result records written by the `sgt` front-end.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A table cell. Non-finite numbers are stored as text so that JSON stays valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl Cell {
    pub fn num(v: f64) -> Self {
        if v.is_finite() {
            Cell::Num(v)
        } else {
            Cell::Text(v.to_string())
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Text(s) => s.parse().ok(),
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v:e}"),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Num(v as f64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Num(v as f64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub command: String,
    pub params: serde_json::Value,
    /// SHA-256 of the canonical JSON of `(command, params)`.
    pub config_hash: String,
    pub values: BTreeMap<String, Cell>,
    pub std_errors: BTreeMap<String, Cell>,
    pub table: Table,
    pub seed: u64,
    pub workers: usize,
    pub wall_time_s: f64,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

/// Hex SHA-256 of the canonical (key-sorted, compact) JSON form.
pub fn config_hash(command: &str, params: &serde_json::Value) -> String {
    let canon = serde_json::json!({ "command": command, "params": params });
    let digest = Sha256::digest(canon.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl ResultRecord {
    pub fn new(command: &str, params: serde_json::Value, seed: u64, workers: usize) -> Self {
        let config_hash = config_hash(command, &params);
        Self {
            command: command.to_string(),
            params,
            config_hash,
            values: BTreeMap::new(),
            std_errors: BTreeMap::new(),
            table: Table::default(),
            seed,
            workers,
            wall_time_s: 0.0,
            timestamp: 0,
        }
    }

    pub fn value(&mut self, key: &str, v: impl Into<Cell>) {
        self.values.insert(key.to_string(), v.into());
    }

    pub fn estimate(&mut self, key: &str, v: f64, err: f64) {
        self.values.insert(key.to_string(), Cell::num(v));
        self.std_errors.insert(key.to_string(), Cell::num(err));
    }

    /// Equality ignoring the timestamp and wall time.
    pub fn deterministic_eq(&self, o: &ResultRecord) -> bool {
        let strip = |r: &ResultRecord| ResultRecord { wall_time_s: 0.0, timestamp: 0, ..r.clone() };
        strip(self) == strip(o)
    }

    fn stem(&self) -> String {
        self.command.replace(' ', "-")
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(format!("cannot serialise record: {e}")))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("malformed record: {e}")))
    }

    pub fn write_json(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.json", self.stem()));
        fs::write(&path, self.to_json()? + "\n")?;
        Ok(path)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// The table as CSV: one header row, then the rows in order.
    pub fn write_csv(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.csv", self.stem()));
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        w.write_record(&self.table.columns).map_err(csv_err)?;
        for row in &self.table.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_hash() {
        let mut r = ResultRecord::new("cov eval", serde_json::json!({"beta": 2.0, "u": 0.7}), 7, 1);
        r.estimate("value", 0.1 + 0.2, 1e-17);
        r.value("bad", f64::NAN);
        r.table = Table::new(&["a", "b"]);
        r.table.push(vec![Cell::num(1.0 / 3.0), Cell::from("x")]);
        let back = ResultRecord::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.config_hash.len(), 64);
        let other = ResultRecord::new("cov eval", serde_json::json!({"u": 0.7, "beta": 2.0}), 7, 1);
        assert_eq!(other.config_hash, r.config_hash);
    }
}
