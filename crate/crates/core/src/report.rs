//! Experiment artifacts: a CSV table with a fixed header plus a JSON summary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub seed: u64,
    /// Fully resolved configuration, echoed verbatim.
    pub config: serde_json::Value,
    pub metrics: BTreeMap<String, f64>,
    pub header: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<Vec<f64>>,
    pub diverged: bool,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn new(name: impl Into<String>, seed: u64, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            seed,
            header: header.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::DimensionMismatch {
                what: "report row",
                expected: self.header.len(),
                got: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn metric(&mut self, key: impl Into<String>, value: f64) {
        self.metrics.insert(key.into(), value);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    pub fn file_stem(&self) -> String {
        format!("{}-{}", self.name, self.seed)
    }

    /// Writes `<dir>/<name>-<seed>.csv` and `.json`; returns both paths.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{}.csv", self.file_stem()));
        let json_path = dir.join(format!("{}.json", self.file_stem()));

        let mut w = csv::Writer::from_path(&csv_path)?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format_number(*v)))?;
        }
        w.flush()?;

        fs::write(&json_path, serde_json::to_string_pretty(&self.to_json())?)?;
        Ok((csv_path, json_path))
    }

    /// JSON summary; non-finite metrics become strings since JSON has no NaN.
    pub fn to_json(&self) -> serde_json::Value {
        let metrics: serde_json::Map<String, serde_json::Value> = self
            .metrics
            .iter()
            .map(|(k, v)| {
                let value = serde_json::Number::from_f64(*v)
                    .map(serde_json::Value::Number)
                    .unwrap_or_else(|| serde_json::Value::String(v.to_string()));
                (k.clone(), value)
            })
            .collect();
        serde_json::json!({
            "name": self.name,
            "seed": self.seed,
            "config": self.config,
            "metrics": metrics,
            "columns": self.header,
            "rows": self.rows.len(),
            "diverged": self.diverged,
            "notes": self.notes,
        })
    }
}

pub fn format_number(v: f64) -> String {
    if v.is_finite() && v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:e}")
    }
}
