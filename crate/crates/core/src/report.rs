//! Versioned JSON reports and CSV tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

/// Serde helpers writing non-finite floats as the strings `"inf"`, `"-inf"`
/// and `"nan"`.
pub mod extended_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(x) => Ok(x),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

/// A float that may be infinite, for table cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Number(#[serde(with = "extended_float")] pub f64);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// The measured quantity compared against the tolerance.
    #[serde(with = "extended_float")]
    pub value: f64,
    #[serde(with = "extended_float")]
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Value>,
}

impl Check {
    /// Passes when `value ≤ tolerance`.
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            passed: value <= tolerance,
            value,
            tolerance,
            witness: None,
        }
    }

    pub fn with_witness<T: Serialize>(mut self, witness: Option<T>) -> Self {
        self.witness = witness.map(|w| serde_json::to_value(w).expect("serializable witness"));
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Number>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row.into_iter().map(Number).collect());
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i].0).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            for (i, Number(x)) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write!(out, "{x}").expect("string write");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub suite: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    /// Suite-specific values.
    pub results: BTreeMap<String, Value>,
    pub tables: BTreeMap<String, Table>,
    /// Extra CSV files written verbatim next to the report.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attachments: BTreeMap<String, String>,
    /// The only run-dependent field.
    pub timestamp: String,
}

impl Report {
    pub fn new(suite: &str, seed: u64) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            suite: suite.to_string(),
            seed,
            checks: Vec::new(),
            results: BTreeMap::new(),
            tables: BTreeMap::new(),
            attachments: BTreeMap::new(),
            timestamp: String::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn result<T: Serialize>(&mut self, key: &str, value: &T) {
        self.results
            .insert(key.to_string(), serde_json::to_value(value).expect("serializable result"));
    }

    /// Writes `report.json`, one CSV per table and the attachments.
    pub fn write(&mut self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        self.timestamp = format!("{secs}");
        for (name, table) in &self.tables {
            std::fs::write(dir.join(format!("{name}.csv")), table.to_csv())?;
        }
        for (name, body) in &self.attachments {
            std::fs::write(dir.join(name), body)?;
        }
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join("report.json"), json + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_values_roundtrip() {
        let check = Check::at_most("c", f64::INFINITY, 1.0);
        let json = serde_json::to_string(&check).unwrap();
        assert!(json.contains("\"inf\""));
        let back: Check = serde_json::from_str(&json).unwrap();
        assert_eq!(back, check);
        assert!(!back.passed);
    }

    #[test]
    fn csv_uses_shortest_roundtrip_floats() {
        let mut t = Table::new(&["n", "x"]);
        t.push(vec![3.0, 0.1]);
        t.push(vec![1.0, f64::INFINITY]);
        assert_eq!(t.to_csv(), "n,x\n3,0.1\n1,inf\n");
        assert_eq!(t.column("x").unwrap()[0], 0.1);
    }
}
