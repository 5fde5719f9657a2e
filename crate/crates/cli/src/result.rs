//! Experiment results and the files they are written to.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde_json::{json, Value};

/// CSV cell: numbers print in shortest round-trip form.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v}"),
            Cell::Int(v) => format!("{v}"),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(if v { "true" } else { "false" }.into())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    /// `(name, description)` per column.
    pub columns: Vec<(String, String)>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[(&str, &str)]) -> Self {
        Self { columns: columns.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(), rows: Vec::new() }
    }

    pub fn from_columns(columns: Vec<(String, String)>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn write_csv(&self, path: &Path) -> io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.columns.iter().map(|c| c.0.as_str()))?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render))?;
        }
        w.flush()
    }

    fn sidecar(&self, name: &str) -> Value {
        json!({
            "series": name,
            "columns": self.columns.iter().map(|(n, d)| json!({"name": n, "description": d})).collect::<Vec<_>>(),
            "rows": self.rows.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub name: String,
    pub digest: String,
    pub seed: u64,
    pub scalars: BTreeMap<String, Value>,
    /// Property checks; the run passes iff every one holds.
    pub checks: BTreeMap<String, bool>,
    /// Preconditions that failed; a non-empty list makes the run invalid.
    pub invalid: Vec<String>,
    pub data: Table,
    /// Plot-ready series, one CSV each.
    pub series: BTreeMap<String, Table>,
}

/// JSON number, with non-finite values spelled out.
pub fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

pub fn nums(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|x| num(*x)).collect())
}

impl ExperimentResult {
    pub fn new(name: &str, digest: String, seed: u64) -> Self {
        Self {
            name: name.into(),
            digest,
            seed,
            scalars: BTreeMap::new(),
            checks: BTreeMap::new(),
            invalid: Vec::new(),
            data: Table::default(),
            series: BTreeMap::new(),
        }
    }

    pub fn scalar(&mut self, key: &str, v: Value) {
        self.scalars.insert(key.into(), v);
    }

    pub fn check(&mut self, key: &str, ok: bool) {
        self.checks.insert(key.into(), ok);
    }

    pub fn is_valid(&self) -> bool {
        self.invalid.is_empty()
    }

    pub fn passed(&self) -> bool {
        self.is_valid() && self.checks.values().all(|b| *b)
    }

    /// 0 pass, 1 property failure, 3 invalid preconditions.
    pub fn exit_code(&self) -> i32 {
        if !self.is_valid() {
            3
        } else if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn summary(&self) -> Value {
        json!({
            "command": self.name,
            "digest": self.digest,
            "seed": self.seed,
            "pass": self.passed(),
            "valid": self.is_valid(),
            "invalid": self.invalid,
            "checks": self.checks,
            "scalars": self.scalars,
            "series": self.series.keys().collect::<Vec<_>>(),
        })
    }

    /// `results.json`, `data.csv`, and `<series>.csv` with a `<series>.columns.json` sidecar.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut text = serde_json::to_string_pretty(&self.summary()).expect("summary serialises");
        text.push('\n');
        fs::write(dir.join("results.json"), text)?;
        self.data.write_csv(&dir.join("data.csv"))?;
        for (name, t) in &self.series {
            t.write_csv(&dir.join(format!("{name}.csv")))?;
            let mut side = serde_json::to_string_pretty(&t.sidecar(name)).expect("sidecar serialises");
            side.push('\n');
            fs::write(dir.join(format!("{name}.columns.json")), side)?;
        }
        Ok(())
    }
}
