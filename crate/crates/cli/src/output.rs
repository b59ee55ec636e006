use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use serde_json::{json, Value};

/// A flat CSV table for plotting.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &'static str, header: &[&'static str]) -> Self {
        Self {
            name,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    /// Appends `other`'s rows, prefixing each with `date`.
    pub fn append_dated(&mut self, date: &str, other: &Table) {
        for r in &other.rows {
            let mut row = vec![date.to_string()];
            row.extend(r.iter().cloned());
            self.rows.push(row);
        }
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join(format!("{}.csv", self.name));
        let mut w = csv::Writer::from_path(&path)
            .with_context(|| format!("creating {}", path.display()))?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn num(x: f64) -> String {
    format!("{x}")
}

/// JSON record plus plot tables of one calibration.
#[derive(Debug, Clone)]
pub struct Output {
    pub record: Value,
    pub tables: Vec<Table>,
}

impl Output {
    pub fn emit(&self, out: Option<&Path>, command: &str, seed: Option<u64>) -> anyhow::Result<()> {
        let mut doc = json!({ "command": command });
        if let Some(s) = seed {
            doc["seed"] = json!(s);
        }
        doc["result"] = self.record.clone();
        write_json(out, "result.json", &doc)?;
        if let Some(dir) = out {
            for t in &self.tables {
                t.write(dir)?;
            }
        }
        Ok(())
    }
}

pub fn write_json(out: Option<&Path>, file: &str, doc: &Value) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(doc)?;
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(file);
            fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}")?;
        }
    }
    Ok(())
}
