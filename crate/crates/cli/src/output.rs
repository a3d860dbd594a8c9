use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::{ExperimentConfig, Format};

/// A result: either one record or a table with fixed column order.
pub enum Output {
    Record(Value),
    Table { columns: Vec<&'static str>, rows: Vec<Vec<Value>> },
}

impl Output {
    pub fn record<T: Serialize>(v: &T) -> Self {
        Output::Record(serde_json::to_value(v).expect("result types serialize"))
    }

    pub fn table(columns: &[&'static str]) -> Self {
        Output::Table { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        if let Output::Table { columns, rows } = self {
            debug_assert_eq!(row.len(), columns.len());
            rows.push(row);
        }
    }

    fn render_json(&self) -> String {
        let v = match self {
            Output::Record(v) => v.clone(),
            Output::Table { columns, rows } => Value::Array(
                rows.iter()
                    .map(|r| Value::Object(columns.iter().map(|c| c.to_string()).zip(r.iter().cloned()).collect::<Map<_, _>>()))
                    .collect(),
            ),
        };
        let mut s = serde_json::to_string_pretty(&v).expect("json values serialize");
        s.push('\n');
        s
    }

    fn render_csv(&self) -> String {
        let (columns, rows): (Vec<String>, Vec<Vec<Value>>) = match self {
            Output::Table { columns, rows } => (columns.iter().map(|c| c.to_string()).collect(), rows.clone()),
            Output::Record(Value::Object(m)) => (m.keys().cloned().collect(), vec![m.values().cloned().collect()]),
            Output::Record(v) => (vec!["value".into()], vec![vec![v.clone()]]),
        };
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&columns).expect("in-memory write");
        for r in rows {
            w.write_record(r.iter().map(cell)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.render_csv(),
            Format::Json => self.render_json(),
        }
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    library_version: &'static str,
    seed: u64,
    wall_time_seconds: f64,
    config: &'a ExperimentConfig,
}

/// Writes the data to stdout or to `config.out`, plus the manifest sidecar in the latter case.
pub fn emit(out: &Output, config: &ExperimentConfig, wall_time_seconds: f64) -> std::io::Result<()> {
    let data = out.render(config.format);
    match &config.out {
        None => std::io::stdout().write_all(data.as_bytes()),
        Some(path) => {
            std::fs::write(path, data)?;
            let manifest = Manifest {
                tool: env!("CARGO_PKG_NAME"),
                version: env!("CARGO_PKG_VERSION"),
                library_version: sigcode::VERSION,
                seed: config.seed,
                wall_time_seconds,
                config,
            };
            let mut m = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
            m.push('\n');
            std::fs::write(manifest_path(path), m)
        }
    }
}

pub fn manifest_path(out: &Path) -> std::path::PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    s.into()
}
