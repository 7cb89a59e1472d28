use std::io::Write;
use std::path::Path;

use ruinkit::io::{to_json, SCHEMA};
use serde_json::Value;

use crate::args::Format;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn render(&self) -> String {
        let mut out = format!("# schema={SCHEMA}\n{}\n", self.header.join(","));
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// A command result: always a JSON document, sometimes also a table.
#[derive(Debug, Clone)]
pub struct Report {
    pub json: Value,
    pub table: Option<Table>,
    pub default_format: Format,
}

impl Report {
    pub fn json(mut json: Value) -> Self {
        stamp(&mut json);
        Self { json, table: None, default_format: Format::Json }
    }

    pub fn with_table(mut self, table: Table, default_format: Format) -> Self {
        self.table = Some(table);
        self.default_format = default_format;
        self
    }

    pub fn render(&self, format: Option<Format>) -> CliResult<String> {
        match format.unwrap_or(self.default_format) {
            Format::Json => Ok(to_json(&self.json)? + "\n"),
            Format::Csv => match &self.table {
                Some(t) => Ok(t.render()),
                None => Err(CliError::usage("this command has no CSV form; use --format json")),
            },
        }
    }
}

fn stamp(json: &mut Value) {
    if let Value::Object(map) = json {
        map.insert("schema".into(), Value::from(SCHEMA));
    }
}

pub fn write(text: &str, path: Option<&Path>) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(CliError::file(p.display().to_string())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(CliError::file("<stdout>"))
        }
    }
}

pub fn float(x: f64) -> String {
    ruinkit::io::fmt_float(x)
}
