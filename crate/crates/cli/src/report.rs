use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::args::Format;
use crate::{CliError, CliResult, TOOL_VERSION};

/// `{ "tool_version", "config", "results": [...] }`. Rows are flat objects
/// so the same report can be written as CSV, one column per key.
#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub tool_version: &'static str,
    pub config: Value,
    pub results: Vec<Map<String, Value>>,
}

impl Report {
    pub fn new(config: &impl Serialize) -> CliResult<Self> {
        Ok(Self {
            tool_version: TOOL_VERSION,
            config: serde_json::to_value(config)?,
            results: Vec::new(),
        })
    }

    pub fn push(&mut self, row: &impl Serialize) -> CliResult<()> {
        match serde_json::to_value(row)? {
            Value::Object(map) => {
                self.results.push(map);
                Ok(())
            }
            other => Err(CliError::Usage(format!(
                "report row is not an object: {other}"
            ))),
        }
    }

    pub fn emit(&self, format: Format, dest: Option<&Path>) -> CliResult<()> {
        match dest {
            Some(path) => self.write(format, File::create(path)?),
            None => self.write(format, io::stdout().lock()),
        }
    }

    pub fn write<W: Write>(&self, format: Format, mut w: W) -> CliResult<()> {
        match format {
            Format::Json => {
                serde_json::to_writer_pretty(&mut w, self)?;
                writeln!(w)?;
            }
            Format::Csv => self.write_csv(w)?,
        }
        Ok(())
    }

    /// Header from the first row's keys; later rows fill the same columns.
    fn write_csv<W: Write>(&self, w: W) -> CliResult<()> {
        let mut out = csv::Writer::from_writer(w);
        let Some(first) = self.results.first() else {
            return Ok(());
        };
        let header: Vec<&String> = first.keys().collect();
        out.write_record(&header)?;
        for row in &self.results {
            out.write_record(header.iter().map(|k| cell(row.get(*k))))?;
        }
        out.flush()?;
        Ok(())
    }
}

fn cell(v: Option<&Value>) -> String {
    match v {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    }
}
