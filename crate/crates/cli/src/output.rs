//! Result files of a run. Every file is written whole, from data already
//! sorted by trajectory index.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Format, OutputSpec};
use crate::error::CliError;

pub struct Sink {
    dir: PathBuf,
    formats: Vec<Format>,
    written: Vec<String>,
}

impl Sink {
    pub fn create(dir: &Path, spec: &OutputSpec) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            formats: spec.formats.clone(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// File names written so far, in order.
    pub fn written(&self) -> &[String] {
        &self.written
    }

    fn write_with<F>(&mut self, name: &str, body: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let path = self.dir.join(name);
        let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut out = BufWriter::new(file);
        body(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| CliError::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Pretty JSON report; always written.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("report serializes");
        self.write_with(name, |out| writeln!(out, "{text}"))
    }

    /// One JSON object per line; skipped unless `jsonl` is enabled.
    pub fn jsonl<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        if !self.formats.contains(&Format::Jsonl) {
            return Ok(());
        }
        self.write_with(name, |out| {
            for row in rows {
                let line = serde_json::to_string(row).expect("row serializes");
                writeln!(out, "{line}")?;
            }
            Ok(())
        })
    }

    /// CSV table; skipped unless `csv` is enabled.
    pub fn csv<F>(&mut self, name: &str, body: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        if !self.formats.contains(&Format::Csv) {
            return Ok(());
        }
        self.write_with(name, body)
    }
}
