//! JSON and CSV emission.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{LabError, Result};

/// Version stamped into every JSON document.
pub const SCHEMA_VERSION: u32 = 1;

pub fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| LabError::Output(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// CSV text with a header row; floats use the shortest round-trip form.
pub fn csv_text(header: &[String], rows: &[Vec<f64>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| LabError::Output(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| LabError::Output(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| LabError::Output(e.to_string()))
}

/// Destination of a command's artifacts: files under `dir` or, without one, the stream.
pub struct Sink<'a> {
    pub dir: Option<PathBuf>,
    pub stdout: &'a mut dyn Write,
}

impl<'a> Sink<'a> {
    pub fn new(dir: Option<PathBuf>, stdout: &'a mut dyn Write) -> Self {
        Sink { dir, stdout }
    }

    pub fn line(&mut self, text: &str) -> Result<()> {
        writeln!(self.stdout, "{text}").map_err(|e| LabError::io("<stdout>", e))
    }

    pub fn raw(&mut self, text: &str) -> Result<()> {
        self.stdout.write_all(text.as_bytes()).map_err(|e| LabError::io("<stdout>", e))
    }

    /// Write `name` under the output directory, creating it if needed.
    pub fn file(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let dir = self.dir.clone().ok_or_else(|| LabError::Output("no output directory".into()))?;
        write_file(&dir, name, contents)
    }
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| LabError::io(&path, e))?;
    Ok(path)
}
