//! Output files. JSON documents carry the resolved config next to the result;
//! CSV tables carry it on a leading `# config: ` comment line.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

/// Destination of a command's primary output: a file or stdout.
pub struct Sink {
    path: Option<PathBuf>,
}

impl Sink {
    pub fn new(path: Option<&Path>) -> Result<Self, CliError> {
        if let Some(parent) = path.and_then(Path::parent) {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        Ok(Self {
            path: path.map(Path::to_path_buf),
        })
    }

    pub fn writer(&self) -> Result<Box<dyn Write>, CliError> {
        Ok(match &self.path {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(BufWriter::new(std::io::stdout().lock())),
        })
    }
}

fn json_err(e: serde_json::Error) -> CliError {
    CliError::Runtime(format!("json: {e}"))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Runtime(format!("csv: {e}"))
}

#[derive(Serialize)]
struct Document<'a, C, R> {
    command: &'a str,
    config: &'a C,
    result: &'a R,
    pass: bool,
}

pub fn emit_document<C: Serialize, R: Serialize>(
    sink: &Sink,
    command: &str,
    config: &C,
    result: &R,
    pass: bool,
) -> Result<(), CliError> {
    let mut w = sink.writer()?;
    let doc = Document {
        command,
        config,
        result,
        pass,
    };
    serde_json::to_writer_pretty(&mut w, &doc).map_err(json_err)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_config_comment<C: Serialize>(w: &mut dyn Write, config: &C) -> Result<(), CliError> {
    let json = serde_json::to_string(config).map_err(json_err)?;
    writeln!(w, "# config: {json}")?;
    Ok(())
}

pub fn emit_table<C: Serialize, R: Serialize>(
    sink: &Sink,
    config: &C,
    rows: &[R],
) -> Result<(), CliError> {
    let mut w = sink.writer()?;
    write_config_comment(&mut w, config)?;
    let mut c = csv::Writer::from_writer(w);
    for r in rows {
        c.serialize(r).map_err(csv_err)?;
    }
    c.flush()?;
    Ok(())
}

pub fn emit_json_lines<R: Serialize>(sink: &Sink, rows: &[R]) -> Result<(), CliError> {
    let mut w = sink.writer()?;
    for r in rows {
        serde_json::to_writer(&mut w, r).map_err(json_err)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}
