use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::config::Format;
use crate::harness::run::MetricsRecord;

/// Column order of emitted CSV files.
pub const CSV_HEADER: &str = "scenario,seed,episode,reward,sum_rate_bps,loss,clustering_time_s,served_users";

fn io_error(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_error(path: &Path, message: impl ToString) -> Error {
    Error::Format {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

/// Format implied by a file extension.
pub fn format_for_path(path: &Path) -> Option<Format> {
    match path.extension()?.to_str()? {
        "csv" => Some(Format::Csv),
        "jsonl" => Some(Format::Jsonl),
        _ => None,
    }
}

/// Writes records as CSV (header [`CSV_HEADER`], empty loss when absent) or
/// as one JSON object per line with the same fields. Floats use the shortest
/// representation that parses back to the same value.
pub fn emit(records: &[MetricsRecord], format: Format, path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(format_error(path, "no records to write"));
    }
    let file = File::create(path).map_err(io_error(path))?;
    let mut out = BufWriter::new(file);
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            for r in records {
                w.serialize(r).map_err(|e| format_error(path, e))?;
            }
            w.flush().map_err(io_error(path))?;
        }
        Format::Jsonl => {
            for r in records {
                serde_json::to_writer(&mut out, r).map_err(|e| format_error(path, e))?;
                out.write_all(b"\n").map_err(io_error(path))?;
            }
        }
    }
    out.flush().map_err(io_error(path))
}

pub fn read_records(path: &Path, format: Format) -> Result<Vec<MetricsRecord>> {
    let file = File::open(path).map_err(io_error(path))?;
    match format {
        Format::Csv => {
            let mut r = csv::Reader::from_reader(file);
            let header = r.headers().map_err(|e| format_error(path, e))?;
            if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
                return Err(format_error(path, "unexpected CSV header"));
            }
            r.deserialize()
                .map(|row| row.map_err(|e| format_error(path, e)))
                .collect()
        }
        Format::Jsonl => BufReader::new(file)
            .lines()
            .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
            .map(|line| {
                let line = line.map_err(io_error(path))?;
                serde_json::from_str(&line).map_err(|e| format_error(path, e))
            })
            .collect(),
    }
}
