//! JSON and CSV writers. Floats use Rust's shortest round-trip formatting.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::CliError;

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn io_err(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

pub fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), CliError> {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(io_err)?;
    writeln!(w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn write_csv(header: &[&str], rows: &[Vec<String>], path: Option<&Path>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(sink(path)?);
    w.write_record(header).map_err(io_err)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(CliError::Invalid(format!("row has {} fields, header {}", r.len(), header.len())));
        }
        w.write_record(r).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn num(v: f64) -> String {
    v.to_string()
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shortest_round_trip() {
        assert_eq!(num(0.1), "0.1");
        assert_eq!(num(1.0), "1");
        assert_eq!(opt(None), "");
        let x = 0.34657359027997264_f64;
        assert_eq!(num(x).parse::<f64>().unwrap(), x);
    }
}
