//! CSV reading and writing. The response sits in a column named `y`; every
//! other column is a predictor, kept in header order.

use std::io::{Read, Write};
use std::path::Path;

use trace_pursuit::Dataset;

use crate::error::{io_error, CliError, MIN_SAMPLES};

/// A dataset read from CSV together with its predictor names.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub data: Dataset,
    pub names: Vec<String>,
}

pub fn ingest_csv(path: &Path) -> Result<Loaded, CliError> {
    let file = std::fs::File::open(path).map_err(|e| io_error(path, e))?;
    read_csv(file)
}

pub fn read_csv<R: Read>(source: R) -> Result<Loaded, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let y_col = header
        .iter()
        .position(|h| h.eq_ignore_ascii_case("y"))
        .ok_or_else(|| CliError::MissingResponse {
            columns: header.clone(),
        })?;
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != y_col)
        .map(|(_, h)| h.clone())
        .collect();
    if names.is_empty() {
        return Err(CliError::Csv("no predictor columns besides 'y'".into()));
    }

    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Csv(e.to_string()))?;
        let mut row = Vec::with_capacity(names.len());
        for (k, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| CliError::NonNumeric {
                row: r + 1,
                column: header[k].clone(),
                value: cell.to_string(),
            })?;
            if k == y_col {
                y.push(v);
            } else {
                row.push(v);
            }
        }
        rows.push(row);
    }
    if rows.len() < MIN_SAMPLES {
        return Err(CliError::TooFewSamples { n: rows.len() });
    }
    let data = Dataset::from_rows(&rows, y)?;
    Ok(Loaded { data, names })
}

/// Writes `data` with header `x1,…,xp,y`. Values use the shortest decimal
/// form that parses back to the same `f64`.
pub fn write_csv<W: Write>(data: &Dataset, sink: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| CliError::Csv(e.to_string());
    let mut header: Vec<String> = (1..=data.p()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..data.n() {
        let mut rec: Vec<String> = (0..data.p())
            .map(|j| data.x()[(i, j)].to_string())
            .collect();
        rec.push(data.y()[i].to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Csv(e.to_string()))
}

pub fn export_csv(data: &Dataset, path: &Path) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(|e| io_error(path, e))?;
    write_csv(data, std::io::BufWriter::new(file))
}
