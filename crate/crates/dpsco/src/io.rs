//! File formats.
//!
//! Datasets are CSV with one record per row. Metrics are one-column CSV files
//! of diagonal entries. Gradient traces are either CSV (one row per trace
//! row) or a little-endian binary file:
//!
//! ```text
//! offset  0: b"GTRC"
//! offset  4: u32 rows
//! offset  8: u32 cols
//! offset 12: u32 reserved (0)
//! offset 16: rows * cols f64, row-major
//! ```
//!
//! Header rows in CSV inputs are detected and skipped when the first record
//! does not parse as numbers.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use dpsco_core::{DiagonalMetric, GradientTrace, Matrix, MedianDataset, Split};

use crate::error::{Error, Result};
use crate::format::fmt_sig9;

pub const TRACE_MAGIC: &[u8; 4] = b"GTRC";
const TRACE_HEADER_LEN: usize = 16;

/// Reads a numeric CSV into rows, skipping a leading non-numeric header.
pub fn read_numeric_csv<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if line == 0 => continue,
            Err(e) => {
                return Err(Error::Format(format!("line {}: {e}", line + 1)));
            }
        }
    }
    if let Some(first) = rows.first() {
        let w = first.len();
        if let Some(i) = rows.iter().position(|r| r.len() != w) {
            return Err(Error::Format(format!(
                "row {} has {} fields, expected {w}",
                i + 1,
                rows[i].len()
            )));
        }
    }
    Ok(rows)
}

fn write_rows<W: Write>(writer: W, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt_sig9(*v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one record per row under an `x1,…,xd` header.
///
/// Values go through [`fmt_sig9`], so a round trip is exact only to nine
/// significant digits; use [`write_dataset_csv_exact`] when bit-exactness
/// matters.
pub fn write_dataset_csv<W: Write>(writer: W, data: &MedianDataset) -> Result<()> {
    let header: Vec<String> = (1..=data.dim()).map(|j| format!("x{j}")).collect();
    write_rows(writer, &header, (0..data.len()).map(|i| data.point(i).to_vec()))
}

/// Like [`write_dataset_csv`] but with shortest round-trip formatting.
pub fn write_dataset_csv_exact<W: Write>(writer: W, data: &MedianDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record((1..=data.dim()).map(|j| format!("x{j}")))?;
    for i in 0..data.len() {
        w.write_record(data.point(i).iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(reader: R, split: Split) -> Result<MedianDataset> {
    let rows = read_numeric_csv(reader)?;
    if rows.is_empty() {
        return Err(dpsco_core::Error::EmptyDataset.into());
    }
    Ok(MedianDataset::from_rows(&rows, split)?)
}

/// Reads diagonal entries, one per line (extra columns are an error).
pub fn read_metric_csv<R: Read>(reader: R) -> Result<DiagonalMetric> {
    let rows = read_numeric_csv(reader)?;
    if rows.iter().any(|r| r.len() != 1) {
        return Err(Error::Format("metric file must have exactly one column".into()));
    }
    let entries: Vec<f64> = rows.into_iter().map(|r| r[0]).collect();
    Ok(DiagonalMetric::custom(&entries)?)
}

pub fn read_metric_file(path: &Path) -> Result<DiagonalMetric> {
    read_metric_csv(BufReader::new(File::open(path)?))
}

pub fn write_trace_binary<W: Write>(mut writer: W, trace: &GradientTrace) -> Result<()> {
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::Format(format!("{what} = {v} does not fit in u32")))
    };
    writer.write_all(TRACE_MAGIC)?;
    writer.write_all(&to_u32(trace.rows(), "rows")?.to_le_bytes())?;
    writer.write_all(&to_u32(trace.cols(), "cols")?.to_le_bytes())?;
    writer.write_all(&0u32.to_le_bytes())?;
    for v in trace.matrix().as_slice() {
        writer.write_all(&v.to_le_bytes())?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_trace_binary<R: Read>(mut reader: R) -> Result<GradientTrace> {
    let mut header = [0u8; TRACE_HEADER_LEN];
    reader.read_exact(&mut header)?;
    if &header[..4] != TRACE_MAGIC {
        return Err(Error::Format("missing GTRC magic".into()));
    }
    let word = |at: usize| u32::from_le_bytes(header[at..at + 4].try_into().unwrap()) as usize;
    let (rows, cols) = (word(4), word(8));
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("trace dimensions overflow".into()))?;
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != len * 8 {
        return Err(Error::Format(format!(
            "expected {} payload bytes for a {rows}x{cols} trace, found {}",
            len * 8,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(GradientTrace::from_matrix(Matrix::from_row_major(rows, cols, data)?)?)
}

pub fn write_trace_csv<W: Write>(writer: W, trace: &GradientTrace) -> Result<()> {
    let m = trace.matrix();
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for i in 0..m.rows() {
        w.write_record(m.row(i).iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(reader: R) -> Result<GradientTrace> {
    let rows = read_numeric_csv(reader)?;
    if rows.is_empty() {
        return Err(Error::Format("empty trace".into()));
    }
    Ok(GradientTrace::from_matrix(Matrix::from_rows(&rows)?)?)
}

/// Reads a trace file, choosing the format from its first four bytes.
pub fn read_trace_file(path: &Path) -> Result<GradientTrace> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.starts_with(TRACE_MAGIC) {
        read_trace_binary(&bytes[..])
    } else {
        read_trace_csv(&bytes[..])
    }
}

pub fn write_trace_file(path: &Path, trace: &GradientTrace) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        write_trace_csv(w, trace)
    } else {
        write_trace_binary(w, trace)
    }
}
