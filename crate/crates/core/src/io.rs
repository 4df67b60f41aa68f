//! CSV formats for encoded and expanded datasets.
//!
//! Encoded: `patient_id,<features...>,duration_months,event`.
//! Expanded: `patient_id,<features...>,month,target`.
//!
//! Numbers are written in shortest round-trip form, so reading a written file
//! reproduces the dataset exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::data::{Dataset, FeatureSchema, SurvivalRecord, MONTH_FEATURE};
use crate::error::{BoxError, Error, Result};
use crate::transform::{ExpandedDataset, ExpandedRow, RowSink};

pub const ID_COLUMN: &str = "patient_id";
pub const DURATION_COLUMN: &str = "duration_months";
pub const EVENT_COLUMN: &str = "event";
pub const TARGET_COLUMN: &str = "target";

fn header(schema: &FeatureSchema, tail: [&str; 2]) -> Vec<String> {
    std::iter::once(ID_COLUMN)
        .chain(schema.names().iter().map(String::as_str))
        .chain(tail)
        .map(str::to_string)
        .collect()
}

fn cell_error(line: u64, message: String) -> Error {
    Error::InvalidDataset(format!("line {line}: {message}"))
}

fn parse_cell<T: std::str::FromStr>(v: &str, column: &str, line: u64) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| cell_error(line, format!("cannot parse `{v}` in column `{column}`")))
}

fn parse_flag(v: &str, column: &str, line: u64) -> Result<bool> {
    match v.trim() {
        "1" => Ok(true),
        "0" => Ok(false),
        _ => Err(cell_error(line, format!("`{column}` must be 0 or 1, got `{v}`"))),
    }
}

pub fn write_dataset<W: Write>(d: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(d.schema(), [DURATION_COLUMN, EVENT_COLUMN]))?;
    let mut rec: Vec<String> = Vec::with_capacity(d.schema().len() + 3);
    for r in d.records() {
        rec.clear();
        rec.push(r.patient_id.clone());
        rec.extend(r.covariates.iter().map(f64::to_string));
        rec.push(r.duration_months.to_string());
        rec.push(u8::from(r.event).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(input: R) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let n = headers.len();
    if n < 3 || headers[0] != ID_COLUMN || headers[n - 2] != DURATION_COLUMN || headers[n - 1] != EVENT_COLUMN {
        return Err(Error::InvalidDataset(format!(
            "encoded header must be `{ID_COLUMN},<features>,{DURATION_COLUMN},{EVENT_COLUMN}`"
        )));
    }
    let schema = FeatureSchema::new(&headers[1..n - 2]);
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let covariates = (1..n - 2)
            .map(|i| parse_cell::<f64>(&rec[i], &headers[i], line))
            .collect::<Result<Vec<_>>>()?;
        records.push(SurvivalRecord {
            patient_id: rec[0].to_string(),
            covariates,
            duration_months: parse_cell(&rec[n - 2], DURATION_COLUMN, line)?,
            event: parse_flag(&rec[n - 1], EVENT_COLUMN, line)?,
        });
    }
    Dataset::new(schema, records)
}

pub fn save_dataset(d: &Dataset, path: &Path) -> Result<()> {
    write_dataset(d, BufWriter::new(File::create(path).map_err(Error::at(path))?)).map_err(|e| e.with_path(path))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    read_dataset(File::open(path).map_err(Error::at(path))?).map_err(|e| e.with_path(path))
}

/// Writes expanded rows as they arrive; plug into
/// [`expand_streaming`](crate::transform::expand_streaming).
pub struct ExpandedCsvSink<W: Write> {
    writer: csv::Writer<W>,
    rows: usize,
    buf: Vec<String>,
}

impl<W: Write> ExpandedCsvSink<W> {
    /// `covariates` is the schema without the month column.
    pub fn new(out: W, covariates: &FeatureSchema) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(header(covariates, [MONTH_FEATURE, TARGET_COLUMN]))?;
        Ok(ExpandedCsvSink { writer, rows: 0, buf: Vec::new() })
    }

    pub fn write_row(&mut self, row: &ExpandedRow) -> Result<()> {
        self.buf.clear();
        self.buf.push(row.patient_id.clone());
        self.buf.extend(row.covariates.iter().map(f64::to_string));
        self.buf.push(row.month.to_string());
        self.buf.push(u8::from(row.target).to_string());
        self.writer.write_record(&self.buf)?;
        self.rows += 1;
        Ok(())
    }

    pub fn rows_written(&self) -> usize {
        self.rows
    }

    pub fn finish(mut self) -> Result<W> {
        self.writer.flush()?;
        self.writer
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

impl<W: Write> RowSink for ExpandedCsvSink<W> {
    fn accept(&mut self, chunk: &[ExpandedRow]) -> std::result::Result<(), BoxError> {
        for row in chunk {
            self.write_row(row)?;
        }
        Ok(())
    }
}

pub fn write_expanded<W: Write>(e: &ExpandedDataset, out: W) -> Result<()> {
    let mut sink = ExpandedCsvSink::new(out, &e.covariate_schema())?;
    for row in e.rows() {
        sink.write_row(&row)?;
    }
    sink.finish()?;
    Ok(())
}

pub fn read_expanded<R: Read>(input: R) -> Result<ExpandedDataset> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let n = headers.len();
    if n < 3 || headers[0] != ID_COLUMN || headers[n - 2] != MONTH_FEATURE || headers[n - 1] != TARGET_COLUMN {
        return Err(Error::InvalidDataset(format!(
            "expanded header must be `{ID_COLUMN},<features>,{MONTH_FEATURE},{TARGET_COLUMN}`"
        )));
    }
    let schema = FeatureSchema::new(&headers[1..n - 1]);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let covariates = (1..n - 2)
            .map(|i| parse_cell::<f64>(&rec[i], &headers[i], line))
            .collect::<Result<Vec<_>>>()?;
        rows.push(ExpandedRow {
            patient_id: rec[0].to_string(),
            covariates,
            month: parse_cell(&rec[n - 2], MONTH_FEATURE, line)?,
            target: parse_flag(&rec[n - 1], TARGET_COLUMN, line)?,
        });
    }
    ExpandedDataset::from_rows(schema, rows)
}

pub fn save_expanded(e: &ExpandedDataset, path: &Path) -> Result<()> {
    write_expanded(e, BufWriter::new(File::create(path).map_err(Error::at(path))?)).map_err(|e| e.with_path(path))
}

pub fn load_expanded(path: &Path) -> Result<ExpandedDataset> {
    read_expanded(File::open(path).map_err(Error::at(path))?).map_err(|e| e.with_path(path))
}
