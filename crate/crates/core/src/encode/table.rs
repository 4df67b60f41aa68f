use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

/// Untyped CSV table: a header row and string cells.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RawTable {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn new(headers: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != headers.len()) {
            return Err(Error::InvalidDataset(format!(
                "row {} has {} cells, header has {}",
                i + 1,
                r.len(),
                headers.len()
            )));
        }
        Ok(RawTable { headers, rows })
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec?.iter().map(str::to_string).collect());
        }
        Ok(RawTable { headers, rows })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(Error::at(path))?;
        Self::from_reader(file).map_err(|e| e.with_path(path))
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn column<'a>(&'a self, name: &str) -> Result<impl Iterator<Item = &'a str> + 'a> {
        let i = self.column_index(name)?;
        Ok(self.rows.iter().map(move |r| r[i].as_str()))
    }

    /// View of row `i` as (header, value) lookups.
    pub fn record(&self, i: usize) -> RawRecord<'_> {
        RawRecord {
            headers: &self.headers,
            values: &self.rows[i],
        }
    }

    pub(crate) fn retain_rows(&self, keep: impl Fn(&[String]) -> bool) -> RawTable {
        RawTable {
            headers: self.headers.clone(),
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }
}

/// Named raw values for one patient.
pub trait RawFields {
    fn get(&self, column: &str) -> Option<&str>;
}

#[derive(Debug, Clone, Copy)]
pub struct RawRecord<'a> {
    headers: &'a [String],
    values: &'a [String],
}

impl RawFields for RawRecord<'_> {
    fn get(&self, column: &str) -> Option<&str> {
        self.headers
            .iter()
            .position(|h| h == column)
            .map(|i| self.values[i].as_str())
    }
}

impl RawFields for std::collections::HashMap<String, String> {
    fn get(&self, column: &str) -> Option<&str> {
        std::collections::HashMap::get(self, column).map(String::as_str)
    }
}

impl RawFields for std::collections::BTreeMap<String, String> {
    fn get(&self, column: &str) -> Option<&str> {
        std::collections::BTreeMap::get(self, column).map(String::as_str)
    }
}
