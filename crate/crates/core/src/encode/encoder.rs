//! Raw columns to numeric features: numeric pass-through, one binary
//! feature per observed category of a nominal column, and a location column
//! replaced by latitude, longitude and elevation.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config;
use crate::data::{Dataset, FeatureSchema, SurvivalRecord};
use crate::encode::geo::{GeoError, GeoQuery, GeoResolver};
use crate::encode::table::{RawFields, RawTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeoSource {
    /// Five-digit state-county recode.
    Fips,
    /// Free-text address.
    Address,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnSpec {
    Numeric { column: String },
    Nominal { column: String },
    Geo { column: String, source: GeoSource },
}

impl ColumnSpec {
    pub fn column(&self) -> &str {
        match self {
            ColumnSpec::Numeric { column } | ColumnSpec::Nominal { column } | ColumnSpec::Geo { column, .. } => column,
        }
    }
}

/// Which raw columns to encode and how, plus the outcome columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub id_column: Option<String>,
    pub duration_column: String,
    pub event_column: String,
    pub columns: Vec<ColumnSpec>,
}

impl EncoderSpec {
    pub fn new(duration_column: impl Into<String>, event_column: impl Into<String>) -> Self {
        EncoderSpec {
            id_column: None,
            duration_column: duration_column.into(),
            event_column: event_column.into(),
            columns: Vec::new(),
        }
    }

    pub fn id(mut self, column: impl Into<String>) -> Self {
        self.id_column = Some(column.into());
        self
    }

    pub fn numeric(mut self, column: impl Into<String>) -> Self {
        self.columns.push(ColumnSpec::Numeric { column: column.into() });
        self
    }

    pub fn nominal(mut self, column: impl Into<String>) -> Self {
        self.columns.push(ColumnSpec::Nominal { column: column.into() });
        self
    }

    pub fn geo(mut self, column: impl Into<String>, source: GeoSource) -> Self {
        self.columns.push(ColumnSpec::Geo {
            column: column.into(),
            source,
        });
        self
    }

    /// Every column other than id, duration and event as numeric.
    pub fn all_numeric(table: &RawTable, id: Option<&str>, duration: &str, event: &str) -> Self {
        let mut spec = EncoderSpec::new(duration, event);
        spec.id_column = id.map(str::to_string);
        for h in table.headers() {
            if Some(h.as_str()) != id && h != duration && h != event {
                spec = spec.numeric(h.clone());
            }
        }
        spec
    }

    /// Parse directives:
    ///
    /// ```text
    /// id patient_id
    /// duration survival_months
    /// event vital_status_recode
    /// numeric tumor_size
    /// nominal sex
    /// geo state_county fips
    /// geo address address
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = EncoderSpec::new("", "");
        for d in config::parse(text)? {
            match (d.key(), d.args()) {
                ("id", [c]) => spec.id_column = Some(c.clone()),
                ("duration", [c]) => spec.duration_column = c.clone(),
                ("event", [c]) => spec.event_column = c.clone(),
                ("numeric", cols) if !cols.is_empty() => {
                    for c in cols {
                        spec = spec.numeric(c.clone());
                    }
                }
                ("nominal", cols) if !cols.is_empty() => {
                    for c in cols {
                        spec = spec.nominal(c.clone());
                    }
                }
                ("geo", [c, src]) => {
                    let source = match src.as_str() {
                        "fips" => GeoSource::Fips,
                        "address" => GeoSource::Address,
                        other => return Err(d.error(format!("unknown geo source `{other}`"))),
                    };
                    spec = spec.geo(c.clone(), source);
                }
                (k, _) => return Err(d.error(format!("unrecognized or malformed directive `{k}`"))),
            }
        }
        if spec.duration_column.is_empty() || spec.event_column.is_empty() {
            return Err(Error::Config {
                path: None,
                line: None,
                message: "encoder spec needs `duration` and `event` directives".into(),
            });
        }
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(Error::at(path))?).map_err(|e| e.with_path(path))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnEncoding {
    Numeric {
        column: String,
    },
    Nominal {
        column: String,
        prefix: String,
        /// Sorted lexicographically.
        categories: Vec<String>,
    },
    Geo {
        column: String,
        source: GeoSource,
    },
}

impl ColumnEncoding {
    /// The raw column this encoding reads.
    pub fn column(&self) -> &str {
        match self {
            ColumnEncoding::Numeric { column }
            | ColumnEncoding::Nominal { column, .. }
            | ColumnEncoding::Geo { column, .. } => column,
        }
    }
}

pub const GEO_FEATURES: [&str; 3] = ["lat", "lng", "elevation"];

/// Fitted encoding. Immutable after [`fit_encoder`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderMap {
    pub id_column: Option<String>,
    pub duration_column: String,
    pub event_column: String,
    pub columns: Vec<ColumnEncoding>,
}

/// Lowercased column name with non-alphanumerics as `_`.
fn feature_prefix(column: &str) -> String {
    column
        .trim()
        .chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

pub fn fit_encoder(table: &RawTable, spec: &EncoderSpec) -> Result<EncoderMap> {
    let mut used = HashSet::new();
    for c in spec
        .columns
        .iter()
        .map(ColumnSpec::column)
        .chain([spec.duration_column.as_str(), spec.event_column.as_str()])
        .chain(spec.id_column.as_deref())
    {
        table.column_index(c)?;
        if !used.insert(c) {
            return Err(Error::InvalidParameter(format!("column `{c}` is declared twice")));
        }
    }
    let mut columns = Vec::with_capacity(spec.columns.len());
    for c in &spec.columns {
        columns.push(match c {
            ColumnSpec::Numeric { column } => ColumnEncoding::Numeric { column: column.clone() },
            ColumnSpec::Nominal { column } => {
                let categories: BTreeSet<&str> = table
                    .column(column)?
                    .map(str::trim)
                    .filter(|v| !v.is_empty())
                    .collect();
                if categories.is_empty() {
                    return Err(Error::EmptyColumn(column.clone()));
                }
                ColumnEncoding::Nominal {
                    column: column.clone(),
                    prefix: feature_prefix(column),
                    categories: categories.into_iter().map(str::to_string).collect(),
                }
            }
            ColumnSpec::Geo { column, source } => ColumnEncoding::Geo {
                column: column.clone(),
                source: *source,
            },
        });
    }
    Ok(EncoderMap {
        id_column: spec.id_column.clone(),
        duration_column: spec.duration_column.clone(),
        event_column: spec.event_column.clone(),
        columns,
    })
}

/// Event flag from `1/0`, `true/false`, `yes/no` or `dead/alive`.
pub fn parse_event(value: &str) -> Option<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "1.0" | "true" | "yes" | "dead" => Some(true),
        "0" | "0.0" | "false" | "no" | "alive" => Some(false),
        _ => None,
    }
}

/// Whole non-negative months; accepts `3` and `3.0`.
pub fn parse_duration(value: &str) -> Option<u32> {
    let v = value.trim();
    v.parse::<u32>().ok().or_else(|| {
        v.parse::<f64>()
            .ok()
            .filter(|x| *x >= 0.0 && x.fract() == 0.0 && *x <= u32::MAX as f64)
            .map(|x| x as u32)
    })
}

impl EncoderMap {
    pub fn schema(&self) -> FeatureSchema {
        let mut names = Vec::new();
        for c in &self.columns {
            match c {
                ColumnEncoding::Numeric { column } => names.push(column.clone()),
                ColumnEncoding::Nominal { prefix, categories, .. } => {
                    names.extend(categories.iter().map(|v| format!("{prefix}_{v}")))
                }
                ColumnEncoding::Geo { .. } => names.extend(GEO_FEATURES.map(String::from)),
            }
        }
        FeatureSchema::new(names)
    }

    /// Raw input columns in declaration order.
    pub fn raw_columns(&self) -> impl Iterator<Item = &ColumnEncoding> {
        self.columns.iter()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("encoder map serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config {
            path: None,
            line: Some(e.line()),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(Error::at(path))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(Error::at(path))?).map_err(|e| e.with_path(path))
    }

    /// Category of each nominal block, or `None` for an all-zero block.
    pub fn decode_nominal(&self, features: &[f64]) -> Vec<(String, Option<String>)> {
        let mut out = Vec::new();
        let mut offset = 0;
        for c in &self.columns {
            match c {
                ColumnEncoding::Numeric { .. } => offset += 1,
                ColumnEncoding::Geo { .. } => offset += GEO_FEATURES.len(),
                ColumnEncoding::Nominal { column, categories, .. } => {
                    let block = &features[offset..offset + categories.len()];
                    let hot = block.iter().position(|&v| v == 1.0).map(|i| categories[i].clone());
                    out.push((column.clone(), hot));
                    offset += categories.len();
                }
            }
        }
        out
    }
}

fn field<'a, F: RawFields + ?Sized>(raw: &'a F, column: &str) -> Result<&'a str> {
    raw.get(column).ok_or_else(|| Error::MissingColumn(column.to_string()))
}

fn encode_column<F: RawFields + ?Sized>(c: &ColumnEncoding, raw: &F, geo: &dyn GeoResolver, out: &mut Vec<f64>) -> Result<()> {
    match c {
        ColumnEncoding::Numeric { column } => {
            let v = field(raw, column)?;
            let x: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidDataset(format!("column `{column}`: `{v}` is not a number")))?;
            if !x.is_finite() {
                return Err(Error::InvalidDataset(format!("column `{column}`: value is not finite")));
            }
            out.push(x);
        }
        ColumnEncoding::Nominal { column, categories, .. } => {
            let v = field(raw, column)?.trim();
            let hot = categories.binary_search_by(|c| c.as_str().cmp(v)).ok();
            out.extend((0..categories.len()).map(|i| if Some(i) == hot { 1.0 } else { 0.0 }));
        }
        ColumnEncoding::Geo { column, source } => {
            let v = field(raw, column)?;
            let query = match source {
                GeoSource::Fips => GeoQuery::fips_code(v)?,
                GeoSource::Address => GeoQuery::Address(v.to_string()),
            };
            let t = geo.resolve(&query)?;
            out.extend([t.lat, t.lng, t.elevation]);
        }
    }
    Ok(())
}

/// Encode one raw record. Unseen categories yield an all-zero block.
pub fn encode_record<F: RawFields + ?Sized>(m: &EncoderMap, raw: &F, geo: &dyn GeoResolver) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for c in &m.columns {
        encode_column(c, raw, geo, &mut out)?;
    }
    Ok(out)
}

/// Why one raw field could not be encoded.
#[derive(Debug)]
pub struct FieldError {
    pub column: String,
    pub error: Error,
}

/// Like [`encode_record`], but reports every failing column instead of the first.
pub fn encode_record_fields<F: RawFields + ?Sized>(
    m: &EncoderMap,
    raw: &F,
    geo: &dyn GeoResolver,
) -> std::result::Result<Vec<f64>, Vec<FieldError>> {
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for c in &m.columns {
        let before = out.len();
        if let Err(error) = encode_column(c, raw, geo, &mut out) {
            out.truncate(before);
            errors.push(FieldError { column: c.column().to_string(), error });
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(errors)
    }
}

/// A table row dropped during batch encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRow {
    /// 1-based data row number (header excluded).
    pub row: usize,
    pub reason: GeoError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTable {
    pub dataset: Dataset,
    pub skipped: Vec<SkippedRow>,
}

/// Encode every row into a [`Dataset`]. Location failures skip the row and
/// are reported; any other problem is an error.
pub fn encode_table(m: &EncoderMap, table: &RawTable, geo: &dyn GeoResolver) -> Result<EncodedTable> {
    let mut records = Vec::with_capacity(table.len());
    let mut skipped = Vec::new();
    for i in 0..table.len() {
        let raw = table.record(i);
        let covariates = match encode_record(m, &raw, geo) {
            Ok(v) => v,
            Err(Error::Geo(reason)) => {
                skipped.push(SkippedRow { row: i + 1, reason });
                continue;
            }
            Err(e) => return Err(row_context(e, i + 1)),
        };
        let d = field(&raw, &m.duration_column)?;
        let duration_months = parse_duration(d).ok_or_else(|| {
            row_context(
                Error::InvalidDataset(format!("`{}`: `{d}` is not a whole month count", m.duration_column)),
                i + 1,
            )
        })?;
        let e = field(&raw, &m.event_column)?;
        let event = parse_event(e).ok_or_else(|| {
            row_context(
                Error::InvalidDataset(format!("`{}`: `{e}` is not an event flag", m.event_column)),
                i + 1,
            )
        })?;
        let patient_id = match &m.id_column {
            Some(c) => field(&raw, c)?.trim().to_string(),
            None => (i + 1).to_string(),
        };
        records.push(SurvivalRecord {
            patient_id,
            covariates,
            duration_months,
            event,
        });
    }
    Ok(EncodedTable {
        dataset: Dataset::new(m.schema(), records)?,
        skipped,
    })
}

fn row_context(e: Error, row: usize) -> Error {
    match e {
        Error::InvalidDataset(msg) => Error::InvalidDataset(format!("row {row}: {msg}")),
        e => e,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::geo::{FixedResolver, GeoTriple, NoGeo, StaticFipsTable};

    fn table() -> RawTable {
        RawTable::from_reader(
            "id,SEX,tumor,county,months,status\n\
             a,Male,12,35001,4,1\n\
             b,Female,40,35005,10,0\n\
             c,Female,7,35001,0,dead\n"
                .as_bytes(),
        )
        .unwrap()
    }

    fn spec() -> EncoderSpec {
        EncoderSpec::new("months", "status")
            .id("id")
            .numeric("tumor")
            .nominal("SEX")
            .geo("county", GeoSource::Fips)
    }

    #[test]
    fn nominal_column_becomes_sorted_binary_features() {
        let m = fit_encoder(&table(), &spec()).unwrap();
        assert_eq!(
            m.schema().names(),
            ["tumor", "sex_Female", "sex_Male", "lat", "lng", "elevation"]
        );
    }

    #[test]
    fn encodes_fips_via_static_table() {
        let m = fit_encoder(&table(), &spec()).unwrap();
        let out = encode_table(&m, &table(), &StaticFipsTable::bundled()).unwrap();
        assert!(out.skipped.is_empty());
        let r = &out.dataset.records()[0];
        assert_eq!(r.covariates, [12.0, 0.0, 1.0, 35.017785, -106.629130, 5207.579772]);
        assert_eq!((r.duration_months, r.event), (4, true));
        assert!(out.dataset.records()[2].event);
    }

    #[test]
    fn unseen_category_is_zero_block() {
        let m = fit_encoder(&table(), &spec()).unwrap();
        let raw = std::collections::HashMap::from([
            ("tumor".to_string(), "3".to_string()),
            ("SEX".to_string(), "Martian".to_string()),
            ("county".to_string(), "35001".to_string()),
        ]);
        let v = encode_record(&m, &raw, &StaticFipsTable::bundled()).unwrap();
        assert_eq!(&v[1..3], [0.0, 0.0]);
        assert_eq!(m.decode_nominal(&v), [("SEX".to_string(), None)]);
    }

    #[test]
    fn missing_and_unknown_columns() {
        let m = fit_encoder(&table(), &spec()).unwrap();
        let raw = std::collections::HashMap::from([("tumor".to_string(), "3".to_string())]);
        assert!(matches!(encode_record(&m, &raw, &NoGeo), Err(Error::MissingColumn(c)) if c == "SEX"));
        let bad = spec().numeric("nope");
        assert!(matches!(fit_encoder(&table(), &bad), Err(Error::UnknownColumn(c)) if c == "nope"));
    }

    #[test]
    fn empty_nominal_column() {
        let t = RawTable::from_reader("x,m,e\n ,1,1\n".as_bytes()).unwrap();
        let s = EncoderSpec::new("m", "e").nominal("x");
        assert!(matches!(fit_encoder(&t, &s), Err(Error::EmptyColumn(_))));
    }

    #[test]
    fn numeric_only_schema_equals_input_columns() {
        let t = RawTable::from_reader("a,b,m,e\n1,2,3,0\n".as_bytes()).unwrap();
        let s = EncoderSpec::all_numeric(&t, None, "m", "e");
        let m = fit_encoder(&t, &s).unwrap();
        assert_eq!(m.schema().names(), ["a", "b"]);
    }

    #[test]
    fn geo_failures_skip_rows() {
        let m = fit_encoder(&table(), &spec()).unwrap();
        let only_one = FixedResolver::new().with(
            GeoQuery::fips_code("35001").unwrap(),
            GeoTriple::new(1.0, 2.0, 3.0).unwrap(),
        );
        let out = encode_table(&m, &table(), &only_one).unwrap();
        assert_eq!(out.dataset.len(), 2);
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.skipped[0].row, 2);
    }

    #[test]
    fn spec_config_and_json_round_trip() {
        let s = EncoderSpec::parse(
            "id id\nduration months\nevent status\nnumeric tumor\nnominal SEX\ngeo county fips\n",
        )
        .unwrap();
        assert_eq!(s, spec());
        let m = fit_encoder(&table(), &s).unwrap();
        assert_eq!(EncoderMap::from_json(&m.to_json()).unwrap(), m);
        assert!(EncoderSpec::parse("numeric x\n").is_err());
        assert!(EncoderSpec::parse("duration m\nevent e\ngeo c satellite\n").is_err());
    }

    #[test]
    fn event_and_duration_parsing() {
        assert_eq!(parse_event("Dead"), Some(true));
        assert_eq!(parse_event(" 0 "), Some(false));
        assert_eq!(parse_event("maybe"), None);
        assert_eq!(parse_duration("3.0"), Some(3));
        assert_eq!(parse_duration("-1"), None);
        assert_eq!(parse_duration("2.5"), None);
    }
}
