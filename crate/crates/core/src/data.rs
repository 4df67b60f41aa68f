//! Shared domain types: records, feature schemas, the month grid and datasets.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Ordered feature names. The order is fixed for every vector of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureSchema {
    names: Vec<String>,
}

impl FeatureSchema {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        FeatureSchema {
            names: names.into_iter().map(Into::into).collect(),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Stable 64-bit digest of the ordered names.
    pub fn fingerprint(&self) -> u64 {
        let mut hasher = Sha256::new();
        for name in &self.names {
            hasher.update((name.len() as u64).to_le_bytes());
            hasher.update(name.as_bytes());
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("sha256 yields 32 bytes"))
    }

    /// This schema with one extra trailing feature.
    pub fn with_appended(&self, name: &str) -> Self {
        let mut names = self.names.clone();
        names.push(name.to_string());
        FeatureSchema { names }
    }
}

/// Name of the feature appended by the person-month expansion.
pub const MONTH_FEATURE: &str = "month";

/// One patient: covariates, observed duration in months and the event flag.
///
/// The true (uncensored) death month is never stored. It equals
/// `duration_months` when `event` is true and exceeds it otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub patient_id: String,
    pub covariates: Vec<f64>,
    pub duration_months: u32,
    pub event: bool,
}

/// Largest month index modeled; curves cover months `0..=horizon`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthGrid {
    horizon: u32,
}

impl MonthGrid {
    pub fn new(horizon: u32) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidParameter("grid horizon must be at least 1".into()));
        }
        Ok(MonthGrid { horizon })
    }

    /// Grid covering the longest observed duration (at least one month).
    pub fn covering(stats: &DatasetStats) -> Self {
        MonthGrid {
            horizon: stats.max_duration.max(1),
        }
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.horizon as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn months(&self) -> impl Iterator<Item = u32> {
        0..=self.horizon
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_patients: usize,
    pub n_events: usize,
    pub n_censored: usize,
    pub max_duration: u32,
    /// Patients per observed duration.
    pub duration_histogram: BTreeMap<u32, usize>,
}

impl DatasetStats {
    pub(crate) fn from_pairs(pairs: impl IntoIterator<Item = (u32, bool)>) -> Result<Self> {
        let mut stats = DatasetStats {
            n_patients: 0,
            n_events: 0,
            n_censored: 0,
            max_duration: 0,
            duration_histogram: BTreeMap::new(),
        };
        for (duration, event) in pairs {
            stats.n_patients += 1;
            if event {
                stats.n_events += 1;
            } else {
                stats.n_censored += 1;
            }
            stats.max_duration = stats.max_duration.max(duration);
            *stats.duration_histogram.entry(duration).or_default() += 1;
        }
        if stats.n_patients == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(stats)
    }

    /// Number of rows the person-month expansion produces.
    pub fn expanded_rows(&self) -> usize {
        self.duration_histogram
            .iter()
            .map(|(&t, &n)| (t as usize + 1) * n)
            .sum()
    }
}

/// Immutable collection of records sharing one schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    schema: FeatureSchema,
    records: Vec<SurvivalRecord>,
}

impl Dataset {
    /// Validates lengths, finiteness and patient-id uniqueness.
    pub fn new(schema: FeatureSchema, records: Vec<SurvivalRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if r.covariates.len() != schema.len() {
                return Err(Error::InvalidDataset(format!(
                    "patient `{}` has {} covariates, schema has {}",
                    r.patient_id,
                    r.covariates.len(),
                    schema.len()
                )));
            }
            if let Some(i) = r.covariates.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!(
                    "patient `{}` has a non-finite value for `{}`",
                    r.patient_id,
                    schema.names()[i]
                )));
            }
            if !seen.insert(r.patient_id.as_str()) {
                return Err(Error::InvalidDataset(format!(
                    "duplicate patient id `{}`",
                    r.patient_id
                )));
            }
        }
        Ok(Dataset { schema, records })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn records(&self) -> &[SurvivalRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<SurvivalRecord> {
        self.records
    }

    /// Subset by record index, keeping the schema.
    pub(crate) fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }
}

pub fn dataset_stats(d: &Dataset) -> Result<DatasetStats> {
    DatasetStats::from_pairs(d.records.iter().map(|r| (r.duration_months, r.event)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, t: u32, d: bool) -> SurvivalRecord {
        SurvivalRecord {
            patient_id: id.into(),
            covariates: vec![],
            duration_months: t,
            event: d,
        }
    }

    #[test]
    fn stats_of_two_patients() {
        let d = Dataset::new(
            FeatureSchema::new(Vec::<String>::new()),
            vec![rec("a", 3, true), rec("b", 3, false)],
        )
        .unwrap();
        let s = dataset_stats(&d).unwrap();
        assert_eq!((s.n_patients, s.n_events, s.n_censored, s.max_duration), (2, 1, 1, 3));
        assert_eq!(s.duration_histogram, BTreeMap::from([(3, 2)]));
        assert_eq!(s.expanded_rows(), 8);
    }

    #[test]
    fn stats_of_single_immediate_death() {
        let d = Dataset::new(FeatureSchema::new(Vec::<String>::new()), vec![rec("a", 0, true)])
            .unwrap();
        let s = dataset_stats(&d).unwrap();
        assert_eq!((s.n_patients, s.n_events, s.n_censored, s.max_duration), (1, 1, 0, 0));
        assert_eq!(s.duration_histogram, BTreeMap::from([(0, 1)]));
    }

    #[test]
    fn empty_dataset_has_no_stats() {
        let d = Dataset::new(FeatureSchema::new(["x"]), vec![]).unwrap();
        assert!(matches!(dataset_stats(&d), Err(Error::EmptyDataset)));
    }

    #[test]
    fn rejects_duplicates_and_nan() {
        let schema = FeatureSchema::new(["x"]);
        let mut a = rec("a", 1, false);
        a.covariates = vec![1.0];
        let b = a.clone();
        assert!(Dataset::new(schema.clone(), vec![a.clone(), b]).is_err());
        a.covariates = vec![f64::NAN];
        assert!(Dataset::new(schema, vec![a]).is_err());
    }

    #[test]
    fn fingerprint_depends_on_order() {
        let a = FeatureSchema::new(["x", "y"]);
        let b = FeatureSchema::new(["y", "x"]);
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), FeatureSchema::new(["x", "y"]).fingerprint());
        // length prefix keeps ["ab"] and ["a","b"] apart
        assert_ne!(
            FeatureSchema::new(["ab"]).fingerprint(),
            FeatureSchema::new(["a", "b"]).fingerprint()
        );
    }
}
