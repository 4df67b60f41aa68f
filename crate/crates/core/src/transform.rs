//! Person-month expansion of censored records and patient-level splitting.
//!
//! A record with duration `T` and event flag `D` becomes `T + 1` rows for
//! months `0..=T`. Every row carries the original covariates plus the month;
//! the binary target is false everywhere except the final row, where it
//! equals `D`. A classifier trained on these rows estimates the discrete
//! hazard: the probability of death in a month given survival up to it.

use std::collections::HashSet;

use rand::seq::SliceRandom;

use crate::data::{dataset_stats, Dataset, DatasetStats, FeatureSchema, SurvivalRecord, MONTH_FEATURE};
use crate::error::{BoxError, Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedRow {
    pub patient_id: String,
    pub covariates: Vec<f64>,
    pub month: u32,
    pub target: bool,
}

/// Row-major design matrix: covariates followed by the month column.
#[derive(Debug, Clone, Copy)]
pub struct TrainingMatrix<'a> {
    pub n_cols: usize,
    pub features: &'a [f64],
    pub targets: &'a [bool],
}

impl<'a> TrainingMatrix<'a> {
    pub fn new(n_cols: usize, features: &'a [f64], targets: &'a [bool]) -> Result<Self> {
        if n_cols == 0 || features.len() != n_cols * targets.len() {
            return Err(Error::InvalidParameter(format!(
                "feature buffer of {} values does not hold {} rows of {} columns",
                features.len(),
                targets.len(),
                n_cols
            )));
        }
        Ok(TrainingMatrix {
            n_cols,
            features,
            targets,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.features[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn n_positive(&self) -> usize {
        self.targets.iter().filter(|&&t| t).count()
    }
}

/// Output of [`expand`]. Rows are grouped by patient with months ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedDataset {
    schema: FeatureSchema,
    patient_ids: Vec<String>,
    row_patient: Vec<u32>,
    features: Vec<f64>,
    targets: Vec<bool>,
    source_stats: DatasetStats,
}

impl ExpandedDataset {
    /// Rebuild from rows (e.g. read back from disk), checking that each
    /// patient's block is a contiguous `0..=T` run with at most a final
    /// positive target.
    pub fn from_rows(schema: FeatureSchema, rows: impl IntoIterator<Item = ExpandedRow>) -> Result<Self> {
        let n_cols = schema.len();
        if schema.names().last().map(String::as_str) != Some(MONTH_FEATURE) {
            return Err(Error::InvalidDataset(format!(
                "expanded schema must end with `{MONTH_FEATURE}`"
            )));
        }
        let mut patient_ids: Vec<String> = Vec::new();
        let mut row_patient = Vec::new();
        let mut features = Vec::new();
        let mut targets = Vec::new();
        let mut seen: HashSet<String> = HashSet::new();
        let mut blocks: Vec<(u32, bool)> = Vec::new();
        let mut closed = false;
        for row in rows {
            if row.covariates.len() + 1 != n_cols {
                return Err(Error::InvalidDataset(format!(
                    "row for patient `{}` has {} covariates, expected {}",
                    row.patient_id,
                    row.covariates.len(),
                    n_cols - 1
                )));
            }
            let same = patient_ids.last() == Some(&row.patient_id);
            if same {
                let last = blocks.last_mut().expect("block exists");
                if closed || row.month != last.0 + 1 {
                    return Err(Error::InvalidDataset(format!(
                        "patient `{}` months are not contiguous at month {}",
                        row.patient_id, row.month
                    )));
                }
                last.0 = row.month;
                last.1 = row.target;
            } else {
                if row.month != 0 {
                    return Err(Error::InvalidDataset(format!(
                        "patient `{}` does not start at month 0",
                        row.patient_id
                    )));
                }
                if !seen.insert(row.patient_id.clone()) {
                    return Err(Error::InvalidDataset(format!(
                        "rows for patient `{}` are not grouped",
                        row.patient_id
                    )));
                }
                patient_ids.push(row.patient_id.clone());
                blocks.push((0, row.target));
            }
            closed = row.target;
            row_patient.push((patient_ids.len() - 1) as u32);
            features.extend_from_slice(&row.covariates);
            features.push(row.month as f64);
            targets.push(row.target);
        }
        let source_stats = DatasetStats::from_pairs(blocks)?;
        Ok(ExpandedDataset {
            schema,
            patient_ids,
            row_patient,
            features,
            targets,
            source_stats,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    /// Schema without the trailing month feature.
    pub fn covariate_schema(&self) -> FeatureSchema {
        let names = self.schema.names();
        FeatureSchema::new(names[..names.len() - 1].iter().cloned())
    }

    pub fn source_stats(&self) -> &DatasetStats {
        &self.source_stats
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn targets(&self) -> &[bool] {
        &self.targets
    }

    pub fn matrix(&self) -> TrainingMatrix<'_> {
        TrainingMatrix {
            n_cols: self.schema.len(),
            features: &self.features,
            targets: &self.targets,
        }
    }

    pub fn row(&self, i: usize) -> ExpandedRow {
        let n = self.schema.len();
        let values = &self.features[i * n..(i + 1) * n];
        ExpandedRow {
            patient_id: self.patient_ids[self.row_patient[i] as usize].clone(),
            covariates: values[..n - 1].to_vec(),
            month: values[n - 1] as u32,
            target: self.targets[i],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = ExpandedRow> + '_ {
        (0..self.len()).map(|i| self.row(i))
    }
}

fn push_patient_rows(r: &SurvivalRecord, mut emit: impl FnMut(ExpandedRow)) {
    for month in 0..=r.duration_months {
        emit(ExpandedRow {
            patient_id: r.patient_id.clone(),
            covariates: r.covariates.clone(),
            month,
            target: month == r.duration_months && r.event,
        });
    }
}

pub fn expand(d: &Dataset) -> Result<ExpandedDataset> {
    let stats = dataset_stats(d)?;
    let n_rows = stats.expanded_rows();
    let n_cov = d.schema().len();
    let mut features = Vec::with_capacity(n_rows * (n_cov + 1));
    let mut targets = Vec::with_capacity(n_rows);
    let mut row_patient = Vec::with_capacity(n_rows);
    for (p, r) in d.records().iter().enumerate() {
        for month in 0..=r.duration_months {
            features.extend_from_slice(&r.covariates);
            features.push(month as f64);
            targets.push(month == r.duration_months && r.event);
            row_patient.push(p as u32);
        }
    }
    Ok(ExpandedDataset {
        schema: d.schema().with_appended(MONTH_FEATURE),
        patient_ids: d.records().iter().map(|r| r.patient_id.clone()).collect(),
        row_patient,
        features,
        targets,
        source_stats: stats,
    })
}

/// Consumer of expanded rows in bounded chunks.
pub trait RowSink {
    fn accept(&mut self, chunk: &[ExpandedRow]) -> std::result::Result<(), BoxError>;
}

impl<F> RowSink for F
where
    F: FnMut(&[ExpandedRow]) -> std::result::Result<(), BoxError>,
{
    fn accept(&mut self, chunk: &[ExpandedRow]) -> std::result::Result<(), BoxError> {
        self(chunk)
    }
}

/// Emits the rows of [`expand`] in order, holding at most `chunk_size` rows
/// at a time. Returns the number of rows emitted.
pub fn expand_streaming<S: RowSink + ?Sized>(d: &Dataset, sink: &mut S, chunk_size: usize) -> Result<usize> {
    if chunk_size == 0 {
        return Err(Error::InvalidParameter("chunk_size must be at least 1".into()));
    }
    let mut buf: Vec<ExpandedRow> = Vec::with_capacity(chunk_size);
    let mut emitted = 0usize;
    let mut failure: Option<BoxError> = None;
    let mut flush = |buf: &mut Vec<ExpandedRow>, emitted: &mut usize, failure: &mut Option<BoxError>| {
        if failure.is_some() || buf.is_empty() {
            return;
        }
        match sink.accept(buf) {
            Ok(()) => *emitted += buf.len(),
            Err(e) => *failure = Some(e),
        }
        buf.clear();
    };
    for r in d.records() {
        push_patient_rows(r, |row| {
            buf.push(row);
            if buf.len() == chunk_size {
                flush(&mut buf, &mut emitted, &mut failure);
            }
        });
        if failure.is_some() {
            break;
        }
    }
    flush(&mut buf, &mut emitted, &mut failure);
    match failure {
        Some(source) => Err(Error::SinkFailure {
            rows_emitted: emitted,
            source,
        }),
        None => Ok(emitted),
    }
}

/// Negative-to-positive row ratio of an expanded dataset.
pub fn balance_ratio(e: &ExpandedDataset) -> Result<f64> {
    let pos = e.targets.iter().filter(|&&t| t).count();
    ratio(e.len() - pos, pos)
}

fn ratio(neg: usize, pos: usize) -> Result<f64> {
    if pos == 0 {
        return Err(Error::NoPositiveRows);
    }
    Ok(neg as f64 / pos as f64)
}

/// Balance ratio the expansion of `records` would have, without expanding.
fn records_ratio<'a>(records: impl Iterator<Item = &'a SurvivalRecord>) -> Result<f64> {
    let (mut rows, mut pos) = (0usize, 0usize);
    for r in records {
        rows += r.duration_months as usize + 1;
        pos += r.event as usize;
    }
    ratio(rows - pos, pos)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair {
    pub train: Dataset,
    pub test: Dataset,
    pub seed: u64,
    pub test_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitOptions {
    pub test_fraction: f64,
    /// Maximum relative gap between train and test balance ratios.
    pub ratio_tolerance: f64,
    pub seed: u64,
    pub max_attempts: usize,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            test_fraction: 0.03,
            ratio_tolerance: 0.02,
            seed: 0,
            max_attempts: 100,
        }
    }
}

/// Patient-disjoint random split whose train and test balance ratios agree
/// within `ratio_tolerance` (relative to the train ratio). Splits are redrawn
/// until one qualifies.
pub fn patient_split(d: &Dataset, opts: SplitOptions) -> Result<SplitPair> {
    if !(opts.test_fraction > 0.0 && opts.test_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "test_fraction must lie in (0, 1), got {}",
            opts.test_fraction
        )));
    }
    let n = d.len();
    if n < 2 {
        return Err(Error::InvalidParameter("splitting needs at least 2 patients".into()));
    }
    let n_test = ((n as f64 * opts.test_fraction).round() as usize).clamp(1, n - 1);
    let mut rng = rng::seeded(opts.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut best: Option<f64> = None;
    let records = d.records();
    for _ in 0..opts.max_attempts {
        order.shuffle(&mut rng);
        let (test_idx, train_idx) = order.split_at(n_test);
        let (Ok(train_ratio), Ok(test_ratio)) = (
            records_ratio(train_idx.iter().map(|&i| &records[i])),
            records_ratio(test_idx.iter().map(|&i| &records[i])),
        ) else {
            continue;
        };
        let gap = (train_ratio - test_ratio).abs() / train_ratio;
        if best.is_none_or(|b| gap < b) {
            best = Some(gap);
        }
        if gap <= opts.ratio_tolerance {
            let mut train_idx = train_idx.to_vec();
            let mut test_idx = test_idx.to_vec();
            train_idx.sort_unstable();
            test_idx.sort_unstable();
            return Ok(SplitPair {
                train: d.select(&train_idx),
                test: d.select(&test_idx),
                seed: opts.seed,
                test_fraction: opts.test_fraction,
            });
        }
    }
    Err(Error::UnbalancedSplit {
        attempts: opts.max_attempts,
        best_gap: best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_s2() -> Dataset {
        Dataset::new(
            FeatureSchema::new(["tumor_size", "year_of_birth"]),
            vec![
                SurvivalRecord {
                    patient_id: "1".into(),
                    covariates: vec![60.0, 1951.0],
                    duration_months: 3,
                    event: true,
                },
                SurvivalRecord {
                    patient_id: "2".into(),
                    covariates: vec![40.0, 1950.0],
                    duration_months: 3,
                    event: false,
                },
            ],
        )
        .unwrap()
    }

    fn single(t: u32, d: bool) -> Dataset {
        Dataset::new(
            FeatureSchema::new(["x"]),
            vec![SurvivalRecord {
                patient_id: "a".into(),
                covariates: vec![1.0],
                duration_months: t,
                event: d,
            }],
        )
        .unwrap()
    }

    #[test]
    fn expands_two_patient_table() {
        let e = expand(&table_s2()).unwrap();
        assert_eq!(e.len(), 8);
        assert_eq!(e.schema().names(), ["tumor_size", "year_of_birth", "month"]);
        let rows: Vec<_> = e.rows().collect();
        assert_eq!(rows.iter().map(|r| r.month).collect::<Vec<_>>(), [0, 1, 2, 3, 0, 1, 2, 3]);
        assert_eq!(
            rows.iter().map(|r| r.target as u8).collect::<Vec<_>>(),
            [0, 0, 0, 1, 0, 0, 0, 0]
        );
        assert!(rows[..4].iter().all(|r| r.covariates == [60.0, 1951.0]));
        assert!(rows[4..].iter().all(|r| r.covariates == [40.0, 1950.0]));
        assert_eq!(balance_ratio(&e).unwrap(), 7.0);
    }

    #[test]
    fn zero_month_death_contributes_one_row() {
        let e = expand(&single(0, true)).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e.row(0).month, 0);
        assert!(e.row(0).target);
    }

    #[test]
    fn censored_at_48_contributes_49_rows() {
        let e = expand(&single(48, false)).unwrap();
        assert_eq!(e.len(), 49);
        assert!(matches!(balance_ratio(&e), Err(Error::NoPositiveRows)));
    }

    #[test]
    fn ratio_of_single_death_at_month_one() {
        assert_eq!(balance_ratio(&expand(&single(1, true)).unwrap()).unwrap(), 1.0);
    }

    #[test]
    fn streaming_chunks_two_patient_table() {
        let mut sizes = Vec::new();
        let mut all = Vec::new();
        let mut sink = |chunk: &[ExpandedRow]| -> std::result::Result<(), BoxError> {
            sizes.push(chunk.len());
            all.extend_from_slice(chunk);
            Ok(())
        };
        let n = expand_streaming(&table_s2(), &mut sink, 3).unwrap();
        assert_eq!(n, 8);
        assert_eq!(sizes, [3, 3, 2]);
        assert_eq!(all, expand(&table_s2()).unwrap().rows().collect::<Vec<_>>());
    }

    #[test]
    fn streaming_empty_dataset() {
        let d = Dataset::new(FeatureSchema::new(["x"]), vec![]).unwrap();
        let mut sink = |_: &[ExpandedRow]| -> std::result::Result<(), BoxError> { Ok(()) };
        assert_eq!(expand_streaming(&d, &mut sink, 4).unwrap(), 0);
    }

    #[test]
    fn streaming_reports_rows_before_failure() {
        let mut calls = 0;
        let mut sink = |_: &[ExpandedRow]| -> std::result::Result<(), BoxError> {
            calls += 1;
            if calls == 2 {
                Err("disk full".into())
            } else {
                Ok(())
            }
        };
        match expand_streaming(&table_s2(), &mut sink, 3) {
            Err(Error::SinkFailure { rows_emitted, .. }) => assert_eq!(rows_emitted, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn from_rows_round_trips_and_validates() {
        let e = expand(&table_s2()).unwrap();
        let back = ExpandedDataset::from_rows(e.schema().clone(), e.rows()).unwrap();
        assert_eq!(back, e);

        let mut rows: Vec<_> = e.rows().collect();
        rows[1].target = true;
        assert!(ExpandedDataset::from_rows(e.schema().clone(), rows).is_err());
        let mut rows: Vec<_> = e.rows().collect();
        rows.remove(2);
        assert!(ExpandedDataset::from_rows(e.schema().clone(), rows).is_err());
    }

    #[test]
    fn two_patient_split() {
        let d = Dataset::new(
            FeatureSchema::new(["x"]),
            vec![
                SurvivalRecord { patient_id: "a".into(), covariates: vec![0.0], duration_months: 2, event: true },
                SurvivalRecord { patient_id: "b".into(), covariates: vec![1.0], duration_months: 2, event: true },
            ],
        )
        .unwrap();
        let s = patient_split(
            &d,
            SplitOptions { test_fraction: 0.5, ratio_tolerance: 0.05, seed: 1, max_attempts: 10 },
        )
        .unwrap();
        assert_eq!((s.train.len(), s.test.len()), (1, 1));
        assert_ne!(s.train.records()[0].patient_id, s.test.records()[0].patient_id);
    }

    #[test]
    fn all_censored_split_is_unbalanced() {
        let records = (0..20)
            .map(|i| SurvivalRecord {
                patient_id: i.to_string(),
                covariates: vec![0.0],
                duration_months: 5,
                event: false,
            })
            .collect();
        let d = Dataset::new(FeatureSchema::new(["x"]), records).unwrap();
        let err = patient_split(
            &d,
            SplitOptions { test_fraction: 0.5, ratio_tolerance: 0.05, seed: 1, max_attempts: 10 },
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnbalancedSplit { best_gap: None, .. }));
    }
}
