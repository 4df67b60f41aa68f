//! Per-patient hazard, death-month distribution and survival curves, with
//! bootstrap percentile bands.
//!
//! With hazards `λ_j` for months `0..=H`:
//!
//! * `P(Y = j) = λ_j · Π_{k<j} (1 − λ_k)`
//! * `P(Y > H) = Π_{k≤H} (1 − λ_k)` (the tail)
//! * `S(j) = P(Y > j) = 1 − Σ_{i≤j} P(Y = i) = Π_{i≤j} (1 − λ_i)`

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureSchema, MonthGrid};
use crate::error::{Error, Result};
use crate::learners::HazardModel;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardCurve {
    values: Vec<f64>,
}

impl HazardCurve {
    /// One hazard per month `0..=H`, each in [0, 1].
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("hazard curve needs at least one month".into()));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!("hazard {v} outside [0, 1]")));
        }
        Ok(HazardCurve { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> u32 {
        (self.values.len() - 1) as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeathPmf {
    /// `P(Y = j)` for months `0..=H`.
    pub probabilities: Vec<f64>,
    /// `P(Y > H)`.
    pub tail: f64,
}

impl DeathPmf {
    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum::<f64>() + self.tail
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bands {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    values: Vec<f64>,
    bands: Option<Bands>,
}

impl SurvivalCurve {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("survival curve needs at least one month".into()));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) || values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidParameter(
                "survival values must lie in [0, 1] and be non-increasing".into(),
            ));
        }
        Ok(SurvivalCurve { values, bands: None })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bands(&self) -> Option<&Bands> {
        self.bands.as_ref()
    }

    pub fn horizon(&self) -> u32 {
        (self.values.len() - 1) as u32
    }

    /// `S(month)`, or `None` past the horizon.
    pub fn at(&self, month: u32) -> Option<f64> {
        self.values.get(month as usize).copied()
    }

    pub fn with_bands(mut self, bands: Bands) -> Result<Self> {
        let n = self.values.len();
        if bands.lower.len() != n || bands.upper.len() != n {
            return Err(Error::InvalidParameter("band length differs from curve".into()));
        }
        if bands
            .lower
            .iter()
            .zip(&bands.upper)
            .any(|(l, u)| !(0.0 <= *l && l <= u && *u <= 1.0))
        {
            return Err(Error::InvalidParameter("bands must satisfy 0 <= lower <= upper <= 1".into()));
        }
        self.bands = Some(bands);
        Ok(self)
    }

    /// `month,survival,lower,upper`; band cells are blank without bands.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("month,survival,lower,upper\n");
        for (j, s) in self.values.iter().enumerate() {
            match &self.bands {
                Some(b) => writeln!(out, "{j},{s},{},{}", b.lower[j], b.upper[j]),
                None => writeln!(out, "{j},{s},,"),
            }
            .expect("writing to a String");
        }
        out
    }
}

/// Hazard at every grid month for covariates `x` (month excluded).
pub fn predict_hazard_curve(
    m: &HazardModel,
    schema: &FeatureSchema,
    x: &[f64],
    grid: MonthGrid,
) -> Result<HazardCurve> {
    m.check_schema(schema)?;
    if x.len() != schema.len() {
        return Err(Error::InvalidParameter(format!(
            "{} covariates for a schema of {}",
            x.len(),
            schema.len()
        )));
    }
    let mut row = Vec::with_capacity(x.len() + 1);
    row.extend_from_slice(x);
    row.push(0.0);
    let last = row.len() - 1;
    let values = grid
        .months()
        .map(|j| {
            row[last] = j as f64;
            m.predict_probability(&row)
        })
        .collect();
    HazardCurve::new(values)
}

pub fn pmf_from_hazard(h: &HazardCurve) -> DeathPmf {
    let mut alive = 1.0;
    let probabilities = h
        .values
        .iter()
        .map(|&l| {
            let p = alive * l;
            alive *= 1.0 - l;
            p
        })
        .collect();
    DeathPmf {
        probabilities,
        tail: alive,
    }
}

/// Running product `Π_{i≤j} (1 − λ_i)`.
pub fn survival_from_hazard(h: &HazardCurve) -> SurvivalCurve {
    let mut s = 1.0;
    let values = h
        .values
        .iter()
        .map(|&l| {
            s *= 1.0 - l;
            s
        })
        .collect();
    SurvivalCurve { values, bands: None }
}

/// `1 − CDF`, clamped into [0, 1] and forced non-increasing against rounding.
pub fn survival_from_pmf(pmf: &DeathPmf) -> SurvivalCurve {
    let mut cdf = 0.0;
    let mut prev = 1.0f64;
    let values = pmf
        .probabilities
        .iter()
        .map(|&p| {
            cdf += p;
            prev = (1.0 - cdf).clamp(0.0, prev);
            prev
        })
        .collect();
    SurvivalCurve { values, bands: None }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandOptions {
    pub n_resamples: usize,
    /// Central coverage, e.g. 0.95 for the 2.5th and 97.5th percentiles.
    pub level: f64,
    pub seed: u64,
}

impl Default for BandOptions {
    fn default() -> Self {
        BandOptions {
            n_resamples: 10_000,
            level: 0.95,
            seed: 0,
        }
    }
}

/// Cumulative sampler over a discrete distribution.
struct Cumulative {
    cum: Vec<f64>,
}

impl Cumulative {
    fn new(weights: impl IntoIterator<Item = f64>) -> Self {
        let mut acc = 0.0;
        let cum = weights
            .into_iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Cumulative { cum }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cum.last().expect("non-empty");
        let u = rng.random::<f64>() * total;
        self.cum.partition_point(|&c| c <= u).min(self.cum.len() - 1)
    }
}

/// One bootstrap replicate: draw `N` = (sampled training duration + 1) death
/// months from the patient's distribution (tail draws land past the
/// horizon) and return the empirical fraction surviving past each month.
fn resample_curve<R: Rng>(durations: &[u32], dur_sampler: &Cumulative, death: &Cumulative, h: usize, rng: &mut R) -> Vec<f64> {
    let n = durations[dur_sampler.sample(rng)] as usize + 1;
    // deaths[j] = draws dying in month j; index h + 1 is the tail
    let mut deaths = vec![0usize; h + 2];
    for _ in 0..n {
        deaths[death.sample(rng)] += 1;
    }
    let mut alive = n;
    (0..=h)
        .map(|j| {
            alive -= deaths[j];
            alive as f64 / n as f64
        })
        .collect()
}

/// Every resampled curve, in resample order. Replicate `i` draws from its own
/// RNG stream, so results do not depend on thread scheduling.
pub fn resample_curves(
    pmf: &DeathPmf,
    duration_histogram: &BTreeMap<u32, usize>,
    n_resamples: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if duration_histogram.values().all(|&c| c == 0) {
        return Err(Error::DegenerateHistogram);
    }
    let durations: Vec<u32> = duration_histogram.keys().copied().collect();
    let dur_sampler = Cumulative::new(duration_histogram.values().map(|&c| c as f64));
    let death = Cumulative::new(pmf.probabilities.iter().copied().chain([pmf.tail]));
    let h = pmf.probabilities.len() - 1;
    Ok((0..n_resamples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            resample_curve(&durations, &dur_sampler, &death, h, &mut r)
        })
        .collect())
}

/// Nearest-rank percentile of sorted values: the `ceil(q·n)`-th smallest.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// Lower and upper percentile curves of the bootstrap population.
pub fn bootstrap_bands(
    pmf: &DeathPmf,
    duration_histogram: &BTreeMap<u32, usize>,
    opts: BandOptions,
) -> Result<Bands> {
    if opts.n_resamples < 2 {
        return Err(Error::InvalidParameter("n_resamples must be at least 2".into()));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::InvalidParameter("level must lie in (0, 1)".into()));
    }
    let curves = resample_curves(pmf, duration_histogram, opts.n_resamples, opts.seed)?;
    Ok(percentile_bands(&curves, opts.level))
}

pub(crate) fn percentile_bands(curves: &[Vec<f64>], level: f64) -> Bands {
    let months = curves[0].len();
    let alpha = (1.0 - level) / 2.0;
    let mut column = vec![0.0; curves.len()];
    let mut lower = Vec::with_capacity(months);
    let mut upper = Vec::with_capacity(months);
    for j in 0..months {
        for (c, v) in curves.iter().zip(column.iter_mut()) {
            *v = c[j];
        }
        column.sort_unstable_by(f64::total_cmp);
        lower.push(nearest_rank(&column, alpha));
        upper.push(nearest_rank(&column, 1.0 - alpha));
    }
    Bands { lower, upper }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(v: &[f64]) -> HazardCurve {
        HazardCurve::new(v.to_vec()).unwrap()
    }

    #[test]
    fn zero_hazard() {
        let h = curve(&[0.0; 4]);
        let p = pmf_from_hazard(&h);
        assert_eq!(p.probabilities, [0.0; 4]);
        assert_eq!(p.tail, 1.0);
        assert_eq!(survival_from_hazard(&h).values(), [1.0; 4]);
    }

    #[test]
    fn certain_death() {
        let p = pmf_from_hazard(&curve(&[1.0; 4]));
        assert_eq!(p.probabilities, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(p.tail, 0.0);
    }

    #[test]
    fn half_hazard_is_geometric() {
        let h = curve(&[0.5; 4]);
        let p = pmf_from_hazard(&h);
        assert_eq!(p.probabilities, [0.5, 0.25, 0.125, 0.0625]);
        assert_eq!(p.tail, 0.0625);
        assert_eq!(survival_from_hazard(&h).values(), [0.5, 0.25, 0.125, 0.0625]);
        assert_eq!(survival_from_pmf(&p).values(), [0.5, 0.25, 0.125, 0.0625]);
    }

    #[test]
    fn rejects_invalid_curves() {
        assert!(HazardCurve::new(vec![]).is_err());
        assert!(HazardCurve::new(vec![1.2]).is_err());
        assert!(SurvivalCurve::new(vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn nearest_rank_at_ten_thousand() {
        let v: Vec<f64> = (1..=10_000).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 0.025), 250.0);
        assert_eq!(nearest_rank(&v, 0.975), 9750.0);
        assert_eq!(nearest_rank(&[3.0, 4.0], 0.025), 3.0);
        assert_eq!(nearest_rank(&[3.0, 4.0], 0.975), 4.0);
    }

    #[test]
    fn bands_for_zero_hazard_are_one() {
        let p = pmf_from_hazard(&curve(&[0.0; 6]));
        let hist = BTreeMap::from([(2, 3), (5, 1)]);
        let b = bootstrap_bands(&p, &hist, BandOptions { n_resamples: 200, level: 0.95, seed: 1 }).unwrap();
        assert_eq!(b.lower, [1.0; 6]);
        assert_eq!(b.upper, [1.0; 6]);
    }

    #[test]
    fn empty_histogram_is_degenerate() {
        let p = pmf_from_hazard(&curve(&[0.1; 3]));
        assert!(matches!(
            bootstrap_bands(&p, &BTreeMap::new(), BandOptions::default()),
            Err(Error::DegenerateHistogram)
        ));
        assert!(matches!(
            bootstrap_bands(&p, &BTreeMap::from([(1, 1)]), BandOptions { n_resamples: 1, ..Default::default() }),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn csv_export() {
        let s = survival_from_hazard(&curve(&[0.5, 0.5]));
        assert_eq!(s.to_csv(), "month,survival,lower,upper\n0,0.5,,\n1,0.25,,\n");
        let s = s
            .with_bands(Bands { lower: vec![0.4, 0.2], upper: vec![0.6, 0.3] })
            .unwrap();
        assert_eq!(s.to_csv(), "month,survival,lower,upper\n0,0.5,0.4,0.6\n1,0.25,0.2,0.3\n");
    }
}
