//! One patient's full prediction: raw fields to survival curve, optional
//! bootstrap bands and horizon probabilities.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::MonthGrid;
use crate::encode::{encode_record, GeoResolver, RawFields};
use crate::error::{Error, Result};
use crate::evaluate::DEFAULT_HORIZONS;
use crate::learners::HazardModel;
use crate::survival::{
    bootstrap_bands, pmf_from_hazard, predict_hazard_curve, survival_from_hazard, BandOptions, SurvivalCurve,
};

#[derive(Debug, Clone, PartialEq)]
pub struct PrognosisOptions {
    pub horizons: Vec<u32>,
    /// Compute bootstrap bands with these settings.
    pub bands: Option<BandOptions>,
}

impl Default for PrognosisOptions {
    fn default() -> Self {
        PrognosisOptions {
            horizons: DEFAULT_HORIZONS.to_vec(),
            bands: None,
        }
    }
}

/// Months `0..=H` with `H` the larger of the model's training horizon and the
/// largest requested horizon.
pub fn prognosis_grid(m: &HazardModel, horizons: &[u32]) -> MonthGrid {
    let h = horizons.iter().copied().max().unwrap_or(0).max(m.training().horizon).max(1);
    MonthGrid::new(h).expect("horizon is positive")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prognosis {
    pub months: Vec<u32>,
    pub survival: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    pub horizon_probs: BTreeMap<u32, f64>,
}

impl Prognosis {
    pub fn curve(&self) -> Result<SurvivalCurve> {
        let c = SurvivalCurve::new(self.survival.clone())?;
        match (&self.lower, &self.upper) {
            (Some(l), Some(u)) => c.with_bands(crate::survival::Bands { lower: l.clone(), upper: u.clone() }),
            _ => Ok(c),
        }
    }
}

/// Prediction from encoded covariates (month excluded, in model schema order).
pub fn prognose(m: &HazardModel, covariates: &[f64], opts: &PrognosisOptions) -> Result<Prognosis> {
    let grid = prognosis_grid(m, &opts.horizons);
    let hazard = predict_hazard_curve(m, m.covariate_schema(), covariates, grid)?;
    let mut curve = survival_from_hazard(&hazard);
    if let Some(b) = opts.bands {
        let bands = bootstrap_bands(&pmf_from_hazard(&hazard), &m.training().duration_histogram, b)?;
        curve = curve.with_bands(bands)?;
    }
    let horizon_probs = opts
        .horizons
        .iter()
        .map(|&h| (h, curve.at(h).expect("grid covers horizons")))
        .collect();
    let (lower, upper) = match curve.bands() {
        Some(b) => (Some(b.lower.clone()), Some(b.upper.clone())),
        None => (None, None),
    };
    Ok(Prognosis {
        months: grid.months().collect(),
        survival: curve.values().to_vec(),
        lower,
        upper,
        horizon_probs,
    })
}

/// Prediction from raw patient fields, encoded with the model's embedded encoder.
pub fn prognose_raw<F: RawFields + ?Sized>(
    m: &HazardModel,
    raw: &F,
    geo: &dyn GeoResolver,
    opts: &PrognosisOptions,
) -> Result<Prognosis> {
    let encoder = m
        .encoder()
        .ok_or_else(|| Error::InvalidParameter("model has no embedded encoder; pass encoded covariates".into()))?;
    let x = encode_record(encoder, raw, geo)?;
    prognose(m, &x, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureSchema;
    use crate::learners::TrainingSummary;

    fn stub(hazard: f64) -> HazardModel {
        let t = TrainingSummary {
            horizon: 24,
            duration_histogram: BTreeMap::from([(10, 3), (24, 1)]),
        };
        HazardModel::constant(FeatureSchema::new(["x"]), hazard, t).unwrap()
    }

    #[test]
    fn zero_hazard_is_certain_survival() {
        let opts = PrognosisOptions {
            bands: Some(BandOptions { n_resamples: 200, ..BandOptions::default() }),
            ..PrognosisOptions::default()
        };
        let p = prognose(&stub(0.0), &[1.0], &opts).unwrap();
        assert_eq!(p.months.len(), 61);
        assert!(p.survival.iter().all(|&s| s == 1.0));
        assert!(p.lower.unwrap().iter().chain(p.upper.as_ref().unwrap()).all(|&s| s == 1.0));
        assert_eq!(p.horizon_probs, BTreeMap::from([(6, 1.0), (12, 1.0), (60, 1.0)]));
    }

    #[test]
    fn constant_hazard_probabilities() {
        let p = prognose(&stub(0.1), &[0.0], &PrognosisOptions::default()).unwrap();
        assert!((p.horizon_probs[&6] - 0.9f64.powi(7)).abs() < 1e-12);
        assert!(p.lower.is_none());
    }

    #[test]
    fn raw_needs_encoder() {
        let raw: BTreeMap<String, String> = BTreeMap::new();
        let err = prognose_raw(&stub(0.1), &raw, &crate::encode::NoGeo, &PrognosisOptions::default());
        assert!(matches!(err, Err(Error::InvalidParameter(_))));
    }
}
