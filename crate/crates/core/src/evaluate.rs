//! Horizon classifiers built from survival curves, ROC AUC, cross-model
//! agreement and correlation, and the Kaplan-Meier baseline.
//!
//! A horizon classifier predicts that a patient survives at least `h` months
//! when `S(X, h) >= 0.5`. Only patients whose `h`-month outcome is known take
//! part: those who died, and those observed alive for at least `h` months.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MonthGrid, SurvivalRecord};
use crate::error::{Error, Result};
use crate::learners::HazardModel;
use crate::survival::{predict_hazard_curve, survival_from_hazard};

/// Survival threshold of the horizon classifiers.
pub const SURVIVAL_THRESHOLD: f64 = 0.5;

pub const DEFAULT_HORIZONS: [u32; 3] = [6, 12, 60];

pub fn eligible_for_horizon(r: &SurvivalRecord, h: u32) -> bool {
    r.event || r.duration_months >= h
}

/// Ground truth for an eligible patient: alive for at least `h` months.
pub fn survived(r: &SurvivalRecord, h: u32) -> bool {
    r.duration_months >= h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonPrediction {
    pub patient_id: String,
    pub horizon: u32,
    /// `S(X, h)`.
    pub score: f64,
    pub predicted_survives: bool,
    /// Observed outcome.
    pub survived: bool,
}

impl HorizonPrediction {
    pub fn new(patient_id: String, horizon: u32, score: f64, survived: bool) -> Self {
        HorizonPrediction {
            patient_id,
            horizon,
            score,
            predicted_survives: score >= SURVIVAL_THRESHOLD,
            survived,
        }
    }
}

/// Scores of every eligible test patient at each horizon.
pub fn horizon_scores(
    m: &HazardModel,
    test: &Dataset,
    grid: MonthGrid,
    horizons: &[u32],
) -> Result<BTreeMap<u32, Vec<HorizonPrediction>>> {
    if let Some(h) = horizons.iter().find(|&&h| h > grid.horizon()) {
        return Err(Error::InvalidParameter(format!(
            "horizon {h} exceeds grid horizon {}",
            grid.horizon()
        )));
    }
    let mut out: BTreeMap<u32, Vec<HorizonPrediction>> = horizons.iter().map(|&h| (h, Vec::new())).collect();
    for r in test.records() {
        if !horizons.iter().any(|&h| eligible_for_horizon(r, h)) {
            continue;
        }
        let s = survival_from_hazard(&predict_hazard_curve(m, test.schema(), &r.covariates, grid)?);
        for &h in horizons {
            if eligible_for_horizon(r, h) {
                let score = s.at(h).expect("horizon within grid");
                out.get_mut(&h)
                    .expect("horizon key")
                    .push(HorizonPrediction::new(r.patient_id.clone(), h, score, survived(r, h)));
            }
        }
    }
    Ok(out)
}

/// Probability that a random positive outranks a random negative, ties
/// counting one half. Computed from midranks (Mann-Whitney U).
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidParameter("scores and labels differ in length".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClassLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum of positives, so midranks stay integral
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share midrank (i + j + 2) / 2
        let twice_mid = (i + j + 2) as u128;
        let pos_in_tie = order[i..=j].iter().filter(|&&k| labels[k]).count() as u128;
        twice_rank_sum += twice_mid * pos_in_tie;
        i = j + 1;
    }
    let (p, n) = (n_pos as u128, n_neg as u128);
    // 2U = 2R - p(p+1)
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * p * n) as f64)
}

fn paired<'a>(
    a: &'a [HorizonPrediction],
    b: &'a [HorizonPrediction],
) -> Result<Vec<(&'a HorizonPrediction, &'a HorizonPrediction)>> {
    if a.len() != b.len() {
        return Err(Error::PatientSetMismatch);
    }
    let index: HashMap<(&str, u32), &HorizonPrediction> =
        b.iter().map(|p| ((p.patient_id.as_str(), p.horizon), p)).collect();
    if index.len() != b.len() {
        return Err(Error::PatientSetMismatch);
    }
    a.iter()
        .map(|p| {
            index
                .get(&(p.patient_id.as_str(), p.horizon))
                .map(|q| (p, *q))
                .ok_or(Error::PatientSetMismatch)
        })
        .collect()
}

/// Fraction of patients on which both models make the same survive/die call.
pub fn agreement(a: &[HorizonPrediction], b: &[HorizonPrediction]) -> Result<f64> {
    let pairs = paired(a, b)?;
    if pairs.is_empty() {
        return Err(Error::PatientSetMismatch);
    }
    let same = pairs
        .iter()
        .filter(|(p, q)| (p.score >= SURVIVAL_THRESHOLD) == (q.score >= SURVIVAL_THRESHOLD))
        .count();
    Ok(same as f64 / pairs.len() as f64)
}

/// Pearson correlation of two models' scores on the same patients.
pub fn score_correlation(a: &[HorizonPrediction], b: &[HorizonPrediction]) -> Result<f64> {
    let pairs = paired(a, b)?;
    let x: Vec<f64> = pairs.iter().map(|(p, _)| p.score).collect();
    let y: Vec<f64> = pairs.iter().map(|(_, q)| q.score).collect();
    pearson(&x, &y)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::PatientSetMismatch);
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Product-limit estimate `Ŝ(t) = Π_{u≤t} (1 − d_u / n_u)` for months
/// `0..=horizon`. Deaths in a month are removed before censorings, so a
/// patient censored at month `u` is still at risk at `u`.
pub fn kaplan_meier(durations: &[u32], events: &[bool], horizon: u32) -> Result<Vec<f64>> {
    if durations.is_empty() || durations.len() != events.len() {
        return Err(Error::InvalidParameter(
            "kaplan_meier needs equally long, non-empty inputs".into(),
        ));
    }
    let mut order: Vec<usize> = (0..durations.len()).collect();
    order.sort_by_key(|&i| durations[i]);
    let mut at_risk = durations.len();
    let mut s = 1.0;
    let mut out = Vec::with_capacity(horizon as usize + 1);
    let mut k = 0;
    for t in 0..=horizon {
        let n_t = at_risk;
        let mut deaths = 0usize;
        let mut leaving = 0usize;
        while k < order.len() && durations[order[k]] == t {
            deaths += events[order[k]] as usize;
            leaving += 1;
            k += 1;
        }
        if n_t > 0 {
            s *= 1.0 - deaths as f64 / n_t as f64;
        }
        at_risk -= leaving;
        out.push(s);
    }
    Ok(out)
}

/// One model's metrics at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    pub model: String,
    pub horizon: u32,
    pub n_eligible: usize,
    /// `None` when the eligible set holds a single class.
    pub auc: Option<f64>,
    /// Against the first model of the report.
    pub agreement: Option<f64>,
    pub correlation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<HorizonMetrics>,
    pub compared: bool,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

impl EvalReport {
    /// `model,horizon,n_eligible,auc` plus `agreement,correlation` when more
    /// than one model was evaluated. Missing values are `NA`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,horizon,n_eligible,auc");
        if self.compared {
            out.push_str(",agreement,correlation");
        }
        out.push('\n');
        for r in &self.rows {
            write!(out, "{},{},{},{}", r.model, r.horizon, r.n_eligible, cell(r.auc)).expect("string write");
            if self.compared {
                write!(out, ",{},{}", cell(r.agreement), cell(r.correlation)).expect("string write");
            }
            out.push('\n');
        }
        out
    }
}

/// Evaluate named models on a test set. With several models, each is also
/// compared to the first by agreement and score correlation.
pub fn evaluate_models(
    models: &[(String, &HazardModel)],
    test: &Dataset,
    horizons: &[u32],
) -> Result<EvalReport> {
    let max_h = horizons.iter().copied().max().unwrap_or(0);
    let mut scored = Vec::with_capacity(models.len());
    for (_, m) in models {
        let grid = MonthGrid::new(m.training().horizon.max(max_h).max(1))?;
        scored.push(horizon_scores(m, test, grid, horizons)?);
    }
    let compared = models.len() > 1;
    let mut rows = Vec::new();
    for (i, (name, _)) in models.iter().enumerate() {
        for &h in horizons {
            let preds = &scored[i][&h];
            let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
            let labels: Vec<bool> = preds.iter().map(|p| p.survived).collect();
            let auc = roc_auc(&scores, &labels).ok();
            let (agreement, correlation) = if compared && i > 0 {
                let base = &scored[0][&h];
                (
                    self::agreement(preds, base).ok(),
                    score_correlation(preds, base).ok(),
                )
            } else {
                (None, None)
            };
            rows.push(HorizonMetrics {
                model: name.clone(),
                horizon: h,
                n_eligible: preds.len(),
                auc,
                agreement,
                correlation,
            });
        }
    }
    Ok(EvalReport { rows, compared })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: u32, d: bool) -> SurvivalRecord {
        SurvivalRecord {
            patient_id: format!("{t}{d}"),
            covariates: vec![],
            duration_months: t,
            event: d,
        }
    }

    #[test]
    fn eligibility_rules() {
        assert!(eligible_for_horizon(&rec(8, false), 6) && survived(&rec(8, false), 6));
        assert!(eligible_for_horizon(&rec(3, true), 6) && !survived(&rec(3, true), 6));
        assert!(!eligible_for_horizon(&rec(3, false), 6));
    }

    #[test]
    fn auc_small_example() {
        let auc = roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert_eq!(auc, 0.75);
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5, 0.5], &[false, true]).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::SingleClassLabels)));
    }

    fn preds(scores: &[f64]) -> Vec<HorizonPrediction> {
        scores
            .iter()
            .enumerate()
            .map(|(i, &s)| HorizonPrediction::new(i.to_string(), 6, s, true))
            .collect()
    }

    #[test]
    fn agreement_and_correlation() {
        let a = preds(&[0.9, 0.2, 0.7, 0.4]);
        let b = preds(&[0.1, 0.8, 0.3, 0.6]);
        assert_eq!(agreement(&a, &a).unwrap(), 1.0);
        assert_eq!(agreement(&a, &b).unwrap(), 0.0);
        assert!((score_correlation(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((score_correlation(&a, &b).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(score_correlation(&preds(&[0.3, 0.3]), &preds(&[0.1, 0.2])), Err(Error::ZeroVariance)));
        assert!(matches!(agreement(&a, &a[..3]), Err(Error::PatientSetMismatch)));
    }

    #[test]
    fn boundary_score_predicts_survival() {
        assert!(HorizonPrediction::new("x".into(), 6, 0.5, true).predicted_survives);
        assert!(!HorizonPrediction::new("x".into(), 6, 0.4999, true).predicted_survives);
    }

    #[test]
    fn kaplan_meier_hand_example() {
        let s = kaplan_meier(&[1, 2, 2, 3], &[true, true, false, true], 3).unwrap();
        assert_eq!(s, [1.0, 0.75, 0.5, 0.0]);
    }

    #[test]
    fn kaplan_meier_degenerate() {
        assert_eq!(kaplan_meier(&[0, 0], &[true, true], 2).unwrap()[0], 0.0);
        assert_eq!(kaplan_meier(&[1, 4], &[false, false], 5).unwrap(), [1.0; 6]);
    }
}
