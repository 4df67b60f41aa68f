use serde::{Deserialize, Serialize};

use crate::transform::TrainingMatrix;

/// Covariate-free hazard: deaths over rows at risk, per month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifeTable {
    deaths: Vec<u64>,
    at_risk: Vec<u64>,
}

impl LifeTable {
    /// Counts rows and positive rows per value of the month column (the last one).
    pub fn fit(m: &TrainingMatrix<'_>) -> Self {
        let mut deaths: Vec<u64> = Vec::new();
        let mut at_risk: Vec<u64> = Vec::new();
        for i in 0..m.n_rows() {
            let month = month_index(m.row(i)[m.n_cols - 1]);
            if month >= at_risk.len() {
                at_risk.resize(month + 1, 0);
                deaths.resize(month + 1, 0);
            }
            at_risk[month] += 1;
            deaths[month] += m.targets[i] as u64;
        }
        LifeTable { deaths, at_risk }
    }

    pub fn deaths(&self) -> &[u64] {
        &self.deaths
    }

    pub fn at_risk(&self) -> &[u64] {
        &self.at_risk
    }

    /// `d_t / n_t`; months past the table repeat the last observed hazard.
    pub fn hazard(&self, month: usize) -> f64 {
        if self.at_risk.is_empty() {
            return 0.0;
        }
        let mut t = month.min(self.at_risk.len() - 1);
        // months without rows inside the table fall back to the nearest earlier month
        while t > 0 && self.at_risk[t] == 0 {
            t -= 1;
        }
        if self.at_risk[t] == 0 {
            return 0.0;
        }
        self.deaths[t] as f64 / self.at_risk[t] as f64
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.hazard(month_index(x[x.len() - 1]))
    }
}

fn month_index(v: f64) -> usize {
    if v.is_finite() && v > 0.0 {
        v.round() as usize
    } else {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_patient_table() {
        // expanded rows of (T=3, D=1) and (T=3, D=0); month is the only column
        let x = [0.0, 1.0, 2.0, 3.0, 0.0, 1.0, 2.0, 3.0];
        let y = [false, false, false, true, false, false, false, false];
        let lt = LifeTable::fit(&TrainingMatrix::new(1, &x, &y).unwrap());
        assert_eq!((0..4).map(|t| lt.hazard(t)).collect::<Vec<_>>(), [0.0, 0.0, 0.0, 0.5]);
        assert_eq!(lt.hazard(40), 0.5);
        assert_eq!(lt.predict(&[3.0]), 0.5);
    }

    #[test]
    fn all_censored_is_zero() {
        let x = [0.0, 1.0, 0.0];
        let y = [false; 3];
        let lt = LifeTable::fit(&TrainingMatrix::new(1, &x, &y).unwrap());
        assert!((0..10).all(|t| lt.hazard(t) == 0.0));
    }
}
