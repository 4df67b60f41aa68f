//! Censored survival data with a known hazard per group, so that fitted
//! models can be checked against exact answers.
//!
//! Specs are line-based config files:
//!
//! ```text
//! patients 20000
//! seed 7
//! horizon 60
//! censoring geometric 0.02
//! features x
//! noise 0.1
//! group low  0.5 constant 0.05 covariates 0
//! group high 0.5 weibull 0.9 1.3 covariates 1
//! ```
//!
//! Hazards are `constant p`, `weibull q beta` (hazard
//! `1 - q^((t+1)^beta - t^beta)`) or `table p0 p1 ...` (the last value repeats).
//! Censoring is `none`, `geometric c` (censored in month `t` with probability
//! `c`, after surviving that month's hazard) or `cutoff k` (administrative end
//! of follow-up at month `k`). The group index is the first covariate of
//! every generated record.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::config::{self, quote};
use crate::data::{Dataset, FeatureSchema, SurvivalRecord};
use crate::error::{Error, Result};
use crate::rng;
use crate::survival::SurvivalCurve;

pub const GROUP_FEATURE: &str = "group";

#[derive(Debug, Clone, PartialEq)]
pub enum HazardFn {
    Constant(f64),
    Weibull { q: f64, beta: f64 },
    /// Month-indexed hazards; months past the end reuse the last value.
    Table(Vec<f64>),
}

impl HazardFn {
    pub fn at(&self, t: u32) -> f64 {
        match self {
            HazardFn::Constant(p) => *p,
            HazardFn::Weibull { q, beta } => {
                let t = t as f64;
                1.0 - q.powf((t + 1.0).powf(*beta) - t.powf(*beta))
            }
            HazardFn::Table(v) => v[(t as usize).min(v.len() - 1)],
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let unit = |p: f64| p.is_finite() && (0.0..=1.0).contains(&p);
        match self {
            HazardFn::Constant(p) if !unit(*p) => Err(format!("hazard {p} outside [0, 1]")),
            HazardFn::Weibull { q, beta } if !unit(*q) || !(beta.is_finite() && *beta > 0.0) => {
                Err(format!("weibull needs q in [0, 1] and beta > 0, got q={q} beta={beta}"))
            }
            HazardFn::Table(v) if v.is_empty() => Err("hazard table is empty".into()),
            HazardFn::Table(v) => match v.iter().find(|p| !unit(**p)) {
                Some(p) => Err(format!("hazard {p} outside [0, 1]")),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Censoring {
    None,
    Geometric(f64),
    /// Follow-up ends at this month.
    Cutoff(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec {
    pub name: String,
    pub weight: f64,
    pub hazard: HazardFn,
    /// One value per entry of [`SyntheticSpec::features`].
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_patients: usize,
    pub seed: u64,
    /// Last month of follow-up; patients alive then are censored at `horizon`.
    pub horizon: u32,
    pub censoring: Censoring,
    /// Gaussian noise standard deviation added to template covariates.
    pub noise: f64,
    pub features: Vec<String>,
    pub groups: Vec<GroupSpec>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_patients == 0 {
            return bad("spec needs at least one patient".into());
        }
        if self.groups.is_empty() {
            return bad("spec needs at least one group".into());
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return bad(format!("noise {} must be a non-negative number", self.noise));
        }
        if let Censoring::Geometric(c) = self.censoring {
            if !(c.is_finite() && (0.0..=1.0).contains(&c)) {
                return bad(format!("censoring probability {c} outside [0, 1]"));
            }
        }
        for g in &self.groups {
            if !(g.weight.is_finite() && g.weight >= 0.0) {
                return bad(format!("group `{}` has weight {}", g.name, g.weight));
            }
            if g.covariates.len() != self.features.len() {
                return bad(format!(
                    "group `{}` has {} covariates for {} features",
                    g.name,
                    g.covariates.len(),
                    self.features.len()
                ));
            }
            g.hazard.validate().or_else(|m| bad(format!("group `{}`: {m}", g.name)))?;
        }
        let total: f64 = self.groups.iter().map(|g| g.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("group weights sum to {total}, not 1"));
        }
        Ok(())
    }

    pub fn schema(&self) -> FeatureSchema {
        FeatureSchema::new(std::iter::once(GROUP_FEATURE).chain(self.features.iter().map(String::as_str)))
    }

    pub fn group_index(&self, name: &str) -> Result<usize> {
        self.groups
            .iter()
            .position(|g| g.name == name)
            .ok_or_else(|| Error::UnknownGroup(name.to_string()))
    }

    /// Month at which follow-up ends for everyone.
    fn last_month(&self) -> u32 {
        match self.censoring {
            Censoring::Cutoff(k) => k.min(self.horizon),
            _ => self.horizon,
        }
    }

    /// `P(C >= t)`: probability the patient is still under observation at the
    /// start of month `t`, ignoring death.
    fn observed_through(&self, t: u32) -> f64 {
        if t > self.last_month() {
            return 0.0;
        }
        match self.censoring {
            Censoring::Geometric(c) => (1.0 - c).powi(t as i32),
            _ => 1.0,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = SyntheticSpec {
            n_patients: 0,
            seed: 0,
            horizon: 0,
            censoring: Censoring::None,
            noise: 0.0,
            features: Vec::new(),
            groups: Vec::new(),
        };
        let mut seen_patients = false;
        let mut seen_horizon = false;
        let mut last_line = 0;
        for d in config::parse(text)? {
            last_line = d.line;
            match d.key() {
                "patients" => {
                    spec.n_patients = d.single()?;
                    seen_patients = true;
                }
                "seed" => spec.seed = d.single()?,
                "horizon" => {
                    spec.horizon = d.single()?;
                    seen_horizon = true;
                }
                "noise" => spec.noise = d.single()?,
                "features" => spec.features = d.args().to_vec(),
                "censoring" => {
                    spec.censoring = match d.args().first().map(String::as_str) {
                        Some("none") if d.args().len() == 1 => Censoring::None,
                        Some("geometric") if d.args().len() == 2 => Censoring::Geometric(d.parse_arg(1)?),
                        Some("cutoff") if d.args().len() == 2 => Censoring::Cutoff(d.parse_arg(1)?),
                        _ => return Err(d.error("expected `censoring none`, `censoring geometric <c>` or `censoring cutoff <month>`")),
                    }
                }
                "group" => spec.groups.push(parse_group(&d)?),
                other => return Err(d.error(format!("unknown directive `{other}`"))),
            }
        }
        if !seen_patients || !seen_horizon {
            return Err(Error::config(last_line.max(1), "spec needs `patients` and `horizon` lines"));
        }
        spec.validate().map_err(|e| match e {
            Error::InvalidParameter(m) => Error::Config { path: None, line: None, message: m },
            e => e,
        })?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(Error::at(path))?).map_err(|e| e.with_path(path))
    }

    pub fn to_config(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "patients {}", self.n_patients);
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "horizon {}", self.horizon);
        let _ = match self.censoring {
            Censoring::None => writeln!(out, "censoring none"),
            Censoring::Geometric(c) => writeln!(out, "censoring geometric {c}"),
            Censoring::Cutoff(k) => writeln!(out, "censoring cutoff {k}"),
        };
        let _ = writeln!(out, "noise {}", self.noise);
        if !self.features.is_empty() {
            let names: Vec<String> = self.features.iter().map(|f| quote(f)).collect();
            let _ = writeln!(out, "features {}", names.join(" "));
        }
        for g in &self.groups {
            let hazard = match &g.hazard {
                HazardFn::Constant(p) => format!("constant {p}"),
                HazardFn::Weibull { q, beta } => format!("weibull {q} {beta}"),
                HazardFn::Table(v) => {
                    let vals: Vec<String> = v.iter().map(f64::to_string).collect();
                    format!("table {}", vals.join(" "))
                }
            };
            let _ = write!(out, "group {} {} {hazard}", quote(&g.name), g.weight);
            if !g.covariates.is_empty() {
                let vals: Vec<String> = g.covariates.iter().map(f64::to_string).collect();
                let _ = write!(out, " covariates {}", vals.join(" "));
            }
            out.push('\n');
        }
        out
    }
}

fn parse_group(d: &config::Directive) -> Result<GroupSpec> {
    let args = d.args();
    if args.len() < 3 {
        return Err(d.error("expected `group <name> <weight> <hazard> <params...> [covariates ...]`"));
    }
    let name = args[0].clone();
    let weight: f64 = d.parse_arg(1)?;
    let split = args.iter().position(|a| a == "covariates").unwrap_or(args.len());
    let params: Vec<f64> = (3..split).map(|i| d.parse_arg(i)).collect::<Result<_>>()?;
    let covariates: Vec<f64> = (split + 1..args.len()).map(|i| d.parse_arg(i)).collect::<Result<_>>()?;
    let hazard = match (args[2].as_str(), params.as_slice()) {
        ("constant", [p]) => HazardFn::Constant(*p),
        ("weibull", [q, beta]) => HazardFn::Weibull { q: *q, beta: *beta },
        ("table", v) if !v.is_empty() => HazardFn::Table(v.to_vec()),
        (kind, _) => {
            return Err(d.error(format!(
                "bad hazard `{kind}` with {} parameters (constant p | weibull q beta | table p...)",
                params.len()
            )))
        }
    };
    Ok(GroupSpec { name, weight, hazard, covariates })
}

fn pick_group(spec: &SyntheticSpec, u: f64) -> usize {
    let mut acc = 0.0;
    for (i, g) in spec.groups.iter().enumerate() {
        acc += g.weight;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the last cumulative weight
    spec.groups.iter().rposition(|g| g.weight > 0.0).unwrap_or(0)
}

/// Draw the cohort. Each patient uses its own RNG stream, so the output does
/// not depend on thread scheduling.
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let last = spec.last_month();
    let noise = Normal::new(0.0, spec.noise).expect("validated noise");
    let width = spec.n_patients.to_string().len();
    let records: Vec<SurvivalRecord> = (0..spec.n_patients)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(spec.seed, i as u64);
            let g = pick_group(spec, r.random::<f64>());
            let group = &spec.groups[g];
            let mut covariates = Vec::with_capacity(spec.features.len() + 1);
            covariates.push(g as f64);
            for &c in &group.covariates {
                covariates.push(if spec.noise > 0.0 { c + noise.sample(&mut r) } else { c });
            }
            // walk months: death first, then censoring, so same-month ties are deaths
            let mut t = 0;
            let (duration, event) = loop {
                if r.random::<f64>() < group.hazard.at(t) {
                    break (t, true);
                }
                let censored = match spec.censoring {
                    Censoring::Geometric(c) => r.random::<f64>() < c,
                    _ => false,
                };
                if censored || t >= last {
                    break (t, false);
                }
                t += 1;
            };
            SurvivalRecord {
                patient_id: format!("s{:0width$}", i + 1),
                covariates,
                duration_months: duration,
                event,
            }
        })
        .collect();
    Dataset::new(spec.schema(), records)
}

/// Exact `S*(t) = Π_{j≤t} (1 − λ*(j))` for `t = 0..=horizon`.
pub fn oracle_survival(spec: &SyntheticSpec, group: &str) -> Result<SurvivalCurve> {
    let g = &spec.groups[spec.group_index(group)?];
    SurvivalCurve::new(oracle_values(&g.hazard, spec.horizon))
}

fn oracle_values(h: &HazardFn, horizon: u32) -> Vec<f64> {
    let mut s = 1.0;
    (0..=horizon)
        .map(|t| {
            s *= 1.0 - h.at(t);
            s
        })
        .collect()
}

/// `P(Y >= t)` for the group: survival through month `t - 1`.
fn alive_at_start(h: &HazardFn, t: u32) -> f64 {
    (0..t).map(|j| 1.0 - h.at(j)).product()
}

/// Probability that a generated patient's record ends in death.
pub fn oracle_event_probability(spec: &SyntheticSpec) -> f64 {
    let last = spec.last_month();
    spec.groups
        .iter()
        .map(|g| {
            let mut alive = 1.0;
            let mut p = 0.0;
            for y in 0..=last {
                let lam = g.hazard.at(y);
                p += alive * lam * spec.observed_through(y);
                alive *= 1.0 - lam;
            }
            g.weight * p
        })
        .sum()
}

/// AUC of the classifier scoring each patient by their group's `S*(h)`,
/// against survival past `h` months, over the patients the evaluation would
/// count: deaths, and patients followed for at least `h` months.
///
/// Positives in group `g` have mass `w_g P(Y ≥ h) P(C ≥ h)`; negatives have
/// mass `w_g Σ_{y<h} P(Y = y) P(C ≥ y)`. Pairs from groups with equal scores
/// earn half credit.
pub fn oracle_horizon_auc(spec: &SyntheticSpec, h: u32) -> Result<f64> {
    let scores: Vec<f64> = spec
        .groups
        .iter()
        .map(|g| oracle_values(&g.hazard, h)[h as usize])
        .collect();
    if spec.groups.len() < 2 || scores.iter().all(|&s| s == scores[0]) {
        return Err(Error::DegenerateSpec(format!("all groups share S*({h})")));
    }
    let pos: Vec<f64> = spec
        .groups
        .iter()
        .map(|g| g.weight * alive_at_start(&g.hazard, h) * spec.observed_through(h))
        .collect();
    let neg: Vec<f64> = spec
        .groups
        .iter()
        .map(|g| {
            let mut alive = 1.0;
            let mut m = 0.0;
            for y in 0..h.min(spec.last_month() + 1) {
                let lam = g.hazard.at(y);
                m += alive * lam * spec.observed_through(y);
                alive *= 1.0 - lam;
            }
            g.weight * m
        })
        .collect();
    let (total_pos, total_neg): (f64, f64) = (pos.iter().sum(), neg.iter().sum());
    if total_pos == 0.0 || total_neg == 0.0 {
        return Err(Error::DegenerateSpec(format!("no survivors or no deaths at horizon {h}")));
    }
    let mut concordant = 0.0;
    for (a, &sa) in scores.iter().enumerate() {
        for (b, &sb) in scores.iter().enumerate() {
            let credit = if sa > sb {
                1.0
            } else if sa == sb {
                0.5
            } else {
                0.0
            };
            concordant += credit * pos[a] * neg[b];
        }
    }
    Ok(concordant / (total_pos * total_neg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(groups: Vec<GroupSpec>, censoring: Censoring, n: usize) -> SyntheticSpec {
        SyntheticSpec {
            n_patients: n,
            seed: 1,
            horizon: 60,
            censoring,
            noise: 0.0,
            features: vec![],
            groups,
        }
    }

    fn group(name: &str, weight: f64, hazard: HazardFn) -> GroupSpec {
        GroupSpec { name: name.into(), weight, hazard, covariates: vec![] }
    }

    #[test]
    fn certain_death() {
        let d = generate(&spec(vec![group("a", 1.0, HazardFn::Constant(1.0))], Censoring::None, 50)).unwrap();
        assert!(d.records().iter().all(|r| r.duration_months == 0 && r.event));
    }

    #[test]
    fn cutoff_zero() {
        let s = spec(vec![group("a", 1.0, HazardFn::Constant(0.3))], Censoring::Cutoff(0), 2000);
        let d = generate(&s).unwrap();
        assert!(d.records().iter().all(|r| r.duration_months == 0));
        let deaths = d.records().iter().filter(|r| r.event).count() as f64 / 2000.0;
        assert!((deaths - 0.3).abs() < 0.04, "{deaths}");
    }

    #[test]
    fn certain_censoring_at_month_zero() {
        let s = spec(vec![group("a", 1.0, HazardFn::Constant(0.0))], Censoring::Geometric(1.0), 20);
        assert!(generate(&s).unwrap().records().iter().all(|r| r.duration_months == 0 && !r.event));
    }

    #[test]
    fn oracle_closed_forms() {
        let s = spec(
            vec![
                group("zero", 0.5, HazardFn::Constant(0.0)),
                group("half", 0.5, HazardFn::Constant(0.5)),
            ],
            Censoring::None,
            1,
        );
        assert!(oracle_survival(&s, "zero").unwrap().values().iter().all(|&v| v == 1.0));
        let half = oracle_survival(&s, "half").unwrap();
        for t in 0..=10u32 {
            assert!((half.at(t).unwrap() - 0.5f64.powi(t as i32 + 1)).abs() < 1e-15);
        }
        assert!(matches!(oracle_survival(&s, "other"), Err(Error::UnknownGroup(_))));
    }

    #[test]
    fn weibull_beta_one_is_constant() {
        let h = HazardFn::Weibull { q: 0.8, beta: 1.0 };
        for t in 0..20 {
            assert!((h.at(t) - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_auc_specs() {
        let one = spec(vec![group("a", 1.0, HazardFn::Constant(0.1))], Censoring::None, 1);
        assert!(matches!(oracle_horizon_auc(&one, 6), Err(Error::DegenerateSpec(_))));
        let same = spec(
            vec![group("a", 0.5, HazardFn::Constant(0.1)), group("b", 0.5, HazardFn::Constant(0.1))],
            Censoring::None,
            1,
        );
        assert!(matches!(oracle_horizon_auc(&same, 6), Err(Error::DegenerateSpec(_))));
    }

    #[test]
    fn reproducible_and_weights_checked() {
        let s = spec(
            vec![group("a", 0.5, HazardFn::Constant(0.1)), group("b", 0.5, HazardFn::Constant(0.3))],
            Censoring::Geometric(0.05),
            300,
        );
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
        let mut bad = s.clone();
        bad.groups[0].weight = 0.6;
        assert!(generate(&bad).is_err());
    }

    #[test]
    fn config_round_trip() {
        let text = "patients 100\nseed 4\nhorizon 24\ncensoring geometric 0.02\nnoise 0.5\nfeatures x y\n\
                    group low 0.25 constant 0.05 covariates 0 1\n\
                    group mid 0.25 weibull 0.9 1.5 covariates 1 1\n\
                    group high 0.5 table 0.1 0.2 0.3 covariates 2 0\n";
        let s = SyntheticSpec::parse(text).unwrap();
        assert_eq!(s.groups[2].hazard, HazardFn::Table(vec![0.1, 0.2, 0.3]));
        assert_eq!(SyntheticSpec::parse(&s.to_config()).unwrap(), s);
        assert_eq!(s.schema().names(), ["group", "x", "y"]);
    }

    #[test]
    fn config_errors() {
        let unbalanced = "patients 10\nhorizon 5\ngroup a 0.5 constant 0.1\ngroup b 0.4 constant 0.2\n";
        assert!(matches!(SyntheticSpec::parse(unbalanced), Err(Error::Config { .. })));
        let bad_kind = "patients 10\nhorizon 5\ngroup a 1 gamma 0.1\n";
        assert!(matches!(SyntheticSpec::parse(bad_kind), Err(Error::Config { line: Some(3), .. })));
        assert!(SyntheticSpec::parse("horizon 5\ngroup a 1 constant 0.1\n").is_err());
    }
}
