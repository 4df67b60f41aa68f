//! Discrete-time survival analysis with off-the-shelf binary classifiers.
//!
//! A censored record `(X, T, D)` becomes `T + 1` person-month rows
//! ([`transform::expand`]). Any probabilistic classifier trained on those rows
//! estimates the monthly hazard `λ(X, t)`, from which the survival curve
//! `S(X, t) = Π_{j≤t} (1 − λ(X, j))` follows ([`survival`]).
//!
//! ```
//! use dtsurv::data::{Dataset, FeatureSchema, SurvivalRecord};
//! use dtsurv::transform::expand;
//!
//! let d = Dataset::new(
//!     FeatureSchema::new(["age"]),
//!     vec![SurvivalRecord { patient_id: "p1".into(), covariates: vec![61.0], duration_months: 3, event: true }],
//! )?;
//! let e = expand(&d)?;
//! assert_eq!(e.len(), 4);
//! assert_eq!(e.targets(), [false, false, false, true]);
//! # Ok::<(), dtsurv::Error>(())
//! ```
//!
//! The guide under `book/` walks through each stage; its code blocks run as
//! doc-tests of this crate.

pub mod config;
pub mod data;
pub mod encode;
pub mod error;
pub mod evaluate;
pub mod io;
pub mod learners;
pub mod prognosis;
pub mod rng;
pub mod survival;
pub mod synthgen;
pub mod transform;

pub use data::{dataset_stats, Dataset, DatasetStats, FeatureSchema, MonthGrid, SurvivalRecord};
pub use error::{Error, Result};
pub use learners::{HazardModel, ModelConfig};
pub use survival::{HazardCurve, SurvivalCurve};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/expansion.md")]
    mod expansion {}
    #[doc = include_str!("../../../book/src/hazard-to-survival.md")]
    mod hazard_to_survival {}
    #[doc = include_str!("../../../book/src/learners.md")]
    mod learners {}
    #[doc = include_str!("../../../book/src/bands.md")]
    mod bands {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/encoding.md")]
    mod encoding {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
}
