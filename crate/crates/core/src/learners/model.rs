//! The trained-model contract and its on-disk format.
//!
//! A model file is a 13-byte header followed by a UTF-8 JSON body:
//!
//! | bytes  | content                                        |
//! |--------|------------------------------------------------|
//! | 0..4   | magic `DTSM`                                   |
//! | 4      | format version (currently 1)                   |
//! | 5..13  | covariate-schema fingerprint, little-endian u64 |
//! | 13..   | JSON: kind, schema, training summary, encoder, predictor |
//!
//! The header fingerprint must match the fingerprint recomputed from the
//! schema in the body.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{DatasetStats, FeatureSchema};
use crate::encode::EncoderMap;
use crate::error::{Error, Result};
use crate::learners::{DecisionTree, LifeTable, Mlp, RandomForest};

pub const MODEL_MAGIC: &[u8; 4] = b"DTSM";
pub const MODEL_VERSION: u8 = 1;
const HEADER_LEN: usize = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Predictor {
    Tree(DecisionTree),
    Forest(RandomForest),
    Mlp(Mlp),
    #[serde(rename = "lifetable")]
    LifeTable(LifeTable),
    /// Same hazard for every row.
    Constant { hazard: f64 },
}

impl Predictor {
    pub fn kind(&self) -> &'static str {
        match self {
            Predictor::Tree(_) => "tree",
            Predictor::Forest(_) => "forest",
            Predictor::Mlp(_) => "mlp",
            Predictor::LifeTable(_) => "lifetable",
            Predictor::Constant { .. } => "constant",
        }
    }
}

/// What the model saw in training: the month horizon and the distribution of
/// observed durations (used to size bootstrap draws).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub horizon: u32,
    pub duration_histogram: BTreeMap<u32, usize>,
}

impl From<&DatasetStats> for TrainingSummary {
    fn from(s: &DatasetStats) -> Self {
        TrainingSummary {
            horizon: s.max_duration.max(1),
            duration_histogram: s.duration_histogram.clone(),
        }
    }
}

/// A trained hazard classifier. Immutable; safe to share across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardModel {
    covariate_schema: FeatureSchema,
    training: TrainingSummary,
    #[serde(default)]
    encoder: Option<EncoderMap>,
    predictor: Predictor,
}

impl HazardModel {
    pub fn new(covariate_schema: FeatureSchema, training: TrainingSummary, predictor: Predictor) -> Self {
        HazardModel {
            covariate_schema,
            training,
            encoder: None,
            predictor,
        }
    }

    /// Constant-hazard model, mostly useful as a baseline or stub.
    pub fn constant(covariate_schema: FeatureSchema, hazard: f64, training: TrainingSummary) -> Result<Self> {
        if !(0.0..=1.0).contains(&hazard) {
            return Err(Error::InvalidParameter(format!("hazard {hazard} outside [0, 1]")));
        }
        Ok(Self::new(covariate_schema, training, Predictor::Constant { hazard }))
    }

    /// Attach the encoder that maps raw patient fields to this model's covariates.
    pub fn with_encoder(mut self, encoder: EncoderMap) -> Result<Self> {
        let s = encoder.schema();
        if s != self.covariate_schema {
            return Err(Error::SchemaFingerprintMismatch {
                expected: self.fingerprint(),
                found: s.fingerprint(),
            });
        }
        self.encoder = Some(encoder);
        Ok(self)
    }

    pub fn encoder(&self) -> Option<&EncoderMap> {
        self.encoder.as_ref()
    }

    pub fn covariate_schema(&self) -> &FeatureSchema {
        &self.covariate_schema
    }

    pub fn training(&self) -> &TrainingSummary {
        &self.training
    }

    pub fn predictor(&self) -> &Predictor {
        &self.predictor
    }

    pub fn kind(&self) -> &'static str {
        self.predictor.kind()
    }

    /// Fingerprint of the covariate schema (month excluded).
    pub fn fingerprint(&self) -> u64 {
        self.covariate_schema.fingerprint()
    }

    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<()> {
        let found = schema.fingerprint();
        if found != self.fingerprint() {
            return Err(Error::SchemaFingerprintMismatch {
                expected: self.fingerprint(),
                found,
            });
        }
        Ok(())
    }

    /// Hazard for one row: covariates followed by the month.
    pub fn predict_probability(&self, row: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), self.covariate_schema.len() + 1);
        let p = match &self.predictor {
            Predictor::Tree(t) => t.predict(row),
            Predictor::Forest(f) => f.predict(row),
            Predictor::Mlp(m) => m.predict(row),
            Predictor::LifeTable(l) => l.predict(row),
            Predictor::Constant { hazard } => *hazard,
        };
        p.clamp(0.0, 1.0)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let body = serde_json::to_vec(self).expect("model serializes");
        let mut out = Vec::with_capacity(HEADER_LEN + body.len());
        out.extend_from_slice(MODEL_MAGIC);
        out.push(MODEL_VERSION);
        out.extend_from_slice(&self.fingerprint().to_le_bytes());
        out.extend_from_slice(&body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MODEL_MAGIC {
            return Err(Error::CorruptFile("missing model header".into()));
        }
        if bytes[4] != MODEL_VERSION {
            return Err(Error::VersionMismatch {
                found: bytes[4],
                expected: MODEL_VERSION,
            });
        }
        let header_fp = u64::from_le_bytes(bytes[5..13].try_into().expect("8 bytes"));
        let model: HazardModel =
            serde_json::from_slice(&bytes[HEADER_LEN..]).map_err(|e| Error::CorruptFile(e.to_string()))?;
        if model.fingerprint() != header_fp {
            return Err(Error::CorruptFile("header fingerprint does not match the stored schema".into()));
        }
        Ok(model)
    }
}

pub fn save_model(m: &HazardModel, path: &Path) -> Result<()> {
    std::fs::write(path, m.to_bytes()).map_err(Error::at(path))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<HazardModel> {
    HazardModel::from_bytes(&std::fs::read(path).map_err(Error::at(path))?)
}
