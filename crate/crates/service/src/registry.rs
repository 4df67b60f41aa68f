use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use dtsurv::encode::{ColumnEncoding, GeoSource};
use dtsurv::evaluate::DEFAULT_HORIZONS;
use dtsurv::learners::{load_model, HazardModel};
use dtsurv::prognosis::prognosis_grid;
use serde::{Deserialize, Serialize};

use crate::ServiceError;

pub const MODEL_EXTENSION: &str = "model";

/// Loaded models by id (the file stem). Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    models: BTreeMap<String, Arc<HazardModel>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_model(mut self, id: impl Into<String>, m: HazardModel) -> Self {
        self.models.insert(id.into(), Arc::new(m));
        self
    }

    /// Every `*.model` file in `dir`. A file that fails to load fails the
    /// whole registry.
    pub fn load_dir(dir: &Path) -> Result<Self, ServiceError> {
        let mut reg = Registry::new();
        let entries = std::fs::read_dir(dir)
            .map_err(|e| ServiceError::Config(format!("model directory {}: {e}", dir.display())))?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == MODEL_EXTENSION))
            .collect();
        paths.sort();
        for p in paths {
            let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let m = load_model(&p).map_err(|e| ServiceError::Model { path: p.clone(), source: e })?;
            reg.models.insert(id, Arc::new(m));
        }
        Ok(reg)
    }

    pub fn get(&self, id: &str) -> Option<&Arc<HazardModel>> {
        self.models.get(id)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn descriptors(&self) -> Vec<ModelDescriptor> {
        self.models.iter().map(|(id, m)| ModelDescriptor::new(id, m)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Numeric,
    Nominal,
    Address,
    Fips,
}

/// One raw input a client must supply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDescriptor {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: FieldKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

/// What a client needs to build an input form for a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub model_id: String,
    pub kind: String,
    pub fields: Vec<FieldDescriptor>,
    /// Encoded feature names, in model order.
    pub features: Vec<String>,
    pub grid_horizon: u32,
}

impl ModelDescriptor {
    pub fn new(id: &str, m: &HazardModel) -> Self {
        let fields = match m.encoder() {
            Some(enc) => enc
                .columns
                .iter()
                .map(|c| match c {
                    ColumnEncoding::Numeric { column } => FieldDescriptor {
                        name: column.clone(),
                        kind: FieldKind::Numeric,
                        categories: None,
                    },
                    ColumnEncoding::Nominal { column, categories, .. } => FieldDescriptor {
                        name: column.clone(),
                        kind: FieldKind::Nominal,
                        categories: Some(categories.clone()),
                    },
                    ColumnEncoding::Geo { column, source } => FieldDescriptor {
                        name: column.clone(),
                        kind: match source {
                            GeoSource::Address => FieldKind::Address,
                            GeoSource::Fips => FieldKind::Fips,
                        },
                        categories: None,
                    },
                })
                .collect(),
            // without an encoder the covariates are the inputs
            None => m
                .covariate_schema()
                .names()
                .iter()
                .map(|n| FieldDescriptor { name: n.clone(), kind: FieldKind::Numeric, categories: None })
                .collect(),
        };
        ModelDescriptor {
            model_id: id.to_string(),
            kind: m.kind().to_string(),
            fields,
            features: m.covariate_schema().names().to_vec(),
            grid_horizon: prognosis_grid(m, &DEFAULT_HORIZONS).horizon(),
        }
    }
}
