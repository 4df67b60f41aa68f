//! Probabilistic binary classifiers that learn the monthly hazard from
//! expanded rows, all exposed through [`HazardModel`].

mod forest;
mod lifetable;
mod mlp;
mod model;
mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use forest::{ForestParams, RandomForest};
pub use lifetable::LifeTable;
pub use mlp::{EpochStats, MinMaxScaler, Mlp, MlpParams};
pub use model::{load_model, save_model, HazardModel, Predictor, TrainingSummary, MODEL_MAGIC, MODEL_VERSION};
pub use tree::{best_split, gini, DecisionTree, Node, SplitCandidate, TreeParams};

use crate::config;
use crate::error::{Error, Result};
use crate::transform::ExpandedDataset;

fn wrap(e: &ExpandedDataset, predictor: Predictor) -> HazardModel {
    HazardModel::new(e.covariate_schema(), TrainingSummary::from(e.source_stats()), predictor)
}

pub fn train_tree(e: &ExpandedDataset, params: &TreeParams) -> Result<HazardModel> {
    Ok(wrap(e, Predictor::Tree(DecisionTree::fit(&e.matrix(), params)?)))
}

pub fn train_forest(e: &ExpandedDataset, params: &ForestParams) -> Result<HazardModel> {
    Ok(wrap(e, Predictor::Forest(RandomForest::fit(&e.matrix(), params)?)))
}

pub fn train_mlp(e: &ExpandedDataset, params: &MlpParams) -> Result<HazardModel> {
    train_mlp_with_log(e, params).map(|(m, _)| m)
}

pub fn train_mlp_with_log(e: &ExpandedDataset, params: &MlpParams) -> Result<(HazardModel, Vec<EpochStats>)> {
    let (net, log) = Mlp::fit(&e.matrix(), params)?;
    Ok((wrap(e, Predictor::Mlp(net)), log))
}

pub fn train_life_table(e: &ExpandedDataset) -> HazardModel {
    wrap(e, Predictor::LifeTable(LifeTable::fit(&e.matrix())))
}

/// A model kind with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    Tree(TreeParams),
    Forest(ForestParams),
    Mlp(MlpParams),
    #[serde(rename = "lifetable")]
    LifeTable,
}

/// Names accepted by [`ModelConfig::preset`].
pub const PRESETS: [&str; 6] = ["breast-rf", "colon-rf", "lung-rf", "breast-nn", "colon-nn", "lung-nn"];

impl ModelConfig {
    /// Defaults for a model kind: `tree`, `forest`, `mlp` or `lifetable`.
    pub fn for_kind(kind: &str) -> Result<Self> {
        Ok(match kind {
            "tree" => ModelConfig::Tree(TreeParams::default()),
            "forest" => ModelConfig::Forest(ForestParams::default()),
            "mlp" => ModelConfig::Mlp(MlpParams::default()),
            "lifetable" => ModelConfig::LifeTable,
            other => return Err(Error::InvalidParameter(format!("unknown model kind `{other}`"))),
        })
    }

    /// The six published registry configurations (breast, colon and lung; random
    /// forest and neural network each).
    pub fn preset(name: &str) -> Result<Self> {
        let forest = |n_trees, max_depth, max_features_fraction, seed| {
            ModelConfig::Forest(ForestParams {
                n_trees,
                min_samples_split: 3,
                max_depth,
                max_features_fraction,
                seed,
                bootstrap: true,
                threads: Some(5),
            })
        };
        let mlp = |hidden: [usize; 3], dropout: f64, batch_size, epochs| {
            ModelConfig::Mlp(MlpParams {
                hidden: hidden.to_vec(),
                dropout: vec![dropout; 3],
                learning_rate: 0.001,
                batch_size,
                epochs,
                ..MlpParams::default()
            })
        };
        Ok(match name {
            "breast-rf" => forest(20, 15, 0.8, 33),
            "colon-rf" => forest(25, 10, 0.5, 3),
            "lung-rf" => forest(25, 11, 0.8, 3),
            "breast-nn" => mlp([114, 50, 36], 0.05, 1500, 200),
            "colon-nn" => mlp([114, 50, 35], 0.05, 1500, 200),
            "lung-nn" => mlp([114, 80, 40], 0.1, 2000, 50),
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown preset `{other}` (known: {})",
                    PRESETS.join(", ")
                )))
            }
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ModelConfig::Tree(_) => "tree",
            ModelConfig::Forest(_) => "forest",
            ModelConfig::Mlp(_) => "mlp",
            ModelConfig::LifeTable => "lifetable",
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ModelConfig::Forest(p) => p.seed = seed,
            ModelConfig::Mlp(p) => p.seed = seed,
            ModelConfig::Tree(_) | ModelConfig::LifeTable => {}
        }
    }

    pub fn set_threads(&mut self, threads: Option<usize>) {
        if let ModelConfig::Forest(p) = self {
            p.threads = threads;
        }
    }

    /// Apply `key value...` lines from a parameter file, e.g.
    /// `n_trees 25`, `hidden 64 32`, `dropout 0.1 0.1`.
    pub fn apply_overrides(&mut self, text: &str) -> Result<()> {
        let kind = self.kind();
        for d in config::parse(text)? {
            let unknown = || d.error(format!("`{}` is not a {kind} parameter", d.key()));
            match self {
                ModelConfig::Tree(p) => match d.key() {
                    "max_depth" => p.max_depth = d.single()?,
                    "min_samples_split" => p.min_samples_split = d.single()?,
                    _ => return Err(unknown()),
                },
                ModelConfig::Forest(p) => match d.key() {
                    "n_trees" => p.n_trees = d.single()?,
                    "max_depth" => p.max_depth = d.single()?,
                    "min_samples_split" => p.min_samples_split = d.single()?,
                    "max_features" | "max_features_fraction" => p.max_features_fraction = d.single()?,
                    "seed" => p.seed = d.single()?,
                    "bootstrap" => p.bootstrap = d.single()?,
                    "threads" => p.threads = Some(d.single()?),
                    _ => return Err(unknown()),
                },
                ModelConfig::Mlp(p) => match d.key() {
                    "hidden" => {
                        p.hidden = (0..d.args().len()).map(|i| d.parse_arg(i)).collect::<Result<_>>()?;
                        if p.dropout.len() != p.hidden.len() {
                            let rate = p.dropout.first().copied().unwrap_or(0.0);
                            p.dropout = vec![rate; p.hidden.len()];
                        }
                    }
                    "dropout" => {
                        let rates: Vec<f64> = (0..d.args().len()).map(|i| d.parse_arg(i)).collect::<Result<_>>()?;
                        p.dropout = if rates.len() == 1 { vec![rates[0]; p.hidden.len()] } else { rates };
                    }
                    "learning_rate" | "lr" => p.learning_rate = d.single()?,
                    "batch_size" => p.batch_size = d.single()?,
                    "epochs" => p.epochs = d.single()?,
                    "seed" => p.seed = d.single()?,
                    "rho" => p.rho = d.single()?,
                    "epsilon" => p.epsilon = d.single()?,
                    "init_std" => p.init_std = d.single()?,
                    "validation_fraction" => p.validation_fraction = d.single()?,
                    _ => return Err(unknown()),
                },
                ModelConfig::LifeTable => return Err(unknown()),
            }
        }
        Ok(())
    }

    pub fn apply_overrides_file(&mut self, path: &Path) -> Result<()> {
        self.apply_overrides(&std::fs::read_to_string(path).map_err(Error::at(path))?)
            .map_err(|e| e.with_path(path))
    }
}

/// What training produced besides the model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub epochs: Vec<EpochStats>,
}

pub fn train(e: &ExpandedDataset, config: &ModelConfig) -> Result<(HazardModel, TrainingLog)> {
    Ok(match config {
        ModelConfig::Tree(p) => (train_tree(e, p)?, TrainingLog::default()),
        ModelConfig::Forest(p) => (train_forest(e, p)?, TrainingLog::default()),
        ModelConfig::Mlp(p) => {
            let (m, epochs) = train_mlp_with_log(e, p)?;
            (m, TrainingLog { epochs })
        }
        ModelConfig::LifeTable => (train_life_table(e), TrainingLog::default()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_published_configurations() {
        match ModelConfig::preset("breast-rf").unwrap() {
            ModelConfig::Forest(p) => {
                assert_eq!((p.n_trees, p.min_samples_split, p.max_depth), (20, 3, 15));
                assert_eq!((p.max_features_fraction, p.seed), (0.8, 33));
            }
            c => panic!("{c:?}"),
        }
        match ModelConfig::preset("colon-rf").unwrap() {
            ModelConfig::Forest(p) => assert_eq!((p.n_trees, p.max_depth, p.max_features_fraction), (25, 10, 0.5)),
            c => panic!("{c:?}"),
        }
        match ModelConfig::preset("lung-nn").unwrap() {
            ModelConfig::Mlp(p) => {
                assert_eq!(p.hidden, [114, 80, 40]);
                assert_eq!(p.dropout, [0.1; 3]);
                assert_eq!((p.batch_size, p.epochs, p.learning_rate), (2000, 50, 0.001));
            }
            c => panic!("{c:?}"),
        }
        match ModelConfig::preset("colon-nn").unwrap() {
            ModelConfig::Mlp(p) => assert_eq!((p.hidden.clone(), p.batch_size, p.epochs), (vec![114, 50, 35], 1500, 200)),
            c => panic!("{c:?}"),
        }
        for name in PRESETS {
            assert!(ModelConfig::preset(name).is_ok());
        }
        assert!(ModelConfig::preset("kidney-rf").is_err());
    }

    #[test]
    fn overrides() {
        let mut c = ModelConfig::for_kind("mlp").unwrap();
        c.apply_overrides("hidden 8 4 2\ndropout 0.2\nlr 0.01\nepochs 3\n").unwrap();
        match &c {
            ModelConfig::Mlp(p) => {
                assert_eq!(p.hidden, [8, 4, 2]);
                assert_eq!(p.dropout, [0.2; 3]);
                assert_eq!((p.learning_rate, p.epochs), (0.01, 3));
            }
            c => panic!("{c:?}"),
        }
        let err = ModelConfig::for_kind("forest").unwrap().apply_overrides("n_trees 2\nwidth 3\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: Some(2), .. }));
        assert!(ModelConfig::for_kind("svm").is_err());
    }
}
