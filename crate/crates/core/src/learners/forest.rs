use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::tree::{self, DecisionTree, TreeParams};
use crate::rng;
use crate::transform::TrainingMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_samples_split: usize,
    pub max_depth: usize,
    /// Fraction of features considered at each split, in (0, 1].
    pub max_features_fraction: f64,
    pub seed: u64,
    /// Resample rows with replacement for each tree.
    pub bootstrap: bool,
    /// Worker threads; `None` uses the global pool.
    #[serde(default)]
    pub threads: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 20,
            min_samples_split: 3,
            max_depth: 10,
            max_features_fraction: 0.8,
            seed: 0,
            bootstrap: true,
            threads: None,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidParameter("n_trees must be at least 1".into()));
        }
        if !(self.max_features_fraction > 0.0 && self.max_features_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "max_features_fraction must lie in (0, 1], got {}",
                self.max_features_fraction
            )));
        }
        tree::validate(&self.tree_params())
    }

    pub fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
        }
    }

    /// `ceil(fraction * n_features)`, at least 1.
    pub fn features_per_split(&self, n_features: usize) -> usize {
        // the epsilon absorbs products like 0.7 * 10 = 7.000000000000001
        let k = (self.max_features_fraction * n_features as f64 - 1e-9).ceil() as usize;
        k.clamp(1, n_features)
    }
}

/// Bagged trees; the prediction is the mean of the trees' probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
}

impl RandomForest {
    pub fn fit(m: &TrainingMatrix<'_>, params: &ForestParams) -> Result<Self> {
        params.validate()?;
        let pos = m.n_positive();
        if pos == 0 || pos == m.n_rows() {
            return Err(Error::SingleClassData);
        }
        let k = params.features_per_split(m.n_cols);
        let tp = params.tree_params();
        let n = m.n_rows();
        let grow = |t: usize| {
            let mut rng = rng::stream(params.seed, t as u64);
            let mut rows: Vec<u32> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n as u32)).collect()
            } else {
                (0..n as u32).collect()
            };
            let tree = DecisionTree::fit_rows(m, &mut rows, &tp, k, Some(&mut rng));
            log::info!("tree {}/{} grown: {} nodes, depth {}", t + 1, params.n_trees, tree.nodes().len(), tree.depth());
            tree
        };
        let trees = match params.threads {
            Some(threads) => rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::InvalidParameter(e.to_string()))?
                .install(|| (0..params.n_trees).into_par_iter().map(grow).collect()),
            None => (0..params.n_trees).into_par_iter().map(grow).collect(),
        };
        Ok(RandomForest { trees })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }
}
