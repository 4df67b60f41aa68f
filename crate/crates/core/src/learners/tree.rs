use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::TrainingMatrix;

/// Minimum impurity decrease for a split, and the margin a later candidate
/// must beat an earlier one by. Keeps equal-gain ties on the first candidate.
const GAIN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 10,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        probability: f64,
        n_samples: usize,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        n_samples: usize,
    },
}

impl Node {
    pub fn n_samples(&self) -> usize {
        match self {
            Node::Leaf { n_samples, .. } | Node::Split { n_samples, .. } => *n_samples,
        }
    }
}

/// Binary classification tree grown with Gini impurity. Leaves hold the
/// positive fraction of the training rows that reached them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    n_features: usize,
    nodes: Vec<Node>,
}

/// Gini impurity of a node with `pos` positives among `n` rows.
pub fn gini(n: usize, pos: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Best Gini split of `rows` over `features` (scanned in the given order).
/// Thresholds are midpoints between consecutive distinct values.
pub fn best_split(m: &TrainingMatrix<'_>, rows: &[u32], features: &[usize]) -> Option<SplitCandidate> {
    let n = rows.len();
    let pos: usize = rows.iter().filter(|&&r| m.targets[r as usize]).count();
    let parent = gini(n, pos);
    let mut best: Option<SplitCandidate> = None;
    let mut column: Vec<(f64, bool)> = Vec::with_capacity(n);
    for &f in features {
        column.clear();
        column.extend(
            rows.iter()
                .map(|&r| (m.features[r as usize * m.n_cols + f], m.targets[r as usize])),
        );
        column.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let mut left_pos = 0usize;
        for i in 0..n - 1 {
            left_pos += column[i].1 as usize;
            let (lo, hi) = (column[i].0, column[i + 1].0);
            if lo == hi {
                continue;
            }
            let nl = i + 1;
            let nr = n - nl;
            let child = (nl as f64 * gini(nl, left_pos) + nr as f64 * gini(nr, pos - left_pos)) / n as f64;
            let gain = parent - child;
            let floor = best.map_or(GAIN_EPS, |b| b.gain + GAIN_EPS);
            if gain > floor {
                let mid = lo + (hi - lo) / 2.0;
                let threshold = if mid < hi { mid } else { lo };
                best = Some(SplitCandidate {
                    feature: f,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}

struct Builder<'a, 'm, R> {
    m: &'a TrainingMatrix<'m>,
    params: TreeParams,
    max_features: usize,
    rng: Option<&'a mut R>,
    nodes: Vec<Node>,
}

impl<R: Rng> Builder<'_, '_, R> {
    fn candidate_features(&mut self) -> Vec<usize> {
        let n = self.m.n_cols;
        match self.rng.as_deref_mut() {
            Some(rng) if self.max_features < n => {
                let mut f = index::sample(rng, n, self.max_features).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..n).collect(),
        }
    }

    fn grow(&mut self, rows: &mut [u32], depth: usize) -> usize {
        let n = rows.len();
        let pos = rows.iter().filter(|&&r| self.m.targets[r as usize]).count();
        let id = self.nodes.len();
        let leaf = Node::Leaf {
            probability: if n == 0 { 0.0 } else { pos as f64 / n as f64 },
            n_samples: n,
        };
        self.nodes.push(leaf.clone());
        if depth >= self.params.max_depth || n < self.params.min_samples_split || pos == 0 || pos == n {
            return id;
        }
        let features = self.candidate_features();
        let Some(split) = best_split(self.m, rows, &features) else {
            return id;
        };
        let m = self.m;
        let goes_left = |r: &u32| m.features[*r as usize * m.n_cols + split.feature] <= split.threshold;
        let mut k = 0;
        for i in 0..n {
            if goes_left(&rows[i]) {
                rows.swap(i, k);
                k += 1;
            }
        }
        let (l, r) = rows.split_at_mut(k);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
            n_samples: n,
        };
        id
    }
}

impl DecisionTree {
    /// Fit on every row using every feature.
    pub fn fit(m: &TrainingMatrix<'_>, params: &TreeParams) -> Result<Self> {
        validate(params)?;
        let pos = m.n_positive();
        if pos == 0 || pos == m.n_rows() {
            return Err(Error::SingleClassData);
        }
        let mut rows: Vec<u32> = (0..m.n_rows() as u32).collect();
        Ok(Self::fit_rows::<rand_chacha::ChaCha8Rng>(m, &mut rows, params, m.n_cols, None))
    }

    /// Fit on `rows` (duplicates allowed), sampling `max_features` candidate
    /// features per split when an RNG is supplied.
    pub(crate) fn fit_rows<R: Rng>(
        m: &TrainingMatrix<'_>,
        rows: &mut [u32],
        params: &TreeParams,
        max_features: usize,
        rng: Option<&mut R>,
    ) -> Self {
        let mut b = Builder {
            m,
            params: *params,
            max_features,
            rng,
            nodes: Vec::new(),
        };
        b.grow(rows, 0);
        DecisionTree {
            n_features: m.n_cols,
            nodes: b.nodes,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { probability, .. } => return *probability,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

pub(crate) fn validate(p: &TreeParams) -> Result<()> {
    if p.max_depth == 0 {
        return Err(Error::InvalidParameter("max_depth must be at least 1".into()));
    }
    Ok(())
}
