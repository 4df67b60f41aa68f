//! Fully connected network with ReLU hidden layers and one sigmoid output,
//! trained on binary cross-entropy with RMSProp.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::transform::TrainingMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    /// Hidden layer widths, input side first.
    pub hidden: Vec<usize>,
    /// Dropout rate after each hidden layer.
    pub dropout: Vec<f64>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    /// Rows held out to report validation loss per epoch.
    #[serde(default)]
    pub validation_fraction: f64,
}

fn default_rho() -> f64 {
    0.9
}
fn default_epsilon() -> f64 {
    1e-8
}
fn default_init_std() -> f64 {
    0.05
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: vec![32, 16],
            dropout: vec![0.0, 0.0],
            learning_rate: 0.001,
            batch_size: 256,
            epochs: 10,
            seed: 0,
            rho: default_rho(),
            epsilon: default_epsilon(),
            init_std: default_init_std(),
            validation_fraction: 0.0,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("need at least one hidden layer of non-zero width".into());
        }
        if self.dropout.len() != self.hidden.len() {
            return bad(format!(
                "{} dropout rates for {} hidden layers",
                self.dropout.len(),
                self.hidden.len()
            ));
        }
        if let Some(d) = self.dropout.iter().find(|d| !(0.0..1.0).contains(*d)) {
            return bad(format!("dropout must lie in [0, 1), got {d}"));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad("learning_rate must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must lie in [0, 1)".into());
        }
        Ok(())
    }
}

/// Per-feature affine map of the training range onto [0, 1]. Constant
/// features map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    min: Vec<f64>,
    range: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(m: &TrainingMatrix<'_>) -> Self {
        let mut min = vec![f64::INFINITY; m.n_cols];
        let mut max = vec![f64::NEG_INFINITY; m.n_cols];
        for i in 0..m.n_rows() {
            for (j, &v) in m.row(i).iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        let range = min.iter().zip(&max).map(|(a, b)| b - a).collect();
        MinMaxScaler { min, range }
    }

    pub fn identity(n: usize) -> Self {
        MinMaxScaler {
            min: vec![0.0; n],
            range: vec![1.0; n],
        }
    }

    pub fn transform_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.extend(x.iter().zip(self.min.iter().zip(&self.range)).map(|(&v, (&lo, &r))| {
            if r > 0.0 {
                (v - lo) / r
            } else {
                0.0
            }
        }));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Dense {
    n_in: usize,
    n_out: usize,
    /// Row-major `n_out x n_in`.
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Dense {
    fn n_params(&self) -> usize {
        self.w.len() + self.b.len()
    }

    /// `out[r, o] = b[o] + sum_i w[o, i] * input[r, i]`
    fn forward(&self, input: &[f64], rows: usize, out: &mut Vec<f64>) {
        out.clear();
        out.resize(rows * self.n_out, 0.0);
        for r in 0..rows {
            let x = &input[r * self.n_in..(r + 1) * self.n_in];
            let y = &mut out[r * self.n_out..(r + 1) * self.n_out];
            for o in 0..self.n_out {
                let w = &self.w[o * self.n_in..(o + 1) * self.n_in];
                y[o] = self.b[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Cross-entropy of a logit against a binary label.
fn bce_from_logit(z: f64, y: bool) -> f64 {
    softplus(z) - if y { z } else { 0.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    scaler: MinMaxScaler,
    layers: Vec<Dense>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

impl Mlp {
    /// Untrained network: N(0, init_std) weights, zero biases.
    pub fn initialize(n_inputs: usize, params: &MlpParams, scaler: MinMaxScaler) -> Result<Self> {
        params.validate()?;
        let mut rng = rng::stream(params.seed, 0);
        let normal = Normal::new(0.0, params.init_std)
            .map_err(|e| Error::InvalidParameter(format!("init_std: {e}")))?;
        let mut widths = vec![n_inputs];
        widths.extend(&params.hidden);
        widths.push(1);
        let layers = widths
            .windows(2)
            .map(|w| Dense {
                n_in: w[0],
                n_out: w[1],
                w: (0..w[0] * w[1]).map(|_| normal.sample(&mut rng)).collect(),
                b: vec![0.0; w[1]],
            })
            .collect();
        Ok(Mlp { scaler, layers })
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            v.extend_from_slice(&l.w);
            v.extend_from_slice(&l.b);
        }
        v
    }

    pub fn set_params_flat(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params(), "parameter vector length");
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&p[off..off + nw]);
            off += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&p[off..off + nb]);
            off += nb;
        }
    }

    fn apply_flat_update(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        let mut k = 0;
        for l in &mut self.layers {
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                f(k, v);
                k += 1;
            }
        }
    }

    /// Scale raw rows into the network's input space.
    pub fn scale(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len());
        for row in x.chunks(self.n_inputs()) {
            self.scaler.transform_into(row, &mut out);
        }
        out
    }

    /// Activations of every layer; the last holds the output logits.
    /// `masks[l]` multiplies hidden layer `l` after the ReLU.
    fn forward(&self, x: &[f64], rows: usize, masks: Option<&[Vec<f64>]>) -> Vec<Vec<f64>> {
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::new();
            layer.forward(acts.last().expect("input present"), rows, &mut out);
            if l < last {
                for v in &mut out {
                    *v = v.max(0.0);
                }
                if let Some(m) = masks {
                    for (v, k) in out.iter_mut().zip(&m[l]) {
                        *v *= k;
                    }
                }
            }
            acts.push(out);
        }
        acts
    }

    /// Mean cross-entropy and its gradient over scaled rows `x`.
    pub fn loss_and_gradient(&self, x: &[f64], y: &[bool], masks: Option<&[Vec<f64>]>) -> (f64, Vec<f64>) {
        let rows = y.len();
        let acts = self.forward(x, rows, masks);
        let logits = acts.last().expect("output layer");
        let inv = 1.0 / rows as f64;
        let loss = logits.iter().zip(y).map(|(&z, &t)| bce_from_logit(z, t)).sum::<f64>() * inv;

        // dL/dz for the current layer's pre-activation (post-mask for hidden).
        let mut delta: Vec<f64> = logits
            .iter()
            .zip(y)
            .map(|(&z, &t)| (sigmoid(z) - if t { 1.0 } else { 0.0 }) * inv)
            .collect();
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &acts[l];
            let mut gw = vec![0.0; layer.w.len()];
            let mut gb = vec![0.0; layer.b.len()];
            for r in 0..rows {
                let d = &delta[r * layer.n_out..(r + 1) * layer.n_out];
                let xin = &input[r * layer.n_in..(r + 1) * layer.n_in];
                for o in 0..layer.n_out {
                    if d[o] == 0.0 {
                        continue;
                    }
                    gb[o] += d[o];
                    let g = &mut gw[o * layer.n_in..(o + 1) * layer.n_in];
                    for (gi, xi) in g.iter_mut().zip(xin) {
                        *gi += d[o] * xi;
                    }
                }
            }
            if l > 0 {
                // back through weights, mask and ReLU of hidden layer l-1
                let mut prev = vec![0.0; rows * layer.n_in];
                for r in 0..rows {
                    let d = &delta[r * layer.n_out..(r + 1) * layer.n_out];
                    let p = &mut prev[r * layer.n_in..(r + 1) * layer.n_in];
                    for o in 0..layer.n_out {
                        if d[o] == 0.0 {
                            continue;
                        }
                        let w = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
                        for (pi, wi) in p.iter_mut().zip(w) {
                            *pi += d[o] * wi;
                        }
                    }
                }
                let act = &acts[l];
                for (i, p) in prev.iter_mut().enumerate() {
                    let keep = masks.map_or(1.0, |m| m[l - 1][i]);
                    // act > 0 iff the ReLU was active and the unit kept
                    if act[i] <= 0.0 {
                        *p = 0.0;
                    } else {
                        *p *= keep;
                    }
                }
                delta = prev;
            }
            grads.push((gw, gb));
        }
        grads.reverse();
        let mut flat = Vec::with_capacity(self.n_params());
        for (gw, gb) in grads {
            flat.extend(gw);
            flat.extend(gb);
        }
        (loss, flat)
    }

    /// Mean cross-entropy over scaled rows, no dropout.
    pub fn loss(&self, x: &[f64], y: &[bool]) -> f64 {
        let acts = self.forward(x, y.len(), None);
        let logits = acts.last().expect("output layer");
        logits.iter().zip(y).map(|(&z, &t)| bce_from_logit(z, t)).sum::<f64>() / y.len() as f64
    }

    /// Probability for one raw (unscaled) row.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut scaled = Vec::with_capacity(x.len());
        self.scaler.transform_into(x, &mut scaled);
        let acts = self.forward(&scaled, 1, None);
        sigmoid(acts.last().expect("output layer")[0])
    }

    pub fn fit(m: &TrainingMatrix<'_>, params: &MlpParams) -> Result<(Self, Vec<EpochStats>)> {
        params.validate()?;
        let pos = m.n_positive();
        if pos == 0 || pos == m.n_rows() {
            return Err(Error::SingleClassData);
        }
        let mut net = Mlp::initialize(m.n_cols, params, MinMaxScaler::fit(m))?;
        let x = net.scale(m.features);
        let mut rng = rng::stream(params.seed, 1);

        let mut order: Vec<usize> = (0..m.n_rows()).collect();
        order.shuffle(&mut rng);
        let n_val = (m.n_rows() as f64 * params.validation_fraction).floor() as usize;
        let (val_idx, train_idx) = order.split_at(n_val);
        let gather = |idx: &[usize]| -> (Vec<f64>, Vec<bool>) {
            let mut xs = Vec::with_capacity(idx.len() * m.n_cols);
            let mut ys = Vec::with_capacity(idx.len());
            for &i in idx {
                xs.extend_from_slice(&x[i * m.n_cols..(i + 1) * m.n_cols]);
                ys.push(m.targets[i]);
            }
            (xs, ys)
        };
        let (val_x, val_y) = gather(val_idx);
        let mut train_idx = train_idx.to_vec();

        let mut cache = vec![0.0; net.n_params()];
        let mut log = Vec::with_capacity(params.epochs);
        for epoch in 0..params.epochs {
            train_idx.shuffle(&mut rng);
            let mut total = 0.0;
            for batch in train_idx.chunks(params.batch_size) {
                let (bx, by) = gather(batch);
                let masks = dropout_masks(&params.hidden, &params.dropout, batch.len(), &mut rng);
                let (loss, grad) = net.loss_and_gradient(&bx, &by, masks.as_deref());
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::DivergedTraining { epoch });
                }
                total += loss * batch.len() as f64;
                net.apply_flat_update(|k, p| {
                    let g = grad[k];
                    cache[k] = params.rho * cache[k] + (1.0 - params.rho) * g * g;
                    *p -= params.learning_rate * g / (cache[k].sqrt() + params.epsilon);
                });
            }
            let train_loss = total / train_idx.len().max(1) as f64;
            let validation_loss = (!val_y.is_empty()).then(|| net.loss(&val_x, &val_y));
            if !train_loss.is_finite() || validation_loss.is_some_and(|v| !v.is_finite()) {
                return Err(Error::DivergedTraining { epoch });
            }
            match validation_loss {
                Some(v) => log::info!("epoch {}: loss {train_loss:.6}, validation loss {v:.6}", epoch + 1),
                None => log::info!("epoch {}: loss {train_loss:.6}", epoch + 1),
            }
            log.push(EpochStats {
                epoch: epoch + 1,
                train_loss,
                validation_loss,
            });
        }
        Ok((net, log))
    }
}

/// Inverted-dropout masks (kept units scaled by `1 / (1 - rate)`), or `None`
/// when no layer drops.
fn dropout_masks<R: Rng>(hidden: &[usize], rates: &[f64], rows: usize, rng: &mut R) -> Option<Vec<Vec<f64>>> {
    if rates.iter().all(|&r| r == 0.0) {
        return None;
    }
    Some(
        hidden
            .iter()
            .zip(rates)
            .map(|(&w, &rate)| {
                let keep = 1.0 / (1.0 - rate);
                (0..rows * w)
                    .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
                    .collect()
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_loss_for_extreme_logits() {
        assert!(bce_from_logit(800.0, true).abs() < 1e-12);
        assert!((bce_from_logit(-800.0, true) - 800.0).abs() < 1e-9);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn param_validation() {
        let ok = MlpParams::default();
        assert!(ok.validate().is_ok());
        for bad in [
            MlpParams { hidden: vec![], dropout: vec![], ..ok.clone() },
            MlpParams { dropout: vec![0.1], ..ok.clone() },
            MlpParams { dropout: vec![1.0, 0.0], ..ok.clone() },
            MlpParams { learning_rate: 0.0, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn flat_params_round_trip() {
        let mut net = Mlp::initialize(3, &MlpParams::default(), MinMaxScaler::identity(3)).unwrap();
        let p: Vec<f64> = (0..net.n_params()).map(|i| i as f64 * 1e-3).collect();
        net.set_params_flat(&p);
        assert_eq!(net.params_flat(), p);
        assert_eq!(net.n_params(), 3 * 32 + 32 + 32 * 16 + 16 + 16 + 1);
    }

    #[test]
    fn dropout_masks_scale_kept_units() {
        let mut rng = rng::seeded(3);
        let m = dropout_masks(&[4], &[0.5], 1000, &mut rng).unwrap();
        assert!(m[0].iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = m[0].iter().filter(|&&v| v > 0.0).count();
        assert!((1800..2200).contains(&kept));
        assert!(dropout_masks(&[4], &[0.0], 10, &mut rng).is_none());
    }
}
