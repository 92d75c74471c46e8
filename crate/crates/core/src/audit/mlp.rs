//! Three-way span classifier: a single-hidden-layer perceptron with
//! dropout and L2 regularization, trained with Adam. Training is fully
//! deterministic given the seed; inference runs without dropout and
//! returns a probability simplex per instance.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BiasError, Result};

pub const CLASS_COUNT: usize = 3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GprModelConfig {
    #[serde(default = "default_hidden")]
    pub hidden_units: usize,
    #[serde(default = "default_dropout")]
    pub dropout_rate: f64,
    #[serde(default = "default_l2")]
    pub l2_weight: f64,
    #[serde(default = "default_optimizer")]
    pub optimizer: String,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_early_stopping")]
    pub early_stopping: bool,
    #[serde(default = "default_val_fraction")]
    pub validation_fraction: f64,
}

fn default_hidden() -> usize {
    31
}
fn default_dropout() -> f64 {
    0.6
}
fn default_l2() -> f64 {
    0.1
}
fn default_optimizer() -> String {
    "adam".into()
}
fn default_learning_rate() -> f64 {
    1e-3
}
fn default_epochs() -> usize {
    30
}
fn default_batch() -> usize {
    32
}
fn default_seed() -> u64 {
    42
}
fn default_early_stopping() -> bool {
    true
}
fn default_val_fraction() -> f64 {
    0.1
}

impl Default for GprModelConfig {
    fn default() -> Self {
        GprModelConfig {
            hidden_units: default_hidden(),
            dropout_rate: default_dropout(),
            l2_weight: default_l2(),
            optimizer: default_optimizer(),
            learning_rate: default_learning_rate(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            seed: default_seed(),
            early_stopping: default_early_stopping(),
            validation_fraction: default_val_fraction(),
        }
    }
}

impl GprModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(BiasError::Validation(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if self.l2_weight < 0.0 {
            return Err(BiasError::Validation("l2 weight must be nonnegative".into()));
        }
        if self.hidden_units == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(BiasError::Validation(
                "hidden units, epochs, and batch size must be positive".into(),
            ));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(BiasError::Validation("learning rate must be positive".into()));
        }
        if !(0.0..=0.5).contains(&self.validation_fraction) {
            return Err(BiasError::Validation(format!(
                "validation fraction {} outside [0, 0.5]",
                self.validation_fraction
            )));
        }
        if self.optimizer != "adam" {
            return Err(BiasError::Validation(format!(
                "unknown optimizer `{}` (only adam is implemented)",
                self.optimizer
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GprClassifier {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
    /// Mean training cross-entropy after each epoch.
    pub train_loss_trace: Vec<f64>,
    /// Held-out log-loss per epoch when early stopping was active.
    pub validation_loss_trace: Vec<f64>,
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

fn cross_entropy(probs: &Array2<f64>, labels: &[usize]) -> f64 {
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        loss -= probs[(i, label)].max(1e-12).ln();
    }
    loss / labels.len() as f64
}

struct Adam {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    mb: Vec<Array1<f64>>,
    vb: Vec<Array1<f64>>,
    t: i32,
}

impl Adam {
    fn new(weights: &[&Array2<f64>], biases: &[&Array1<f64>]) -> Self {
        Adam {
            m: weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            v: weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            mb: biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            vb: biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            t: 0,
        }
    }

    fn step(
        &mut self,
        lr: f64,
        weights: [&mut Array2<f64>; 2],
        weight_grads: [&Array2<f64>; 2],
        biases: [&mut Array1<f64>; 2],
        bias_grads: [&Array1<f64>; 2],
    ) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for (i, (w, g)) in weights.into_iter().zip(weight_grads).enumerate() {
            self.m[i] = &self.m[i] * B1 + g * (1.0 - B1);
            self.v[i] = &self.v[i] * B2 + &g.mapv(|x| x * x) * (1.0 - B2);
            let update = (&self.m[i] / c1) / (&(&self.v[i] / c2).mapv(f64::sqrt) + EPS);
            *w -= &(update * lr);
        }
        for (i, (b, g)) in biases.into_iter().zip(bias_grads).enumerate() {
            self.mb[i] = &self.mb[i] * B1 + g * (1.0 - B1);
            self.vb[i] = &self.vb[i] * B2 + &g.mapv(|x| x * x) * (1.0 - B2);
            let update = (&self.mb[i] / c1) / (&(&self.vb[i] / c2).mapv(f64::sqrt) + EPS);
            *b -= &(update * lr);
        }
    }
}

impl GprClassifier {
    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let hidden = relu(&(x.dot(&self.w1) + &self.b1));
        softmax_rows(&(hidden.dot(&self.w2) + &self.b2))
    }

    /// Class probabilities per instance; each row sums to 1.
    pub fn predict_proba(&self, features: &[Vec<f64>]) -> Result<Vec<[f64; CLASS_COUNT]>> {
        if features.is_empty() {
            return Ok(Vec::new());
        }
        let x = to_matrix(features, self.w1.nrows())?;
        let probs = self.forward(&x);
        Ok(probs
            .axis_iter(Axis(0))
            .map(|row| [row[0], row[1], row[2]])
            .collect())
    }
}

fn to_matrix(features: &[Vec<f64>], dim: usize) -> Result<Array2<f64>> {
    let mut x = Array2::zeros((features.len(), dim));
    for (i, row) in features.iter().enumerate() {
        if row.len() != dim {
            return Err(BiasError::Validation(format!(
                "feature row {i} has length {}, expected {dim}",
                row.len()
            )));
        }
        for (j, &value) in row.iter().enumerate() {
            if !value.is_finite() {
                return Err(BiasError::Validation(format!(
                    "feature ({i}, {j}) is not finite"
                )));
            }
            x[(i, j)] = value;
        }
    }
    Ok(x)
}

/// Trains the classifier. Refuses degenerate single-class label sets.
/// With early stopping on, a seeded held-out slice tracks log-loss and
/// the best-epoch parameters are restored.
pub fn train_gpr(
    features: &[Vec<f64>],
    labels: &[usize],
    config: &GprModelConfig,
) -> Result<GprClassifier> {
    config.validate()?;
    if features.is_empty() || features.len() != labels.len() {
        return Err(BiasError::Validation(format!(
            "got {} feature rows for {} labels",
            features.len(),
            labels.len()
        )));
    }
    if labels.iter().any(|&l| l >= CLASS_COUNT) {
        return Err(BiasError::Validation("labels must be 0, 1, or 2".into()));
    }
    {
        let mut distinct: Vec<usize> = labels.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 2 {
            return Err(BiasError::Validation(
                "training set holds a single class; nothing to separate".into(),
            ));
        }
    }
    let dim = features[0].len();
    let x_all = to_matrix(features, dim)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Seeded held-out split for early stopping; tiny datasets train on
    // everything.
    let n = features.len();
    let val_size = if config.early_stopping {
        ((n as f64 * config.validation_fraction) as usize).min(n.saturating_sub(2))
    } else {
        0
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let (val_idx, train_idx) = order.split_at(val_size);
    let train_idx: Vec<usize> = train_idx.to_vec();
    let val_idx: Vec<usize> = val_idx.to_vec();

    let gather = |indices: &[usize]| -> (Array2<f64>, Vec<usize>) {
        let mut m = Array2::zeros((indices.len(), dim));
        let mut l = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            m.row_mut(row).assign(&x_all.row(i));
            l.push(labels[i]);
        }
        (m, l)
    };
    let (x_train, y_train) = gather(&train_idx);
    let (x_val, y_val) = gather(&val_idx);

    let limit1 = (6.0 / (dim + config.hidden_units) as f64).sqrt();
    let limit2 = (6.0 / (config.hidden_units + CLASS_COUNT) as f64).sqrt();
    let mut model = GprClassifier {
        w1: Array2::from_shape_fn((dim, config.hidden_units), |_| {
            rng.random_range(-limit1..limit1)
        }),
        b1: Array1::zeros(config.hidden_units),
        w2: Array2::from_shape_fn((config.hidden_units, CLASS_COUNT), |_| {
            rng.random_range(-limit2..limit2)
        }),
        b2: Array1::zeros(CLASS_COUNT),
        train_loss_trace: Vec::new(),
        validation_loss_trace: Vec::new(),
    };
    let mut adam = Adam::new(&[&model.w1, &model.w2], &[&model.b1, &model.b2]);

    struct Checkpoint {
        loss: f64,
        w1: Array2<f64>,
        b1: Array1<f64>,
        w2: Array2<f64>,
        b2: Array1<f64>,
    }
    let keep = 1.0 - config.dropout_rate;
    let mut best: Option<Checkpoint> = None;
    let mut batch_order: Vec<usize> = (0..x_train.nrows()).collect();

    for _epoch in 0..config.epochs {
        batch_order.shuffle(&mut rng);
        for chunk in batch_order.chunks(config.batch_size) {
            let (xb, yb) = {
                let mut m = Array2::zeros((chunk.len(), dim));
                let mut l = Vec::with_capacity(chunk.len());
                for (row, &i) in chunk.iter().enumerate() {
                    m.row_mut(row).assign(&x_train.row(i));
                    l.push(y_train[i]);
                }
                (m, l)
            };
            let batch = chunk.len() as f64;

            // Forward with inverted dropout on the hidden layer.
            let pre_hidden = xb.dot(&model.w1) + &model.b1;
            let mut hidden = relu(&pre_hidden);
            let mask = if config.dropout_rate > 0.0 {
                let mask = Array2::from_shape_fn(hidden.raw_dim(), |_| {
                    if rng.random_range(0.0..1.0) < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                hidden *= &mask;
                Some(mask)
            } else {
                None
            };
            let probs = softmax_rows(&(hidden.dot(&model.w2) + &model.b2));

            // Backward: d(logits) = (p - onehot)/batch
            let mut d_logits = probs;
            for (i, &label) in yb.iter().enumerate() {
                d_logits[(i, label)] -= 1.0;
            }
            d_logits /= batch;

            let d_w2 = hidden.t().dot(&d_logits) + &(&model.w2 * config.l2_weight);
            let d_b2 = d_logits.sum_axis(Axis(0));
            let mut d_hidden = d_logits.dot(&model.w2.t());
            if let Some(mask) = &mask {
                d_hidden *= mask;
            }
            let d_pre = &d_hidden * &pre_hidden.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            let d_w1 = xb.t().dot(&d_pre) + &(&model.w1 * config.l2_weight);
            let d_b1 = d_pre.sum_axis(Axis(0));

            adam.step(
                config.learning_rate,
                [&mut model.w1, &mut model.w2],
                [&d_w1, &d_w2],
                [&mut model.b1, &mut model.b2],
                [&d_b1, &d_b2],
            );
        }

        let train_probs = model.forward(&x_train);
        model
            .train_loss_trace
            .push(cross_entropy(&train_probs, &y_train));
        if !val_idx.is_empty() {
            let val_probs = model.forward(&x_val);
            let val_loss = cross_entropy(&val_probs, &y_val);
            model.validation_loss_trace.push(val_loss);
            let improved = best.as_ref().map(|b| val_loss < b.loss).unwrap_or(true);
            if improved {
                best = Some(Checkpoint {
                    loss: val_loss,
                    w1: model.w1.clone(),
                    b1: model.b1.clone(),
                    w2: model.w2.clone(),
                    b2: model.b2.clone(),
                });
            }
        }
    }
    if let Some(checkpoint) = best {
        model.w1 = checkpoint.w1;
        model.b1 = checkpoint.b1;
        model.w2 = checkpoint.w2;
        model.b2 = checkpoint.b2;
    }
    Ok(model)
}
