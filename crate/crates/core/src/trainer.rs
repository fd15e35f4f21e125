//! Linear softmax classifier trained with cross-entropy plus the two
//! trajectory regularizers, using hand-derived gradients.
//!
//! For segment `i` with logits `z_i` and confidences `p_i = softmax(z_i)`:
//!
//! ```text
//! ∂CE/∂z_i  = (p_i − onehot(y_i)) / N
//! ∂R/∂z_i   = J(p_i) g_i,   J(p) = diag(p) − p pᵀ,   g = λ_lvl ∂LVL/∂P + λ_lgcl ∂LGCL/∂P
//! ```
//!
//! Each trial is one full batch so the regularizers see contiguous segments.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LossKernel;
use crate::losses::{self, TrajectoryPrediction};
use crate::metrics::LabelSequence;
use crate::seed;
use crate::synth::Trial;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub lambda_lvl: f64,
    pub lambda_lgcl: f64,
    pub seed: u64,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

fn default_init_scale() -> f64 {
    0.01
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.5,
            epochs: 100,
            lambda_lvl: 1.0,
            lambda_lgcl: 1.0,
            seed: 0,
            init_scale: default_init_scale(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        for (name, l) in [("lambda_lvl", self.lambda_lvl), ("lambda_lgcl", self.lambda_lgcl)] {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::InvalidCoefficient(format!("{name} must be ≥ 0, got {l}")));
            }
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!("init_scale must be ≥ 0, got {}", self.init_scale)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxClassifier {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossParts {
    pub ce: f64,
    pub lvl: f64,
    pub lgcl: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub ce: f64,
    pub lvl: f64,
    pub lgcl: f64,
    pub total: f64,
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.outer_iter_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|z| (z - m).exp());
        let s = row.sum();
        row /= s;
    }
}

impl SoftmaxClassifier {
    pub fn zeros(num_levels: usize, feature_dim: usize) -> Self {
        SoftmaxClassifier {
            weights: Array2::zeros((num_levels, feature_dim)),
            bias: Array1::zeros(num_levels),
        }
    }

    /// Weights `~ N(0, init_scale²)`, zero bias.
    pub fn init(num_levels: usize, feature_dim: usize, init_scale: f64, seed: u64) -> Result<Self> {
        let normal = Normal::new(0.0, init_scale)
            .map_err(|e| Error::InvalidConfig(format!("init scale: {e}")))?;
        let mut rng = seed::rng(seed, &[seed::TAG_INIT]);
        let weights = Array2::from_shape_simple_fn((num_levels, feature_dim), || normal.sample(&mut rng));
        Ok(SoftmaxClassifier {
            weights,
            bias: Array1::zeros(num_levels),
        })
    }

    pub fn num_levels(&self) -> usize {
        self.weights.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.ncols()
    }

    fn check_features(&self, features: &ArrayView2<f64>) -> Result<()> {
        if features.ncols() != self.feature_dim() {
            return Err(Error::InvalidDimension(format!(
                "features have {} columns, model expects {}",
                features.ncols(),
                self.feature_dim()
            )));
        }
        if features.nrows() == 0 {
            return Err(Error::InvalidDimension("no feature rows".into()));
        }
        Ok(())
    }

    pub fn logits(&self, features: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_features(&features)?;
        Ok(features.dot(&self.weights.t()) + &self.bias)
    }

    /// `softmax(W x_i + b)` per row, max-subtracted.
    pub fn forward(&self, features: ArrayView2<f64>) -> Result<TrajectoryPrediction> {
        let mut z = self.logits(features)?;
        softmax_rows(&mut z);
        TrajectoryPrediction::new(z)
    }

    pub fn checkpoint(&self, config: &TrainConfig) -> ModelCheckpoint {
        ModelCheckpoint {
            weights: self.weights.outer_iter().map(|r| r.to_vec()).collect(),
            bias: self.bias.to_vec(),
            config: config.clone(),
        }
    }
}

/// On-disk model: `{weights, bias, config}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub config: TrainConfig,
}

impl ModelCheckpoint {
    pub fn to_model(&self) -> Result<SoftmaxClassifier> {
        let k = self.weights.len();
        let d = self.weights.first().map_or(0, Vec::len);
        if k == 0 || d == 0 || self.weights.iter().any(|r| r.len() != d) || self.bias.len() != k {
            return Err(Error::InvalidDimension(format!(
                "checkpoint weights/bias shapes disagree ({k} rows, bias {})",
                self.bias.len()
            )));
        }
        let flat: Vec<f64> = self.weights.iter().flatten().copied().collect();
        let weights = Array2::from_shape_vec((k, d), flat).expect("checked shape");
        if weights.iter().chain(self.bias.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NumericalFailure("checkpoint has non-finite parameters".into()));
        }
        Ok(SoftmaxClassifier {
            weights,
            bias: Array1::from(self.bias.clone()),
        })
    }
}

fn check_labels(model: &SoftmaxClassifier, features: &ArrayView2<f64>, labels: &LabelSequence) -> Result<()> {
    if labels.len() != features.nrows() {
        return Err(Error::InvalidLength(format!(
            "{} labels for {} feature rows",
            labels.len(),
            features.nrows()
        )));
    }
    if labels.num_levels() != model.num_levels() {
        return Err(Error::InvalidDimension(format!(
            "labels have {} levels, model {}",
            labels.num_levels(),
            model.num_levels()
        )));
    }
    Ok(())
}

/// Mean cross-entropy from raw logits via log-sum-exp.
fn mean_cross_entropy(logits: &Array2<f64>, labels: &LabelSequence) -> f64 {
    let mut total = 0.0;
    for (row, &y) in logits.outer_iter().zip(labels.labels()) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    total / labels.len() as f64
}

pub fn loss_parts(
    model: &SoftmaxClassifier,
    features: ArrayView2<f64>,
    labels: &LabelSequence,
    kernel: &LossKernel,
    config: &TrainConfig,
) -> Result<LossParts> {
    check_labels(model, &features, labels)?;
    let logits = model.logits(features)?;
    let ce = mean_cross_entropy(&logits, labels);
    let mut probs = logits;
    softmax_rows(&mut probs);
    let lvl = losses::lvl_matrix(kernel, probs.view())?;
    let lgcl = losses::lgcl_matrix(kernel, probs.view())?;
    Ok(LossParts {
        ce,
        lvl,
        lgcl,
        total: ce + config.lambda_lvl * lvl + config.lambda_lgcl * lgcl,
    })
}

/// Mean CE against the trial's noisy labels plus `λ_lvl·LVL + λ_lgcl·LGCL`.
pub fn total_loss(model: &SoftmaxClassifier, trial: &Trial, kernel: &LossKernel, config: &TrainConfig) -> Result<f64> {
    Ok(loss_parts(model, trial.features.view(), &trial.noisy_labels, kernel, config)?.total)
}

pub fn gradient(
    model: &SoftmaxClassifier,
    features: ArrayView2<f64>,
    labels: &LabelSequence,
    kernel: &LossKernel,
    config: &TrainConfig,
) -> Result<Gradients> {
    check_labels(model, &features, labels)?;
    let n = features.nrows() as f64;
    let mut probs = model.logits(features)?;
    softmax_rows(&mut probs);

    let reg = losses::combined_gradient_matrix(kernel, probs.view(), config.lambda_lvl, config.lambda_lgcl)?;
    let mut delta = Array2::zeros(probs.raw_dim());
    for (i, (p, g)) in probs.outer_iter().zip(reg.outer_iter()).enumerate() {
        let pg = p.dot(&g);
        let mut d = delta.row_mut(i);
        for c in 0..p.len() {
            d[c] = p[c] * (g[c] - pg) + p[c] / n;
        }
        d[labels.labels()[i]] -= 1.0 / n;
    }
    Ok(Gradients {
        weights: delta.t().dot(&features),
        bias: delta.sum_axis(Axis(0)),
    })
}

/// Exact gradient of [`total_loss`] with respect to `(W, b)`.
pub fn total_gradient(
    model: &SoftmaxClassifier,
    trial: &Trial,
    kernel: &LossKernel,
    config: &TrainConfig,
) -> Result<Gradients> {
    gradient(model, trial.features.view(), &trial.noisy_labels, kernel, config)
}

fn epoch_record(
    epoch: usize,
    model: &SoftmaxClassifier,
    trials: &[Trial],
    kernel: &LossKernel,
    config: &TrainConfig,
) -> Result<EpochRecord> {
    let mut rec = EpochRecord { epoch, ce: 0.0, lvl: 0.0, lgcl: 0.0, total: 0.0 };
    for t in trials {
        let p = loss_parts(model, t.features.view(), &t.noisy_labels, kernel, config)?;
        rec.ce += p.ce;
        rec.lvl += p.lvl;
        rec.lgcl += p.lgcl;
        rec.total += p.total;
    }
    let m = trials.len() as f64;
    rec.ce /= m;
    rec.lvl /= m;
    rec.lgcl /= m;
    rec.total /= m;
    if !rec.total.is_finite() {
        return Err(Error::TrainingDiverged { epoch });
    }
    Ok(rec)
}

/// Gradient descent with one step per trial per epoch, trials in the given
/// order. Returns the model and a per-epoch record (evaluated after the epoch).
pub fn train(
    trials: &[Trial],
    kernel: &LossKernel,
    config: &TrainConfig,
) -> Result<(SoftmaxClassifier, Vec<EpochRecord>)> {
    config.validate()?;
    let first = trials
        .first()
        .ok_or_else(|| Error::InvalidLength("no training trials".into()))?;
    let k = first.num_levels();
    let d = first.features.ncols();
    if kernel.num_levels() != k {
        return Err(Error::InvalidDimension(format!(
            "kernel has {} levels, data {k}",
            kernel.num_levels()
        )));
    }
    let mut model = SoftmaxClassifier::init(k, d, config.init_scale, config.seed)?;
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        for trial in trials {
            let g = total_gradient(&model, trial, kernel, config)?;
            model.weights.scaled_add(-config.learning_rate, &g.weights);
            model.bias.scaled_add(-config.learning_rate, &g.bias);
        }
        if model.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::TrainingDiverged { epoch });
        }
        history.push(epoch_record(epoch, &model, trials, kernel, config)?);
    }
    Ok((model, history))
}
