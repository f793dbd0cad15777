//! Mini-batch training with a random or most-recent validation hold-out and
//! best-epoch model selection.

use serde::{Deserialize, Serialize};

use crate::data::{class_counts, split_random, split_recent, Dataset};
use crate::error::{Error, Result};
use crate::evaluation::{confusion, metrics, Metrics};
use crate::losses::{drbce, drbce_grad, LossBatch, LossConfig};
use crate::model::{
    adamw_step, backward, forward, init_model, predict_logits, AdamWConfig, Mode, ModelConfig, ModelParams,
    OptimizerState,
};
use crate::numerics::{derive_seed, sigmoid, Rng};

/// Training-set size used for the large-scale preset.
pub const FULL_TRAIN_SIZE: usize = 700_000;
/// Validation-set size used for the large-scale preset.
pub const FULL_VAL_SIZE: usize = 120_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationStrategy {
    Random,
    Recent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    F1,
    Accuracy,
}

impl SelectionMetric {
    /// Undefined F1 scores as 0.
    pub fn score(self, m: &Metrics) -> f64 {
        match self {
            SelectionMetric::F1 => m.f1.unwrap_or(0.0),
            SelectionMetric::Accuracy => m.acc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub validation: ValidationStrategy,
    pub n_val: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    pub selection_metric: SelectionMetric,
    pub threshold: f64,
    pub optimizer: AdamWConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            validation: ValidationStrategy::Recent,
            n_val: 1000,
            batch_size: 256,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            selection_metric: SelectionMetric::F1,
            threshold: 0.5,
            optimizer: AdamWConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Validation size of the large-scale setup (700k train / 120k validation).
    pub fn full_scale() -> Self {
        Self {
            n_val: FULL_VAL_SIZE,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be >= 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold {} not in (0, 1)", self.threshold)));
        }
        self.loss.validate()?;
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub val_f1: Option<f64>,
    pub val_fnr: Option<f64>,
    pub val_fpr: Option<f64>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    pub best_score: f64,
    pub stopped_early: bool,
    pub n_train: usize,
    pub n_val: usize,
    /// `(w0, w1)` computed from the training split.
    pub class_weights: (f64, f64),
    pub config: TrainConfig,
}

/// Splits `ds` per the configured strategy and trains on the result.
pub fn train(ds: &Dataset, model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<(ModelParams, TrainHistory)> {
    cfg.validate()?;
    if ds.len() <= cfg.n_val {
        return Err(Error::Config(format!(
            "dataset of {} samples cannot hold out {} for validation",
            ds.len(),
            cfg.n_val
        )));
    }
    let (tr, va) = match cfg.validation {
        ValidationStrategy::Random => split_random(ds, cfg.n_val, derive_seed(cfg.seed, &[1]))?,
        ValidationStrategy::Recent => split_recent(ds, cfg.n_val)?,
    };
    train_on_split(&tr, &va, model_cfg, cfg)
}

/// Validation loss and metrics of `params` on `val`.
pub fn validate_params(
    params: &ModelParams,
    val: &Dataset,
    loss: &LossConfig,
    threshold: f64,
) -> Result<(f64, Metrics)> {
    let z = predict_logits(params, &val.features())?;
    let y = val.labels();
    let l = drbce(&LossBatch::new(&z, &y)?, loss);
    let probs: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
    Ok((l, metrics(&confusion(&probs, &y, threshold)?)?))
}

/// Trains on an explicit train/validation pair.
pub fn train_on_split(
    train: &Dataset,
    val: &Dataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    cfg.validate()?;
    model_cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config("training and validation splits must be non-empty".into()));
    }
    if train.feature_dim() != model_cfg.input_dim || val.feature_dim() != model_cfg.input_dim {
        return Err(Error::Config(format!(
            "data has {} features, model input_dim is {}",
            train.feature_dim(),
            model_cfg.input_dim
        )));
    }

    let (n0, n1) = class_counts(train);
    let loss_cfg = cfg.loss.with_class_counts(n0, n1)?;

    let mut params = init_model(model_cfg, derive_seed(cfg.seed, &[0]))?;
    let mut opt = OptimizerState::new(cfg.optimizer.clone(), &params);
    let mut shuffle_rng = Rng::derived(cfg.seed, &[2]);
    let mut dropout_rng = Rng::derived(cfg.seed, &[3]);

    let x = train.features();
    let y = train.labels();
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut best: Option<(usize, f64, ModelParams)> = None;
    let mut epochs = Vec::new();
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let xb = x.select_rows(chunk);
            let yb: Vec<u8> = chunk.iter().map(|&i| y[i]).collect();
            let (z, cache) = forward(&params, &xb, Mode::Train(&mut dropout_rng))?;
            let batch = LossBatch::new(&z, &yb).map_err(|_| Error::Divergence {
                epoch,
                batch: b,
                loss: f64::NAN,
            })?;
            let l = drbce(&batch, &loss_cfg);
            if !l.is_finite() {
                return Err(Error::Divergence { epoch, batch: b, loss: l });
            }
            loss_sum += l * chunk.len() as f64;
            let grads = backward(&params, &cache, &drbce_grad(&batch, &loss_cfg))?;
            adamw_step(&mut params, &grads, &mut opt)?;
            if !params.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b,
                    loss: f64::NAN,
                });
            }
        }

        let (val_loss, m) = validate_params(&params, val, &loss_cfg, cfg.threshold)?;
        let score = cfg.selection_metric.score(&m);
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_loss,
            val_acc: m.acc,
            val_f1: m.f1,
            val_fnr: m.fnr,
            val_fpr: m.fpr,
            score,
        });

        if best.as_ref().is_none_or(|(_, s, _)| score > *s) {
            best = Some((epoch, score, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > cfg.patience {
                stopped_early = epoch < cfg.max_epochs;
                break;
            }
        }
    }

    let (best_epoch, best_score, best_params) = best.expect("at least one epoch");
    let history = TrainHistory {
        epochs,
        best_epoch,
        best_score,
        stopped_early,
        n_train: train.len(),
        n_val: val.len(),
        class_weights: (loss_cfg.w0, loss_cfg.w1),
        config: cfg.clone(),
    };
    Ok((best_params, history))
}
