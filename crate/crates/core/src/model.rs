//! Residual feed-forward classifier with hand-written backpropagation,
//! AdamW and a self-describing on-disk format.
//!
//! Topology, input to logit:
//!
//! ```text
//! x → dense(trunk_width) → relu → dropout                      (trunk)
//!   → [ dense → relu → dense, + skip, relu, dropout ] × blocks  (residual blocks)
//!   → [ dense(w) → relu ] for w in head_widths                  (head)
//!   → dense(1)                                                  (logit)
//! ```
//!
//! A `trunk_width` of 0 removes the trunk; it is only allowed together with
//! zero residual blocks, which gives a plain MLP (or a linear model when the
//! head is empty as well).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{apply_mask, Dataset, FeatureMask, Provenance};
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::numerics::{dropout_mask, matmul, matmul_nt, matmul_tn, relu, relu_grad, sigmoid, Matrix, Rng};

const DNET_MAGIC: &[u8; 4] = b"DNET";
const DNET_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub trunk_width: usize,
    pub n_residual_blocks: usize,
    pub dropout_rate: f64,
    /// Hidden widths between the last block and the single output logit.
    pub head_widths: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: crate::data::EMBER_FEATURE_DIM,
            trunk_width: 512,
            n_residual_blocks: 2,
            dropout_rate: 0.2,
            head_widths: vec![128],
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be >= 1".into()));
        }
        if self.trunk_width == 0 && self.n_residual_blocks > 0 {
            return Err(Error::Config(
                "residual blocks need a trunk (trunk_width >= 1)".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate {} not in [0, 1)",
                self.dropout_rate
            )));
        }
        if self.head_widths.contains(&0) {
            return Err(Error::Config("head widths must be >= 1".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every dense layer in forward order.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        let mut width = self.input_dim;
        if self.trunk_width > 0 {
            shapes.push((width, self.trunk_width));
            width = self.trunk_width;
            for _ in 0..self.n_residual_blocks {
                shapes.push((width, width));
                shapes.push((width, width));
            }
        }
        for &h in &self.head_widths {
            shapes.push((width, h));
            width = h;
        }
        shapes.push((width, 1));
        shapes
    }

    pub fn n_params(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Config with the input layer sized for the features kept by `mask`.
pub fn resize_input(cfg: &ModelConfig, mask: &FeatureMask) -> Result<ModelConfig> {
    if mask.is_empty() {
        return Err(Error::Config("cannot resize to an empty feature mask".into()));
    }
    if mask.original_dim() != cfg.input_dim {
        return Err(Error::Shape(format!(
            "mask was built for dimension {}, model input is {}",
            mask.original_dim(),
            cfg.input_dim
        )));
    }
    Ok(ModelConfig {
        input_dim: mask.len(),
        ..cfg.clone()
    })
}

/// One fully connected layer; `weights` is `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Matrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
        }
    }

    fn apply(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = matmul(x, &self.weights)?;
        out.add_row_vector(&self.bias)?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    layers: Vec<Dense>,
    /// Bumped on every mutation so stale forward caches can be detected.
    generation: u64,
}

impl ModelParams {
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            config: cfg.clone(),
            layers: cfg.layer_shapes().iter().map(|&(i, o)| Dense::zeros(i, o)).collect(),
            generation: 0,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.generation += 1;
        &mut self.layers
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.as_slice().len() + l.bias.len()).sum()
    }

    /// All parameters: per layer, weights (row-major) then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.n_params()
            )));
        }
        let mut off = 0;
        for l in self.layers_mut() {
            let w = l.weights.as_mut_slice();
            w.copy_from_slice(&flat[off..off + w.len()]);
            off += w.len();
            let n = l.bias.len();
            l.bias.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    fn trunk(&self) -> Option<&Dense> {
        (self.config.trunk_width > 0).then(|| &self.layers[0])
    }

    fn block(&self, k: usize) -> (&Dense, &Dense) {
        (&self.layers[1 + 2 * k], &self.layers[2 + 2 * k])
    }

    fn head_offset(&self) -> usize {
        if self.config.trunk_width > 0 {
            1 + 2 * self.config.n_residual_blocks
        } else {
            0
        }
    }
}

/// He-uniform weights (`U(±√(6/fan_in))`), zero biases.
pub fn init_model(cfg: &ModelConfig, seed: u64) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(cfg)?;
    let mut rng = Rng::new(seed);
    for l in &mut params.layers {
        let limit = (6.0 / l.weights.rows() as f64).sqrt();
        for w in l.weights.as_mut_slice() {
            *w = rng.uniform_range(-limit, limit);
        }
    }
    Ok(params)
}

/// Forward mode. Dropout only runs in training mode.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut Rng),
}

#[derive(Debug, Clone)]
struct Activation {
    /// Pre-activation (after any skip addition).
    pre: Matrix,
    mask: Option<Matrix>,
    out: Matrix,
}

#[derive(Debug, Clone)]
struct BlockCache {
    input: Matrix,
    inner_pre: Matrix,
    inner_out: Matrix,
    act: Activation,
}

/// Activations retained by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    shapes: Vec<(usize, usize)>,
    input: Matrix,
    trunk: Option<Activation>,
    blocks: Vec<BlockCache>,
    head: Vec<Activation>,
    last_hidden: Matrix,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.input.rows()
    }
}

fn activate(pre: Matrix, dropout: f64, mode: &mut Mode<'_>) -> Result<Activation> {
    let act = relu(&pre);
    match mode {
        Mode::Train(rng) if dropout > 0.0 => {
            let mask = dropout_mask(act.rows(), act.cols(), dropout, rng)?;
            let out = act.hadamard(&mask)?;
            Ok(Activation {
                pre,
                mask: Some(mask),
                out,
            })
        }
        _ => Ok(Activation {
            pre,
            mask: None,
            out: act,
        }),
    }
}

fn check_input(params: &ModelParams, x: &Matrix) -> Result<()> {
    if x.cols() != params.config.input_dim {
        return Err(Error::Shape(format!(
            "input has {} features, model expects {}",
            x.cols(),
            params.config.input_dim
        )));
    }
    Ok(())
}

/// Logits for every row of `x`, plus the cache needed by [`backward`].
pub fn forward(params: &ModelParams, x: &Matrix, mut mode: Mode<'_>) -> Result<(Vec<f64>, ForwardCache)> {
    check_input(params, x)?;
    let rate = params.config.dropout_rate;
    let mut h = x.clone();
    let trunk = match params.trunk() {
        Some(layer) => {
            let a = activate(layer.apply(&h)?, rate, &mut mode)?;
            h = a.out.clone();
            Some(a)
        }
        None => None,
    };

    let mut blocks = Vec::with_capacity(params.config.n_residual_blocks);
    for k in 0..params.config.n_residual_blocks {
        let (first, second) = params.block(k);
        let inner_pre = first.apply(&h)?;
        let inner_out = relu(&inner_pre);
        let mut sum = second.apply(&inner_out)?;
        sum.add_assign(&h)?;
        let act = activate(sum, rate, &mut mode)?;
        let next = act.out.clone();
        blocks.push(BlockCache {
            input: std::mem::replace(&mut h, next),
            inner_pre,
            inner_out,
            act,
        });
    }

    let off = params.head_offset();
    let mut head = Vec::with_capacity(params.config.head_widths.len());
    for layer in &params.layers[off..params.layers.len() - 1] {
        let a = activate(layer.apply(&h)?, 0.0, &mut Mode::Eval)?;
        h = a.out.clone();
        head.push(a);
    }

    let logits = params.layers.last().expect("output layer").apply(&h)?.into_vec();
    let cache = ForwardCache {
        generation: params.generation,
        shapes: params.config.layer_shapes(),
        input: x.clone(),
        trunk,
        blocks,
        head,
        last_hidden: h,
    };
    Ok((logits, cache))
}

/// Eval-mode logits without keeping a cache.
pub fn predict_logits(params: &ModelParams, x: &Matrix) -> Result<Vec<f64>> {
    check_input(params, x)?;
    let mut h = x.clone();
    if let Some(layer) = params.trunk() {
        h = relu(&layer.apply(&h)?);
    }
    for k in 0..params.config.n_residual_blocks {
        let (first, second) = params.block(k);
        let mut sum = second.apply(&relu(&first.apply(&h)?))?;
        sum.add_assign(&h)?;
        h = relu(&sum);
    }
    let off = params.head_offset();
    for layer in &params.layers[off..params.layers.len() - 1] {
        h = relu(&layer.apply(&h)?);
    }
    Ok(params.layers.last().expect("output layer").apply(&h)?.into_vec())
}

pub fn predict_proba(params: &ModelParams, x: &Matrix) -> Result<Vec<f64>> {
    Ok(predict_logits(params, x)?.into_iter().map(sigmoid).collect())
}

/// Parameter gradients, laid out like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }
}

fn dense_grad(input: &Matrix, delta: &Matrix) -> Result<Dense> {
    Ok(Dense {
        weights: matmul_tn(input, delta)?,
        bias: delta.sum_rows(),
    })
}

/// Gradient through `out = relu(pre) ⊙ mask`.
fn through_activation(d_out: &Matrix, act: &Activation) -> Result<Matrix> {
    let d = match &act.mask {
        Some(m) => d_out.hadamard(m)?,
        None => d_out.clone(),
    };
    d.hadamard(&relu_grad(&act.pre))
}

/// Backpropagates `dL/dz` through the network recorded in `cache`.
pub fn backward(params: &ModelParams, cache: &ForwardCache, d_logits: &[f64]) -> Result<Gradients> {
    if cache.generation != params.generation || cache.shapes != params.config.layer_shapes() {
        return Err(Error::State(
            "cache was produced by different or since-modified parameters".into(),
        ));
    }
    if d_logits.len() != cache.batch_size() {
        return Err(Error::State(format!(
            "{} upstream gradients for a batch of {}",
            d_logits.len(),
            cache.batch_size()
        )));
    }
    let n_layers = params.layers.len();
    let mut grads: Vec<Option<Dense>> = vec![None; n_layers];

    let delta = Matrix::from_vec(d_logits.len(), 1, d_logits.to_vec())?;
    let out_layer = &params.layers[n_layers - 1];
    grads[n_layers - 1] = Some(dense_grad(&cache.last_hidden, &delta)?);
    let mut d_h = matmul_nt(&delta, &out_layer.weights)?;

    let off = params.head_offset();
    for (j, act) in cache.head.iter().enumerate().rev() {
        let layer_idx = off + j;
        let d_pre = through_activation(&d_h, act)?;
        let input = if j == 0 {
            cache
                .blocks
                .last()
                .map(|b| &b.act.out)
                .or(cache.trunk.as_ref().map(|t| &t.out))
                .unwrap_or(&cache.input)
        } else {
            &cache.head[j - 1].out
        };
        grads[layer_idx] = Some(dense_grad(input, &d_pre)?);
        d_h = matmul_nt(&d_pre, &params.layers[layer_idx].weights)?;
    }

    for (k, block) in cache.blocks.iter().enumerate().rev() {
        let (first, second) = params.block(k);
        let d_sum = through_activation(&d_h, &block.act)?;
        grads[2 + 2 * k] = Some(dense_grad(&block.inner_out, &d_sum)?);
        let d_inner = matmul_nt(&d_sum, &second.weights)?.hadamard(&relu_grad(&block.inner_pre))?;
        grads[1 + 2 * k] = Some(dense_grad(&block.input, &d_inner)?);
        let mut d_in = matmul_nt(&d_inner, &first.weights)?;
        // skip connection
        d_in.add_assign(&d_sum)?;
        d_h = d_in;
    }

    if let Some(act) = &cache.trunk {
        let d_pre = through_activation(&d_h, act)?;
        grads[0] = Some(dense_grad(&cache.input, &d_pre)?);
    }

    Ok(Gradients {
        layers: grads.into_iter().map(|g| g.expect("every layer visited")).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid AdamW settings {self:?}")));
        }
        Ok(())
    }
}

/// Moment estimates for every parameter, flattened like [`ModelParams::to_flat`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(config: AdamWConfig, params: &ModelParams) -> Self {
        let n = params.n_params();
        Self {
            config,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }
}

/// One AdamW update over a parameter slice at step `t` (1-based):
/// `p ← p − lr·m̂/(√v̂ + ε) − lr·wd·p`, decay applied only when `decay`.
#[allow(clippy::too_many_arguments)]
pub fn adamw_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    cfg: &AdamWConfig,
    decay: bool,
) {
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    let wd = if decay { cfg.weight_decay } else { 0.0 };
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= cfg.learning_rate * (m_hat / (v_hat.sqrt() + cfg.epsilon) + wd * *p);
    }
}

/// Applies one AdamW step to every layer. Biases are not decayed.
pub fn adamw_step(params: &mut ModelParams, grads: &Gradients, state: &mut OptimizerState) -> Result<()> {
    if state.m.len() != params.n_params() {
        return Err(Error::Shape(format!(
            "optimizer state holds {} parameters, model has {}",
            state.m.len(),
            params.n_params()
        )));
    }
    if grads.layers.len() != params.layers.len()
        || grads.layers.iter().zip(&params.layers).any(|(g, p)| {
            g.weights.shape() != p.weights.shape() || g.bias.len() != p.bias.len()
        })
    {
        return Err(Error::Shape("gradient layout does not match parameters".into()));
    }
    state.step += 1;
    let t = state.step;
    let cfg = state.config.clone();
    let mut off = 0;
    for (layer, g) in params.layers_mut().iter_mut().zip(&grads.layers) {
        let nw = layer.weights.as_slice().len();
        adamw_update(
            layer.weights.as_mut_slice(),
            g.weights.as_slice(),
            &mut state.m[off..off + nw],
            &mut state.v[off..off + nw],
            t,
            &cfg,
            true,
        );
        off += nw;
        let nb = layer.bias.len();
        adamw_update(
            &mut layer.bias,
            &g.bias,
            &mut state.m[off..off + nb],
            &mut state.v[off..off + nb],
            t,
            &cfg,
            false,
        );
        off += nb;
    }
    Ok(())
}

/// Free-form facts about how a model was produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelMetadata {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_score: Option<f64>,
}

/// Parameters together with the feature mask they were trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub params: ModelParams,
    pub mask: Option<FeatureMask>,
    pub metadata: ModelMetadata,
}

impl Model {
    pub fn new(params: ModelParams) -> Self {
        Self {
            params,
            mask: None,
            metadata: ModelMetadata::default(),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        self.params.config()
    }

    /// Probabilities for an input already in model feature space. Inputs
    /// of the pre-mask width are rejected; use [`Model::prepare`] first.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        if let Some(mask) = &self.mask {
            if x.cols() != mask.len() && x.cols() == mask.original_dim() {
                return Err(Error::Shape(format!(
                    "model was trained on {} masked features; got unmasked width {}",
                    mask.len(),
                    x.cols()
                )));
            }
        }
        predict_proba(&self.params, x)
    }

    /// Applies the model's mask to raw-width data; model-width data passes through.
    pub fn prepare(&self, ds: &Dataset) -> Result<Dataset> {
        match &self.mask {
            Some(mask) if ds.feature_dim() == mask.original_dim() && mask.original_dim() != mask.len() => {
                apply_mask(ds, mask)
            }
            _ => Ok(ds.clone()),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerHeader {
    config: AdamWConfig,
    step: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DnetHeader {
    config: ModelConfig,
    n_params: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<FeatureMask>,
    metadata: ModelMetadata,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    optimizer: Option<OptimizerHeader>,
}

/// Writes `DNET`, a version byte, a little-endian `u32` header length, the
/// JSON header, then the parameters (and optional optimizer moments) as
/// little-endian `f64`.
pub fn save_model(path: impl AsRef<Path>, model: &Model, optimizer: Option<&OptimizerState>) -> Result<()> {
    let path = path.as_ref();
    let header = DnetHeader {
        config: model.params.config.clone(),
        n_params: model.params.n_params(),
        mask: model.mask.clone(),
        metadata: model.metadata.clone(),
        optimizer: optimizer.map(|o| OptimizerHeader {
            config: o.config.clone(),
            step: o.step,
        }),
    };
    let json = serde_json::to_vec(&header)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(DNET_MAGIC).map_err(io)?;
    w.write_all(&[DNET_VERSION]).map_err(io)?;
    w.write_all(&(json.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    let mut write_f64s = |xs: &[f64]| -> Result<()> {
        for x in xs {
            w.write_all(&x.to_le_bytes()).map_err(io)?;
        }
        Ok(())
    };
    write_f64s(&model.params.to_flat())?;
    if let Some(o) = optimizer {
        write_f64s(&o.m)?;
        write_f64s(&o.v)?;
    }
    w.flush().map_err(io)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    Ok(load_checkpoint(path)?.0)
}

/// Loads a model and, when present, the optimizer state saved with it.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Model, Option<OptimizerState>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    decode_model(&buf)
}

fn decode_model(buf: &[u8]) -> Result<(Model, Option<OptimizerState>)> {
    if buf.len() < 9 || &buf[..4] != DNET_MAGIC {
        return Err(Error::Format("not a DNET model file".into()));
    }
    if buf[4] != DNET_VERSION {
        return Err(Error::Format(format!("unsupported DNET version {}", buf[4])));
    }
    let hlen = u32::from_le_bytes([buf[5], buf[6], buf[7], buf[8]]) as usize;
    let body = &buf[9..];
    if body.len() < hlen {
        return Err(Error::Format("truncated header".into()));
    }
    let header: DnetHeader = serde_json::from_slice(&body[..hlen])
        .map_err(|e| Error::Format(format!("bad header: {e}")))?;
    header.config.validate().map_err(|e| Error::Format(e.to_string()))?;
    let n = header.config.n_params();
    if n != header.n_params {
        return Err(Error::Format(format!(
            "header declares {} parameters, topology has {n}",
            header.n_params
        )));
    }
    let blobs = if header.optimizer.is_some() { 3 } else { 1 };
    let payload = &body[hlen..];
    if payload.len() != blobs * n * 8 {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            blobs * n * 8,
            payload.len()
        )));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut take = |k: usize| -> Vec<f64> { values.by_ref().take(k).collect() };

    let mut params = ModelParams::zeros(&header.config).map_err(|e| Error::Format(e.to_string()))?;
    params.set_flat(&take(n))?;
    params.generation = 0;
    if let Some(mask) = &header.mask {
        if mask.len() != header.config.input_dim {
            return Err(Error::Format(format!(
                "mask keeps {} features but input_dim is {}",
                mask.len(),
                header.config.input_dim
            )));
        }
    }
    let optimizer = header.optimizer.map(|o| OptimizerState {
        config: o.config,
        step: o.step,
        m: take(n),
        v: take(n),
    });
    Ok((
        Model {
            params,
            mask: header.mask,
            metadata: header.metadata,
        },
        optimizer,
    ))
}
