//! Browser demo. The plain functions return serializable reports and are
//! tested natively; the `#[wasm_bindgen]` wrappers take and return JSON.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use driftwise::data::{bucket_by_month, Dataset};
use driftwise::evaluation::{detect_drift, evaluate_dataset, metrics, DriftVerdict};
use driftwise::losses::{bce, drbce, drbce_grad, LossBatch, LossConfig, LossVariant, WeightMode};
use driftwise::model::{AdamWConfig, Model, ModelConfig};
use driftwise::synthdrift::{generate_with_truth, DriftShape, DriftSpec};
use driftwise::training::{train, TrainConfig, ValidationStrategy};

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossCurveParams {
    pub lambda: f64,
    pub p_fn: f64,
    pub p_fp: f64,
    pub w0: f64,
    pub w1: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub points: usize,
}

impl Default for LossCurveParams {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            p_fn: 5.0,
            p_fp: 1.0,
            w0: 0.5,
            w1: 0.5,
            z_min: -8.0,
            z_max: 8.0,
            points: 161,
        }
    }
}

/// Per-sample loss and gradient against the logit, for each label.
#[derive(Debug, Clone, Serialize)]
pub struct LossCurve {
    pub z: Vec<f64>,
    pub loss_pos: Vec<f64>,
    pub loss_neg: Vec<f64>,
    pub grad_pos: Vec<f64>,
    pub grad_neg: Vec<f64>,
    pub bce_pos: Vec<f64>,
    pub bce_neg: Vec<f64>,
}

pub fn loss_curve(p: &LossCurveParams) -> Result<LossCurve, String> {
    if p.points < 2 || !(p.z_max > p.z_min) {
        return Err("need at least two points and z_max > z_min".into());
    }
    let cfg = LossConfig {
        variant: LossVariant::Drbce,
        lambda: p.lambda,
        p_fn: p.p_fn,
        p_fp: p.p_fp,
        w0: p.w0,
        w1: p.w1,
        weight_mode: WeightMode::Uniform,
    };
    cfg.validate().map_err(|e| e.to_string())?;
    let step = (p.z_max - p.z_min) / (p.points - 1) as f64;
    let mut c = LossCurve {
        z: Vec::with_capacity(p.points),
        loss_pos: vec![],
        loss_neg: vec![],
        grad_pos: vec![],
        grad_neg: vec![],
        bce_pos: vec![],
        bce_neg: vec![],
    };
    for i in 0..p.points {
        let z = [p.z_min + step * i as f64];
        let pos = LossBatch::new(&z, &[1]).map_err(|e| e.to_string())?;
        let neg = LossBatch::new(&z, &[0]).map_err(|e| e.to_string())?;
        c.z.push(z[0]);
        c.loss_pos.push(drbce(&pos, &cfg));
        c.loss_neg.push(drbce(&neg, &cfg));
        c.grad_pos.push(drbce_grad(&pos, &cfg)[0]);
        c.grad_neg.push(drbce_grad(&neg, &cfg)[0]);
        c.bce_pos.push(bce(&pos));
        c.bce_neg.push(bce(&neg));
    }
    Ok(c)
}

#[derive(Debug, Clone, Serialize)]
pub struct MonthStats {
    pub month: String,
    pub drift_level: f64,
    pub n: usize,
    pub n_malicious: usize,
    /// Class means projected on the benign-to-malicious axis.
    pub benign_projection: f64,
    pub malicious_projection: f64,
}

/// Per-month summary of a generated stream.
pub fn stream_stats(spec: &DriftSpec) -> Result<Vec<MonthStats>, String> {
    let (ds, truth) = generate_with_truth(spec).map_err(|e| e.to_string())?;
    let buckets = bucket_by_month(&ds).map_err(|e| e.to_string())?;
    let project = |f: &[f64]| -> f64 {
        truth
            .informative_indices
            .iter()
            .zip(&truth.separation_axis)
            .map(|(&i, a)| f[i] * a)
            .sum()
    };
    let mean_of = |d: &Dataset, label: u8| -> f64 {
        let v: Vec<f64> = d.samples().iter().filter(|s| s.label == label).map(|s| project(&s.features)).collect();
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    Ok(buckets
        .iter()
        .zip(&truth.months)
        .map(|(b, m)| MonthStats {
            month: b.month.to_string(),
            drift_level: m.drift_level,
            n: b.data.len(),
            n_malicious: m.n_malicious,
            benign_projection: mean_of(&b.data, 0),
            malicious_projection: mean_of(&b.data, 1),
        })
        .collect())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentParams {
    pub shape: DriftShape,
    pub drift_magnitude: f64,
    pub lambda: f64,
    pub p_fn: f64,
    pub p_fp: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        Self {
            shape: DriftShape::Sudden,
            drift_magnitude: 1.6,
            lambda: 0.1,
            p_fn: 5.0,
            p_fp: 1.0,
            epsilon: 0.1,
            seed: 0,
        }
    }
}

impl ExperimentParams {
    pub fn spec(&self) -> DriftSpec {
        DriftSpec {
            shape: self.shape,
            n_months: 12,
            samples_per_month: 600,
            feature_dim: 20,
            n_informative: 4,
            drift_month: 6,
            drift_magnitude: self.drift_magnitude,
            separation: 4.0,
            seed: self.seed,
            ..DriftSpec::default()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ArmReport {
    pub name: String,
    pub f1: Vec<Option<f64>>,
    pub fnr: Vec<Option<f64>>,
    pub acc: Vec<f64>,
    pub drift: DriftVerdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub months: Vec<String>,
    pub drift_month: usize,
    pub arms: Vec<ArmReport>,
}

/// Trains a BCE and a DRBCE model on the pre-drift months (every other
/// sample) and scores both on the held-out samples of every month.
pub fn run_experiment(p: &ExperimentParams) -> Result<ExperimentReport, String> {
    let spec = p.spec();
    let (ds, _) = generate_with_truth(&spec).map_err(|e| e.to_string())?;
    let even: Vec<usize> = (0..ds.len()).step_by(2).collect();
    let odd: Vec<usize> = (1..ds.len()).step_by(2).collect();
    let cutoff = spec.start.plus(spec.drift_month as u32).timestamp_at(1, 0);
    let fit = ds.subset("fit", &even).filter("pre-drift", |s| s.timestamp < cutoff);
    let test = ds.subset("test", &odd);
    let months = bucket_by_month(&test).map_err(|e| e.to_string())?;

    let model_cfg = ModelConfig {
        input_dim: spec.feature_dim,
        trunk_width: 24,
        n_residual_blocks: 1,
        dropout_rate: 0.1,
        head_widths: vec![12],
    };
    let arms = [
        ("BCE".to_string(), LossConfig::bce()),
        (
            format!("DRBCE (λ={}, P_FN={}, P_FP={})", p.lambda, p.p_fn, p.p_fp),
            LossConfig::drbce(p.lambda, p.p_fn, p.p_fp),
        ),
    ];
    let mut out = Vec::new();
    for (name, loss) in arms {
        loss.validate().map_err(|e| e.to_string())?;
        let cfg = TrainConfig {
            loss,
            validation: ValidationStrategy::Recent,
            n_val: 300,
            batch_size: 64,
            max_epochs: 25,
            patience: 5,
            seed: p.seed,
            optimizer: AdamWConfig {
                learning_rate: 1e-3,
                ..AdamWConfig::default()
            },
            ..TrainConfig::default()
        };
        let (params, _) = train(&fit, &model_cfg, &cfg).map_err(|e| e.to_string())?;
        let model = Model::new(params);
        let (mut f1, mut fnr, mut acc) = (vec![], vec![], vec![]);
        for b in &months {
            let m = evaluate_dataset(&model, &b.data, 0.5)
                .and_then(|c| metrics(&c))
                .map_err(|e| e.to_string())?;
            f1.push(m.f1);
            fnr.push(m.fnr);
            acc.push(m.acc);
        }
        let errors: Vec<f64> = acc.iter().map(|a| 1.0 - a).collect();
        let drift = detect_drift(&errors, p.epsilon, 2).map_err(|e| e.to_string())?;
        out.push(ArmReport { name, f1, fnr, acc, drift });
    }
    Ok(ExperimentReport {
        months: months.iter().map(|b| b.month.to_string()).collect(),
        drift_month: spec.drift_month,
        arms: out,
    })
}

fn json_in<T: for<'de> Deserialize<'de>>(s: &str) -> Result<T, JsError> {
    serde_json::from_str(s).map_err(|e| JsError::new(&e.to_string()))
}

fn json_out<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = lossCurve)]
pub fn loss_curve_json(params: &str) -> Result<String, JsError> {
    json_out(loss_curve(&json_in(params)?))
}

#[wasm_bindgen(js_name = streamStats)]
pub fn stream_stats_json(spec: &str) -> Result<String, JsError> {
    json_out(stream_stats(&json_in(spec)?))
}

#[wasm_bindgen(js_name = runExperiment)]
pub fn run_experiment_json(params: &str) -> Result<String, JsError> {
    json_out(run_experiment(&json_in(params)?))
}
