//! Seeded monthly streams with covariate drift of a chosen shape.
//!
//! Informative features are drawn from two unit-variance Gaussian clusters
//! whose means sit at `∓(separation/2)·e`, with `e` the normalised all-ones
//! direction over the informative coordinates. Remaining coordinates are
//! standard normal noise. From `drift_month` on, the malicious cluster moves
//! by `drift_magnitude` along `−e`, toward the benign cluster, with a time
//! profile given by the shape:
//!
//! - `sudden`: full shift from the drift month on;
//! - `incremental`: the mean slides linearly, reaching the full shift in the
//!   last month;
//! - `gradual`: each malicious sample comes from the shifted cluster with a
//!   probability that ramps up the same way;
//! - `recurrent`: shifted and original clusters alternate, each cycle lasting
//!   `recurrent_period` months.
//!
//! Labels are Bernoulli(`class_balance`) in every month, so only `P(X)`
//! changes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Sample, YearMonth};
use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftShape {
    Sudden,
    Gradual,
    Incremental,
    Recurrent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftSpec {
    pub shape: DriftShape,
    pub n_months: usize,
    pub samples_per_month: usize,
    pub feature_dim: usize,
    pub n_informative: usize,
    /// First month (0-based) of the drifted regime.
    pub drift_month: usize,
    pub drift_magnitude: f64,
    pub class_balance: f64,
    /// Distance between the two cluster means before drift.
    pub separation: f64,
    pub recurrent_period: usize,
    pub start: YearMonth,
    pub seed: u64,
}

impl Default for DriftSpec {
    fn default() -> Self {
        Self {
            shape: DriftShape::Sudden,
            n_months: 12,
            samples_per_month: 500,
            feature_dim: 30,
            n_informative: 5,
            drift_month: 6,
            drift_magnitude: 1.6,
            class_balance: 0.5,
            separation: 4.0,
            recurrent_period: 2,
            start: YearMonth::new(2019, 1),
            seed: 0,
        }
    }
}

impl DriftSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.n_months == 0 || self.samples_per_month == 0 {
            return err("n_months and samples_per_month must be >= 1".into());
        }
        if self.n_informative == 0 || self.n_informative > self.feature_dim {
            return err(format!(
                "n_informative {} must be in 1..={}",
                self.n_informative, self.feature_dim
            ));
        }
        if self.drift_month >= self.n_months {
            return err(format!(
                "drift_month {} must be < n_months {}",
                self.drift_month, self.n_months
            ));
        }
        if !(self.drift_magnitude >= 0.0 && self.drift_magnitude.is_finite()) {
            return err(format!("drift_magnitude {} must be >= 0", self.drift_magnitude));
        }
        if !(self.class_balance > 0.0 && self.class_balance < 1.0) {
            return err(format!("class_balance {} not in (0, 1)", self.class_balance));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return err(format!("separation {} must be >= 0", self.separation));
        }
        if self.recurrent_period == 0 {
            return err("recurrent_period must be >= 1".into());
        }
        if self.samples_per_month > 86_400 * 10 {
            return err("samples_per_month too large to timestamp within a month".into());
        }
        Ok(())
    }

    /// Drift intensity of month `t` in `[0, 1]`: the fraction of the shift
    /// applied (sudden, incremental, recurrent) or the probability of the
    /// shifted cluster (gradual).
    pub fn drift_level(&self, t: usize) -> f64 {
        if t < self.drift_month {
            return 0.0;
        }
        let since = t - self.drift_month;
        match self.shape {
            DriftShape::Sudden => 1.0,
            DriftShape::Incremental | DriftShape::Gradual => {
                (since + 1) as f64 / (self.n_months - self.drift_month) as f64
            }
            DriftShape::Recurrent => {
                let on = self.recurrent_period.div_ceil(2);
                if since % self.recurrent_period < on {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn informative_indices(&self) -> Vec<usize> {
        Rng::derived(self.seed, &[u64::MAX]).sample_indices(self.feature_dim, self.n_informative)
    }
}

/// Concept parameters of one month, over the informative coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthConcept {
    pub index: usize,
    pub month: YearMonth,
    pub drift_level: f64,
    pub benign_mean: Vec<f64>,
    /// Malicious mean in effect (gradual: the expected mean of the mixture).
    pub malicious_mean: Vec<f64>,
    pub n_samples: usize,
    pub n_malicious: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: DriftSpec,
    pub informative_indices: Vec<usize>,
    /// Unit vector (over informative coordinates) from benign to malicious mean.
    pub separation_axis: Vec<f64>,
    pub months: Vec<MonthConcept>,
}

impl GroundTruth {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn generate_stream(spec: &DriftSpec) -> Result<Dataset> {
    Ok(generate_with_truth(spec)?.0)
}

/// The stream plus the parameters that generated it.
pub fn generate_with_truth(spec: &DriftSpec) -> Result<(Dataset, GroundTruth)> {
    spec.validate()?;
    let informative = spec.informative_indices();
    let k = informative.len();
    let axis = vec![1.0 / (k as f64).sqrt(); k];
    let half = spec.separation / 2.0;
    let benign: Vec<f64> = axis.iter().map(|a| -half * a).collect();
    let malicious: Vec<f64> = axis.iter().map(|a| half * a).collect();
    let shifted: Vec<f64> = malicious
        .iter()
        .zip(&axis)
        .map(|(m, a)| m - spec.drift_magnitude * a)
        .collect();

    let mut samples = Vec::with_capacity(spec.n_months * spec.samples_per_month);
    let mut months = Vec::with_capacity(spec.n_months);
    for t in 0..spec.n_months {
        let month = spec.start.plus(t as u32);
        let level = spec.drift_level(t);
        let mix = |w: f64| -> Vec<f64> {
            malicious
                .iter()
                .zip(&shifted)
                .map(|(a, b)| (1.0 - w) * a + w * b)
                .collect()
        };
        let effective = mix(level);
        let mut rng = Rng::derived(spec.seed, &[t as u64]);
        let base_ts = month.timestamp_at(15, 0);
        let mut n_mal = 0;
        for i in 0..spec.samples_per_month {
            let label = rng.bernoulli(spec.class_balance) as u8;
            let centre: &[f64] = if label == 0 {
                &benign
            } else if spec.shape == DriftShape::Gradual {
                // draw always, so the stream layout does not depend on the level
                let new_concept = rng.bernoulli(level);
                if new_concept {
                    &shifted
                } else {
                    &malicious
                }
            } else {
                &effective
            };
            n_mal += label as usize;
            let mut features: Vec<f64> = (0..spec.feature_dim).map(|_| rng.normal()).collect();
            for (j, &f) in informative.iter().enumerate() {
                features[f] += centre[j];
            }
            samples.push(Sample::new(features, label, base_ts + i as i64));
        }
        months.push(MonthConcept {
            index: t,
            month,
            drift_level: level,
            benign_mean: benign.clone(),
            malicious_mean: effective,
            n_samples: spec.samples_per_month,
            n_malicious: n_mal,
        });
    }
    let ds = Dataset::new(format!("synth-{:?}", spec.shape).to_lowercase(), spec.feature_dim, samples)?;
    let truth = GroundTruth {
        spec: spec.clone(),
        informative_indices: informative,
        separation_axis: axis,
        months,
    };
    Ok((ds, truth))
}
