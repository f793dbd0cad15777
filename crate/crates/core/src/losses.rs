//! Binary cross-entropy and its drift-resilient extension.
//!
//! All losses are computed in logit space: `log σ(z) = −softplus(−z)` and
//! `log(1 − σ(z)) = −softplus(z)`, so nothing overflows for large `|z|`.
//!
//! The drift-resilient loss over a batch of `N` logits is
//!
//! ```text
//! L = −(1/N) Σ [ w1·P_FN·y·log p + w0·P_FP·(1−y)·log(1−p) ] + (1/N) Σ (λ/2)·z²
//! ```
//!
//! with `p = σ(z)`. Plain BCE is the case `w0 = w1 = P_FN = P_FP = 1, λ = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sigmoid, softplus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    Bce,
    SdBce,
    Drbce,
}

/// How class weights are derived from class counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// `w1 = N1/N`, `w0 = N0/N`: the majority class gets the larger weight.
    PaperFrequency,
    /// `w1 = N0/N`, `w0 = N1/N`.
    InverseFrequency,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub variant: LossVariant,
    pub lambda: f64,
    pub p_fn: f64,
    pub p_fp: f64,
    pub w0: f64,
    pub w1: f64,
    pub weight_mode: WeightMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            variant: LossVariant::Drbce,
            lambda: 0.1,
            p_fn: 5.0,
            p_fp: 1.0,
            w0: 1.0,
            w1: 1.0,
            weight_mode: WeightMode::PaperFrequency,
        }
    }
}

impl LossConfig {
    /// Plain BCE.
    pub fn bce() -> Self {
        Self {
            variant: LossVariant::Bce,
            lambda: 0.0,
            p_fn: 1.0,
            p_fp: 1.0,
            w0: 1.0,
            w1: 1.0,
            weight_mode: WeightMode::Uniform,
        }
    }

    /// BCE with the logit penalty only.
    pub fn sd_bce(lambda: f64) -> Self {
        Self {
            variant: LossVariant::SdBce,
            lambda,
            ..Self::bce()
        }
    }

    pub fn drbce(lambda: f64, p_fn: f64, p_fp: f64) -> Self {
        Self {
            variant: LossVariant::Drbce,
            lambda,
            p_fn,
            p_fp,
            ..Self::default()
        }
    }

    /// DRBCE with every coefficient neutral except `lambda`.
    pub fn neutral(lambda: f64) -> Self {
        Self {
            variant: LossVariant::Drbce,
            lambda,
            p_fn: 1.0,
            p_fp: 1.0,
            w0: 1.0,
            w1: 1.0,
            weight_mode: WeightMode::Uniform,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.p_fn > 0.0 && self.p_fn.is_finite()) || !(self.p_fp > 0.0 && self.p_fp.is_finite()) {
            return Err(Error::Config(format!(
                "penalties must be > 0, got P_FN={} P_FP={}",
                self.p_fn, self.p_fp
            )));
        }
        for (name, w) in [("w0", self.w0), ("w1", self.w1)] {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {w}")));
            }
        }
        Ok(())
    }

    /// Coefficients actually used for the variant.
    pub fn effective(&self) -> Coefficients {
        match self.variant {
            LossVariant::Bce => Coefficients::NEUTRAL,
            LossVariant::SdBce => Coefficients {
                lambda: self.lambda,
                ..Coefficients::NEUTRAL
            },
            LossVariant::Drbce => Coefficients {
                lambda: self.lambda,
                pos: self.w1 * self.p_fn,
                neg: self.w0 * self.p_fp,
            },
        }
    }

    /// Same config with `w0`/`w1` taken from class counts per `weight_mode`.
    pub fn with_class_counts(&self, n0: usize, n1: usize) -> Result<Self> {
        let (w0, w1) = class_weights(n0, n1, self.weight_mode)?;
        Ok(Self { w0, w1, ..self.clone() })
    }
}

/// Resolved per-term multipliers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    /// `w1 · P_FN`
    pub pos: f64,
    /// `w0 · P_FP`
    pub neg: f64,
    pub lambda: f64,
}

impl Coefficients {
    pub const NEUTRAL: Coefficients = Coefficients {
        pos: 1.0,
        neg: 1.0,
        lambda: 0.0,
    };
}

/// Logits and labels for one loss evaluation.
#[derive(Debug, Clone, Copy)]
pub struct LossBatch<'a> {
    logits: &'a [f64],
    labels: &'a [u8],
}

impl<'a> LossBatch<'a> {
    pub fn new(logits: &'a [f64], labels: &'a [u8]) -> Result<Self> {
        if logits.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} logits for {} labels",
                logits.len(),
                labels.len()
            )));
        }
        if logits.is_empty() {
            return Err(Error::EmptyDataset("loss batch is empty".into()));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::Data("labels must be 0 or 1".into()));
        }
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::Data("non-finite logit".into()));
        }
        Ok(Self { logits, labels })
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn logits(&self) -> &[f64] {
        self.logits
    }

    pub fn labels(&self) -> &[u8] {
        self.labels
    }
}

pub fn class_weights(n0: usize, n1: usize, mode: WeightMode) -> Result<(f64, f64)> {
    let n = n0 + n1;
    if n == 0 {
        return Err(Error::EmptyDataset("class weights need at least one sample".into()));
    }
    let (f0, f1) = (n0 as f64 / n as f64, n1 as f64 / n as f64);
    Ok(match mode {
        WeightMode::PaperFrequency => (f0, f1),
        WeightMode::InverseFrequency => (f1, f0),
        WeightMode::Uniform => (1.0, 1.0),
    })
}

/// Weighted cross-entropy term, averaged over the batch.
fn data_term(batch: &LossBatch<'_>, pos: f64, neg: f64) -> f64 {
    let sum: f64 = batch
        .logits
        .iter()
        .zip(batch.labels)
        .map(|(&z, &y)| {
            if y == 1 {
                pos * softplus(-z)
            } else {
                neg * softplus(z)
            }
        })
        .sum();
    sum / batch.len() as f64
}

/// `(1/N) Σ (λ/2)·z²`
fn penalty_term(batch: &LossBatch<'_>, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let sum: f64 = batch.logits.iter().map(|&z| 0.5 * lambda * z * z).sum();
    sum / batch.len() as f64
}

pub fn bce(batch: &LossBatch<'_>) -> f64 {
    data_term(batch, 1.0, 1.0)
}

pub fn sd_bce(batch: &LossBatch<'_>, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }
    Ok(bce(batch) + penalty_term(batch, lambda))
}

pub fn drbce(batch: &LossBatch<'_>, cfg: &LossConfig) -> f64 {
    let c = cfg.effective();
    data_term(batch, c.pos, c.neg) + penalty_term(batch, c.lambda)
}

/// `dL/dz_i = (1/N)·[−w1·P_FN·y·(1−p) + w0·P_FP·(1−y)·p + λ·z]`
pub fn drbce_grad(batch: &LossBatch<'_>, cfg: &LossConfig) -> Vec<f64> {
    let c = cfg.effective();
    let inv_n = 1.0 / batch.len() as f64;
    batch
        .logits
        .iter()
        .zip(batch.labels)
        .map(|(&z, &y)| {
            let data = if y == 1 {
                -c.pos * sigmoid(-z)
            } else {
                c.neg * sigmoid(z)
            };
            inv_n * (data + c.lambda * z)
        })
        .collect()
}

/// Loss and gradient in one call.
pub fn loss_and_grad(batch: &LossBatch<'_>, cfg: &LossConfig) -> (f64, Vec<f64>) {
    (drbce(batch, cfg), drbce_grad(batch, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    /// Direct transcription of the printed formula, probabilities first.
    fn direct_drbce(z: &[f64], y: &[u8], pos: f64, neg: f64, lambda: f64) -> f64 {
        let n = z.len() as f64;
        let mut data = 0.0;
        let mut pen = 0.0;
        for (&zi, &yi) in z.iter().zip(y) {
            let p = 1.0 / (1.0 + (-zi).exp());
            let yi = yi as f64;
            data += pos * yi * p.ln() + neg * (1.0 - yi) * (1.0 - p).ln();
            pen += lambda / 2.0 * zi * zi;
        }
        -data / n + pen / n
    }

    fn random_batch(rng: &mut Rng, n: usize, zmax: f64) -> (Vec<f64>, Vec<u8>) {
        let z = (0..n).map(|_| rng.uniform_range(-zmax, zmax)).collect();
        let y = (0..n).map(|_| rng.bernoulli(0.5) as u8).collect();
        (z, y)
    }

    #[test]
    fn class_weight_modes() {
        assert_eq!(class_weights(50, 50, WeightMode::PaperFrequency).unwrap(), (0.5, 0.5));
        assert_eq!(class_weights(90, 10, WeightMode::PaperFrequency).unwrap(), (0.9, 0.1));
        assert_eq!(class_weights(90, 10, WeightMode::InverseFrequency).unwrap(), (0.1, 0.9));
        assert_eq!(class_weights(90, 10, WeightMode::Uniform).unwrap(), (1.0, 1.0));
        assert!(matches!(
            class_weights(0, 0, WeightMode::Uniform),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn bce_scalar_cases() {
        let b = LossBatch::new(&[0.0], &[1]).unwrap();
        assert!((bce(&b) - std::f64::consts::LN_2).abs() < 1e-15);
        let b = LossBatch::new(&[50.0], &[1]).unwrap();
        assert!(bce(&b) < 1e-20);
    }

    #[test]
    fn bce_matches_direct_formula() {
        let mut rng = Rng::new(1);
        for _ in 0..200 {
            let (z, y) = random_batch(&mut rng, 32, 10.0);
            let b = LossBatch::new(&z, &y).unwrap();
            let want = direct_drbce(&z, &y, 1.0, 1.0, 0.0);
            assert!(((bce(&b) - want) / want).abs() < 1e-10);
        }
    }

    #[test]
    fn batch_validation() {
        assert!(matches!(LossBatch::new(&[0.0], &[]), Err(Error::Shape(_))));
        assert!(LossBatch::new(&[], &[]).is_err());
        assert!(LossBatch::new(&[f64::NAN], &[0]).is_err());
        assert!(LossBatch::new(&[0.0], &[2]).is_err());
    }

    #[test]
    fn sd_bce_cases() {
        let mut rng = Rng::new(2);
        let (z, y) = random_batch(&mut rng, 16, 5.0);
        let b = LossBatch::new(&z, &y).unwrap();
        assert_eq!(sd_bce(&b, 0.0).unwrap(), bce(&b));

        let one = LossBatch::new(&[2.0], &[1]).unwrap();
        assert!((sd_bce(&one, 0.1).unwrap() - (bce(&one) + 0.2)).abs() < 1e-15);

        let lam = 0.37;
        let mean_sq = z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64;
        assert!((sd_bce(&b, lam).unwrap() - bce(&b) - lam / 2.0 * mean_sq).abs() < 1e-12);
        assert!(matches!(sd_bce(&b, -1.0), Err(Error::Config(_))));
    }

    #[test]
    fn drbce_scalar_cases() {
        let mut rng = Rng::new(3);
        let (z, y) = random_batch(&mut rng, 16, 5.0);
        let b = LossBatch::new(&z, &y).unwrap();
        assert!((drbce(&b, &LossConfig::neutral(0.0)) - bce(&b)).abs() < 1e-12);

        let one = LossBatch::new(&[0.0], &[1]).unwrap();
        let cfg = LossConfig {
            w0: 1.0,
            w1: 1.0,
            ..LossConfig::drbce(0.0, 5.0, 1.0)
        };
        assert!((drbce(&one, &cfg) - 5.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn drbce_default_choice_matches_direct_formula() {
        let mut rng = Rng::new(4);
        for _ in 0..200 {
            let (z, y) = random_batch(&mut rng, 24, 10.0);
            let b = LossBatch::new(&z, &y).unwrap();
            let cfg = LossConfig::drbce(0.1, 5.0, 1.0).with_class_counts(7, 17).unwrap();
            let want = direct_drbce(&z, &y, cfg.w1 * 5.0, cfg.w0, 0.1);
            assert!(((drbce(&b, &cfg) - want) / want).abs() < 1e-10);
        }
    }

    #[test]
    fn bce_variant_ignores_coefficients() {
        let cfg = LossConfig {
            variant: LossVariant::Bce,
            ..LossConfig::drbce(0.5, 3.0, 2.0)
        };
        assert_eq!(cfg.effective(), Coefficients::NEUTRAL);
        let cfg = LossConfig {
            variant: LossVariant::SdBce,
            ..LossConfig::drbce(0.5, 3.0, 2.0)
        };
        assert_eq!(cfg.effective().pos, 1.0);
        assert_eq!(cfg.effective().lambda, 0.5);
    }

    #[test]
    fn grad_scalar_cases() {
        let one = LossBatch::new(&[0.0], &[1]).unwrap();
        assert_eq!(drbce_grad(&one, &LossConfig::neutral(0.0)), vec![-0.5]);
        // λ contributes λ·z, which vanishes at the origin
        let with_lambda = drbce_grad(&one, &LossConfig::neutral(0.7));
        assert_eq!(with_lambda, vec![-0.5]);
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        assert!(LossConfig::drbce(-0.1, 1.0, 1.0).validate().is_err());
        assert!(LossConfig::drbce(0.1, 0.0, 1.0).validate().is_err());
        assert!(LossConfig::drbce(0.1, 1.0, -2.0).validate().is_err());
        let bad_w = LossConfig { w1: 1.5, ..LossConfig::default() };
        assert!(bad_w.validate().is_err());
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let z = [1e6, -1e6, 1e6, -1e6];
        let y = [0, 1, 1, 0];
        let b = LossBatch::new(&z, &y).unwrap();
        let cfg = LossConfig::drbce(0.1, 5.0, 1.0);
        assert!(drbce(&b, &cfg).is_finite());
        assert!(drbce_grad(&b, &cfg).iter().all(|g| g.is_finite()));
        assert!(bce(&b).is_finite());
    }

    fn arb_case() -> impl Strategy<Value = (Vec<f64>, Vec<u8>, f64, f64, f64)> {
        (1usize..32)
            .prop_flat_map(|n| {
                (
                    prop::collection::vec(-30.0f64..30.0, n),
                    prop::collection::vec(0u8..2, n),
                    0.0f64..1.0,
                    0.1f64..10.0,
                    0.1f64..10.0,
                )
            })
    }

    proptest! {
        #[test]
        fn gradient_matches_central_differences((z, y, lam, pfn, pfp) in arb_case()) {
            let cfg = LossConfig::drbce(lam, pfn, pfp).with_class_counts(3, 5).unwrap();
            let b = LossBatch::new(&z, &y).unwrap();
            let g = drbce_grad(&b, &cfg);
            let h = 1e-5;
            let n = z.len() as f64;
            // the loss is a mean of per-sample terms, so each coordinate is
            // differenced on its own term to keep the other terms' rounding out
            for i in 0..z.len() {
                let term = |zi: f64| drbce(&LossBatch::new(&[zi], &y[i..=i]).unwrap(), &cfg) / n;
                let fd = (term(z[i] + h) - term(z[i] - h)) / (2.0 * h);
                let denom = g[i].abs().max(fd.abs()).max(1e-6);
                prop_assert!((g[i] - fd).abs() / denom < 1e-6, "coord {} analytic {} fd {}", i, g[i], fd);
            }
        }

        #[test]
        fn larger_false_negative_penalty_increases_loss(
            (z, mut y, lam, pfn, pfp) in arb_case(),
            bump in 0.01f64..5.0,
        ) {
            y[0] = 1;
            let mut z = z;
            z[0] = z[0].min(5.0);
            let b = LossBatch::new(&z, &y).unwrap();
            let lo = LossConfig::drbce(lam, pfn, pfp).with_class_counts(4, 4).unwrap();
            let hi = LossConfig { p_fn: pfn + bump, ..lo.clone() };
            prop_assert!(drbce(&b, &hi) > drbce(&b, &lo));
        }
    }
}
