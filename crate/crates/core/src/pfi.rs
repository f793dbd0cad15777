//! Permutation feature importance and the feature mask it induces.
//!
//! A feature's importance is the drop in the chosen score when its column is
//! shuffled across samples, averaged over `n_repeats` shuffles. A feature is
//! kept iff its importance is strictly greater than `keep_threshold`. With
//! `n_repeats = 1` and a zero threshold this is the single-shuffle form of the
//! algorithm.
//!
//! Every `(feature, repeat)` pair draws from its own derived seed, so results
//! do not depend on evaluation order or thread count.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureMask, Provenance};
use crate::error::{Error, Result};
use crate::evaluation::{confusion, metrics};
use crate::model::Model;
use crate::numerics::{Matrix, Rng};
use crate::training::SelectionMetric;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PfiConfig {
    pub metric: SelectionMetric,
    pub n_repeats: usize,
    pub seed: u64,
    pub keep_threshold: f64,
    /// Decision threshold on the predicted probability.
    pub threshold: f64,
}

impl Default for PfiConfig {
    fn default() -> Self {
        Self {
            metric: SelectionMetric::F1,
            n_repeats: 5,
            seed: 0,
            keep_threshold: 0.0,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub index: usize,
    pub importance: f64,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfiReport {
    pub base_score: f64,
    pub metric: SelectionMetric,
    pub n_repeats: usize,
    pub seed: u64,
    pub keep_threshold: f64,
    pub features: Vec<FeatureImportance>,
}

impl PfiReport {
    pub fn kept_indices(&self) -> Vec<usize> {
        self.features.iter().filter(|f| f.kept).map(|f| f.index).collect()
    }

    /// `feature_index,importance,kept`, optionally preceded by a provenance comment.
    pub fn write_csv(&self, w: &mut impl Write, prov: Option<&Provenance>) -> std::io::Result<()> {
        if let Some(p) = prov {
            writeln!(w, "# config_hash={} seed={}", p.config_hash, p.seed)?;
        }
        writeln!(w, "feature_index,importance,kept")?;
        for f in &self.features {
            writeln!(w, "{},{:?},{}", f.index, f.importance, f.kept as u8)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, prov: Option<&Provenance>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_csv(&mut buf, prov).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Copy of `x` whose column `i` is shuffled across rows.
pub fn permute_feature(x: &Matrix, i: usize, rng: &mut Rng) -> Result<Matrix> {
    if i >= x.cols() {
        return Err(Error::Shape(format!(
            "feature {i} out of range for {} columns",
            x.cols()
        )));
    }
    let mut col = x.column(i);
    rng.shuffle(&mut col);
    let mut out = x.clone();
    for (r, v) in col.into_iter().enumerate() {
        out.set(r, i, v);
    }
    Ok(out)
}

fn score(model: &Model, x: &Matrix, y: &[u8], cfg: &PfiConfig) -> Result<f64> {
    let probs = model.predict_proba(x)?;
    let m = metrics(&confusion(&probs, y, cfg.threshold)?)?;
    Ok(cfg.metric.score(&m))
}

fn feature_importance(model: &Model, x: &Matrix, y: &[u8], cfg: &PfiConfig, base: f64, i: usize) -> Result<f64> {
    let mut drop_sum = 0.0;
    for r in 0..cfg.n_repeats {
        let mut rng = Rng::derived(cfg.seed, &[i as u64, r as u64]);
        let xp = permute_feature(x, i, &mut rng)?;
        drop_sum += base - score(model, &xp, y, cfg)?;
    }
    Ok(drop_sum / cfg.n_repeats as f64)
}

/// Scores every feature of `x` against a read-only model. When nothing is
/// kept the report is returned inside [`Error::EmptyMask`].
pub fn run_pfi(model: &Model, x: &Matrix, y: &[u8], cfg: &PfiConfig) -> Result<(FeatureMask, PfiReport)> {
    if cfg.n_repeats == 0 {
        return Err(Error::Config("n_repeats must be >= 1".into()));
    }
    if x.rows() == 0 {
        return Err(Error::Data("permutation importance needs at least one sample".into()));
    }
    if x.rows() != y.len() {
        return Err(Error::Shape(format!("{} rows for {} labels", x.rows(), y.len())));
    }
    if x.cols() != model.config().input_dim {
        return Err(Error::Shape(format!(
            "data has {} features, model expects {}",
            x.cols(),
            model.config().input_dim
        )));
    }
    let base = score(model, x, y, cfg)?;
    let one = |i: usize| feature_importance(model, x, y, cfg, base, i);

    #[cfg(feature = "parallel")]
    let importances: Vec<f64> = {
        use rayon::prelude::*;
        (0..x.cols()).into_par_iter().map(one).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let importances: Vec<f64> = (0..x.cols()).map(one).collect::<Result<_>>()?;

    let features: Vec<FeatureImportance> = importances
        .into_iter()
        .enumerate()
        .map(|(index, importance)| FeatureImportance {
            index,
            importance,
            kept: importance > cfg.keep_threshold,
        })
        .collect();
    let report = PfiReport {
        base_score: base,
        metric: cfg.metric,
        n_repeats: cfg.n_repeats,
        seed: cfg.seed,
        keep_threshold: cfg.keep_threshold,
        features,
    };
    let kept = report.kept_indices();
    if kept.is_empty() {
        return Err(Error::EmptyMask(Box::new(report)));
    }
    Ok((FeatureMask::new(x.cols(), kept)?, report))
}
