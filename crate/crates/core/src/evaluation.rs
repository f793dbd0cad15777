//! Confusion counts, the ACC/F1/FNR/FPR suite, per-month performance series
//! and the error-threshold drift detector.

use std::io::Write;
use std::ops::{Add, AddAssign};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MonthBucket, Provenance};
use crate::error::{Error, Result};
use crate::model::Model;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn new(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self::new(self.tp + o.tp, self.fp + o.fp, self.tn + o.tn, self.fn_ + o.fn_)
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

/// Predicts positive iff `prob >= threshold`.
pub fn confusion(probs: &[f64], labels: &[u8], threshold: f64) -> Result<ConfusionCounts> {
    if probs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!("threshold {threshold} not in (0, 1)")));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &y) in probs.iter().zip(labels) {
        match (p >= threshold, y == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Metric values; `None` marks an undefined ratio (zero denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub f1: Option<f64>,
    pub fnr: Option<f64>,
    pub fpr: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(c: &ConfusionCounts) -> Result<Metrics> {
    let total = c.total();
    if total == 0 {
        return Err(Error::Data("no predictions to score".into()));
    }
    Ok(Metrics {
        acc: (c.tp + c.tn) as f64 / total as f64,
        f1: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
        fnr: ratio(c.fn_, c.fn_ + c.tp),
        fpr: ratio(c.fp, c.fp + c.tn),
    })
}

/// Which quantity the drift detector watches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMetric {
    #[default]
    OneMinusAccuracy,
    Fnr,
}

impl ErrorMetric {
    pub fn of(self, m: &Metrics) -> Option<f64> {
        match self {
            ErrorMetric::OneMinusAccuracy => Some(1.0 - m.acc),
            ErrorMetric::Fnr => m.fnr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub bucket: String,
    pub n: usize,
    pub n_pos: usize,
    pub confusion: ConfusionCounts,
    /// `None` for an empty bucket.
    pub metrics: Option<Metrics>,
    pub err: Option<f64>,
}

impl BucketRow {
    fn from_confusion(bucket: String, n_pos: usize, c: ConfusionCounts, err_metric: ErrorMetric) -> Self {
        let metrics = metrics(&c).ok();
        Self {
            bucket,
            n: c.total(),
            n_pos,
            confusion: c,
            err: metrics.as_ref().and_then(|m| err_metric.of(m)),
            metrics,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub threshold: f64,
    pub error_metric: ErrorMetric,
    pub buckets: Vec<BucketRow>,
    pub aggregate: BucketRow,
}

impl MetricsReport {
    /// Error per bucket; empty buckets are `None`.
    pub fn error_series(&self) -> Vec<Option<f64>> {
        self.buckets.iter().map(|b| b.err).collect()
    }
}

pub fn evaluate_dataset(model: &Model, ds: &Dataset, threshold: f64) -> Result<ConfusionCounts> {
    if ds.is_empty() {
        return Ok(ConfusionCounts::default());
    }
    let ds = model.prepare(ds)?;
    let probs = model.predict_proba(&ds.features())?;
    confusion(&probs, &ds.labels(), threshold)
}

/// Scores each bucket in order and pools all of them into the aggregate row.
pub fn evaluate_buckets(
    model: &Model,
    buckets: &[MonthBucket],
    threshold: f64,
    error_metric: ErrorMetric,
) -> Result<MetricsReport> {
    let score = |b: &MonthBucket| evaluate_dataset(model, &b.data, threshold);
    #[cfg(feature = "parallel")]
    let counts: Vec<ConfusionCounts> = {
        use rayon::prelude::*;
        buckets.par_iter().map(score).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let counts: Vec<ConfusionCounts> = buckets.iter().map(score).collect::<Result<_>>()?;

    let mut pooled = ConfusionCounts::default();
    let mut rows = Vec::with_capacity(buckets.len());
    for (b, c) in buckets.iter().zip(counts) {
        pooled += c;
        rows.push(BucketRow::from_confusion(b.month.to_string(), c.positives(), c, error_metric));
    }
    Ok(MetricsReport {
        threshold,
        error_metric,
        buckets: rows,
        aggregate: BucketRow::from_confusion("all".into(), pooled.positives(), pooled, error_metric),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftVerdict {
    pub epsilon: f64,
    pub persistence: usize,
    /// Index of the first bucket of the drifted regime.
    pub onset: Option<usize>,
    /// Error stays at or above `epsilon` from the onset to the end.
    pub persisted: bool,
}

/// Finds the first index that starts a run of at least `persistence`
/// consecutive errors `>= epsilon`. Shorter excursions before it are treated
/// as noise.
pub fn detect_drift(errors: &[f64], epsilon: f64, persistence: usize) -> Result<DriftVerdict> {
    if persistence == 0 {
        return Err(Error::Config("persistence must be >= 1".into()));
    }
    if errors.is_empty() {
        return Err(Error::Data("error series is empty".into()));
    }
    let mut run = 0;
    let mut onset = None;
    for (t, &e) in errors.iter().enumerate() {
        if e >= epsilon {
            run += 1;
            if run == persistence {
                onset = Some(t + 1 - persistence);
                break;
            }
        } else {
            run = 0;
        }
    }
    let persisted = onset.is_some_and(|t0| errors[t0..].iter().all(|&e| e >= epsilon));
    Ok(DriftVerdict {
        epsilon,
        persistence,
        onset,
        persisted,
    })
}

/// Runs [`detect_drift`] over the non-empty buckets of a report; the onset
/// is reported as an index into `report.buckets`.
pub fn detect_drift_in_report(report: &MetricsReport, epsilon: f64, persistence: usize) -> Result<DriftVerdict> {
    let (idx, series): (Vec<usize>, Vec<f64>) = report
        .buckets
        .iter()
        .enumerate()
        .filter_map(|(i, b)| b.err.map(|e| (i, e)))
        .unzip();
    let mut v = detect_drift(&series, epsilon, persistence)?;
    v.onset = v.onset.map(|t| idx[t]);
    Ok(v)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x}"))
}

fn provenance_line(w: &mut impl Write, prov: Option<&Provenance>) -> std::io::Result<()> {
    if let Some(p) = prov {
        writeln!(w, "# config_hash={} seed={}", p.config_hash, p.seed)?;
    }
    Ok(())
}

/// `bucket,n,n_pos,acc,f1,fnr,fpr,err`; undefined values are written as `NA`.
pub fn write_metrics_csv(report: &MetricsReport, w: &mut impl Write, prov: Option<&Provenance>) -> std::io::Result<()> {
    provenance_line(w, prov)?;
    writeln!(w, "bucket,n,n_pos,acc,f1,fnr,fpr,err")?;
    for row in report.buckets.iter().chain(std::iter::once(&report.aggregate)) {
        let m = row.metrics;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            row.bucket,
            row.n,
            row.n_pos,
            fmt_opt(m.map(|m| m.acc)),
            fmt_opt(m.and_then(|m| m.f1)),
            fmt_opt(m.and_then(|m| m.fnr)),
            fmt_opt(m.and_then(|m| m.fpr)),
            fmt_opt(row.err),
        )?;
    }
    Ok(())
}

/// Long format for charting: `run,bucket,metric,value`.
pub fn write_long_csv(
    rows: &[(String, &MetricsReport)],
    w: &mut impl Write,
    prov: Option<&Provenance>,
) -> std::io::Result<()> {
    provenance_line(w, prov)?;
    writeln!(w, "run,bucket,metric,value")?;
    for (run, report) in rows {
        for row in &report.buckets {
            let Some(m) = row.metrics else { continue };
            for (name, v) in [
                ("acc", Some(m.acc)),
                ("f1", m.f1),
                ("fnr", m.fnr),
                ("fpr", m.fpr),
                ("err", row.err),
            ] {
                if let Some(v) = v {
                    writeln!(w, "{run},{},{name},{v}", row.bucket)?;
                }
            }
        }
    }
    Ok(())
}

pub fn save_metrics_csv(report: &MetricsReport, path: impl AsRef<Path>, prov: Option<&Provenance>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_metrics_csv(report, &mut buf, prov).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads back a file written by [`write_metrics_csv`].
pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<(String, usize, usize, [Option<f64>; 5])>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(crate::data::csv_err)?;
    let parse = |s: &str| -> Result<Option<f64>> {
        if s == "NA" {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|e| Error::Format(format!("{s}: {e}")))
        }
    };
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(crate::data::csv_err)?;
        if rec.len() != 8 {
            return Err(Error::Parse {
                row: i + 2,
                msg: "expected 8 columns".into(),
            });
        }
        let n = rec[1].parse().map_err(|_| Error::Parse { row: i + 2, msg: "n".into() })?;
        let n_pos = rec[2].parse().map_err(|_| Error::Parse { row: i + 2, msg: "n_pos".into() })?;
        out.push((
            rec[0].to_string(),
            n,
            n_pos,
            [parse(&rec[3])?, parse(&rec[4])?, parse(&rec[5])?, parse(&rec[6])?, parse(&rec[7])?],
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Sample, YearMonth};
    use crate::model::{init_model, ModelConfig};
    use crate::numerics::Rng;

    #[test]
    fn confusion_basic() {
        let c = confusion(&[0.9, 0.1], &[1, 0], 0.5).unwrap();
        assert_eq!(c, ConfusionCounts::new(1, 0, 1, 0));
        let c = confusion(&[0.5, 0.5, 0.5], &[1, 0, 0], 0.5).unwrap();
        assert_eq!(c, ConfusionCounts::new(1, 2, 0, 0));
        assert!(matches!(confusion(&[0.1], &[], 0.5), Err(Error::Shape(_))));
        assert!(confusion(&[0.1], &[1], 1.0).is_err());
    }

    #[test]
    fn confusion_matches_recount() {
        let mut rng = Rng::new(12);
        let probs: Vec<f64> = (0..1000).map(|_| rng.uniform()).collect();
        let labels: Vec<u8> = (0..1000).map(|_| rng.bernoulli(0.4) as u8).collect();
        let c = confusion(&probs, &labels, 0.3).unwrap();
        let mut want = [0usize; 4];
        for i in 0..1000 {
            let pred = probs[i] >= 0.3;
            let slot = match (pred, labels[i]) {
                (true, 1) => 0,
                (true, _) => 1,
                (false, 0) => 2,
                _ => 3,
            };
            want[slot] += 1;
        }
        assert_eq!([c.tp, c.fp, c.tn, c.fn_], want);
    }

    #[test]
    fn metric_cases() {
        let m = metrics(&ConfusionCounts::new(1, 0, 1, 0)).unwrap();
        assert_eq!((m.acc, m.f1, m.fnr, m.fpr), (1.0, Some(1.0), Some(0.0), Some(0.0)));
        let m = metrics(&ConfusionCounts::new(0, 0, 5, 5)).unwrap();
        assert_eq!((m.f1, m.fnr, m.fpr), (Some(0.0), Some(1.0), Some(0.0)));
        // malware-only bucket
        let c = ConfusionCounts::new(7, 0, 0, 3);
        let m = metrics(&c).unwrap();
        assert_eq!(m.fpr, None);
        assert_eq!(m.acc, 0.7);
        assert_eq!(m.acc, 1.0 - m.fnr.unwrap());
        assert!(metrics(&ConfusionCounts::default()).is_err());
        // all true negatives: F1 and FNR undefined
        let m = metrics(&ConfusionCounts::new(0, 0, 4, 0)).unwrap();
        assert_eq!((m.f1, m.fnr), (None, None));
    }

    #[test]
    fn f1_ignores_true_negatives() {
        let a = metrics(&ConfusionCounts::new(3, 2, 1, 4)).unwrap();
        let b = metrics(&ConfusionCounts::new(3, 2, 100, 4)).unwrap();
        assert_eq!(a.f1, b.f1);
        assert_eq!(a.acc, 1.0 - 6.0 / 10.0);
    }

    #[test]
    fn drift_examples() {
        let v = detect_drift(&[0.02, 0.03, 0.15, 0.2, 0.3], 0.1, 2).unwrap();
        assert_eq!((v.onset, v.persisted), (Some(2), true));
        let v = detect_drift(&[0.01, 0.02, 0.05], 0.1, 1).unwrap();
        assert_eq!(v.onset, None);
        assert!(!v.persisted);
        let v = detect_drift(&[0.02, 0.12, 0.03, 0.2, 0.25], 0.1, 2).unwrap();
        assert_eq!(v.onset, Some(3));
        let v = detect_drift(&[0.2, 0.2, 0.05, 0.2], 0.1, 2).unwrap();
        assert_eq!((v.onset, v.persisted), (Some(0), false));
        // a run shorter than the window at the end is not drift
        assert_eq!(detect_drift(&[0.0, 0.0, 0.5], 0.1, 2).unwrap().onset, None);
        assert!(detect_drift(&[], 0.1, 2).is_err());
        assert!(detect_drift(&[0.1], 0.1, 0).is_err());
    }

    fn bucketed(seed: u64) -> (Model, Vec<MonthBucket>) {
        let cfg = ModelConfig {
            input_dim: 3,
            trunk_width: 4,
            n_residual_blocks: 1,
            dropout_rate: 0.0,
            head_widths: vec![],
        };
        let model = Model::new(init_model(&cfg, seed).unwrap());
        let mut rng = Rng::new(seed);
        let start = YearMonth::new(2020, 1);
        let buckets = (0..4)
            .map(|k| {
                let month = start.plus(k);
                let n = if k == 2 { 0 } else { 20 };
                let samples = (0..n)
                    .map(|_| {
                        Sample::new(
                            (0..3).map(|_| rng.normal()).collect(),
                            rng.bernoulli(0.5) as u8,
                            month.timestamp_at(10, 0),
                        )
                    })
                    .collect();
                MonthBucket {
                    month,
                    data: Dataset::new(month.to_string(), 3, samples).unwrap(),
                }
            })
            .collect();
        (model, buckets)
    }

    #[test]
    fn buckets_pool_into_aggregate() {
        let (model, buckets) = bucketed(3);
        let r = evaluate_buckets(&model, &buckets, 0.5, ErrorMetric::OneMinusAccuracy).unwrap();
        assert_eq!(r.buckets.len(), 4);
        assert!(r.buckets[2].is_empty());
        assert_eq!(r.buckets[2].metrics, None);
        let summed = r.buckets.iter().fold(ConfusionCounts::default(), |a, b| a + b.confusion);
        assert_eq!(summed, r.aggregate.confusion);
        for b in &r.buckets {
            if let Some(m) = b.metrics {
                assert_eq!(b.err, Some(1.0 - m.acc));
            }
        }

        let same = vec![buckets[0].clone(), buckets[0].clone()];
        let r = evaluate_buckets(&model, &same, 0.5, ErrorMetric::Fnr).unwrap();
        assert_eq!(r.buckets[0].metrics, r.buckets[1].metrics);
        let single = evaluate_buckets(&model, &same[..1], 0.5, ErrorMetric::Fnr).unwrap();
        assert_eq!(
            single.aggregate.confusion,
            evaluate_dataset(&model, &buckets[0].data, 0.5).unwrap()
        );
    }

    #[test]
    fn report_drift_skips_empty_buckets() {
        let (model, buckets) = bucketed(5);
        let mut r = evaluate_buckets(&model, &buckets, 0.5, ErrorMetric::OneMinusAccuracy).unwrap();
        for (b, e) in r.buckets.iter_mut().zip([0.0, 0.5, 0.0, 0.5]) {
            if b.err.is_some() {
                b.err = Some(e);
            }
        }
        let v = detect_drift_in_report(&r, 0.3, 2).unwrap();
        assert_eq!(v.onset, Some(1));
    }

    #[test]
    fn metrics_csv_round_trip() {
        let (model, buckets) = bucketed(7);
        let r = evaluate_buckets(&model, &buckets, 0.5, ErrorMetric::OneMinusAccuracy).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("metrics.csv");
        let prov = Provenance {
            config_hash: "h".into(),
            seed: 1,
        };
        save_metrics_csv(&r, &p, Some(&prov)).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# config_hash=h seed=1\nbucket,n,n_pos,acc,f1,fnr,fpr,err\n"));
        let rows = read_metrics_csv(&p).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[2].3, [None; 5]);
        assert_eq!(rows[4].0, "all");
        assert_eq!(rows[0].3[0], r.buckets[0].metrics.map(|m| m.acc));
    }
}
