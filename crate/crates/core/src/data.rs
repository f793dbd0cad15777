//! Samples, datasets and feature masks, plus the three on-disk dataset
//! formats (CSV, JSON lines, `DSET` binary).
//!
//! The timestamp carried by each sample is collection metadata used for
//! chronological splitting and bucketing. It is never fed to a model.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, Datelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

/// Feature dimension of EMBER-shaped vectors.
pub const EMBER_FEATURE_DIM: usize = 2381;

const DSET_MAGIC: &[u8; 4] = b"DSET";
const DSET_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    /// 1 = malicious, 0 = benign.
    pub label: u8,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: u8, timestamp: i64) -> Self {
        Self {
            features,
            label,
            timestamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    feature_dim: usize,
    samples: Vec<Sample>,
}

impl Dataset {
    /// Validates widths, labels and finiteness.
    pub fn new(name: impl Into<String>, feature_dim: usize, samples: Vec<Sample>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != feature_dim {
                return Err(Error::Shape(format!(
                    "sample {i} has {} features, expected {feature_dim}",
                    s.features.len()
                )));
            }
            if s.label > 1 {
                return Err(Error::Data(format!("sample {i} has label {}", s.label)));
            }
            if let Some(j) = s.features.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!("sample {i} feature {j} is not finite")));
            }
        }
        Ok(Self {
            name: name.into(),
            feature_dim,
            samples,
        })
    }

    pub fn empty(name: impl Into<String>, feature_dim: usize) -> Self {
        Self {
            name: name.into(),
            feature_dim,
            samples: Vec::new(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    /// New dataset containing the given rows in the given order.
    pub fn subset(&self, name: impl Into<String>, idx: &[usize]) -> Dataset {
        Dataset {
            name: name.into(),
            feature_dim: self.feature_dim,
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    pub fn filter(&self, name: impl Into<String>, keep: impl Fn(&Sample) -> bool) -> Dataset {
        Dataset {
            name: name.into(),
            feature_dim: self.feature_dim,
            samples: self.samples.iter().filter(|s| keep(s)).cloned().collect(),
        }
    }

    pub fn concat(name: impl Into<String>, parts: &[&Dataset]) -> Result<Dataset> {
        let dim = parts.first().map_or(0, |d| d.feature_dim);
        let mut samples = Vec::new();
        for p in parts {
            if p.feature_dim != dim {
                return Err(Error::Shape(format!(
                    "cannot concatenate widths {dim} and {}",
                    p.feature_dim
                )));
            }
            samples.extend(p.samples.iter().cloned());
        }
        Ok(Dataset {
            name: name.into(),
            feature_dim: dim,
            samples,
        })
    }

    pub fn features(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.len() * self.feature_dim);
        for s in &self.samples {
            data.extend_from_slice(&s.features);
        }
        Matrix::from_vec(self.len(), self.feature_dim, data).expect("uniform width")
    }

    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn timestamps(&self) -> Vec<i64> {
        self.samples.iter().map(|s| s.timestamp).collect()
    }

    /// Stable sort by timestamp; equal timestamps keep their original order.
    pub fn sorted_by_time(&self) -> Dataset {
        let mut samples = self.samples.clone();
        samples.sort_by_key(|s| s.timestamp);
        Dataset {
            name: self.name.clone(),
            feature_dim: self.feature_dim,
            samples,
        }
    }
}

/// File format of a dataset on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Jsonl,
    Binary,
}

impl DataFormat {
    /// Guess from the file extension (`.csv`, `.jsonl`/`.json`, anything else is binary).
    pub fn from_path(path: &Path) -> DataFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => DataFormat::Csv,
            Some("jsonl") | Some("json") | Some("ndjson") => DataFormat::Jsonl,
            _ => DataFormat::Binary,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            DataFormat::Csv => "csv",
            DataFormat::Jsonl => "jsonl",
            DataFormat::Binary => "dset",
        }
    }
}

impl std::str::FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(DataFormat::Csv),
            "jsonl" => Ok(DataFormat::Jsonl),
            "binary" | "dset" => Ok(DataFormat::Binary),
            other => Err(Error::Config(format!("unknown data format `{other}`"))),
        }
    }
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string()
}

pub fn load_dataset(path: impl AsRef<Path>, format: DataFormat) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let name = dataset_name(path);
    let ds = match format {
        DataFormat::Csv => read_csv(reader, name)?,
        DataFormat::Jsonl => read_jsonl(reader, name)?,
        DataFormat::Binary => read_binary(reader, name)?,
    };
    if ds.is_empty() {
        return Err(Error::EmptyDataset(path.display().to_string()));
    }
    Ok(ds)
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>, format: DataFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        DataFormat::Csv => write_csv(ds, &mut w)?,
        DataFormat::Jsonl => write_jsonl(ds, &mut w).map_err(|e| Error::io(path, e))?,
        DataFormat::Binary => write_binary(ds, &mut w).map_err(|e| Error::io(path, e))?,
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn parse_label(s: &str, row: usize) -> Result<u8> {
    match s.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::Parse {
            row,
            msg: format!("label `{other}` is not 0 or 1"),
        }),
    }
}

fn read_csv<R: Read>(reader: R, name: String) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(_) => return Ok(Dataset::empty(name, 0)),
    };
    if headers.is_empty() {
        return Ok(Dataset::empty(name, 0));
    }
    if headers.len() < 2 || &headers[0] != "timestamp" || &headers[1] != "label" {
        return Err(Error::Parse {
            row: 0,
            msg: "header must start with `timestamp,label`".into(),
        });
    }
    let dim = headers.len() - 2;
    let mut samples = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // Row numbers count the header as row 1.
        let row = i + 2;
        let rec = rec.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { .. } => Error::Shape(format!(
                "row {row} has a different number of columns than the header"
            )),
            _ => Error::Parse {
                row,
                msg: e.to_string(),
            },
        })?;
        let timestamp = rec[0].parse::<i64>().map_err(|e| Error::Parse {
            row,
            msg: format!("timestamp: {e}"),
        })?;
        let label = parse_label(&rec[1], row)?;
        let features = rec
            .iter()
            .skip(2)
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                row,
                msg: format!("feature: {e}"),
            })?;
        samples.push(Sample::new(features, label, timestamp));
    }
    Dataset::new(name, dim, samples)
}

fn write_csv<W: Write>(ds: &Dataset, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["timestamp".to_string(), "label".to_string()];
    header.extend((0..ds.feature_dim).map(|i| format!("f{i}")));
    wr.write_record(&header).map_err(csv_err)?;
    for s in &ds.samples {
        let mut rec = Vec::with_capacity(ds.feature_dim + 2);
        rec.push(s.timestamp.to_string());
        rec.push(s.label.to_string());
        rec.extend(s.features.iter().map(|v| format!("{v:?}")));
        wr.write_record(&rec).map_err(csv_err)?;
    }
    wr.flush().map_err(|e| Error::io("<csv>", e))
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io("<csv>", io),
        other => Error::Format(format!("{other:?}")),
    }
}

#[derive(Serialize, Deserialize)]
struct JsonlRow {
    ts: i64,
    label: u8,
    features: Vec<f64>,
}

fn read_jsonl<R: BufRead>(reader: R, name: String) -> Result<Dataset> {
    let mut samples = Vec::new();
    let mut dim = None;
    for (i, line) in reader.lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| Error::Parse {
            row,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let r: JsonlRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
            row,
            msg: e.to_string(),
        })?;
        if r.label > 1 {
            return Err(Error::Parse {
                row,
                msg: format!("label {} is not 0 or 1", r.label),
            });
        }
        let d = *dim.get_or_insert(r.features.len());
        if r.features.len() != d {
            return Err(Error::Shape(format!(
                "row {row} has {} features, expected {d}",
                r.features.len()
            )));
        }
        samples.push(Sample::new(r.features, r.label, r.ts));
    }
    Dataset::new(name, dim.unwrap_or(0), samples)
}

fn write_jsonl<W: Write>(ds: &Dataset, mut w: W) -> std::io::Result<()> {
    for s in &ds.samples {
        let row = JsonlRow {
            ts: s.timestamp,
            label: s.label,
            features: s.features.clone(),
        };
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Format(format!("truncated DSET file while reading {what}: {e}")))
}

fn read_binary<R: Read>(mut r: R, name: String) -> Result<Dataset> {
    let mut magic = [0u8; 4];
    match r.read(&mut magic[..1]) {
        Ok(0) => return Ok(Dataset::empty(name, 0)),
        Ok(_) => {}
        Err(e) => return Err(Error::Format(e.to_string())),
    }
    read_exact_or(&mut r, &mut magic[1..], "magic")?;
    if &magic != DSET_MAGIC {
        return Err(Error::Format("bad magic, expected DSET".into()));
    }
    let mut b1 = [0u8; 1];
    read_exact_or(&mut r, &mut b1, "version")?;
    if b1[0] != DSET_VERSION {
        return Err(Error::Format(format!("unsupported DSET version {}", b1[0])));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    read_exact_or(&mut r, &mut b4, "feature_dim")?;
    let dim = u32::from_le_bytes(b4) as usize;
    read_exact_or(&mut r, &mut b8, "sample_count")?;
    let count = u64::from_le_bytes(b8) as usize;

    let mut samples = Vec::with_capacity(count.min(1 << 20));
    let mut fbuf = vec![0u8; dim * 4];
    for i in 0..count {
        read_exact_or(&mut r, &mut b8, "timestamp")?;
        let timestamp = i64::from_le_bytes(b8);
        read_exact_or(&mut r, &mut b1, "label")?;
        if b1[0] > 1 {
            return Err(Error::Parse {
                row: i + 1,
                msg: format!("label {} is not 0 or 1", b1[0]),
            });
        }
        read_exact_or(&mut r, &mut fbuf, "features")?;
        let features = fbuf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        samples.push(Sample::new(features, b1[0], timestamp));
    }
    Dataset::new(name, dim, samples)
}

fn write_binary<W: Write>(ds: &Dataset, mut w: W) -> std::io::Result<()> {
    w.write_all(DSET_MAGIC)?;
    w.write_all(&[DSET_VERSION])?;
    w.write_all(&(ds.feature_dim as u32).to_le_bytes())?;
    w.write_all(&(ds.len() as u64).to_le_bytes())?;
    for s in &ds.samples {
        w.write_all(&s.timestamp.to_le_bytes())?;
        w.write_all(&[s.label])?;
        for &v in &s.features {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

fn check_n_val(n: usize, n_val: usize) -> Result<()> {
    if n_val == 0 || n_val >= n {
        return Err(Error::Config(format!(
            "validation size {n_val} must satisfy 0 < n_val < {n}"
        )));
    }
    Ok(())
}

/// Uniformly random hold-out of `n_val` samples. Both parts keep the
/// original relative order.
pub fn split_random(ds: &Dataset, n_val: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    check_n_val(ds.len(), n_val)?;
    let mut rng = Rng::new(seed);
    let val_idx = rng.sample_indices(ds.len(), n_val);
    let mut in_val = vec![false; ds.len()];
    for &i in &val_idx {
        in_val[i] = true;
    }
    let train_idx: Vec<usize> = (0..ds.len()).filter(|&i| !in_val[i]).collect();
    Ok((
        ds.subset(format!("{}-train", ds.name), &train_idx),
        ds.subset(format!("{}-val", ds.name), &val_idx),
    ))
}

/// Holds out the `n_val` most recent samples. Equal timestamps are ordered
/// by their position in the input.
pub fn split_recent(ds: &Dataset, n_val: usize) -> Result<(Dataset, Dataset)> {
    check_n_val(ds.len(), n_val)?;
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.sort_by_key(|&i| ds.samples[i].timestamp);
    let cut = ds.len() - n_val;
    Ok((
        ds.subset(format!("{}-train", ds.name), &order[..cut]),
        ds.subset(format!("{}-val", ds.name), &order[cut..]),
    ))
}

/// A UTC calendar month, written `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct YearMonth {
    pub year: i32,
    /// 1..=12
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Self {
        assert!((1..=12).contains(&month), "month {month}");
        Self { year, month }
    }

    pub fn of_timestamp(ts: i64) -> Result<Self> {
        let dt = DateTime::from_timestamp(ts, 0)
            .ok_or_else(|| Error::Data(format!("timestamp {ts} out of range")))?;
        Ok(Self::new(dt.year(), dt.month()))
    }

    pub fn succ(self) -> Self {
        if self.month == 12 {
            Self::new(self.year + 1, 1)
        } else {
            Self::new(self.year, self.month + 1)
        }
    }

    pub fn plus(self, months: u32) -> Self {
        (0..months).fold(self, |m, _| m.succ())
    }

    /// Unix seconds of `day` at `hour`:00 UTC within this month.
    pub fn timestamp_at(self, day: u32, hour: u32) -> i64 {
        chrono::NaiveDate::from_ymd_opt(self.year, self.month, day)
            .and_then(|d| d.and_hms_opt(hour, 0, 0))
            .expect("valid calendar date")
            .and_utc()
            .timestamp()
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl From<YearMonth> for String {
    fn from(m: YearMonth) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for YearMonth {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl std::str::FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("`{s}` is not YYYY-MM"));
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        let year = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        if !(1..=12).contains(&month) {
            return Err(bad());
        }
        Ok(Self::new(year, month))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonthBucket {
    pub month: YearMonth,
    pub data: Dataset,
}

/// Groups samples by UTC calendar month, ascending. Months with no samples
/// between the first and last month appear as empty buckets.
pub fn bucket_by_month(ds: &Dataset) -> Result<Vec<MonthBucket>> {
    let months = ds
        .samples
        .iter()
        .map(|s| YearMonth::of_timestamp(s.timestamp))
        .collect::<Result<Vec<_>>>()?;
    let (Some(&first), Some(&last)) = (months.iter().min(), months.iter().max()) else {
        return Ok(Vec::new());
    };
    let mut buckets = Vec::new();
    let mut m = first;
    loop {
        buckets.push(MonthBucket {
            month: m,
            data: Dataset::empty(format!("{}-{m}", ds.name), ds.feature_dim),
        });
        if m == last {
            break;
        }
        m = m.succ();
    }
    let index_of = |ym: YearMonth| ((ym.year - first.year) * 12 + ym.month as i32 - first.month as i32) as usize;
    for (s, ym) in ds.samples.iter().zip(months) {
        buckets[index_of(ym)].data.samples.push(s.clone());
    }
    Ok(buckets)
}

/// `(N0, N1)`: benign and malicious counts.
pub fn class_counts(ds: &Dataset) -> (usize, usize) {
    let n1 = ds.samples.iter().filter(|s| s.label == 1).count();
    (ds.len() - n1, n1)
}

/// Ordered list of feature indices to keep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMask {
    original_dim: usize,
    kept_indices: Vec<usize>,
}

impl FeatureMask {
    pub fn new(original_dim: usize, kept_indices: Vec<usize>) -> Result<Self> {
        if kept_indices.is_empty() {
            return Err(Error::Config("feature mask keeps no features".into()));
        }
        if kept_indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "feature mask indices must be strictly increasing".into(),
            ));
        }
        if let Some(&last) = kept_indices.last() {
            if last >= original_dim {
                return Err(Error::Config(format!(
                    "feature index {last} out of range for dimension {original_dim}"
                )));
            }
        }
        Ok(Self {
            original_dim,
            kept_indices,
        })
    }

    pub fn all(dim: usize) -> Result<Self> {
        Self::new(dim, (0..dim).collect())
    }

    pub fn original_dim(&self) -> usize {
        self.original_dim
    }

    pub fn kept_indices(&self) -> &[usize] {
        &self.kept_indices
    }

    pub fn len(&self) -> usize {
        self.kept_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept_indices.is_empty()
    }

    /// Mask equivalent to applying `self` and then `inner` (which indexes
    /// into the output of `self`).
    pub fn then(&self, inner: &FeatureMask) -> Result<FeatureMask> {
        if inner.original_dim != self.len() {
            return Err(Error::Shape(format!(
                "inner mask expects dimension {}, outer produces {}",
                inner.original_dim,
                self.len()
            )));
        }
        FeatureMask::new(
            self.original_dim,
            inner.kept_indices.iter().map(|&j| self.kept_indices[j]).collect(),
        )
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        self.kept_indices.iter().map(|&i| row[i]).collect()
    }

    pub fn apply_matrix(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.original_dim {
            return Err(Error::Shape(format!(
                "mask expects {} columns, got {}",
                self.original_dim,
                x.cols()
            )));
        }
        let mut data = Vec::with_capacity(x.rows() * self.len());
        for r in 0..x.rows() {
            data.extend(self.apply_row(x.row(r)));
        }
        Matrix::from_vec(x.rows(), self.len(), data)
    }

    pub fn to_file(&self, path: impl AsRef<Path>, provenance: Option<&Provenance>) -> Result<()> {
        #[derive(Serialize)]
        struct MaskFile<'a> {
            original_dim: usize,
            kept_indices: &'a [usize],
            #[serde(flatten, skip_serializing_if = "Option::is_none")]
            provenance: Option<&'a Provenance>,
        }
        let path = path.as_ref();
        let file = MaskFile {
            original_dim: self.original_dim,
            kept_indices: &self.kept_indices,
            provenance,
        };
        let json = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        #[derive(Deserialize)]
        struct MaskFile {
            original_dim: usize,
            kept_indices: Vec<usize>,
        }
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let f: MaskFile = serde_json::from_str(&text)?;
        FeatureMask::new(f.original_dim, f.kept_indices)
    }
}

/// Identifies the run that produced an artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

/// Keeps the columns listed in `mask`; labels and timestamps are untouched.
pub fn apply_mask(ds: &Dataset, mask: &FeatureMask) -> Result<Dataset> {
    if mask.original_dim != ds.feature_dim {
        return Err(Error::Shape(format!(
            "mask expects dimension {}, dataset has {}",
            mask.original_dim, ds.feature_dim
        )));
    }
    Ok(Dataset {
        name: ds.name.clone(),
        feature_dim: mask.len(),
        samples: ds
            .samples
            .iter()
            .map(|s| Sample::new(mask.apply_row(&s.features), s.label, s.timestamp))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn toy(timestamps: &[i64], labels: &[u8]) -> Dataset {
        let samples = timestamps
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (&t, &y))| Sample::new(vec![i as f64, -(i as f64)], y, t))
            .collect();
        Dataset::new("toy", 2, samples).unwrap()
    }

    #[test]
    fn csv_load_three_rows() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(
            &p,
            "timestamp,label,f0,f1,f2,f3\n1,0,0.1,0.2,0.3,0.4\n2,1,1,2,3,4\n3,0,-1,-2,-3,-4.5\n",
        )
        .unwrap();
        let ds = load_dataset(&p, DataFormat::Csv).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.feature_dim(), 4);
        assert_eq!(ds.samples()[2].features[3], -4.5);
        assert_eq!(ds.labels(), vec![0, 1, 0]);
    }

    #[test]
    fn empty_files_are_rejected() {
        let dir = tempdir().unwrap();
        for (name, fmt) in [
            ("e.csv", DataFormat::Csv),
            ("e.jsonl", DataFormat::Jsonl),
            ("e.dset", DataFormat::Binary),
        ] {
            let p = dir.path().join(name);
            std::fs::write(&p, "").unwrap();
            assert!(matches!(load_dataset(&p, fmt), Err(Error::EmptyDataset(_))), "{name}");
        }
        let p = dir.path().join("h.csv");
        std::fs::write(&p, "timestamp,label,f0\n").unwrap();
        assert!(matches!(load_dataset(&p, DataFormat::Csv), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn csv_errors_carry_row_numbers() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "timestamp,label,f0\n1,0,0.5\n2,1,abc\n").unwrap();
        match load_dataset(&p, DataFormat::Csv) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("{other:?}"),
        }
        std::fs::write(&p, "timestamp,label,f0\n1,0,0.5\n2,1,0.1,0.2\n").unwrap();
        assert!(matches!(load_dataset(&p, DataFormat::Csv), Err(Error::Shape(_))));
        std::fs::write(&p, "timestamp,label,f0\n1,2,0.5\n").unwrap();
        assert!(matches!(load_dataset(&p, DataFormat::Csv), Err(Error::Parse { row: 2, .. })));
    }

    #[test]
    fn jsonl_errors() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        std::fs::write(
            &p,
            "{\"ts\":1,\"label\":0,\"features\":[1.0,2.0]}\n{\"ts\":2,\"label\":1,\"features\":[1.0]}\n",
        )
        .unwrap();
        assert!(matches!(load_dataset(&p, DataFormat::Jsonl), Err(Error::Shape(_))));
        std::fs::write(&p, "{\"ts\":1,\"label\":0,\"features\":[1.0,2.0]}\nnot json\n").unwrap();
        assert!(matches!(load_dataset(&p, DataFormat::Jsonl), Err(Error::Parse { row: 2, .. })));
    }

    #[test]
    fn formats_round_trip() {
        let dir = tempdir().unwrap();
        let mut rng = Rng::new(3);
        let samples = (0..50)
            .map(|i| {
                // f32-representable so the binary format is exact
                let f = (0..5).map(|_| rng.normal() as f32 as f64).collect();
                Sample::new(f, (i % 2) as u8, 1_500_000_000 + i * 1000)
            })
            .collect();
        let ds = Dataset::new("rt", 5, samples).unwrap();
        for fmt in [DataFormat::Csv, DataFormat::Jsonl, DataFormat::Binary] {
            let p = dir.path().join(format!("rt.{}", fmt.extension()));
            save_dataset(&ds, &p, fmt).unwrap();
            assert_eq!(DataFormat::from_path(&p), fmt);
            let back = load_dataset(&p, fmt).unwrap();
            assert_eq!(back.samples(), ds.samples(), "{fmt:?}");
            for (a, b) in back.samples().iter().zip(ds.samples()) {
                for (x, y) in a.features.iter().zip(&b.features) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }

    #[test]
    fn binary_layout_is_exact() {
        let ds = Dataset::new("b", 2, vec![Sample::new(vec![1.0, -2.5], 1, -7)]).unwrap();
        let mut buf = Vec::new();
        write_binary(&ds, &mut buf).unwrap();
        let mut want = b"DSET".to_vec();
        want.push(1);
        want.extend(2u32.to_le_bytes());
        want.extend(1u64.to_le_bytes());
        want.extend((-7i64).to_le_bytes());
        want.push(1);
        want.extend(1f32.to_le_bytes());
        want.extend((-2.5f32).to_le_bytes());
        assert_eq!(buf, want);

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_binary(&bad[..], "x".into()), Err(Error::Format(_))));
        assert!(matches!(
            read_binary(&buf[..buf.len() - 1], "x".into()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn split_random_partitions() {
        let ds = toy(&(0..100).collect::<Vec<_>>(), &[0; 100]);
        let (tr, va) = split_random(&ds, 20, 1).unwrap();
        assert_eq!((tr.len(), va.len()), (80, 20));
        let mut all: Vec<i64> = tr.timestamps().into_iter().chain(va.timestamps()).collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        let (tr2, va2) = split_random(&ds, 20, 1).unwrap();
        assert_eq!((tr, va), (tr2, va2));

        let small = toy(&(0..10).collect::<Vec<_>>(), &[0; 10]);
        assert!(matches!(split_random(&small, 10, 1), Err(Error::Config(_))));
        assert!(matches!(split_random(&small, 0, 1), Err(Error::Config(_))));
    }

    #[test]
    fn split_recent_takes_latest() {
        let ds = toy(&[3, 1, 4, 2], &[0, 0, 1, 1]);
        let (tr, va) = split_recent(&ds, 2).unwrap();
        assert_eq!(va.timestamps(), vec![3, 4]);
        assert_eq!(tr.timestamps(), vec![1, 2]);

        let ties = toy(&[5, 5, 5], &[0, 1, 0]);
        let (_, va) = split_recent(&ties, 1).unwrap();
        assert_eq!(va.samples()[0].features[0], 2.0);
        assert!(matches!(split_recent(&ties, 3), Err(Error::Config(_))));
    }

    #[test]
    fn split_recent_ignores_input_order() {
        let ds = toy(&[10, 20, 30, 40, 50, 60], &[0, 1, 0, 1, 0, 1]);
        let shuffled = ds.subset("s", &[4, 0, 5, 2, 1, 3]);
        let (_, a) = split_recent(&ds, 3).unwrap();
        let (_, b) = split_recent(&shuffled, 3).unwrap();
        assert_eq!(a.samples(), b.samples());
    }

    #[test]
    fn month_buckets_fill_gaps() {
        let aug = YearMonth::new(2019, 8).timestamp_at(3, 0);
        let oct = YearMonth::new(2019, 10).timestamp_at(30, 23);
        let ds = toy(&[oct, aug, aug + 5], &[1, 0, 1]);
        let b = bucket_by_month(&ds).unwrap();
        assert_eq!(b.len(), 3);
        assert_eq!(b[0].month.to_string(), "2019-08");
        assert_eq!(b[1].month.to_string(), "2019-09");
        assert_eq!((b[0].data.len(), b[1].data.len(), b[2].data.len()), (2, 0, 1));

        let one = toy(&[aug], &[1]);
        let b = bucket_by_month(&one).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].data.len(), 1);
        assert!(bucket_by_month(&Dataset::empty("e", 2)).unwrap().is_empty());
    }

    #[test]
    fn month_boundaries_are_utc() {
        // 2019-12-31T23:59:59Z and 2020-01-01T00:00:00Z
        assert_eq!(YearMonth::of_timestamp(1_577_836_799).unwrap(), YearMonth::new(2019, 12));
        assert_eq!(YearMonth::of_timestamp(1_577_836_800).unwrap(), YearMonth::new(2020, 1));
        assert_eq!("2019-08".parse::<YearMonth>().unwrap(), YearMonth::new(2019, 8));
        assert!("2019-13".parse::<YearMonth>().is_err());
    }

    #[test]
    fn counts() {
        assert_eq!(class_counts(&toy(&[1, 2, 3], &[0, 0, 1])), (2, 1));
        assert_eq!(class_counts(&Dataset::empty("e", 3)), (0, 0));
    }

    #[test]
    fn masks() {
        let ds = Dataset::new(
            "m",
            3,
            vec![Sample::new(vec![1.0, 2.0, 3.0], 1, 0), Sample::new(vec![4.0, 5.0, 6.0], 0, 1)],
        )
        .unwrap();
        assert_eq!(apply_mask(&ds, &FeatureMask::all(3).unwrap()).unwrap(), ds);
        let m = FeatureMask::new(3, vec![0, 2]).unwrap();
        let out = apply_mask(&ds, &m).unwrap();
        assert_eq!(out.feature_dim(), 2);
        assert_eq!(out.samples()[0].features, vec![1.0, 3.0]);
        assert_eq!(out.labels(), ds.labels());
        assert!(matches!(apply_mask(&out, &m), Err(Error::Shape(_))));

        assert!(FeatureMask::new(3, vec![]).is_err());
        assert!(FeatureMask::new(3, vec![1, 1]).is_err());
        assert!(FeatureMask::new(3, vec![2, 1]).is_err());
        assert!(FeatureMask::new(3, vec![3]).is_err());
    }

    #[test]
    fn mask_composition() {
        let mut rng = Rng::new(9);
        let samples = (0..20)
            .map(|i| Sample::new((0..8).map(|_| rng.normal()).collect(), (i % 2) as u8, i))
            .collect();
        let ds = Dataset::new("c", 8, samples).unwrap();
        let outer = FeatureMask::new(8, vec![0, 2, 3, 5, 7]).unwrap();
        let inner = FeatureMask::new(5, vec![1, 2, 4]).unwrap();
        let twice = apply_mask(&apply_mask(&ds, &outer).unwrap(), &inner).unwrap();
        let composed = outer.then(&inner).unwrap();
        assert_eq!(composed.kept_indices(), &[2, 3, 7]);
        assert_eq!(apply_mask(&ds, &composed).unwrap(), twice);
    }

    #[test]
    fn mask_file_round_trip() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("mask.json");
        let m = FeatureMask::new(10, vec![1, 4, 9]).unwrap();
        let prov = Provenance {
            config_hash: "abc".into(),
            seed: 3,
        };
        m.to_file(&p, Some(&prov)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(v["original_dim"], 10);
        assert_eq!(v["seed"], 3);
        assert_eq!(FeatureMask::from_file(&p).unwrap(), m);
    }
}
