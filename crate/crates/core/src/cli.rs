//! Command-line front end.
//!
//! Every command reads an optional JSON [`RunConfig`] (`--config`), applies
//! flag overrides, and writes its artifacts under `--out` with fixed names.
//! Artifacts carry the SHA-256 of the resolved config and the seed, and the
//! resolved config itself is written next to them as `config.json`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    apply_mask, bucket_by_month, load_dataset, save_dataset, DataFormat, Dataset, FeatureMask, Provenance,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    detect_drift_in_report, evaluate_buckets, save_metrics_csv, write_long_csv, DriftVerdict, ErrorMetric,
    MetricsReport,
};
use crate::losses::LossVariant;
use crate::model::{load_model, save_model, Model, ModelConfig, ModelMetadata};
use crate::pfi::{run_pfi, PfiConfig, PfiReport};
use crate::synthdrift::{generate_with_truth, DriftSpec};
use crate::training::{train, TrainConfig, TrainHistory, ValidationStrategy};

pub const THREADS_ENV: &str = "DRIFTWISE_THREADS";

pub const MODEL_FILE: &str = "model.dnet";
pub const MASK_FILE: &str = "mask.json";
pub const HISTORY_FILE: &str = "history.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const METRICS_JSON_FILE: &str = "metrics.json";
pub const METRICS_LONG_FILE: &str = "metrics_long.csv";
pub const PFI_REPORT_FILE: &str = "pfi_report.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const F1_OVER_TIME_FILE: &str = "f1_over_time.csv";
pub const TRUTH_FILE: &str = "truth.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub train: Option<PathBuf>,
    /// Time-stamped data scored month by month.
    pub eval: Option<PathBuf>,
    /// Recent held-out data for permutation importance, disjoint from training.
    pub pfi: Option<PathBuf>,
    /// Feature mask applied before training (retraining on reduced features).
    pub mask: Option<PathBuf>,
}

/// Model architecture; `input_dim` is taken from the data when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_dim: Option<usize>,
    pub trunk_width: usize,
    pub n_residual_blocks: usize,
    pub dropout_rate: f64,
    pub head_widths: Vec<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            input_dim: None,
            trunk_width: m.trunk_width,
            n_residual_blocks: m.n_residual_blocks,
            dropout_rate: m.dropout_rate,
            head_widths: m.head_widths,
        }
    }
}

impl ModelSection {
    pub fn resolve(&self, data_dim: usize) -> Result<ModelConfig> {
        if let Some(d) = self.input_dim {
            if d != data_dim {
                return Err(Error::Config(format!("model.input_dim is {d} but the data has {data_dim} features")));
            }
        }
        let cfg = ModelConfig {
            input_dim: data_dim,
            trunk_width: self.trunk_width,
            n_residual_blocks: self.n_residual_blocks,
            dropout_rate: self.dropout_rate,
            head_widths: self.head_widths.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub threshold: f64,
    pub epsilon: f64,
    pub persistence: usize,
    pub error_metric: ErrorMetric,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            epsilon: 0.1,
            persistence: 2,
            error_metric: ErrorMetric::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub lambdas: Vec<f64>,
    /// `(p_fn, p_fp)` pairs.
    pub penalties: Vec<(f64, f64)>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            lambdas: vec![0.5, 0.1, 0.05, 0.01, 0.001],
            penalties: vec![(1.0, 1.0), (1.0, 3.0), (3.0, 1.0), (5.0, 1.0)],
        }
    }
}

/// Everything a run needs. `seed` overrides the seeds of the `train`, `pfi`
/// and `synth` sections.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataPaths,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub pfi: PfiConfig,
    pub eval: EvalConfig,
    pub synth: DriftSpec,
    pub sweep: SweepGrid,
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.train.seed = self.seed;
        self.pfi.seed = self.seed;
        self.synth.seed = self.seed;
        self
    }

    /// SHA-256 (hex) of the canonical JSON form. The sweep grid is left out
    /// so a sweep cell hashes like the single run it stands for.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.sweep = SweepGrid::default();
        // Value maps are sorted by key, which makes the encoding canonical
        let value = serde_json::to_value(&c).expect("config serializes");
        let bytes = serde_json::to_vec(&value).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: self.hash(),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "driftwise", version, about = "Train, reduce and evaluate drift-robust binary classifiers")]
pub struct Cli {
    /// JSON run config; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory receiving all outputs
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic drifting stream from the `synth` section
    Synth {
        #[arg(long, default_value = "csv")]
        format: DataFormat,
    },
    /// Train a model on `data.train`
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Feature mask to apply before training
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Permutation feature importance of a trained model on recent held-out data
    Pfi {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Month-by-month metrics and drift verdict
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Train one model per (lambda, p_fn, p_fp) cell of the grid
    Sweep {
        #[arg(long)]
        data: Option<PathBuf>,
        /// JSON grid `{"lambdas": [...], "penalties": [[p_fn, p_fp], ...]}`
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Also evaluate each cell on this data
        #[arg(long)]
        eval_data: Option<PathBuf>,
    },
    /// Consolidate run directories into comparison tables
    Report {
        /// Run directories, or one directory whose subdirectories are runs
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|_| execute(cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Parses `args` (program name first) and runs the command in-process.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    execute(cli)
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{THREADS_ENV}={v} is not a thread count")))?;
    // a pool may already exist when embedded; keep it
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    }
    .with_seed(cli.seed);
    let out = || -> Result<PathBuf> {
        let out = cli.out.clone().ok_or_else(|| Error::Config("--out is required".into()))?;
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        Ok(out)
    };
    match cli.command {
        Command::Synth { format } => cmd_synth(&cfg, format, &out()?),
        Command::Train { data, mask } => {
            let mut cfg = cfg;
            override_path(&mut cfg.data.train, data);
            override_path(&mut cfg.data.mask, mask);
            cmd_train(&cfg, &out()?).map(|_| ())
        }
        Command::Pfi { model, data } => {
            let mut cfg = cfg;
            override_path(&mut cfg.data.pfi, data);
            cmd_pfi(&cfg, &model, &out()?).map(|_| ())
        }
        Command::Eval { model, data } => {
            let mut cfg = cfg;
            override_path(&mut cfg.data.eval, data);
            cmd_eval(&cfg, &model, &out()?).map(|_| ())
        }
        Command::Sweep { data, grid, eval_data } => {
            let mut cfg = cfg;
            override_path(&mut cfg.data.train, data);
            override_path(&mut cfg.data.eval, eval_data);
            if let Some(g) = grid {
                let text = std::fs::read_to_string(&g).map_err(|e| Error::io(&g, e))?;
                cfg.sweep = serde_json::from_str(&text).map_err(|e| Error::Config(format!("sweep grid: {e}")))?;
            }
            cmd_sweep(&cfg, &out()?)
        }
        Command::Report { runs } => cmd_report(&runs, &out()?),
    }
}

fn override_path(slot: &mut Option<PathBuf>, flag: Option<PathBuf>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("no {what} data path (set data.{what} or pass --data)")))
}

fn load(path: &Path) -> Result<Dataset> {
    load_dataset(path, DataFormat::from_path(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn cmd_synth(cfg: &RunConfig, format: DataFormat, out: &Path) -> Result<()> {
    let (ds, truth) = generate_with_truth(&cfg.synth)?;
    save_dataset(&ds, out.join(format!("stream.{}", format.extension())), format)?;
    truth.save(out.join(TRUTH_FILE))?;
    write_json(&out.join(CONFIG_FILE), cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryFile {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub history: TrainHistory,
}

/// Trains on `data.train` (masked by `data.mask` when set) and writes
/// `model.dnet`, `history.json` and `config.json`.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<(Model, TrainHistory)> {
    let mut ds = load(required(&cfg.data.train, "train")?)?;
    let mask = match &cfg.data.mask {
        Some(p) => {
            let m = FeatureMask::from_file(p)?;
            ds = apply_mask(&ds, &m)?;
            Some(m)
        }
        None => None,
    };
    let model_cfg = cfg.model.resolve(ds.feature_dim())?;
    let (params, history) = train(&ds, &model_cfg, &cfg.train)?;
    let prov = cfg.provenance();
    let model = Model {
        params,
        mask: mask.clone(),
        metadata: ModelMetadata {
            provenance: Some(prov.clone()),
            loss: Some(cfg.train.loss.clone()),
            validation: Some(
                match cfg.train.validation {
                    ValidationStrategy::Random => "random",
                    ValidationStrategy::Recent => "recent",
                }
                .into(),
            ),
            best_epoch: Some(history.best_epoch),
            best_score: Some(history.best_score),
        },
    };
    save_model(out.join(MODEL_FILE), &model, None)?;
    if let Some(m) = &mask {
        m.to_file(out.join(MASK_FILE), Some(&prov))?;
    }
    write_json(
        &out.join(HISTORY_FILE),
        &HistoryFile {
            provenance: prov,
            history: history.clone(),
        },
    )?;
    write_json(&out.join(CONFIG_FILE), cfg)?;
    Ok((model, history))
}

/// Runs permutation importance of `model` on `data.pfi` and writes
/// `mask.json` (relative to the raw feature space) and `pfi_report.csv`.
/// When no feature survives, the report is still written.
pub fn cmd_pfi(cfg: &RunConfig, model_path: &Path, out: &Path) -> Result<(FeatureMask, PfiReport)> {
    let model = load_model(model_path)?;
    let ds = model.prepare(&load(required(&cfg.data.pfi, "pfi")?)?)?;
    let prov = cfg.provenance();
    let (inner, report) = match run_pfi(&model, &ds.features(), &ds.labels(), &cfg.pfi) {
        Ok(r) => r,
        Err(Error::EmptyMask(report)) => {
            report.save_csv(out.join(PFI_REPORT_FILE), Some(&prov))?;
            return Err(Error::EmptyMask(report));
        }
        Err(e) => return Err(e),
    };
    let mask = match &model.mask {
        Some(outer) => outer.then(&inner)?,
        None => inner,
    };
    report.save_csv(out.join(PFI_REPORT_FILE), Some(&prov))?;
    mask.to_file(out.join(MASK_FILE), Some(&prov))?;
    write_json(&out.join(CONFIG_FILE), cfg)?;
    Ok((mask, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFile {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub report: MetricsReport,
    pub drift: DriftVerdict,
}

/// Scores `data.eval` month by month. The model file is only read.
pub fn cmd_eval(cfg: &RunConfig, model_path: &Path, out: &Path) -> Result<EvalFile> {
    let model = load_model(model_path)?;
    let ds = model.prepare(&load(required(&cfg.data.eval, "eval")?)?)?;
    let result = evaluate(cfg, &model, &ds)?;
    write_eval(cfg, &result, out)?;
    Ok(result)
}

fn evaluate(cfg: &RunConfig, model: &Model, ds: &Dataset) -> Result<EvalFile> {
    let buckets = bucket_by_month(ds)?;
    let report = evaluate_buckets(model, &buckets, cfg.eval.threshold, cfg.eval.error_metric)?;
    let drift = detect_drift_in_report(&report, cfg.eval.epsilon, cfg.eval.persistence)?;
    Ok(EvalFile {
        provenance: cfg.provenance(),
        report,
        drift,
    })
}

fn write_eval(cfg: &RunConfig, result: &EvalFile, out: &Path) -> Result<()> {
    let prov = &result.provenance;
    save_metrics_csv(&result.report, out.join(METRICS_FILE), Some(prov))?;
    let long = out.join(METRICS_LONG_FILE);
    let mut buf = Vec::new();
    write_long_csv(&[(run_name(out), &result.report)], &mut buf, Some(prov)).map_err(|e| Error::io(&long, e))?;
    std::fs::write(&long, buf).map_err(|e| Error::io(&long, e))?;
    write_json(&out.join(METRICS_JSON_FILE), result)?;
    write_json(&out.join(CONFIG_FILE), cfg)
}

fn run_name(dir: &Path) -> String {
    dir.file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("run")
        .to_string()
}

pub fn cell_name(lambda: f64, p_fn: f64, p_fp: f64) -> String {
    format!("lambda-{lambda}_pfn-{p_fn}_pfp-{p_fp}")
}

/// One config per grid cell: the base config with the DRBCE
/// hyper-parameters replaced.
pub fn sweep_cells(cfg: &RunConfig) -> Result<Vec<(String, RunConfig)>> {
    if cfg.sweep.lambdas.is_empty() || cfg.sweep.penalties.is_empty() {
        return Err(Error::Config("sweep grid has no cells".into()));
    }
    let mut cells = Vec::new();
    for &lambda in &cfg.sweep.lambdas {
        for &(p_fn, p_fp) in &cfg.sweep.penalties {
            let mut c = cfg.clone();
            c.sweep = SweepGrid::default();
            c.train.loss.variant = LossVariant::Drbce;
            c.train.loss.lambda = lambda;
            c.train.loss.p_fn = p_fn;
            c.train.loss.p_fp = p_fp;
            c.train.loss.validate()?;
            cells.push((cell_name(lambda, p_fn, p_fp), c));
        }
    }
    Ok(cells)
}

/// Trains every grid cell in its own subdirectory (cells run concurrently),
/// optionally evaluates each on `data.eval`, and writes `sweep.csv`.
pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<()> {
    let cells = sweep_cells(cfg)?;
    let run_cell = |(name, c): &(String, RunConfig)| -> Result<String> {
        let dir = out.join(name);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let (model, history) = cmd_train(c, &dir)?;
        let eval = match &c.data.eval {
            Some(p) => {
                let ds = model.prepare(&load(p)?)?;
                let r = evaluate(c, &model, &ds)?;
                write_eval(c, &r, &dir)?;
                Some(r)
            }
            None => None,
        };
        let l = &c.train.loss;
        let agg = eval.as_ref().and_then(|e| e.report.aggregate.metrics);
        Ok(format!(
            "{name},{},{},{},{},{:?},{},{},{},{}",
            l.lambda,
            l.p_fn,
            l.p_fp,
            history.best_epoch,
            history.best_score,
            na(agg.map(|m| m.acc)),
            na(agg.and_then(|m| m.f1)),
            na(agg.and_then(|m| m.fnr)),
            na(agg.and_then(|m| m.fpr)),
        ))
    };
    use rayon::prelude::*;
    let rows: Vec<String> = cells.par_iter().map(run_cell).collect::<Result<_>>()?;

    let prov = cfg.provenance();
    let mut text = format!("# config_hash={} seed={}\n", prov.config_hash, prov.seed);
    text.push_str("cell,lambda,p_fn,p_fp,best_epoch,best_score,acc,f1,fnr,fpr\n");
    for r in rows {
        text.push_str(&r);
        text.push('\n');
    }
    let path = out.join(SWEEP_FILE);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    write_json(&out.join(CONFIG_FILE), cfg)
}

fn na(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |v| format!("{v:?}"))
}

fn run_dirs(args: &[PathBuf]) -> Result<Vec<PathBuf>> {
    if let [single] = args {
        if !single.join(HISTORY_FILE).exists() {
            let entries = std::fs::read_dir(single).map_err(|e| Error::io(single, e))?;
            let mut dirs = Vec::new();
            for e in entries {
                let p = e.map_err(|e| Error::io(single, e))?.path();
                if p.join(HISTORY_FILE).exists() {
                    dirs.push(p);
                }
            }
            dirs.sort();
            if dirs.is_empty() {
                return Err(Error::Data(format!("no run directories under {}", single.display())));
            }
            return Ok(dirs);
        }
    }
    Ok(args.to_vec())
}

/// Writes `comparison.csv` (one row per run) and `f1_over_time.csv`
/// (`run,bucket,f1`, one row per run and month).
pub fn cmd_report(runs: &[PathBuf], out: &Path) -> Result<()> {
    let mut comparison = String::from("run,best_epoch,best_score,n_train,n_val,acc,f1,fnr,fpr,drift_onset\n");
    let mut f1 = String::from("run,bucket,f1\n");
    for dir in run_dirs(runs)? {
        let name = run_name(&dir);
        let h: HistoryFile = read_json(&dir.join(HISTORY_FILE))?;
        let eval_path = dir.join(METRICS_JSON_FILE);
        let eval: Option<EvalFile> = if eval_path.exists() { Some(read_json(&eval_path)?) } else { None };
        let agg = eval.as_ref().and_then(|e| e.report.aggregate.metrics);
        let onset = eval
            .as_ref()
            .and_then(|e| e.drift.onset.map(|i| e.report.buckets[i].bucket.clone()))
            .unwrap_or_else(|| "NA".into());
        comparison.push_str(&format!(
            "{name},{},{:?},{},{},{},{},{},{},{onset}\n",
            h.history.best_epoch,
            h.history.best_score,
            h.history.n_train,
            h.history.n_val,
            na(agg.map(|m| m.acc)),
            na(agg.and_then(|m| m.f1)),
            na(agg.and_then(|m| m.fnr)),
            na(agg.and_then(|m| m.fpr)),
        ));
        if let Some(e) = &eval {
            for row in &e.report.buckets {
                f1.push_str(&format!("{name},{},{}\n", row.bucket, na(row.metrics.and_then(|m| m.f1))));
            }
        }
    }
    for (file, text) in [(COMPARISON_FILE, comparison), (F1_OVER_TIME_FILE, f1)] {
        let p = out.join(file);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_config_errors() {
        assert!(matches!(RunConfig::from_json(r#"{"sed": 1}"#), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json(r#"{"train": {"lr": 1}}"#), Err(Error::Config(_))));
        assert!(matches!(
            RunConfig::from_json(r#"{"train": {"loss": {"lambda": 0.1, "pfn": 5}}}"#),
            Err(Error::Config(_))
        ));
        let cfg = RunConfig::from_json(r#"{"seed": 3, "train": {"max_epochs": 2}}"#).unwrap();
        assert_eq!(cfg.train.max_epochs, 2);
        assert_eq!(cfg.train.n_val, TrainConfig::default().n_val);
    }

    #[test]
    fn seed_flag_overrides_every_section() {
        let cfg = RunConfig::from_json(r#"{"seed": 3}"#).unwrap().with_seed(Some(9));
        assert_eq!((cfg.seed, cfg.train.seed, cfg.pfi.seed, cfg.synth.seed), (9, 9, 9, 9));
        let cfg = RunConfig::default().with_seed(None);
        assert_eq!(cfg.train.seed, 0);
    }

    #[test]
    fn hash_is_stable_and_ignores_the_grid() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.sweep.lambdas = vec![0.1];
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        b.train.loss.lambda = 0.2;
        assert_ne!(a.hash(), b.hash());
        let round: RunConfig = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(round.hash(), a.hash());
    }

    #[test]
    fn default_grid_has_twenty_cells() {
        let cells = sweep_cells(&RunConfig::default()).unwrap();
        assert_eq!(cells.len(), 20);
        assert_eq!(cells[0].0, "lambda-0.5_pfn-1_pfp-1");
        assert_eq!(cells[19].0, "lambda-0.001_pfn-5_pfp-1");
        let mut bad = RunConfig::default();
        bad.sweep.penalties.clear();
        assert!(matches!(sweep_cells(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn input_dim_must_match_data() {
        let m = ModelSection {
            input_dim: Some(10),
            ..ModelSection::default()
        };
        assert!(matches!(m.resolve(9), Err(Error::Config(_))));
        assert_eq!(m.resolve(10).unwrap().input_dim, 10);
    }
}
