//! Repeated train/evaluate runs comparing policy kinds on one data source.
//!
//! Every randomized stage draws from `seed::derive(master, stage, repetition)`
//! so results do not depend on scheduling or on which other kinds run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::PolicyBundle;
use crate::data::{load_dataset, split_train_test, DataError, Dataset, DatasetKind, Schema};
use crate::eval::{
    generate_synthetic_bandit, importance_weighted_ctr, true_ctr, Estimator, EvalError, EvaluationReport, LoggingPolicy,
    RunningStats, SyntheticBanditSpec,
};
use crate::learn::{Measure, Surrogate};
use crate::pipeline::{convert_supervised_to_bandit, ConversionConfig, Ratio};
use crate::policy::{PolicyKind, StochasticPolicy};
use crate::seed;
use crate::train::{train_suite, Preprocess, SuiteConfig};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error("cannot parse config {path}: {message}")]
    ConfigParse { path: String, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// Simulated sparse-click source used in place of a data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSource {
    pub target_rates: Vec<f64>,
    pub dimension: usize,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(default = "one")]
    pub weight_scale: f64,
}

fn one() -> f64 {
    1.0
}

mod undersample_setting {
    use super::Ratio;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Ratio>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(r) => s.serialize_str(&r.to_string()),
            None => s.serialize_str("off"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Ratio>, D::Error> {
        let text = String::deserialize(d)?;
        super::parse_undersample(&text).map_err(serde::de::Error::custom)
    }
}

/// `"off"` or a `pos:neg` ratio.
pub fn parse_undersample(text: &str) -> std::result::Result<Option<Ratio>, String> {
    match text.trim() {
        "off" | "none" => Ok(None),
        t => t.parse::<Ratio>().map(Some).map_err(|e| e.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: Option<PathBuf>,
    pub schema: Schema,
    pub synthetic: Option<SyntheticSource>,
    pub train_fraction: f64,
    pub repetitions: usize,
    /// Re-draw the train/test split every repetition instead of only the
    /// conversion.
    pub resplit: bool,
    #[serde(with = "undersample_setting")]
    pub undersample: Option<Ratio>,
    pub kinds: Vec<PolicyKind>,
    pub lambda_grid: Vec<f64>,
    pub iterations: u64,
    pub step_size_base: f64,
    pub surrogate: Surrogate,
    pub measure: Measure,
    pub validation_fraction: f64,
    pub standardize: bool,
    pub keep_fraction: Option<f64>,
    pub bins: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: None,
            schema: Schema::full(),
            synthetic: None,
            train_fraction: 0.7,
            repetitions: 10,
            resplit: false,
            undersample: None,
            kinds: vec![PolicyKind::Ranker, PolicyKind::Classifier],
            lambda_grid: vec![0.01, 0.1, 1.0, 10.0],
            iterations: 1_000_000,
            step_size_base: 1.0,
            surrogate: Surrogate::Logistic,
            measure: Measure::F1,
            validation_fraction: 0.2,
            standardize: true,
            keep_fraction: None,
            bins: 10,
            epsilon: 0.2,
            delta: 0.05,
            seed: 0,
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ExperimentError::ConfigParse { path: origin.to_string(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        match (&self.dataset, &self.synthetic) {
            (None, None) => return bad("set either `dataset` or `synthetic`".into()),
            (Some(_), Some(_)) => return bad("`dataset` and `synthetic` are mutually exclusive".into()),
            (Some(p), None) if !p.exists() => return bad(format!("dataset {} does not exist", p.display())),
            _ => {}
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.kinds.is_empty() {
            return bad("no policy kinds requested".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction must lie in (0, 1), got {}", self.train_fraction));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon must lie in [0, 1], got {}", self.epsilon));
        }
        if !(self.delta > 0.0 && self.delta <= 0.5) {
            return bad(format!("delta must lie in (0, 0.5], got {}", self.delta));
        }
        self.suite_config(PolicyKind::Ranker, 0).validate().or_else(|e| bad(e.to_string()))
    }

    pub fn suite_config(&self, kind: PolicyKind, repetition: usize) -> SuiteConfig {
        SuiteConfig {
            kind,
            lambda_grid: self.lambda_grid.clone(),
            iterations: self.iterations,
            step_size_base: self.step_size_base,
            surrogate: self.surrogate,
            measure: self.measure,
            undersample: self.undersample,
            validation_fraction: self.validation_fraction,
            seed: seed::derive(self.seed, "train", repetition as u64),
        }
    }

    fn split_seed(&self, repetition: usize) -> u64 {
        seed::derive(self.seed, "split", if self.resplit { repetition as u64 } else { 0 })
    }

    pub fn split_mode(&self) -> &'static str {
        if self.resplit {
            "split re-drawn every repetition"
        } else {
            "fixed split, randomness re-drawn every repetition"
        }
    }
}

enum Source {
    File(Dataset),
    Synthetic(SyntheticSource),
}

/// One policy kind in one repetition.
#[derive(Debug, Clone)]
pub struct RunRow {
    pub repetition: usize,
    pub kind: PolicyKind,
    pub report: Option<EvaluationReport>,
    pub lambda: Option<f64>,
    pub excluded_arms: usize,
    pub bundle: Option<PolicyBundle>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub estimator: Option<Estimator>,
    pub completed: usize,
    pub repetitions: usize,
    pub incomplete: bool,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub mean_lcb: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub source: String,
    pub stand_in: bool,
    pub dataset_fingerprint: Option<String>,
    pub split_mode: String,
    pub repetitions: usize,
    pub seed: u64,
    pub train_fraction: f64,
    pub undersample: String,
    pub iterations: u64,
    pub lambda_grid: Vec<f64>,
    pub epsilon: f64,
    pub delta: f64,
    pub policies: Vec<PolicySummary>,
}

impl ExperimentSummary {
    pub fn policy(&self, kind: PolicyKind) -> Option<&PolicySummary> {
        self.policies.iter().find(|p| p.policy == kind.name())
    }
}

pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub rows: Vec<RunRow>,
    pub summary: ExperimentSummary,
}

fn stage_error(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Train and test data of one repetition, before preprocessing.
fn repetition_data(cfg: &ExperimentConfig, source: &Source, r: usize) -> std::result::Result<(Dataset, Dataset), String> {
    match source {
        Source::File(data) => {
            let (train, test) = split_train_test(data, cfg.train_fraction, cfg.split_seed(r)).map_err(stage_error)?;
            match data.kind() {
                DatasetKind::FullInformation => {
                    let conv = ConversionConfig { seed: seed::derive(cfg.seed, "convert", r as u64), num_arms: data.num_arms() };
                    Ok((convert_supervised_to_bandit(&train, &conv).map_err(stage_error)?, test))
                }
                DatasetKind::Bandit => Ok((train, test)),
            }
        }
        Source::Synthetic(s) => {
            let spec = SyntheticBanditSpec {
                num_arms: s.target_rates.len(),
                dimension: s.dimension,
                target_rates: s.target_rates.clone(),
                n_train: s.n_train,
                n_test: s.n_test,
                weight_scale: s.weight_scale,
                logging: LoggingPolicy::Uniform,
                seed: seed::derive(cfg.seed, "simulate", r as u64),
            };
            let sim = generate_synthetic_bandit(&spec).map_err(stage_error)?;
            Ok((sim.train, sim.test))
        }
    }
}

fn evaluate(cfg: &ExperimentConfig, bundle: &PolicyBundle, test: &Dataset) -> std::result::Result<EvaluationReport, String> {
    let policy = bundle.policy().map_err(stage_error)?;
    match test.kind() {
        DatasetKind::FullInformation => true_ctr(&policy, test).map_err(stage_error),
        DatasetKind::Bandit => {
            let sp = StochasticPolicy::new(policy, cfg.epsilon).map_err(stage_error)?;
            importance_weighted_ctr(&sp, test, cfg.delta).map_err(|e: EvalError| e.to_string())
        }
    }
}

fn run_repetition(cfg: &ExperimentConfig, source: &Source, r: usize) -> Vec<RunRow> {
    let failed = |kind: PolicyKind, error: String| RunRow {
        repetition: r,
        kind,
        report: None,
        lambda: None,
        excluded_arms: 0,
        bundle: None,
        error: Some(error),
    };
    let prepared = repetition_data(cfg, source, r).and_then(|(train, test)| {
        let pre = Preprocess::fit(&train, cfg.keep_fraction, cfg.bins, cfg.standardize).map_err(stage_error)?;
        let train_p = pre.apply(&train).map_err(stage_error)?;
        let test_p = pre.apply(&test).map_err(stage_error)?;
        Ok((pre, train_p, test_p, test.fingerprint(), train.arm_labels().to_vec()))
    });
    let (pre, train, test, fingerprint, labels) = match prepared {
        Ok(p) => p,
        Err(e) => {
            warn!("repetition {r} aborted: {e}");
            return cfg.kinds.iter().map(|&k| failed(k, e.clone())).collect();
        }
    };
    cfg.kinds
        .iter()
        .map(|&kind| {
            let suite_cfg = cfg.suite_config(kind, r);
            let suite = match train_suite(&train, &suite_cfg) {
                Ok(s) => s,
                Err(e) => {
                    warn!("repetition {r}, {kind}: {e}");
                    return failed(kind, e.to_string());
                }
            };
            let bundle = PolicyBundle::new(&suite, &suite_cfg, pre.clone(), &labels, cfg.epsilon);
            match evaluate(cfg, &bundle, &test) {
                Ok(mut report) => {
                    report.policy_id = Some(bundle.id());
                    report.dataset_fingerprint = Some(fingerprint.clone());
                    info!("repetition {r}, {kind}: {:?} {:.6}", report.estimator, report.point);
                    RunRow {
                        repetition: r,
                        kind,
                        report: Some(report),
                        lambda: Some(suite.lambda),
                        excluded_arms: suite.policy.excluded().len(),
                        bundle: Some(bundle),
                        error: None,
                    }
                }
                Err(e) => {
                    warn!("repetition {r}, {kind}: evaluation failed: {e}");
                    failed(kind, e)
                }
            }
        })
        .collect()
}

fn summarize(cfg: &ExperimentConfig, rows: &[RunRow], source: String, stand_in: bool, fingerprint: Option<String>) -> ExperimentSummary {
    let policies = cfg
        .kinds
        .iter()
        .map(|&kind| {
            let done: Vec<&EvaluationReport> =
                rows.iter().filter(|r| r.kind == kind).filter_map(|r| r.report.as_ref()).collect();
            let points: RunningStats = done.iter().map(|r| r.point).collect();
            let lcbs: Vec<f64> = done.iter().filter_map(|r| r.lcb).collect();
            PolicySummary {
                policy: kind.name().to_string(),
                estimator: done.first().map(|r| r.estimator),
                completed: done.len(),
                repetitions: cfg.repetitions,
                incomplete: done.len() < cfg.repetitions,
                mean: (!done.is_empty()).then(|| points.mean()),
                std: (done.len() >= 2).then(|| points.sample_std()),
                mean_lcb: (!lcbs.is_empty() && lcbs.len() == done.len())
                    .then(|| lcbs.iter().copied().collect::<RunningStats>().mean()),
            }
        })
        .collect();
    ExperimentSummary {
        source,
        stand_in,
        dataset_fingerprint: fingerprint,
        split_mode: cfg.split_mode().to_string(),
        repetitions: cfg.repetitions,
        seed: cfg.seed,
        train_fraction: cfg.train_fraction,
        undersample: cfg.undersample.map_or_else(|| "off".to_string(), |r| r.to_string()),
        iterations: cfg.iterations,
        lambda_grid: cfg.lambda_grid.clone(),
        epsilon: cfg.epsilon,
        delta: cfg.delta,
        policies,
    }
}

/// Runs every repetition (concurrently) and summarizes them in order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let (source, description, stand_in, fingerprint) = match (&cfg.dataset, &cfg.synthetic) {
        (Some(path), _) => {
            let data = load_dataset(path, &cfg.schema)?;
            let description = format!(
                "{} ({} data, {} records, d={}, K={})",
                path.display(),
                data.kind(),
                data.len(),
                data.dimension(),
                data.num_arms()
            );
            let fp = data.fingerprint();
            (Source::File(data), description, false, Some(fp))
        }
        (None, Some(s)) => {
            let rates: Vec<String> = s.target_rates.iter().map(|r| r.to_string()).collect();
            let description = format!(
                "synthetic stand-in for proprietary click logs (K={}, d={}, n_train={}, n_test={}, rates [{}])",
                s.target_rates.len(),
                s.dimension,
                s.n_train,
                s.n_test,
                rates.join(", ")
            );
            (Source::Synthetic(s.clone()), description, true, None)
        }
        (None, None) => unreachable!("validated above"),
    };
    let rows: Vec<RunRow> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|r| run_repetition(cfg, &source, r))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let summary = summarize(cfg, &rows, description, stand_in, fingerprint);
    Ok(ExperimentResult { config: cfg.clone(), rows, summary })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn fixed(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl ExperimentResult {
    pub fn rows_csv(&self) -> String {
        let mut out = String::from("repetition,policy,estimator,point,lcb,delta,n,sample_std,lambda,excluded_arms,status\n");
        for row in &self.rows {
            let status = row.error.as_deref().map_or_else(|| "ok".to_string(), |e| csv_field(&format!("failed: {e}")));
            match &row.report {
                Some(rep) => writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    row.repetition,
                    row.kind.name(),
                    estimator_name(rep.estimator),
                    rep.point,
                    opt(rep.lcb),
                    opt(rep.delta),
                    rep.n,
                    rep.sample_std,
                    opt(row.lambda),
                    row.excluded_arms,
                    status
                ),
                None => writeln!(out, "{},{},,,,,,,,,{}", row.repetition, row.kind.name(), status),
            }
            .expect("writing to a string");
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes") + "\n"
    }

    pub fn summary_text(&self) -> String {
        let s = &self.summary;
        let mut out = String::new();
        let _ = writeln!(out, "source:      {}", s.source);
        if s.stand_in {
            let _ = writeln!(out, "note:        simulated stand-in; absolute numbers are not comparable to real campaigns");
        }
        if let Some(fp) = &s.dataset_fingerprint {
            let _ = writeln!(out, "fingerprint: {fp}");
        }
        let _ = writeln!(out, "split:       {} (train fraction {})", s.split_mode, s.train_fraction);
        let grid: Vec<String> = s.lambda_grid.iter().map(|l| l.to_string()).collect();
        let _ = writeln!(
            out,
            "training:    {} iterations per arm, lambda grid {{{}}}, undersampling {}",
            s.iterations,
            grid.join(", "),
            s.undersample
        );
        let _ = writeln!(out, "seed:        {}, epsilon {}, delta {}", s.seed, s.epsilon, s.delta);
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<18} {:<9} {:>7} {:>10} {:>10} {:>10}", "policy", "estimator", "runs", "mean", "std", "mean lcb");
        for p in &s.policies {
            let runs = format!("{}/{}{}", p.completed, p.repetitions, if p.incomplete { "*" } else { "" });
            let _ = writeln!(
                out,
                "{:<18} {:<9} {:>7} {:>10} {:>10} {:>10}",
                p.policy,
                p.estimator.map_or("-", estimator_name),
                runs,
                fixed(p.mean),
                fixed(p.std),
                if p.mean_lcb.is_some() { fixed(p.mean_lcb) } else { "-".to_string() }
            );
        }
        if s.policies.iter().any(|p| p.incomplete) {
            let _ = writeln!(out, "\n* incomplete: some repetitions failed, see rows.csv");
        }
        out
    }

    /// Per-policy mean point estimate and lower bound, for charting.
    pub fn plot_csv(&self) -> String {
        let mut out = String::from("policy,point,lcb\n");
        for p in &self.summary.policies {
            let _ = writeln!(out, "{},{},{}", p.policy, opt(p.mean), opt(p.mean_lcb));
        }
        out
    }

    /// Writes rows, summaries, plot data and per-repetition bundles and
    /// reports under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| ExperimentError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let files = [
            ("rows.csv", self.rows_csv()),
            ("summary.json", self.summary_json()),
            ("summary.txt", self.summary_text()),
            ("plot_data.csv", self.plot_csv()),
            ("config.toml", self.config.to_toml()),
        ];
        for (name, content) in files {
            let path = dir.join(name);
            fs::write(&path, content).map_err(io(&path))?;
        }
        for row in &self.rows {
            let rep_dir = dir.join(format!("rep-{:03}", row.repetition));
            fs::create_dir_all(&rep_dir).map_err(io(&rep_dir))?;
            let stem = match row.kind {
                PolicyKind::Ranker => "ranker",
                PolicyKind::Classifier => "classifier",
            };
            if let Some(b) = &row.bundle {
                let path = rep_dir.join(format!("{stem}-policy.json"));
                fs::write(&path, b.to_json() + "\n").map_err(io(&path))?;
            }
            if let Some(rep) = &row.report {
                let path = rep_dir.join(format!("{stem}-report.json"));
                let text = serde_json::to_string_pretty(rep).expect("report serializes") + "\n";
                fs::write(&path, text).map_err(io(&path))?;
            }
        }
        Ok(())
    }
}

pub fn estimator_name(e: Estimator) -> &'static str {
    match e {
        Estimator::TrueCtr => "true_ctr",
        Estimator::IwCtr => "iw_ctr",
    }
}
