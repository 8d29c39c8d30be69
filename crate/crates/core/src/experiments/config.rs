//! Flat `key = value` experiment configuration.
//!
//! Lines starting with `#` and blank lines are ignored. Unknown keys are an
//! error so that typos do not silently fall back to defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::dataset::{FeatureLaw, Task};
use crate::error::{Error, Result};
use crate::estimators::LossKind;
use crate::kde::SmoothingKernel;
use crate::ope::IndexSet;
use crate::par::Execution;
use crate::sgd::EstimatorKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    VarianceStudy,
    SgdRun,
    KernelBuild,
    Sample,
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "variance-study" => ExperimentKind::VarianceStudy,
            "sgd-run" => ExperimentKind::SgdRun,
            "kernel-build" => ExperimentKind::KernelBuild,
            "sample" => ExperimentKind::Sample,
            _ => return Err(Error::Config(format!("unknown experiment kind '{s}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::Config(format!("unknown format '{s}'"))),
        }
    }
}

/// Which coordinates the DPP lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelSpace {
    /// All point coordinates, including a fused label.
    Joint,
    /// Features only.
    Features,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "source")]
pub enum DataSource {
    Synthetic {
        n: usize,
        /// Total point dimension (features plus fused label for the linear task).
        d: usize,
        law: FeatureLaw,
        task: Task,
        noise_sd: f64,
        seed: u64,
    },
    Libsvm {
        train: PathBuf,
        test: Option<PathBuf>,
        binarize_letter: bool,
        /// Keep only the first `limit` training rows.
        limit: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub data: DataSource,
    pub margin: f64,
    pub loss: LossKind,
    pub lambda0: f64,
    pub batch_sizes: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorKind>,
    pub kernel_space: KernelSpace,
    pub index_set: IndexSet,
    /// `None` means `N^{-1/d}`.
    pub bandwidth: Option<f64>,
    pub smoothing_kernel: SmoothingKernel,
    /// `None` means `2^⌈log2 d + 2⌉`.
    pub slope_p_min: Option<usize>,
    pub budget: usize,
    pub step_alpha: f64,
    pub step_scale: f64,
    pub record_every: usize,
    pub format: OutputFormat,
    /// Output destination; not echoed, so reports do not depend on it.
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Persisted kernel for `sample`.
    pub kernel_path: Option<PathBuf>,
    /// Minibatches drawn by `sample`.
    pub count: usize,
    #[serde(skip)]
    pub execution: Execution,
}

const KEYS: &[&str] = &[
    "kind", "dataset", "n", "d", "law", "task", "noise_sd", "data_seed", "train", "test", "binarize",
    "limit", "margin", "loss", "lambda0", "batch_sizes", "replicates", "seed", "estimators",
    "kernel_space", "index_set", "bandwidth", "smoothing_kernel", "slope_p_min", "budget",
    "step_alpha", "step_scale", "record_every", "format", "out", "kernel", "count", "execution",
];

/// Raw `key → value` pairs in file order, sorted by key.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if !KEYS.contains(&k.as_str()) {
            return Err(Error::Config(format!("line {}: unknown key '{k}'", no + 1)));
        }
        if map.insert(k.clone(), v).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key '{k}'", no + 1)));
        }
    }
    Ok(map)
}

fn get<T: FromStr>(map: &BTreeMap<String, String>, key: &str, default: T) -> Result<T> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| Error::Config(format!("bad value '{v}' for {key}"))),
    }
}

fn list<T: FromStr>(map: &BTreeMap<String, String>, key: &str, default: Vec<T>) -> Result<Vec<T>> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| Error::Config(format!("bad entry '{s}' in {key}"))))
            .collect(),
    }
}

fn auto_or<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    match map.get(key).map(String::as_str) {
        None | Some("auto") => Ok(None),
        Some(v) => v.parse().map(Some).map_err(|_| Error::Config(format!("bad value '{v}' for {key}"))),
    }
}

fn keyword<T>(map: &BTreeMap<String, String>, key: &str, default: T, table: &[(&str, T)]) -> Result<T>
where
    T: Copy,
{
    match map.get(key) {
        None => Ok(default),
        Some(v) => table
            .iter()
            .find(|(name, _)| name == v)
            .map(|(_, t)| *t)
            .ok_or_else(|| Error::Config(format!("bad value '{v}' for {key}"))),
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        // relative data paths are resolved against the config file
        if let DataSource::Libsvm { train, test, .. } = &mut cfg.data {
            let base = path.parent().unwrap_or(Path::new("."));
            *train = base.join(&*train);
            if let Some(t) = test {
                *t = base.join(&*t);
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let m = parse_pairs(text)?;
        let kind: ExperimentKind = get(&m, "kind", ExperimentKind::VarianceStudy)?;
        let task = keyword(&m, "task", Task::Linear, &[("linear", Task::Linear), ("logistic", Task::Logistic)])?;
        let data = match m.get("dataset").map(String::as_str).unwrap_or("synthetic") {
            "synthetic" => DataSource::Synthetic {
                n: get(&m, "n", 1000)?,
                d: get(&m, "d", 2)?,
                law: keyword(
                    &m,
                    "law",
                    FeatureLaw::Uniform,
                    &[("uniform", FeatureLaw::Uniform), ("gaussian-mixture-2", FeatureLaw::GaussianMixture2)],
                )?,
                task,
                noise_sd: get(&m, "noise_sd", 0.1)?,
                seed: get(&m, "data_seed", 1)?,
            },
            "libsvm" => DataSource::Libsvm {
                train: m
                    .get("train")
                    .map(PathBuf::from)
                    .ok_or_else(|| Error::Config("libsvm dataset needs 'train'".into()))?,
                test: m.get("test").map(PathBuf::from),
                binarize_letter: keyword(&m, "binarize", false, &[("letter", true), ("none", false)])?,
                limit: auto_or(&m, "limit")?,
            },
            other => return Err(Error::Config(format!("unknown dataset '{other}'"))),
        };
        let default_loss = match task {
            Task::Linear => LossKind::Linear,
            Task::Logistic => LossKind::Logistic,
        };
        let cfg = ExperimentConfig {
            kind,
            data,
            margin: get(&m, "margin", crate::dataset::DEFAULT_MARGIN)?,
            loss: keyword(&m, "loss", default_loss, &[("linear", LossKind::Linear), ("logistic", LossKind::Logistic)])?,
            lambda0: get(&m, "lambda0", 0.1)?,
            batch_sizes: list(&m, "batch_sizes", vec![8, 16, 32, 64, 128])?,
            replicates: get(&m, "replicates", 1000)?,
            seed: get(&m, "seed", 0)?,
            estimators: list(&m, "estimators", vec![EstimatorKind::Poisson, EstimatorKind::Dpp])?,
            kernel_space: keyword(
                &m,
                "kernel_space",
                KernelSpace::Joint,
                &[("joint", KernelSpace::Joint), ("features", KernelSpace::Features)],
            )?,
            index_set: keyword(
                &m,
                "index_set",
                IndexSet::GradedLex,
                &[("graded-lex", IndexSet::GradedLex), ("tensor-box", IndexSet::TensorBox)],
            )?,
            bandwidth: auto_or(&m, "bandwidth")?,
            smoothing_kernel: keyword(
                &m,
                "smoothing_kernel",
                SmoothingKernel::Epanechnikov,
                &[
                    ("epanechnikov", SmoothingKernel::Epanechnikov),
                    ("biweight", SmoothingKernel::Biweight),
                    ("triweight", SmoothingKernel::Triweight),
                ],
            )?,
            slope_p_min: auto_or(&m, "slope_p_min")?,
            budget: get(&m, "budget", 2000)?,
            step_alpha: get(&m, "step_alpha", 0.9)?,
            step_scale: get(&m, "step_scale", 1.0)?,
            record_every: get(&m, "record_every", 1)?,
            format: get(&m, "format", OutputFormat::Csv)?,
            out: m.get("out").map(PathBuf::from),
            kernel_path: m.get("kernel").map(PathBuf::from),
            count: get(&m, "count", 1)?,
            execution: keyword(
                &m,
                "execution",
                Execution::Parallel,
                &[("parallel", Execution::Parallel), ("sequential", Execution::Sequential)],
            )?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_sizes.is_empty() {
            return Err(Error::Config("batch_sizes is empty".into()));
        }
        if self.batch_sizes.windows(2).any(|w| w[0] >= w[1]) || self.batch_sizes[0] == 0 {
            return Err(Error::Config("batch_sizes must be positive and strictly increasing".into()));
        }
        if self.kind == ExperimentKind::VarianceStudy && self.replicates < 2 {
            return Err(Error::Config("variance estimation needs replicates >= 2".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be positive".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("estimators is empty".into()));
        }
        if !(self.lambda0 >= 0.0) {
            return Err(Error::Config("lambda0 must be >= 0".into()));
        }
        Ok(())
    }

    /// Deterministic `key=value` echo of the effective configuration.
    pub fn echo(&self) -> Vec<(String, String)> {
        let v = serde_json::to_value(self).expect("config serializes");
        let mut out = Vec::new();
        flatten("", &v, &mut out);
        out
    }
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut Vec<(String, String)>) {
    match v {
        serde_json::Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out);
            }
        }
        serde_json::Value::Array(a) => {
            let items: Vec<String> = a.iter().map(scalar).collect();
            out.push((prefix.to_string(), items.join(",")));
        }
        other => out.push((prefix.to_string(), scalar(other))),
    }
}

fn scalar(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Null => "auto".into(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = ExperimentConfig::parse("# comment\nn = 500\nd=3\nbatch_sizes = 5, 10\nreplicates=20\n").unwrap();
        assert_eq!(cfg.batch_sizes, vec![5, 10]);
        assert!(matches!(cfg.data, DataSource::Synthetic { n: 500, d: 3, .. }));
        assert_eq!(cfg.bandwidth, None);
    }

    #[test]
    fn rejects_unknown_and_bad_values() {
        assert!(ExperimentConfig::parse("nn = 3").is_err());
        assert!(ExperimentConfig::parse("batch_sizes = 8,8").is_err());
        assert!(ExperimentConfig::parse("replicates = 1").is_err());
        assert!(ExperimentConfig::parse("law = cauchy").is_err());
        assert!(ExperimentConfig::parse("n 3").is_err());
    }

    #[test]
    fn echo_is_flat_and_stable() {
        let cfg = ExperimentConfig::parse("bandwidth = 0.01").unwrap();
        let e = cfg.echo();
        assert!(e.iter().any(|(k, v)| k == "bandwidth" && v == "0.01"));
        assert!(e.iter().any(|(k, v)| k == "data.source" && v == "synthetic"));
        assert_eq!(e, cfg.echo());
    }
}
