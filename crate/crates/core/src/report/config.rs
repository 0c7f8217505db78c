use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::SweepSettings;
use crate::data::{SplitSpec, SynthConfig};
use crate::error::{Error, Result};
use crate::train::{check_distinct_seeds, TrainConfig};

pub use crate::analysis::SWEEP_BUDGET as DRIVER_BUDGET;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// One CSV, split into train and test with `split`.
    Csv(PathBuf),
    /// Pre-split train and test CSVs.
    TrainTestCsv { train: PathBuf, test: PathBuf },
    Synthetic(SyntheticSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSource {
    #[serde(flatten)]
    pub config: SynthConfig,
    #[serde(default = "default_test_head")]
    pub test_head_count: usize,
    #[serde(default = "default_test_tail")]
    pub test_tail_count: usize,
}

fn default_test_head() -> usize {
    20
}

fn default_test_tail() -> usize {
    14
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Full,
    Truncated,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Full => "full",
            Regime::Truncated => "truncated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationMode {
    /// A fresh random head-class deletion before each network's training.
    PerSeed,
    /// One truncated training set (`train_truncated.csv`) shared by all seeds.
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruncationSettings {
    pub mode: TruncationMode,
    /// Seed of the shared variant written by `prepare`.
    pub seed: u64,
}

impl Default for TruncationSettings {
    fn default() -> Self {
        Self {
            mode: TruncationMode::PerSeed,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    #[serde(default = "default_k")]
    pub feature_select_k: usize,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default = "default_regimes")]
    pub regimes: Vec<Regime>,
    #[serde(default)]
    pub truncation: TruncationSettings,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub sweep: SweepSettings,
    /// Not echoed into outputs, so runs into different directories match.
    #[serde(default = "default_out", skip_serializing)]
    pub output_dir: PathBuf,
    /// Directory relative dataset paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_k() -> usize {
    5
}

fn default_regimes() -> Vec<Regime> {
    vec![Regime::Full, Regime::Truncated]
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// Config with every default and the given dataset source.
    pub fn with_source(dataset: DatasetSource) -> Self {
        Self {
            dataset,
            feature_select_k: default_k(),
            split: SplitSpec::default(),
            regimes: default_regimes(),
            truncation: TruncationSettings::default(),
            train: TrainConfig::default(),
            seeds: default_seeds(),
            sweep: SweepSettings::default(),
            output_dir: default_out(),
            base_dir: PathBuf::from("."),
        }
    }

    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: Self =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut cfg = Self::from_json(&text, base)?;
        if cfg.output_dir.is_relative() {
            cfg.output_dir = cfg.base_dir.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_select_k == 0 {
            return Err(Error::Config("feature_select_k must be at least 1".into()));
        }
        if self.regimes.is_empty() {
            return Err(Error::Config("no regimes selected".into()));
        }
        check_distinct_seeds(&self.seeds)?;
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds listed".into()));
        }
        self.train.check()?;
        self.sweep.check()?;
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err(Error::Config("split.train_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Canonical JSON echo for provenance records.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Parses `a..b` (inclusive), `a,b,c` or a single seed.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("cannot parse seeds {text:?}; use e.g. 0..9 or 1,4,7"));
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    check_distinct_seeds(&seeds)?;
    Ok(seeds)
}
