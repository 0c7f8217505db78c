//! Staged experiment driver: `prepare → train → analyze → plot`, plus DTMC
//! export. Every stage reads its inputs from and writes its outputs to one
//! output directory, so any stage can be re-run from persisted artifacts.
//!
//! Output tree (relative to the output directory):
//!
//! | file | stage |
//! |------|-------|
//! | `train.csv`, `test.csv`, `train_truncated.csv` | prepare (raw values, selected features) |
//! | `normalizer.json`, `features.csv`, `variance_table.csv` | prepare |
//! | `models/{regime}/seed_{s}.json`, `validation.csv` | train |
//! | `robustness_bias.csv`, `robustness_bias_per_network.csv` | analyze |
//! | `node_sensitivity.csv`, `node_sensitivity_per_network.csv` | analyze |
//! | `seed_counts.csv`, `bias_scores.csv`, `comparison.csv`, `summary.json` | analyze |
//! | `class_robustness.svg`, `node_sensitivity_{polarity}.svg` | plot |
//! | `dtmc/*.pm`, `dtmc/*.props` | export-dtmc |
//! | `manifest.json` | every stage |
//! | `timings.json` | every stage (the only non-reproducible file) |

mod config;
pub mod svg;
pub mod tables;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub use config::*;

use crate::analysis::{build_report, compare_regimes, variance_table, BiasReport, SensitivityCurve, VarianceTable};
use crate::data::{
    load_csv, load_csv_with_classes, normalize_apply, normalize_fit, rank_features, split,
    synth_longtail_with_test, truncate_to_balance, welch_scores, Dataset, Normalizer,
};
use crate::error::{Error, Result};
use crate::model::{load_model, save_model, validate_model, Network, ValidationSummary};
use crate::perturb::{export_dtmc, NoiseSweep, Polarity, PreservationCount, SeedInput, Target};
use crate::train::{train_one, RunSet, TrainConfig};
use svg::{Chart, Panel, Series, PALETTE};
use tables::*;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// File names inside an output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn model(&self, regime: Regime, seed: u64) -> PathBuf {
        self.root
            .join("models")
            .join(regime.as_str())
            .join(format!("seed_{seed}.json"))
    }
}

/// Guards an output directory against concurrent invocations.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub const FILE: &'static str = ".nodebias.lock";

    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(Self::FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Config(format!(
                "{} exists: another run is using this output directory (delete the file if that run is gone)",
                path.display()
            ))),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub status: String,
    /// Output file (relative path) to SHA-256 of its content.
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub validation: Vec<NetworkValidation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkValidation {
    pub regime: String,
    pub seed: u64,
    pub train_correct: usize,
    pub train_total: usize,
    pub test_correct: usize,
    pub test_total: usize,
    pub test_class_rows: Vec<usize>,
    pub test_class_correct: Vec<usize>,
}

/// Provenance record of an output directory. Holds no timings, so it is
/// reproducible byte-for-byte; stage durations live in `timings.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub status: String,
    pub config: Value,
    pub dataset_fingerprint: Option<String>,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub const FILE: &'static str = "manifest.json";

    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(Self::FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    fn save(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(Self::FILE), &serde_json::to_value(self).expect("manifest serializes"))
    }
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v).expect("json serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Lock, mark the stage running, run it, then finalize manifest and timings.
fn run_stage<T>(
    dir: &Path,
    config: Option<&ExperimentConfig>,
    name: &str,
    body: impl FnOnce(&mut StageRecord, &mut RunManifest) -> Result<T>,
) -> Result<T> {
    let _lock = OutputLock::acquire(dir)?;
    let mut manifest = RunManifest::load(dir)?.unwrap_or_default();
    manifest.tool = "nodebias".into();
    manifest.version = VERSION.into();
    if let Some(cfg) = config {
        manifest.config = cfg.echo();
    }
    manifest.status = "running".into();
    manifest.stages.insert(
        name.into(),
        StageRecord {
            status: "running".into(),
            ..StageRecord::default()
        },
    );
    manifest.save(dir)?;

    let start = Instant::now();
    let mut record = StageRecord::default();
    let result = body(&mut record, &mut manifest);
    let elapsed = start.elapsed().as_secs_f64();

    record.status = if result.is_ok() { "complete" } else { "failed" }.into();
    manifest.stages.insert(name.into(), record);
    manifest.status = if manifest.stages.values().all(|s| s.status == "complete") {
        "complete".into()
    } else {
        "failed".into()
    };
    manifest.save(dir)?;

    let tpath = dir.join("timings.json");
    let mut timings: BTreeMap<String, f64> = fs::read_to_string(&tpath)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or_default();
    timings.insert(name.into(), elapsed);
    write_json(&tpath, &serde_json::to_value(&timings).expect("timings serialize"))?;
    result
}

fn record_output(record: &mut StageRecord, dir: &Path, path: &Path) -> Result<()> {
    let rel = path
        .strip_prefix(dir)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/");
    record.outputs.insert(rel, sha256_file(path)?);
    Ok(())
}

/// Selected, split, normalized data before anything is written.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub source_fingerprint: String,
    pub train: Dataset,
    pub test: Dataset,
    pub truncated: Dataset,
    pub normalizer: Normalizer,
    /// Welch score of every source column.
    pub scores: Vec<f64>,
    /// Source column indices of the selected features, ascending.
    pub selected: Vec<usize>,
    pub source_features: Vec<String>,
    pub variance: VarianceTable,
    pub truncated_variance: VarianceTable,
}

fn combined_fingerprint(a: &Dataset, b: &Dataset) -> String {
    let mut h = Sha256::new();
    h.update(a.fingerprint().as_bytes());
    h.update(b"\n");
    h.update(b.fingerprint().as_bytes());
    format!("{:x}", h.finalize())
}

fn load_source(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset, String)> {
    match &cfg.dataset {
        DatasetSource::Csv(p) => {
            let ds = load_csv(cfg.resolve(p))?;
            let fp = ds.fingerprint();
            let (train, test) = split(&ds, &cfg.split)?;
            Ok((train, test, fp))
        }
        DatasetSource::TrainTestCsv { train, test } => {
            let train = load_csv(cfg.resolve(train))?;
            let test = load_csv_with_classes(cfg.resolve(test), train.class_names())?;
            if test.feature_names() != train.feature_names() {
                return Err(Error::Data("train and test CSVs have different feature columns".into()));
            }
            let fp = combined_fingerprint(&train, &test);
            Ok((train, test, fp))
        }
        DatasetSource::Synthetic(s) => {
            let (train, test) = synth_longtail_with_test(&s.config, s.test_head_count, s.test_tail_count)?;
            let fp = combined_fingerprint(&train, &test);
            Ok((train, test, fp))
        }
    }
}

/// Feature selection on the training split, truncation and normalization.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    cfg.validate()?;
    let (train, test, source_fingerprint) = load_source(cfg)?;
    let n = train.feature_count();
    if cfg.feature_select_k > n {
        return Err(Error::Config(format!(
            "feature_select_k = {} exceeds the {n} available features",
            cfg.feature_select_k
        )));
    }
    let scores = welch_scores(&train)?;
    let mut selected = rank_features(&train, cfg.feature_select_k)?;
    selected.sort_unstable();
    let source_features = train.feature_names().to_vec();
    let train = train.select_features(&selected)?;
    let test = test.select_features(&selected)?;
    let truncated = truncate_to_balance(&train, cfg.truncation.seed)?;
    let normalizer = normalize_fit(&train)?;
    let variance = variance_table(&train)?;
    let truncated_variance = variance_table(&truncated)?;
    Ok(PreparedData {
        source_fingerprint,
        train,
        test,
        truncated,
        normalizer,
        scores,
        selected,
        source_features,
        variance,
        truncated_variance,
    })
}

fn variance_rows(name: &str, t: &VarianceTable) -> Vec<VarianceRow> {
    let mut rows = Vec::new();
    for (f, feature) in t.feature_names.iter().enumerate() {
        for (c, class) in t.class_names.iter().enumerate() {
            rows.push(VarianceRow {
                dataset: name.into(),
                feature: feature.clone(),
                class: class.clone(),
                count: t.counts[c],
                variance: t.variance[f][c],
                is_min: t.is_min(f, c),
                is_max: t.is_max(f, c),
            });
        }
    }
    rows
}

pub fn cmd_prepare(cfg: &ExperimentConfig) -> Result<PreparedData> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    run_stage(&dir, Some(cfg), "prepare", |rec, manifest| {
        let p = prepare_data(cfg)?;
        manifest.dataset_fingerprint = Some(p.source_fingerprint.clone());
        let out = Layout::new(&dir);
        let files = [
            ("train.csv", &p.train),
            ("test.csv", &p.test),
            ("train_truncated.csv", &p.truncated),
        ];
        for (name, ds) in files {
            let path = out.file(name);
            ds.save_csv(&path)?;
            record_output(rec, &dir, &path)?;
        }
        let path = out.file("normalizer.json");
        fs::write(&path, p.normalizer.to_json()).map_err(|e| Error::io(&path, e))?;
        record_output(rec, &dir, &path)?;

        let mut order: Vec<usize> = (0..p.scores.len()).collect();
        order.sort_by(|&a, &b| p.scores[b].total_cmp(&p.scores[a]).then(a.cmp(&b)));
        let mut features: Vec<FeatureRow> = order
            .iter()
            .enumerate()
            .map(|(rank, &col)| FeatureRow {
                column: col,
                feature: p.source_features[col].clone(),
                welch_score: p.scores[col],
                rank: rank + 1,
                selected: p.selected.contains(&col),
            })
            .collect();
        features.sort_by_key(|r| r.column);
        let path = out.file("features.csv");
        write_rows(&path, &features)?;
        record_output(rec, &dir, &path)?;

        let mut rows = variance_rows("train", &p.variance);
        rows.extend(variance_rows("train_truncated", &p.truncated_variance));
        let path = out.file("variance_table.csv");
        write_rows(&path, &rows)?;
        record_output(rec, &dir, &path)?;
        Ok(p)
    })
}

/// Prepared files reloaded from an output directory.
#[derive(Debug, Clone)]
pub struct PreparedFiles {
    pub train_raw: Dataset,
    pub test_raw: Dataset,
    pub truncated_raw: Dataset,
    pub normalizer: Normalizer,
}

impl PreparedFiles {
    pub fn load(dir: &Path) -> Result<Self> {
        let out = Layout::new(dir);
        let names = ["normalizer.json", "train.csv", "test.csv", "train_truncated.csv"];
        let missing: Vec<String> = names
            .iter()
            .map(|n| out.file(n))
            .filter(|p| !p.exists())
            .map(|p| p.display().to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Data(format!(
                "missing prepared files (run `nodebias prepare` first): {}",
                missing.join(", ")
            )));
        }
        let npath = out.file("normalizer.json");
        let normalizer =
            Normalizer::from_json(&fs::read_to_string(&npath).map_err(|e| Error::io(&npath, e))?)?;
        let load = |n: &str| load_csv_with_classes(out.file(n), &normalizer.class_names);
        Ok(Self {
            train_raw: load("train.csv")?,
            test_raw: load("test.csv")?,
            truncated_raw: load("train_truncated.csv")?,
            normalizer,
        })
    }

    pub fn train(&self) -> Result<Dataset> {
        normalize_apply(&self.normalizer, &self.train_raw)
    }

    pub fn test(&self) -> Result<Dataset> {
        normalize_apply(&self.normalizer, &self.test_raw)
    }

    pub fn truncated(&self) -> Result<Dataset> {
        normalize_apply(&self.normalizer, &self.truncated_raw)
    }
}

/// Training rows of one network of a regime.
pub fn regime_training_set(
    regime: Regime,
    seed: u64,
    truncation: &TruncationSettings,
    train: &Dataset,
    shared_truncated: &Dataset,
) -> Result<Dataset> {
    match (regime, truncation.mode) {
        (Regime::Full, _) => Ok(train.clone()),
        (Regime::Truncated, TruncationMode::PerSeed) => truncate_to_balance(train, seed),
        (Regime::Truncated, TruncationMode::Shared) => Ok(shared_truncated.clone()),
    }
}

fn validation_rows(regime: Regime, seed: u64, split: &str, v: &ValidationSummary, classes: &[String]) -> Vec<ValidationRow> {
    let mut rows = vec![ValidationRow {
        regime: regime.as_str().into(),
        network_seed: seed,
        split: split.into(),
        class: String::new(),
        rows: v.total,
        correct: v.correct,
        accuracy: Some(v.accuracy),
    }];
    for (c, class) in classes.iter().enumerate() {
        rows.push(ValidationRow {
            regime: regime.as_str().into(),
            network_seed: seed,
            split: split.into(),
            class: class.clone(),
            rows: v.class_rows[c],
            correct: v.class_correct[c],
            accuracy: v.per_class_accuracy[c],
        });
    }
    rows
}

/// Trains every (regime, seed) network. A diverging seed is reported and
/// skipped; the stage then fails with a numeric error after the others finish.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    run_stage(&dir, Some(cfg), "train", |rec, _| {
        let prepared = PreparedFiles::load(&dir)?;
        let train = prepared.train()?;
        let test = prepared.test()?;
        let truncated = prepared.truncated()?;
        let classes = train.class_names().to_vec();
        let out = Layout::new(&dir);
        let jobs: Vec<(Regime, u64)> = cfg
            .regimes
            .iter()
            .flat_map(|&r| cfg.seeds.iter().map(move |&s| (r, s)))
            .collect();
        let results: Vec<Result<(Network, Dataset)>> = jobs
            .par_iter()
            .map(|&(regime, seed)| {
                let data = regime_training_set(regime, seed, &cfg.truncation, &train, &truncated)?;
                let net = train_one(&data, &TrainConfig { seed, ..cfg.train })?;
                Ok((net, data))
            })
            .collect();
        let mut validation = Vec::new();
        for (&(regime, seed), result) in jobs.iter().zip(results) {
            let (net, data) = match result {
                Ok(x) => x,
                Err(Error::Numeric(msg)) => {
                    rec.failures.push(format!("{} seed {seed}: {msg}", regime.as_str()));
                    continue;
                }
                Err(e) => return Err(e),
            };
            let path = out.model(regime, seed);
            let parent = path.parent().expect("model path has a parent");
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            save_model(&net, &path)?;
            record_output(rec, &dir, &path)?;
            let on_train = validate_model(&net, &data)?;
            let on_test = validate_model(&net, &test)?;
            validation.extend(validation_rows(regime, seed, "train", &on_train, &classes));
            validation.extend(validation_rows(regime, seed, "test", &on_test, &classes));
            rec.validation.push(NetworkValidation {
                regime: regime.as_str().into(),
                seed,
                train_correct: on_train.correct,
                train_total: on_train.total,
                test_correct: on_test.correct,
                test_total: on_test.total,
                test_class_rows: on_test.class_rows.clone(),
                test_class_correct: on_test.class_correct.clone(),
            });
        }
        let path = out.file("validation.csv");
        write_rows(&path, &validation)?;
        record_output(rec, &dir, &path)?;
        if rec.failures.is_empty() {
            Ok(())
        } else {
            Err(Error::Numeric(format!("training diverged: {}", rec.failures.join("; "))))
        }
    })
}

/// Loads the trained networks of every configured regime, naming all
/// missing files at once.
pub fn load_runsets(cfg: &ExperimentConfig, train: &Dataset) -> Result<Vec<(Regime, RunSet)>> {
    let out = Layout::new(&cfg.output_dir);
    let out = &out;
    let missing: Vec<String> = cfg
        .regimes
        .iter()
        .flat_map(|&r| cfg.seeds.iter().map(move |&s| out.model(r, s)))
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "missing model files (run `nodebias train` first): {}",
            missing.join(", ")
        )));
    }
    cfg.regimes
        .iter()
        .map(|&r| {
            let nets = cfg
                .seeds
                .iter()
                .map(|&s| Ok((s, load_model(out.model(r, s))?)))
                .collect::<Result<Vec<_>>>()?;
            Ok((r, RunSet::from_networks(nets, train, cfg.train)?))
        })
        .collect()
}

fn curve_json(curve: &SensitivityCurve, features: &[String], classes: &[String]) -> Value {
    let points: Vec<Value> = curve
        .points
        .iter()
        .map(|p| {
            let cells: Vec<Value> = p
                .classes
                .iter()
                .enumerate()
                .map(|(c, cp)| {
                    let parts = cp.exact.as_ref().map(rational_parts);
                    json!({
                        "class": classes[c],
                        "present": cp.exact.is_some(),
                        "probability": cp.probability,
                        "numerator": parts.as_ref().map(|x| x.0.clone()),
                        "denominator": parts.map(|x| x.1),
                        "seed_count": cp.seed_count,
                        "network_count": cp.network_count,
                    })
                })
                .collect();
            json!({
                "level": p.level,
                "magnitude": p.magnitude,
                "method": p.method.as_str(),
                "classes": cells,
            })
        })
        .collect();
    json!({
        "target": target_label(curve.target),
        "feature": feature_label(curve.target, features),
        "polarity": curve.polarity.as_str(),
        "points": points,
    })
}

fn report_json(r: &BiasReport, features: &[String], classes: &[String]) -> Value {
    let networks: Vec<Value> = r
        .validation
        .iter()
        .map(|(seed, v)| {
            json!({
                "seed": seed,
                "test_correct": v.correct,
                "test_total": v.total,
                "test_class_rows": v.class_rows,
                "test_class_correct": v.class_correct,
            })
        })
        .collect();
    let nodes: Vec<Value> = r
        .node_curves
        .iter()
        .map(|b| curve_json(&b.averaged, features, classes))
        .collect();
    let scores: Vec<Value> = r
        .scores
        .iter()
        .map(|s| serde_json::to_value(score_row(&r.regime, None, s, features, classes)).expect("row serializes"))
        .collect();
    json!({
        "regime": r.regime,
        "dataset_fingerprint": r.dataset_fingerprint,
        "test_fingerprint": r.test_fingerprint,
        "networks": networks,
        "class_curve": curve_json(&r.class_curve.averaged, features, classes),
        "node_curves": nodes,
        "bias_scores": scores,
    })
}

/// Results of the analyze stage.
#[derive(Debug, Clone)]
pub struct AnalysisOutput {
    pub reports: Vec<BiasReport>,
    pub comparison: Option<crate::analysis::RegimeComparison>,
    pub summary: Value,
}

pub fn cmd_analyze(cfg: &ExperimentConfig) -> Result<AnalysisOutput> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    run_stage(&dir, Some(cfg), "analyze", |rec, _| {
        let prepared = PreparedFiles::load(&dir)?;
        let train = prepared.train()?;
        let test = prepared.test()?;
        let features = test.feature_names().to_vec();
        let classes = test.class_names().to_vec();
        let runsets = load_runsets(cfg, &train)?;
        let reports = runsets
            .iter()
            .map(|(r, rs)| build_report(r.as_str(), rs, &prepared.train_raw, &test, &cfg.sweep))
            .collect::<Result<Vec<_>>>()?;

        let mut class_avg = Vec::new();
        let mut class_net = Vec::new();
        let mut node_avg = Vec::new();
        let mut node_net = Vec::new();
        let mut seed_rows = Vec::new();
        let mut score_table = Vec::new();
        for r in &reports {
            let (a, n) = bundle_rows(&r.regime, &[&r.class_curve], &features, &classes);
            class_avg.extend(a);
            class_net.extend(n);
            let bundles: Vec<_> = r.node_curves.iter().collect();
            let (a, n) = bundle_rows(&r.regime, &bundles, &features, &classes);
            node_avg.extend(a);
            node_net.extend(n);
            seed_rows.extend(seed_count_rows(r, &classes));
            score_table.extend(score_rows(r, &features, &classes));
        }
        let full = reports.iter().find(|r| r.regime == Regime::Full.as_str());
        let trunc = reports.iter().find(|r| r.regime == Regime::Truncated.as_str());
        let comparison = match (full, trunc) {
            (Some(f), Some(t)) => Some(compare_regimes(f, t)?),
            _ => None,
        };

        let out = Layout::new(&dir);
        let mut emit = |name: &str, write: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
            let path = out.file(name);
            write(&path)?;
            record_output(rec, &dir, &path)
        };
        emit("robustness_bias.csv", &|p| write_rows(p, &class_avg))?;
        emit("robustness_bias_per_network.csv", &|p| write_rows(p, &class_net))?;
        emit("node_sensitivity.csv", &|p| write_rows(p, &node_avg))?;
        emit("node_sensitivity_per_network.csv", &|p| write_rows(p, &node_net))?;
        emit("seed_counts.csv", &|p| write_rows(p, &seed_rows))?;
        emit("bias_scores.csv", &|p| write_rows(p, &score_table))?;
        if let Some(cmp) = &comparison {
            let rows = comparison_rows(cmp, &features, &classes);
            emit("comparison.csv", &|p| write_rows(p, &rows))?;
        }

        let comparison_json = comparison.as_ref().map(|cmp| {
            let scores: Vec<Value> = cmp
                .scores
                .iter()
                .map(|s| {
                    json!({
                        "target": target_label(s.target),
                        "feature": feature_label(s.target, &features),
                        "polarity": s.polarity.as_str(),
                        "full": s.full,
                        "truncated": s.truncated,
                        "delta": s.delta,
                    })
                })
                .collect();
            json!({
                "score_deltas": scores,
                "flipped_levels": cmp.levels.iter().filter(|l| l.flipped).count(),
            })
        });
        let summary = json!({
            "tool": "nodebias",
            "version": VERSION,
            "config": cfg.echo(),
            "features": features,
            "classes": classes,
            "regimes": reports.iter().map(|r| report_json(r, &features, &classes)).collect::<Vec<_>>(),
            "comparison": comparison_json,
        });
        emit("summary.json", &|p| write_json(p, &summary))?;
        Ok(AnalysisOutput {
            reports,
            comparison,
            summary,
        })
    })
}

fn class_series(avg: &[&CurveRow], net: &[&CurveRow], classes: &[String]) -> Vec<Series> {
    classes
        .iter()
        .enumerate()
        .map(|(i, class)| Series {
            label: class.clone(),
            color: PALETTE[i % PALETTE.len()].into(),
            line: avg
                .iter()
                .filter(|r| &r.class == class)
                .map(|r| (r.magnitude, r.probability))
                .collect(),
            points: net
                .iter()
                .filter(|r| &r.class == class)
                .filter_map(|r| r.probability.map(|p| (r.magnitude, p)))
                .collect(),
        })
        .collect()
}

fn distinct<'a>(it: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in it {
        if !out.iter().any(|o| o == s) {
            out.push(s.to_string());
        }
    }
    out
}

/// Renders SVG charts from the CSV tables of an analyzed output directory.
pub fn plot_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let out = Layout::new(dir);
    let class_path = out.file("robustness_bias.csv");
    if !class_path.exists() {
        return Err(Error::Data(format!(
            "no analysis results in {} (run `nodebias analyze` first)",
            dir.display()
        )));
    }
    let class_avg: Vec<CurveRow> = read_rows(&class_path)?;
    let class_net: Vec<CurveRow> = read_rows(&out.file("robustness_bias_per_network.csv"))?;
    let node_avg: Vec<CurveRow> = read_rows(&out.file("node_sensitivity.csv"))?;
    let node_net: Vec<CurveRow> = read_rows(&out.file("node_sensitivity_per_network.csv"))?;
    if class_avg.is_empty() && node_avg.is_empty() {
        return Err(Error::Data(format!("{}: analysis tables are empty", dir.display())));
    }
    let classes = distinct(class_avg.iter().chain(&node_avg).map(|r| r.class.as_str()));
    let regimes = distinct(class_avg.iter().chain(&node_avg).map(|r| r.regime.as_str()));
    let mut written = Vec::new();

    if !class_avg.is_empty() {
        let panels = regimes
            .iter()
            .map(|reg| {
                let a: Vec<&CurveRow> = class_avg.iter().filter(|r| &r.regime == reg).collect();
                let n: Vec<&CurveRow> = class_net.iter().filter(|r| &r.regime == reg).collect();
                Panel {
                    title: format!("{reg} training, all nodes"),
                    series: class_series(&a, &n, &classes),
                }
            })
            .collect();
        let chart = Chart {
            title: "Probability of preserved classification by class".into(),
            x_label: "noise magnitude".into(),
            columns: regimes.len(),
            panels,
        };
        let path = out.file("class_robustness.svg");
        fs::write(&path, chart.render()).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }

    for pol in distinct(node_avg.iter().map(|r| r.polarity.as_str())) {
        let targets = distinct(
            node_avg
                .iter()
                .filter(|r| r.polarity == pol)
                .map(|r| r.target.as_str()),
        );
        let mut panels = Vec::new();
        for reg in &regimes {
            for t in &targets {
                let pick = |r: &&CurveRow| &r.regime == reg && &r.target == t && r.polarity == pol;
                let a: Vec<&CurveRow> = node_avg.iter().filter(pick).collect();
                if a.is_empty() {
                    continue;
                }
                let n: Vec<&CurveRow> = node_net.iter().filter(pick).collect();
                let node = t.replace('_', " ");
                panels.push(Panel {
                    title: format!("{reg}: {node} ({})", a[0].feature),
                    series: class_series(&a, &n, &classes),
                });
            }
        }
        let chart = Chart {
            title: format!("Node sensitivity, {pol} noise"),
            x_label: "noise magnitude".into(),
            columns: targets.len(),
            panels,
        };
        let path = out.file(&format!("node_sensitivity_{pol}.svg"));
        fs::write(&path, chart.render()).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

pub fn cmd_plot(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::Data(format!("report directory {} does not exist", dir.display())));
    }
    run_stage(dir, None, "plot", |rec, _| {
        let written = plot_dir(dir)?;
        for p in &written {
            record_output(rec, dir, p)?;
        }
        Ok(written)
    })
}

/// Which cell `export-dtmc` writes.
#[derive(Debug, Clone, PartialEq)]
pub struct DtmcRequest {
    pub regime: Regime,
    pub network_seed: u64,
    /// Test row id.
    pub seed_id: String,
    /// Zero-based node; `None` perturbs every node jointly.
    pub node: Option<usize>,
    pub polarity: Polarity,
    pub level: u32,
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

/// Writes `dtmc/<name>.pm` and `.props` for one cell; returns the model path
/// and the engine's count for the same cell.
pub fn cmd_export_dtmc(cfg: &ExperimentConfig, req: &DtmcRequest) -> Result<(PathBuf, PreservationCount)> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    run_stage(&dir, Some(cfg), "export_dtmc", |rec, _| {
        let prepared = PreparedFiles::load(&dir)?;
        let test = prepared.test()?;
        let out = Layout::new(&dir);
        let mpath = out.model(req.regime, req.network_seed);
        if !mpath.exists() {
            return Err(Error::Data(format!("missing model file {}", mpath.display())));
        }
        let net = load_model(&mpath)?;
        let row = test
            .rows()
            .iter()
            .find(|r| r.id == req.seed_id)
            .ok_or_else(|| Error::Data(format!("no test row with id {:?}", req.seed_id)))?;
        let target = match req.node {
            None => Target::AllNodes,
            Some(i) if i < net.input_dim() => Target::SingleNode(i),
            Some(i) => {
                return Err(Error::Structure(format!(
                    "node {} out of range 1..={}",
                    i + 1,
                    net.input_dim()
                )))
            }
        };
        let sweep = NoiseSweep::new(cfg.sweep.step, cfg.sweep.max_level, req.polarity, target)?;
        let seed = SeedInput::new(&net, row.id.clone(), row.features.clone(), row.label)?;
        let name = format!(
            "{}_net{}_{}_{}_{}_L{}",
            req.regime.as_str(),
            req.network_seed,
            file_safe(&req.seed_id),
            target.label(),
            req.polarity.as_str(),
            req.level
        );
        let ddir = dir.join("dtmc");
        fs::create_dir_all(&ddir).map_err(|e| Error::io(&ddir, e))?;
        let path = ddir.join(format!("{name}.pm"));
        let count = export_dtmc(&net, &seed, &sweep, req.level, cfg.sweep.budget, &path)?;
        record_output(rec, &dir, &path)?;
        record_output(rec, &dir, &path.with_extension("props"))?;
        Ok((path, count))
    })
}

/// prepare, train, analyze and plot in sequence.
pub fn run_all(cfg: &ExperimentConfig) -> Result<()> {
    cmd_prepare(cfg)?;
    cmd_train(cfg)?;
    cmd_analyze(cfg)?;
    cmd_plot(&cfg.output_dir)?;
    Ok(())
}
