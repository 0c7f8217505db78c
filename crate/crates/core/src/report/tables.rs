use std::fs;
use std::path::Path;

use num_rational::BigRational;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::{BiasReport, BiasScore, CurveBundle, RegimeComparison, SensitivityCurve};
use crate::error::{Error, Result};
use crate::perturb::Target;

/// One (level, class) cell of a curve. `numerator / denominator` is the
/// exact probability; both are empty when the class has no seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub regime: String,
    /// `all` for the class curve, `node_<k>` (1-based) otherwise.
    pub target: String,
    pub feature: String,
    pub polarity: String,
    /// Network seed for per-network tables, empty for averages.
    pub network_seed: Option<u64>,
    pub level: u32,
    pub magnitude: f64,
    pub method: String,
    pub class: String,
    pub present: bool,
    pub probability: Option<f64>,
    pub numerator: Option<String>,
    pub denominator: Option<String>,
    pub seed_count: usize,
    pub network_count: usize,
}

/// Per-seed preservation count behind every curve cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedCountRow {
    pub regime: String,
    pub network_seed: u64,
    pub target: String,
    pub polarity: String,
    pub level: u32,
    pub seed_id: String,
    pub class: String,
    pub preserved: u64,
    pub total: u64,
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub regime: String,
    pub network_seed: Option<u64>,
    pub target: String,
    pub feature: String,
    pub polarity: String,
    pub score: f64,
    pub arg_level: Option<u32>,
    pub class_a: Option<String>,
    pub class_b: Option<String>,
    pub gap_area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub target: String,
    pub feature: String,
    pub polarity: String,
    pub level: u32,
    pub magnitude: f64,
    pub class: String,
    pub full: Option<f64>,
    pub truncated: Option<f64>,
    /// truncated minus full.
    pub delta: Option<f64>,
    pub lower_full: Option<String>,
    pub lower_truncated: Option<String>,
    pub flipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub regime: String,
    pub network_seed: u64,
    pub split: String,
    pub class: String,
    pub rows: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub dataset: String,
    pub feature: String,
    pub class: String,
    pub count: usize,
    pub variance: Option<f64>,
    pub is_min: bool,
    pub is_max: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub column: usize,
    pub feature: String,
    pub welch_score: f64,
    pub rank: usize,
    pub selected: bool,
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(text.as_slice())
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub(crate) fn target_label(t: Target) -> String {
    t.label()
}

pub(crate) fn feature_label(t: Target, features: &[String]) -> String {
    match t {
        Target::AllNodes => String::new(),
        Target::SingleNode(i) => features.get(i).cloned().unwrap_or_default(),
    }
}

pub(crate) fn rational_parts(r: &BigRational) -> (String, String) {
    (r.numer().to_string(), r.denom().to_string())
}

fn curve_rows(
    regime: &str,
    curve: &SensitivityCurve,
    network_seed: Option<u64>,
    features: &[String],
    classes: &[String],
) -> Vec<CurveRow> {
    let mut rows = Vec::new();
    for p in &curve.points {
        for (c, cp) in p.classes.iter().enumerate() {
            let parts = cp.exact.as_ref().map(rational_parts);
            rows.push(CurveRow {
                regime: regime.to_string(),
                target: target_label(curve.target),
                feature: feature_label(curve.target, features),
                polarity: curve.polarity.as_str().to_string(),
                network_seed,
                level: p.level,
                magnitude: p.magnitude,
                method: p.method.as_str().to_string(),
                class: classes[c].clone(),
                present: cp.exact.is_some(),
                probability: cp.probability,
                numerator: parts.as_ref().map(|x| x.0.clone()),
                denominator: parts.map(|x| x.1),
                seed_count: cp.seed_count,
                network_count: cp.network_count,
            });
        }
    }
    rows
}

/// Averaged rows and per-network rows of a set of curve bundles.
pub fn bundle_rows(
    regime: &str,
    bundles: &[&CurveBundle],
    features: &[String],
    classes: &[String],
) -> (Vec<CurveRow>, Vec<CurveRow>) {
    let mut averaged = Vec::new();
    let mut per_network = Vec::new();
    for b in bundles {
        averaged.extend(curve_rows(regime, &b.averaged, None, features, classes));
        for nc in &b.per_network {
            per_network.extend(curve_rows(
                regime,
                &nc.curve,
                Some(nc.network_seed),
                features,
                classes,
            ));
        }
    }
    (averaged, per_network)
}

pub fn seed_count_rows(report: &BiasReport, classes: &[String]) -> Vec<SeedCountRow> {
    let mut rows = Vec::new();
    for b in std::iter::once(&report.class_curve).chain(&report.node_curves) {
        for nc in &b.per_network {
            for s in &nc.seeds {
                for (i, (count, method)) in s.counts.iter().enumerate() {
                    rows.push(SeedCountRow {
                        regime: report.regime.clone(),
                        network_seed: nc.network_seed,
                        target: target_label(nc.curve.target),
                        polarity: nc.curve.polarity.as_str().to_string(),
                        level: nc.curve.points[i].level,
                        seed_id: s.id.clone(),
                        class: classes[s.class].clone(),
                        preserved: count.preserved,
                        total: count.total,
                        method: method.as_str().to_string(),
                    });
                }
            }
        }
    }
    rows
}

pub(crate) fn score_row(
    regime: &str,
    network_seed: Option<u64>,
    s: &BiasScore,
    features: &[String],
    classes: &[String],
) -> ScoreRow {
    ScoreRow {
        regime: regime.to_string(),
        network_seed,
        target: target_label(s.target),
        feature: feature_label(s.target, features),
        polarity: s.polarity.as_str().to_string(),
        score: s.score,
        arg_level: s.arg_level,
        class_a: s.classes.map(|(a, _)| classes[a].clone()),
        class_b: s.classes.map(|(_, b)| classes[b].clone()),
        gap_area: s.gap_area,
    }
}

pub fn score_rows(report: &BiasReport, features: &[String], classes: &[String]) -> Vec<ScoreRow> {
    let mut rows: Vec<ScoreRow> = report
        .scores
        .iter()
        .map(|s| score_row(&report.regime, None, s, features, classes))
        .collect();
    for (seed, scores) in &report.network_scores {
        rows.extend(
            scores
                .iter()
                .map(|s| score_row(&report.regime, Some(*seed), s, features, classes)),
        );
    }
    rows
}

pub fn comparison_rows(
    cmp: &RegimeComparison,
    features: &[String],
    classes: &[String],
) -> Vec<ComparisonRow> {
    let name = |c: Option<usize>| c.map(|c| classes[c].clone());
    let mut rows = Vec::new();
    for l in &cmp.levels {
        for (c, class) in classes.iter().enumerate() {
            rows.push(ComparisonRow {
                target: target_label(l.target),
                feature: feature_label(l.target, features),
                polarity: l.polarity.as_str().to_string(),
                level: l.level,
                magnitude: l.magnitude,
                class: class.clone(),
                full: l.full.get(c).copied().flatten(),
                truncated: l.truncated.get(c).copied().flatten(),
                delta: l.delta.get(c).copied().flatten(),
                lower_full: name(l.lower_full),
                lower_truncated: name(l.lower_truncated),
                flipped: l.flipped,
            });
        }
    }
    rows
}
