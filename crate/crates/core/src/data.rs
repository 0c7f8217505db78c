//! Labeled feature tables: CSV ingestion, per-class statistics, feature
//! ranking, splitting, head-class truncation, normalization and a synthetic
//! long-tail generator.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub id: String,
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    class_names: Vec<String>,
    rows: Vec<Row>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, class_names: Vec<String>, rows: Vec<Row>) -> Result<Self> {
        if feature_names.is_empty() {
            return Err(Error::Data("dataset has no feature columns".into()));
        }
        if class_names.is_empty() {
            return Err(Error::Data("dataset has no classes".into()));
        }
        let mut ids = BTreeSet::new();
        for row in &rows {
            if row.features.len() != feature_names.len() {
                return Err(Error::Data(format!(
                    "row {} has {} features, expected {}",
                    row.id,
                    row.features.len(),
                    feature_names.len()
                )));
            }
            if row.label >= class_names.len() {
                return Err(Error::Data(format!(
                    "row {} has label {} but only {} classes exist",
                    row.id,
                    row.label,
                    class_names.len()
                )));
            }
            if !ids.insert(row.id.as_str()) {
                return Err(Error::Data(format!("duplicate row id {}", row.id)));
            }
        }
        Ok(Self {
            feature_names,
            class_names,
            rows,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count()];
        for r in &self.rows {
            counts[r.label] += 1;
        }
        counts
    }

    /// Same schema, different rows (taken in the given order).
    fn with_rows(&self, rows: Vec<Row>) -> Self {
        Self {
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
            rows,
        }
    }

    fn subset(&self, mut keep: Vec<usize>) -> Self {
        keep.sort_unstable();
        self.with_rows(keep.into_iter().map(|i| self.rows[i].clone()).collect())
    }

    /// Content hash (SHA-256, hex) over names, ids, exact feature bits and labels.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let mut put = |bytes: &[u8]| {
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        };
        for name in self.feature_names.iter().chain(&self.class_names) {
            put(name.as_bytes());
        }
        for row in &self.rows {
            put(row.id.as_bytes());
            for v in &row.features {
                put(&v.to_bits().to_le_bytes());
            }
            put(&(row.label as u64).to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Keeps the listed feature columns, in the listed order.
    pub fn select_features(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Data("no features selected".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.feature_count()) {
            return Err(Error::Data(format!(
                "feature index {bad} out of range for {} features",
                self.feature_count()
            )));
        }
        Ok(Self {
            feature_names: indices.iter().map(|&i| self.feature_names[i].clone()).collect(),
            class_names: self.class_names.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| Row {
                    id: r.id.clone(),
                    features: indices.iter().map(|&i| r.features[i]).collect(),
                    label: r.label,
                })
                .collect(),
        })
    }

    /// Writes `id,<features>,label` with labels as class names.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = std::iter::once("id")
            .chain(self.feature_names.iter().map(String::as_str))
            .chain(std::iter::once("label"))
            .collect();
        let csv_err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
        w.write_record(&header).map_err(csv_err)?;
        for row in &self.rows {
            let mut rec = Vec::with_capacity(row.features.len() + 2);
            rec.push(row.id.clone());
            rec.extend(row.features.iter().map(|v| v.to_string()));
            rec.push(self.class_names[row.label].clone());
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

/// Reads a CSV with a header row and the class label in the final column.
///
/// Class names are numbered in order of first appearance. An `id` column is
/// used for row ids when present; otherwise a row's id is its line number
/// in the file (the header is line 1).
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let ds = read_csv(path.as_ref(), None)?;
    if ds.class_count() < 2 {
        return Err(Error::SingleClass);
    }
    Ok(ds)
}

/// Like [`load_csv`] but with a fixed class order; labels outside it are an error.
/// Used to reload derived files whose rows may not contain every class first.
pub fn load_csv_with_classes(path: impl AsRef<Path>, class_names: &[String]) -> Result<Dataset> {
    read_csv(path.as_ref(), Some(class_names))
}

fn read_csv(path: &Path, fixed_classes: Option<&[String]>) -> Result<Dataset> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    let where_ = |line: u64| format!("{}:{line}", path.display());
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_slice());
    let headers = rdr
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .clone();
    if headers.len() < 2 {
        return Err(Error::Data(format!(
            "{}: need at least one feature column and a label column",
            path.display()
        )));
    }
    let label_col = headers.len() - 1;
    let id_col = headers.iter().take(label_col).position(|h| h == "id");
    let feature_cols: Vec<usize> = (0..label_col).filter(|&c| Some(c) != id_col).collect();
    if feature_cols.is_empty() {
        return Err(Error::Data(format!("{}: no feature columns", path.display())));
    }
    let feature_names = feature_cols.iter().map(|&c| headers[c].to_string()).collect();

    let mut class_names: Vec<String> = fixed_classes.map(<[String]>::to_vec).unwrap_or_default();
    let mut class_index: HashMap<String, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i))
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths {
                pos, expected_len, len,
            } => Error::Data(format!(
                "{}: ragged row with {len} fields, header has {expected_len}",
                where_(pos.as_ref().map_or(0, csv::Position::line))
            )),
            _ => Error::Data(format!("{}: {e}", path.display())),
        })?;
        let line = rec.position().map_or(0, csv::Position::line);
        let mut features = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            let cell = &rec[c];
            let v: f64 = cell.parse().map_err(|_| {
                Error::Data(format!(
                    "{}: non-numeric value {cell:?} in column {:?}",
                    where_(line),
                    &headers[c]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "{}: non-finite value {cell:?} in column {:?}",
                    where_(line),
                    &headers[c]
                )));
            }
            features.push(v);
        }
        let name = &rec[label_col];
        let label = match class_index.get(name) {
            Some(&l) => l,
            None if fixed_classes.is_some() => {
                return Err(Error::Data(format!("{}: unknown class {name:?}", where_(line))))
            }
            None => {
                class_names.push(name.to_string());
                class_index.insert(name.to_string(), class_names.len() - 1);
                class_names.len() - 1
            }
        };
        let id = match id_col {
            Some(c) => rec[c].to_string(),
            None => line.to_string(),
        };
        rows.push(Row { id, features, label });
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    if class_names.is_empty() {
        return Err(Error::SingleClass);
    }
    Dataset::new(feature_names, class_names, rows)
}

/// Summary of one feature within one class. Variance uses the n-1
/// denominator and is absent for classes with fewer than two rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub count: usize,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    /// Indexed `[class][feature]`.
    pub cells: Vec<Vec<FeatureStats>>,
}

impl ClassStats {
    pub fn get(&self, class: usize, feature: usize) -> &FeatureStats {
        &self.cells[class][feature]
    }
}

pub fn class_stats(ds: &Dataset) -> Result<ClassStats> {
    if ds.is_empty() {
        return Err(Error::Data("statistics of an empty dataset".into()));
    }
    let n = ds.feature_count();
    // Welford accumulators: (count, mean, m2, min, max).
    let mut acc = vec![vec![(0usize, 0.0f64, 0.0f64, f64::INFINITY, f64::NEG_INFINITY); n]; ds.class_count()];
    for row in ds.rows() {
        for (a, &v) in acc[row.label].iter_mut().zip(&row.features) {
            a.0 += 1;
            let d = v - a.1;
            a.1 += d / a.0 as f64;
            a.2 += d * (v - a.1);
            a.3 = a.3.min(v);
            a.4 = a.4.max(v);
        }
    }
    let cells = acc
        .into_iter()
        .map(|class| {
            class
                .into_iter()
                .map(|(count, mean, m2, min, max)| FeatureStats {
                    count,
                    mean: (count > 0).then_some(mean),
                    variance: (count > 1).then(|| (m2 / (count - 1) as f64).max(0.0)),
                    min: (count > 0).then_some(min),
                    max: (count > 0).then_some(max),
                })
                .collect()
        })
        .collect();
    Ok(ClassStats { cells })
}

/// Absolute Welch statistic of each feature between the two classes.
pub fn welch_scores(ds: &Dataset) -> Result<Vec<f64>> {
    if ds.class_count() != 2 {
        return Err(Error::Data(format!(
            "feature ranking needs exactly 2 classes, found {}",
            ds.class_count()
        )));
    }
    let stats = class_stats(ds)?;
    for c in 0..2 {
        let rows = stats.cells[c].first().map_or(0, |s| s.count);
        if rows < 2 {
            return Err(Error::Data(format!(
                "class {:?} has {rows} rows; ranking needs at least 2",
                ds.class_names()[c]
            )));
        }
    }
    Ok((0..ds.feature_count())
        .map(|f| {
            let (a, b) = (stats.get(0, f), stats.get(1, f));
            let diff = (a.mean.unwrap() - b.mean.unwrap()).abs();
            let spread =
                (a.variance.unwrap() / a.count as f64 + b.variance.unwrap() / b.count as f64).sqrt();
            if spread > 0.0 {
                diff / spread
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect())
}

/// Indices of the `k` features with the largest absolute Welch statistic,
/// best first; equal scores keep the lower index first.
pub fn rank_features(ds: &Dataset, k: usize) -> Result<Vec<usize>> {
    if k > ds.feature_count() {
        return Err(Error::Data(format!(
            "cannot select {k} features from {}",
            ds.feature_count()
        )));
    }
    let scores = welch_scores(ds)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    order.truncate(k);
    Ok(order)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            seed: 0,
            stratified: true,
        }
    }
}

/// Deterministic train/test partition. Stratified splits send
/// `round(fraction * class_rows)` of every class to the training part.
/// Both parts keep the input row order.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let mut rng = SplitMix64::new(spec.seed);
    let groups: Vec<Vec<usize>> = if spec.stratified {
        let mut g = vec![Vec::new(); ds.class_count()];
        for (i, r) in ds.rows().iter().enumerate() {
            g[r.label].push(i);
        }
        g
    } else {
        vec![(0..ds.len()).collect()]
    };
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (g, mut members) in groups.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let take = (spec.train_fraction * members.len() as f64).round() as usize;
        if take == 0 || take == members.len() {
            let what = if spec.stratified {
                format!("class {:?}", ds.class_names()[g])
            } else {
                "dataset".to_string()
            };
            return Err(Error::Data(format!(
                "train_fraction {} leaves an empty train or test part for {what} ({} rows)",
                spec.train_fraction,
                members.len()
            )));
        }
        rng.shuffle(&mut members);
        test.extend_from_slice(&members[take..]);
        members.truncate(take);
        train.extend(members);
    }
    Ok((ds.subset(train), ds.subset(test)))
}

/// Randomly deletes rows of the larger classes until every class has as many
/// rows as the smallest one.
pub fn truncate_to_balance(ds: &Dataset, seed: u64) -> Result<Dataset> {
    if ds.is_empty() {
        return Err(Error::Data("cannot truncate an empty dataset".into()));
    }
    let counts = ds.class_counts();
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Data(format!(
            "class {:?} has no rows",
            ds.class_names()[c]
        )));
    }
    let target = *counts.iter().min().unwrap();
    let mut rng = SplitMix64::new(seed);
    let mut keep = Vec::with_capacity(target * counts.len());
    for class in 0..ds.class_count() {
        let mut members: Vec<usize> = ds
            .rows()
            .iter()
            .enumerate()
            .filter(|(_, r)| r.label == class)
            .map(|(i, _)| i)
            .collect();
        if members.len() > target {
            // Partial Fisher-Yates: the first `target` slots become a uniform sample.
            for i in 0..target {
                let j = i + rng.below((members.len() - i) as u64) as usize;
                members.swap(i, j);
            }
            members.truncate(target);
        }
        keep.extend(members);
    }
    Ok(ds.subset(keep))
}

/// Per-feature z-scoring fitted on training rows. Standard deviations use the
/// n-1 denominator; a feature with zero spread is only centered. Raw ranges
/// are kept so noise magnitudes can be reported in raw units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub range: Vec<f64>,
}

pub fn normalize_fit(train: &Dataset) -> Result<Normalizer> {
    if train.is_empty() {
        return Err(Error::Data("cannot fit a normalizer on no rows".into()));
    }
    let n = train.feature_count();
    let rows = train.len() as f64;
    let mut mean = vec![0.0; n];
    for r in train.rows() {
        for (m, v) in mean.iter_mut().zip(&r.features) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows);
    let mut ss = vec![0.0; n];
    let mut min = vec![f64::INFINITY; n];
    let mut max = vec![f64::NEG_INFINITY; n];
    for r in train.rows() {
        for f in 0..n {
            let v = r.features[f];
            ss[f] += (v - mean[f]) * (v - mean[f]);
            min[f] = min[f].min(v);
            max[f] = max[f].max(v);
        }
    }
    let std = ss
        .iter()
        .map(|s| if train.len() > 1 { (s / (rows - 1.0)).sqrt() } else { 0.0 })
        .collect();
    let range = min.iter().zip(&max).map(|(lo, hi)| hi - lo).collect();
    Ok(Normalizer {
        feature_names: train.feature_names().to_vec(),
        class_names: train.class_names().to_vec(),
        mean,
        std,
        min,
        max,
        range,
    })
}

impl Normalizer {
    pub fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(f, v)| {
                let c = v - self.mean[f];
                if self.std[f] > 0.0 {
                    c / self.std[f]
                } else {
                    c
                }
            })
            .collect()
    }

    pub fn invert_vec(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(f, v)| {
                let s = if self.std[f] > 0.0 { self.std[f] } else { 1.0 };
                v * s + self.mean[f]
            })
            .collect()
    }

    /// Size of one normalized unit of feature `f` in raw units.
    pub fn raw_unit(&self, f: usize) -> f64 {
        if self.std[f] > 0.0 {
            self.std[f]
        } else {
            1.0
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("normalizer serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data(format!("normalizer: {e}")))
    }
}

pub fn normalize_apply(nz: &Normalizer, ds: &Dataset) -> Result<Dataset> {
    if ds.feature_count() != nz.mean.len() {
        return Err(Error::Structure(format!(
            "normalizer fitted on {} features, dataset has {}",
            nz.mean.len(),
            ds.feature_count()
        )));
    }
    Ok(ds.with_rows(
        ds.rows()
            .iter()
            .map(|r| Row {
                id: r.id.clone(),
                features: nz.apply_vec(&r.features),
                label: r.label,
            })
            .collect(),
    ))
}

/// Parameters of the two-cloud Gaussian generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_features: usize,
    pub head_count: usize,
    pub tail_count: usize,
    /// Distance between class means in units of `spread`.
    pub class_gap: f64,
    /// Per-coordinate standard deviation of both clouds.
    pub spread: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_features: 5,
            head_count: 27,
            tail_count: 11,
            class_gap: 4.0,
            spread: 1.0,
            seed: 0,
        }
    }
}

/// Two Gaussian clouds, head (class 0) centered at the origin and tail
/// (class 1) at `class_gap * spread` along a random unit direction.
pub fn synth_longtail(cfg: &SynthConfig) -> Result<Dataset> {
    Ok(synth_longtail_with_test(cfg, 0, 0)?.0)
}

/// Draws the training cloud of `cfg` followed by an independent test sample
/// from the same two distributions. The training part equals
/// [`synth_longtail`] for the same config.
pub fn synth_longtail_with_test(
    cfg: &SynthConfig,
    test_head: usize,
    test_tail: usize,
) -> Result<(Dataset, Dataset)> {
    if cfg.head_count < 2 || cfg.tail_count < 2 {
        return Err(Error::Config(format!(
            "synthetic class counts must be at least 2, got {}/{}",
            cfg.head_count, cfg.tail_count
        )));
    }
    if cfg.n_features == 0 || !(cfg.spread > 0.0) || !cfg.class_gap.is_finite() || cfg.class_gap < 0.0 {
        return Err(Error::Config(
            "synthetic config needs n_features > 0, spread > 0 and a finite class_gap >= 0".into(),
        ));
    }
    let mut rng = SplitMix64::new(cfg.seed);
    let mut dir: Vec<f64> = (0..cfg.n_features).map(|_| rng.normal()).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    dir.iter_mut().for_each(|v| *v /= norm);
    let tail_mean: Vec<f64> = dir.iter().map(|d| d * cfg.class_gap * cfg.spread).collect();
    let head_mean = vec![0.0; cfg.n_features];

    let draw = |count: usize, label: usize, start: usize, rng: &mut SplitMix64| -> Vec<Row> {
        let center = if label == 0 { &head_mean } else { &tail_mean };
        (0..count)
            .map(|i| Row {
                id: format!("s{}", start + i),
                features: center.iter().map(|m| m + cfg.spread * rng.normal()).collect(),
                label,
            })
            .collect()
    };
    let mut train = draw(cfg.head_count, 0, 0, &mut rng);
    train.extend(draw(cfg.tail_count, 1, cfg.head_count, &mut rng));
    let base = cfg.head_count + cfg.tail_count;
    let mut test = draw(test_head, 0, base, &mut rng);
    test.extend(draw(test_tail, 1, base + test_head, &mut rng));

    let features: Vec<String> = (1..=cfg.n_features).map(|i| format!("f{i}")).collect();
    let classes = vec!["head".to_string(), "tail".to_string()];
    Ok((
        Dataset::new(features.clone(), classes.clone(), train)?,
        Dataset::new(features, classes, test)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(values: &[(f64, usize)]) -> Dataset {
        Dataset::new(
            vec!["x".into()],
            vec!["a".into(), "b".into()],
            values
                .iter()
                .enumerate()
                .map(|(i, &(v, label))| Row {
                    id: i.to_string(),
                    features: vec![v],
                    label,
                })
                .collect(),
        )
        .unwrap()
    }

    fn counts(n0: usize, n1: usize) -> Dataset {
        let mut v = vec![(0.0, 0); n0];
        v.extend(vec![(1.0, 1); n1]);
        ds(&v)
    }

    #[test]
    fn variance_of_two_points() {
        let s = class_stats(&ds(&[(0.0, 0), (2.0, 0), (5.0, 1), (5.0, 1)])).unwrap();
        assert_eq!(s.get(0, 0).variance, Some(2.0));
        assert_eq!(s.get(1, 0).variance, Some(0.0));
        assert_eq!(s.get(0, 0).min, Some(0.0));
        assert_eq!(s.get(0, 0).max, Some(2.0));
    }

    #[test]
    fn variance_absent_for_single_row_class() {
        let s = class_stats(&ds(&[(0.0, 0), (2.0, 0), (5.0, 1)])).unwrap();
        assert_eq!(s.get(1, 0).count, 1);
        assert_eq!(s.get(1, 0).variance, None);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let rows = vec![
            Row { id: "a".into(), features: vec![1.0], label: 0 },
            Row { id: "a".into(), features: vec![2.0], label: 1 },
        ];
        assert!(Dataset::new(vec!["x".into()], vec!["p".into(), "q".into()], rows).is_err());
    }

    #[test]
    fn split_ten_rows() {
        let d = counts(5, 5);
        let spec = SplitSpec { train_fraction: 0.8, seed: 7, stratified: true };
        let (tr, te) = split(&d, &spec).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        assert_eq!(split(&d, &spec).unwrap(), (tr, te));
    }

    #[test]
    fn split_rejects_empty_stratum() {
        let spec = SplitSpec { train_fraction: 0.999, seed: 0, stratified: true };
        assert!(split(&counts(2, 2), &spec).is_err());
        let spec = SplitSpec { train_fraction: 1.0, seed: 0, stratified: false };
        assert!(matches!(split(&counts(2, 2), &spec), Err(Error::Config(_))));
    }

    #[test]
    fn truncation_counts() {
        let t = truncate_to_balance(&counts(27, 11), 3).unwrap();
        assert_eq!(t.class_counts(), vec![11, 11]);
        let balanced = counts(5, 5);
        assert_eq!(truncate_to_balance(&balanced, 9).unwrap(), balanced);
    }

    #[test]
    fn normalizer_uses_sample_std() {
        let d = ds(&[(0.0, 0), (2.0, 1)]);
        let nz = normalize_fit(&d).unwrap();
        let z = normalize_apply(&nz, &d).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((z.rows()[0].features[0] + h).abs() < 1e-15);
        assert!((z.rows()[1].features[0] - h).abs() < 1e-15);
    }

    #[test]
    fn normalizer_constant_feature_is_centered() {
        let d = ds(&[(3.0, 0), (3.0, 1), (3.0, 0)]);
        let nz = normalize_fit(&d).unwrap();
        let z = normalize_apply(&nz, &d).unwrap();
        assert!(z.rows().iter().all(|r| r.features[0] == 0.0));
    }

    #[test]
    fn normalizer_dimension_mismatch() {
        let nz = normalize_fit(&ds(&[(0.0, 0), (1.0, 1)])).unwrap();
        let wide = Dataset::new(
            vec!["x".into(), "y".into()],
            vec!["a".into(), "b".into()],
            vec![Row { id: "0".into(), features: vec![0.0, 0.0], label: 0 }],
        )
        .unwrap();
        assert!(normalize_apply(&nz, &wide).is_err());
    }

    #[test]
    fn ranking_prefers_separated_feature() {
        // Feature 0: class means 0 vs 10; feature 1: 0 vs 0.1; unit-ish variance.
        let rows = [
            ([-1.0, -1.0], 0),
            ([1.0, 1.0], 0),
            ([0.0, 0.0], 0),
            ([9.0, -0.9], 1),
            ([11.0, 1.1], 1),
            ([10.0, 0.1], 1),
        ];
        let d = Dataset::new(
            vec!["a".into(), "b".into()],
            vec!["p".into(), "q".into()],
            rows.iter()
                .enumerate()
                .map(|(i, (f, l))| Row { id: i.to_string(), features: f.to_vec(), label: *l })
                .collect(),
        )
        .unwrap();
        assert_eq!(rank_features(&d, 2).unwrap(), vec![0, 1]);
        assert!(rank_features(&d, 3).is_err());
    }

    #[test]
    fn ranking_needs_two_rows_per_class() {
        assert!(rank_features(&ds(&[(0.0, 0), (1.0, 0), (2.0, 1)]), 1).is_err());
    }

    #[test]
    fn zero_spread_equal_means_scores_zero() {
        let d = ds(&[(1.0, 0), (1.0, 0), (1.0, 1), (1.0, 1)]);
        assert_eq!(welch_scores(&d).unwrap(), vec![0.0]);
    }

    #[test]
    fn synthetic_counts() {
        let d = synth_longtail(&SynthConfig::default()).unwrap();
        assert_eq!(d.len(), 38);
        assert_eq!(d.class_counts(), vec![27, 11]);
        assert!(synth_longtail(&SynthConfig { tail_count: 1, ..Default::default() }).is_err());
    }
}
