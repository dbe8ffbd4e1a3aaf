//! CSV ingestion, splits, standardization and metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Samples, Task};
use crate::rng::Rng;
use crate::tensor::Matrix;

/// Cells read as missing; rows containing one are dropped.
const MISSING: &[&str] = &["", "NA", "N/A", "NaN", "nan", "?"];

/// How to read a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    /// Target column; the last column when absent.
    #[serde(default)]
    pub label: Option<String>,
    pub task: Task,
    /// Columns expanded to one indicator per distinct value.
    #[serde(default)]
    pub categorical: Vec<String>,
    /// Columns ignored entirely.
    #[serde(default)]
    pub drop: Vec<String>,
}

impl Schema {
    pub fn new(task: Task) -> Self {
        Self {
            label: None,
            task,
            categorical: Vec::new(),
            drop: Vec::new(),
        }
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = Some(label.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    pub x: Matrix,
    pub y: Vec<f64>,
    pub task: Task,
}

impl Dataset {
    pub fn new(names: Vec<String>, x: Matrix, y: Vec<f64>, task: Task) -> Result<Self> {
        if names.len() != x.cols() {
            return Err(Error::shape(format!("{} names for {} columns", names.len(), x.cols())));
        }
        if x.rows() != y.len() {
            return Err(Error::shape(format!("{} rows but {} targets", x.rows(), y.len())));
        }
        if task == Task::Classification {
            if let Some(v) = y.iter().find(|v| **v != 0.0 && **v != 1.0) {
                return Err(Error::validation(format!("classification label {v} is not 0 or 1")));
            }
        }
        Ok(Self { names, x, y, task })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            names: self.names.clone(),
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&r| self.y[r]).collect(),
            task: self.task,
        }
    }

    pub fn samples(&self) -> Samples<'_> {
        Samples { x: &self.x, y: &self.y }
    }
}

enum Column {
    Numeric,
    Categorical,
    Label,
    Skip,
}

fn parse_cell(cell: &str) -> Option<Option<f64>> {
    let t = cell.trim();
    if MISSING.contains(&t) {
        return Some(None);
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite()).map(Some)
}

pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, path, schema)
}

/// Parses CSV text. `path` only labels errors.
pub fn read_csv<R: std::io::Read>(input: R, path: &Path, schema: &Schema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() {
        return Err(Error::format(format!("{}: no header row", path.display())));
    }
    let label = schema.label.clone().unwrap_or_else(|| header[header.len() - 1].clone());
    if !header.contains(&label) {
        return Err(Error::Config(format!(
            "label column '{label}' not found in {}",
            path.display()
        )));
    }
    for c in schema.categorical.iter().chain(&schema.drop) {
        if !header.contains(c) {
            return Err(Error::Config(format!("column '{c}' not found in {}", path.display())));
        }
    }
    if schema.categorical.contains(&label) || schema.drop.contains(&label) {
        return Err(Error::Config(format!(
            "label column '{label}' cannot be categorical or dropped"
        )));
    }
    let kinds: Vec<Column> = header
        .iter()
        .map(|h| {
            if *h == label {
                Column::Label
            } else if schema.drop.contains(h) {
                Column::Skip
            } else if schema.categorical.contains(h) {
                Column::Categorical
            } else {
                Column::Numeric
            }
        })
        .collect();

    let mut numeric = Vec::new();
    let mut categories: Vec<Vec<String>> = Vec::new();
    let mut targets = Vec::new();
    let mut dropped = 0usize;
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut row = Vec::new();
        let mut cats = Vec::new();
        let mut target = None;
        let mut missing = false;
        for (cell, kind) in rec.iter().zip(&kinds) {
            match kind {
                Column::Skip => {}
                Column::Categorical => {
                    let t = cell.trim();
                    missing |= MISSING.contains(&t);
                    cats.push(t.to_string());
                }
                Column::Numeric | Column::Label => {
                    let v = parse_cell(cell).ok_or_else(|| Error::Row {
                        path: path.to_path_buf(),
                        line,
                        message: format!("cannot parse '{cell}' as a number"),
                    })?;
                    match (v, kind) {
                        (None, _) => missing = true,
                        (Some(v), Column::Label) => target = Some(v),
                        (Some(v), _) => row.push(v),
                    }
                }
            }
        }
        if missing {
            dropped += 1;
            continue;
        }
        let y = target.expect("label column present");
        if schema.task == Task::Classification && y != 0.0 && y != 1.0 {
            return Err(Error::Row {
                path: path.to_path_buf(),
                line,
                message: format!("classification label {y} is not 0 or 1"),
            });
        }
        numeric.push(row);
        categories.push(cats);
        targets.push(y);
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} rows with missing values", path.display());
    }

    let mut names: Vec<String> = header
        .iter()
        .zip(&kinds)
        .filter(|(_, k)| matches!(k, Column::Numeric))
        .map(|(h, _)| h.clone())
        .collect();
    let cat_names: Vec<&String> = header
        .iter()
        .zip(&kinds)
        .filter(|(_, k)| matches!(k, Column::Categorical))
        .map(|(h, _)| h)
        .collect();
    let levels: Vec<Vec<String>> = (0..cat_names.len())
        .map(|c| {
            let set: BTreeSet<&String> = categories.iter().map(|r| &r[c]).collect();
            set.into_iter().cloned().collect()
        })
        .collect();
    for (name, lv) in cat_names.iter().zip(&levels) {
        names.extend(lv.iter().map(|v| format!("{name}={v}")));
    }
    let d = names.len();
    let mut data = Vec::with_capacity(targets.len() * d);
    for (row, cats) in numeric.iter().zip(&categories) {
        data.extend_from_slice(row);
        for (value, lv) in cats.iter().zip(&levels) {
            data.extend(lv.iter().map(|l| if l == value { 1.0 } else { 0.0 }));
        }
    }
    let x = Matrix::from_vec(targets.len(), d, data)?;
    Dataset::new(names, x, targets, schema.task)
}

/// Held-out test fraction plus k folds over the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitPlan {
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    pub seed: u64,
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_folds() -> usize {
    5
}

impl SplitPlan {
    pub fn new(seed: u64) -> Self {
        Self {
            test_fraction: default_test_fraction(),
            folds: default_folds(),
            seed,
        }
    }

    /// Seeded shuffle, then the test rows first and contiguous folds after.
    pub fn split(&self, n: usize) -> Result<Split> {
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::Config(format!(
                "test_fraction must lie in [0, 1), got {}",
                self.test_fraction
            )));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("need at least 2 folds, got {}", self.folds)));
        }
        let n_test = (n as f64 * self.test_fraction).round() as usize;
        let rest = n - n_test;
        if rest < self.folds {
            return Err(Error::Config(format!("{n} rows cannot fill {} folds", self.folds)));
        }
        let mut order: Vec<usize> = (0..n).collect();
        Rng::new(self.seed).shuffle(&mut order);
        let test = order[..n_test].to_vec();
        let mut folds = Vec::with_capacity(self.folds);
        let mut start = n_test;
        for k in 0..self.folds {
            let size = rest / self.folds + usize::from(k < rest % self.folds);
            folds.push(order[start..start + size].to_vec());
            start += size;
        }
        Ok(Split { test, folds })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub test: Vec<usize>,
    pub folds: Vec<Vec<usize>>,
}

impl Split {
    /// `(train, validation)` rows for fold `k`.
    pub fn fold(&self, k: usize) -> (Vec<usize>, Vec<usize>) {
        let train = self
            .folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        (train, self.folds[k].clone())
    }
}

/// Train-fold feature moments; regression targets are scaled too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    /// Input columns kept, in order.
    pub kept: Vec<usize>,
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub target: Option<(f64, f64)>,
}

fn moments(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (mut n, mut sum) = (0usize, 0.0);
    for v in values.clone() {
        n += 1;
        sum += v;
    }
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

impl Standardizer {
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.n() == 0 {
            return Err(Error::domain("cannot standardize an empty dataset"));
        }
        let mut s = Standardizer {
            kept: Vec::new(),
            names: Vec::new(),
            means: Vec::new(),
            stds: Vec::new(),
            target: None,
        };
        for j in 0..train.d() {
            let (mean, std) = moments((0..train.n()).map(|r| train.x.get(r, j)));
            if std <= 1e-12 * mean.abs().max(1.0) {
                log::warn!("feature '{}' is constant on the training rows; dropped", train.names[j]);
                continue;
            }
            s.kept.push(j);
            s.names.push(train.names[j].clone());
            s.means.push(mean);
            s.stds.push(std);
        }
        if train.task == Task::Regression {
            let (mean, std) = moments(train.y.iter().copied());
            s.target = Some((mean, if std > 0.0 { std } else { 1.0 }));
        }
        Ok(s)
    }

    pub fn transform(&self, ds: &Dataset) -> Result<Dataset> {
        if let Some(&j) = self.kept.last() {
            if j >= ds.d() {
                return Err(Error::shape(format!(
                    "dataset has {} columns, standardizer expects more",
                    ds.d()
                )));
            }
        }
        let mut data = Vec::with_capacity(ds.n() * self.kept.len());
        for r in 0..ds.n() {
            let row = ds.x.row(r);
            for (k, &j) in self.kept.iter().enumerate() {
                data.push((row[j] - self.means[k]) / self.stds[k]);
            }
        }
        let y = ds.y.iter().map(|&v| self.transform_target(v)).collect();
        Dataset::new(
            self.names.clone(),
            Matrix::from_vec(ds.n(), self.kept.len(), data)?,
            y,
            ds.task,
        )
    }

    pub fn transform_target(&self, y: f64) -> f64 {
        match self.target {
            Some((m, s)) => (y - m) / s,
            None => y,
        }
    }

    pub fn inverse_target(&self, z: f64) -> f64 {
        match self.target {
            Some((m, s)) => z * s + m,
            None => z,
        }
    }
}

fn check_lengths(preds: &[f64], targets: &[f64]) -> Result<()> {
    if preds.len() != targets.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::UndefinedMetric("no samples".into()));
    }
    Ok(())
}

pub fn mse(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check_lengths(preds, targets)?;
    Ok(preds.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / preds.len() as f64)
}

fn class_counts(scores: &[f64], labels: &[f64]) -> Result<(usize, usize)> {
    check_lengths(scores, labels)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::domain("scores contain NaN"));
    }
    let mut pos = 0;
    for &l in labels {
        if l == 1.0 {
            pos += 1;
        } else if l != 0.0 {
            return Err(Error::validation(format!("label {l} is not 0 or 1")));
        }
    }
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("targets contain a single class".into()));
    }
    Ok((pos, neg))
}

/// Index order by score, ascending.
fn order_by_score(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    idx
}

/// Mann–Whitney statistic with tied ranks averaged.
pub fn auroc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    let idx = order_by_score(scores);
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let rank = (i + j + 2) as f64 / 2.0;
        rank_sum += rank * idx[i..=j].iter().filter(|&&k| labels[k] == 1.0).count() as f64;
        i = j + 1;
    }
    let p = pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

/// Average precision: `Σ (R_k − R_{k−1}) P_k` over distinct score thresholds,
/// highest first.
pub fn auprc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    let (pos, _) = class_counts(scores, labels)?;
    let mut idx = order_by_score(scores);
    idx.reverse();
    let (mut tp, mut seen, mut area, mut prev_recall) = (0usize, 0usize, 0.0, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        tp += idx[i..=j].iter().filter(|&&k| labels[k] == 1.0).count();
        seen += j - i + 1;
        let recall = tp as f64 / pos as f64;
        area += (recall - prev_recall) * tp as f64 / seen as f64;
        prev_recall = recall;
        i = j + 1;
    }
    Ok(area)
}

/// `{"mse"}` for regression, `{"auroc", "auprc"}` for classification.
pub fn metrics(preds: &[f64], targets: &[f64], task: Task) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    match task {
        Task::Regression => {
            out.insert("mse".into(), mse(preds, targets)?);
        }
        Task::Classification => {
            out.insert("auroc".into(), auroc(preds, targets)?);
            out.insert("auprc".into(), auprc(preds, targets)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation; zero for one fold.
    pub std: f64,
    pub per_fold: Vec<f64>,
}

/// Per-metric mean and spread over folds.
pub fn summarize(per_fold: &[BTreeMap<String, f64>]) -> BTreeMap<String, MetricSummary> {
    let mut out = BTreeMap::new();
    let Some(first) = per_fold.first() else {
        return out;
    };
    for name in first.keys() {
        let values: Vec<f64> = per_fold.iter().filter_map(|m| m.get(name).copied()).collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        out.insert(
            name.clone(),
            MetricSummary {
                mean,
                std,
                per_fold: values,
            },
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str, schema: &Schema) -> Result<Dataset> {
        read_csv(text.as_bytes(), Path::new("mem.csv"), schema)
    }

    /// Counts correctly ordered positive–negative pairs directly.
    fn pair_auroc(scores: &[f64], labels: &[f64]) -> f64 {
        let (mut good, mut pairs) = (0.0, 0.0);
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li == 1.0 && lj == 0.0 {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        good += 1.0;
                    } else if scores[i] == scores[j] {
                        good += 0.5;
                    }
                }
            }
        }
        good / pairs
    }

    #[test]
    fn loads_small_file() {
        let ds = read("a,b,y\n1,2,3\n4,5,6\n", &Schema::new(Task::Regression)).unwrap();
        assert_eq!((ds.n(), ds.d()), (2, 2));
        assert_eq!(ds.names, vec!["a", "b"]);
        assert_eq!(ds.y, vec![3.0, 6.0]);
        assert_eq!(ds.x.row(1), &[4.0, 5.0]);
    }

    #[test]
    fn label_column_by_name() {
        let ds = read("y,a\n1,2\n0,5\n", &Schema::new(Task::Classification).with_label("y")).unwrap();
        assert_eq!(ds.y, vec![1.0, 0.0]);
        assert_eq!(ds.names, vec!["a"]);
        let err = read("a,b\n1,2\n", &Schema::new(Task::Regression).with_label("target")).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn one_hot_expansion() {
        let mut schema = Schema::new(Task::Regression);
        schema.categorical = vec!["c".into()];
        let ds = read("c,a,y\nred,1,0\nblue,2,1\ngreen,3,2\nred,4,3\n", &schema).unwrap();
        assert_eq!(ds.names, vec!["a", "c=blue", "c=green", "c=red"]);
        assert_eq!(ds.d(), 4);
        assert_eq!(ds.x.row(0), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(ds.x.row(1), &[2.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn missing_rows_dropped_and_bad_cells_reported() {
        let ds = read("a,y\n1,2\nNA,3\n,4\n5,6\n", &Schema::new(Task::Regression)).unwrap();
        assert_eq!(ds.y, vec![2.0, 6.0]);
        match read("a,y\n1,2\n3,4\nzz,5\n", &Schema::new(Task::Regression)) {
            Err(Error::Row { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        assert!(read("a,y\n1,2\n", &Schema::new(Task::Classification)).is_err());
    }

    #[test]
    fn split_partitions_rows() {
        let plan = SplitPlan::new(7);
        let s = plan.split(103).unwrap();
        assert_eq!(s.test.len(), 21);
        let mut all: Vec<usize> = s.test.iter().chain(s.folds.iter().flatten()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        assert_eq!(
            s.folds.iter().map(Vec::len).collect::<Vec<_>>(),
            vec![17, 17, 16, 16, 16]
        );
        assert_eq!(plan.split(103).unwrap(), s);
        assert_ne!(SplitPlan::new(8).split(103).unwrap(), s);
        let (train, val) = s.fold(2);
        assert_eq!(train.len() + val.len(), 82);
        assert!(val.iter().all(|v| !train.contains(v)));
        assert!(SplitPlan { folds: 1, ..plan }.split(10).is_err());
        assert!(SplitPlan {
            test_fraction: 1.0,
            ..plan
        }
        .split(10)
        .is_err());
    }

    #[test]
    fn standardizer_moments() {
        let mut rng = Rng::new(3);
        let x = Matrix::from_vec(
            200,
            3,
            (0..600)
                .map(|i| if i % 3 == 2 { 4.0 } else { rng.uniform(-5.0, 20.0) })
                .collect(),
        )
        .unwrap();
        let y: Vec<f64> = (0..200).map(|_| rng.normal() * 3.0 + 1.0).collect();
        let ds = Dataset::new(vec!["a".into(), "b".into(), "k".into()], x, y, Task::Regression).unwrap();
        let st = Standardizer::fit(&ds).unwrap();
        assert_eq!(st.kept, vec![0, 1]);
        let t = st.transform(&ds).unwrap();
        assert_eq!(t.d(), 2);
        for j in 0..2 {
            let col: Vec<f64> = (0..200).map(|r| t.x.get(r, j)).collect();
            let (m, s) = moments(col.iter().copied());
            assert!(m.abs() < 1e-10 && (s * s - 1.0).abs() < 1e-10);
        }
        let (m, s) = moments(t.y.iter().copied());
        assert!(m.abs() < 1e-10 && (s - 1.0).abs() < 1e-10);
        for &v in &ds.y {
            assert!((st.inverse_target(st.transform_target(v)) - v).abs() < 1e-12);
        }
        let again = Standardizer::fit(&t).unwrap().transform(&t).unwrap();
        for (a, b) in again.x.data().iter().zip(t.x.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn metric_examples() {
        assert_eq!(auroc(&[0.1, 0.4, 0.35, 0.8], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 0.75);
        assert_eq!(pair_auroc(&[0.1, 0.4, 0.35, 0.8], &[0.0, 0.0, 1.0, 1.0]), 0.75);
        assert_eq!(auroc(&[0.1, 0.2, 0.9], &[0.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auprc(&[0.1, 0.2, 0.9], &[0.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.9, 0.2, 0.1], &[0.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(auroc(&[0.5, 0.5], &[0.0, 1.0]).unwrap(), 0.5);
        // positives at ranks 1 and 3 from the top: (1/2)(1) + (1/2)(2/3)
        assert!((auprc(&[0.9, 0.8, 0.7], &[1.0, 0.0, 1.0]).unwrap() - (0.5 + 1.0 / 3.0)).abs() < 1e-15);
        assert!(matches!(
            auroc(&[0.1, 0.2], &[1.0, 1.0]),
            Err(Error::UndefinedMetric(_))
        ));
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 4.0]).unwrap(), 2.0);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn auroc_matches_pair_count_with_ties() {
        let mut rng = Rng::new(9);
        for _ in 0..50 {
            let n = 5 + rng.below(40);
            let scores: Vec<f64> = (0..n).map(|_| rng.below(6) as f64).collect();
            let mut labels: Vec<f64> = (0..n).map(|_| rng.below(2) as f64).collect();
            labels[0] = 0.0;
            labels[1] = 1.0;
            assert!((auroc(&scores, &labels).unwrap() - pair_auroc(&scores, &labels)).abs() < 1e-12);
        }
    }

    #[test]
    fn summary_json_shape() {
        let folds: Vec<BTreeMap<String, f64>> = [1.0, 3.0]
            .iter()
            .map(|&v| BTreeMap::from([("mse".to_string(), v)]))
            .collect();
        let s = summarize(&folds);
        assert_eq!(s["mse"].mean, 2.0);
        assert!((s["mse"].std - 2f64.sqrt()).abs() < 1e-15);
        let v = serde_json::to_value(&s).unwrap();
        assert_eq!(v["mse"]["per_fold"][1], 3.0);
    }
}
