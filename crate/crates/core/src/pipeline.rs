//! The three-stage workflow: reference network, interaction selection, additive
//! model. Every stage reads an [`ExperimentConfig`] and is deterministic in
//! its seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_csv, metrics, Dataset, Schema, SplitPlan, Standardizer};
use crate::detect::{Baseline, DetectionContext, DEFAULT_SUBSAMPLE_CAP};
use crate::error::{Error, Result};
use crate::fis::{
    family_to_architecture, select_interactions, FisConfig, FisOutcome, InteractionFamily, Theta, DEFAULT_TAU,
};
use crate::nn::{train_mlp, Mlp, Task, TaskHead, TrainConfig, DEFAULT_BATCH_SIZE, DEFAULT_L1, DEFAULT_LEARNING_RATE};
use crate::rng::Rng;
use crate::sian::{
    default_grid_points, grid_axes, train_sian, InteractionSet, Mode, ShapeGrid, SianModel, DEFAULT_SUBNET_WIDTHS,
};

pub const DEFAULT_DNN_WIDTHS: [usize; 3] = [256, 128, 64];
pub const DEFAULT_EPOCHS: usize = 100;

pub type MetricMap = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSettings {
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_folds")]
    pub folds: usize,
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_folds() -> usize {
    5
}

impl Default for SplitSettings {
    fn default() -> Self {
        Self {
            test_fraction: default_test_fraction(),
            folds: default_folds(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    pub schema: Schema,
    #[serde(default)]
    pub split: SplitSettings,
    pub seed: u64,
}

/// Optimizer settings shared by both networks. `widths` lists hidden layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub widths: Vec<usize>,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_l1")]
    pub l1: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub patience: Option<usize>,
}

fn default_lr() -> f64 {
    DEFAULT_LEARNING_RATE
}

fn default_epochs() -> usize {
    DEFAULT_EPOCHS
}

fn default_l1() -> f64 {
    DEFAULT_L1
}

fn default_batch() -> usize {
    DEFAULT_BATCH_SIZE
}

impl NetConfig {
    fn with_widths(widths: &[usize]) -> Self {
        Self {
            widths: widths.to_vec(),
            learning_rate: DEFAULT_LEARNING_RATE,
            epochs: DEFAULT_EPOCHS,
            l1: DEFAULT_L1,
            batch_size: DEFAULT_BATCH_SIZE,
            patience: None,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            l1: self.l1,
            batch_size: self.batch_size,
            max_epochs: self.epochs,
            patience: self.patience,
            seed,
            ..TrainConfig::default()
        }
    }
}

fn default_dnn() -> NetConfig {
    NetConfig::with_widths(&DEFAULT_DNN_WIDTHS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineSpec {
    /// The training mean, which is zero after standardization.
    Zero,
    FlipAll,
    /// Standardized coordinates.
    Fixed(Vec<f64>),
}

impl BaselineSpec {
    pub fn resolve(&self, d: usize) -> Baseline {
        match self {
            BaselineSpec::Zero => Baseline::zero(d),
            BaselineSpec::FlipAll => Baseline::FlipAll,
            BaselineSpec::Fixed(v) => Baseline::Fixed(v.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FisSection {
    #[serde(default = "default_order")]
    pub max_order: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    pub theta: Theta,
    #[serde(default = "default_cap")]
    pub subsample_cap: usize,
    #[serde(default = "default_baseline")]
    pub baseline: BaselineSpec,
}

fn default_order() -> usize {
    2
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

fn default_cap() -> usize {
    DEFAULT_SUBSAMPLE_CAP
}

fn default_baseline() -> BaselineSpec {
    BaselineSpec::Zero
}

impl FisSection {
    pub fn fis_config(&self) -> FisConfig {
        FisConfig {
            max_order: self.max_order,
            tau: self.tau,
            theta: self.theta.clone(),
            subsample_cap: self.subsample_cap,
        }
    }
}

impl Default for FisSection {
    fn default() -> Self {
        Self {
            max_order: default_order(),
            tau: DEFAULT_TAU,
            theta: Theta::Scalar(1e-3),
            subsample_cap: DEFAULT_SUBSAMPLE_CAP,
            baseline: BaselineSpec::Zero,
        }
    }
}

/// [`NetConfig`] plus the storage mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SianSection {
    pub widths: Vec<usize>,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_l1")]
    pub l1: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub patience: Option<usize>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
}

impl SianSection {
    pub fn net(&self) -> NetConfig {
        NetConfig {
            widths: self.widths.clone(),
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            l1: self.l1,
            batch_size: self.batch_size,
            patience: self.patience,
        }
    }
}

fn default_mode() -> Mode {
    Mode::BlockSparse
}

fn default_sian() -> SianSection {
    let n = NetConfig::with_widths(&DEFAULT_SUBNET_WIDTHS);
    SianSection {
        widths: n.widths,
        learning_rate: n.learning_rate,
        epochs: n.epochs,
        l1: n.l1,
        batch_size: n.batch_size,
        patience: n.patience,
        mode: Mode::BlockSparse,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    #[serde(default = "default_dnn")]
    pub dnn: NetConfig,
    #[serde(default)]
    pub fis: FisSection,
    #[serde(default = "default_sian")]
    pub sian: SianSection,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn new(data: DataConfig) -> Self {
        Self {
            data,
            dnn: default_dnn(),
            fis: FisSection::default(),
            sian: default_sian(),
            output_dir: default_out(),
        }
    }

    /// Parses a config file. A relative data path is taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if cfg.data.path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.data.path = dir.join(&cfg.data.path);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.fis.fis_config().validate()?;
        for (name, net) in [("dnn", &self.dnn), ("sian", &self.sian.net())] {
            if net.widths.contains(&0) {
                return Err(Error::Config(format!("{name}.widths must be positive")));
            }
            if net.batch_size == 0 || !(net.learning_rate > 0.0) || !(net.l1 >= 0.0) {
                return Err(Error::Config(format!(
                    "{name}: batch_size and learning_rate must be positive, l1 nonnegative"
                )));
            }
        }
        if self.sian.widths.is_empty() {
            return Err(Error::Config("sian.widths needs at least one hidden layer".into()));
        }
        self.split_plan().split(self.data.split.folds.max(2) * 2)?;
        Ok(())
    }

    pub fn split_plan(&self) -> SplitPlan {
        SplitPlan {
            test_fraction: self.data.split.test_fraction,
            folds: self.data.split.folds,
            seed: self.data.seed,
        }
    }

    pub fn head(&self) -> TaskHead {
        TaskHead {
            task: self.data.schema.task,
        }
    }

    /// Seed for one stage of one fold.
    pub fn stage_seed(&self, stage: u64, fold: usize) -> u64 {
        let mut rng = Rng::new(self.data.seed ^ stage.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        for _ in 0..=fold {
            rng.next_u64();
        }
        rng.next_u64()
    }
}

const STAGE_DNN: u64 = 1;
const STAGE_FIS: u64 = 2;
const STAGE_SIAN: u64 = 3;

/// Standardized train, validation and test rows for one fold.
#[derive(Debug, Clone)]
pub struct PreparedFold {
    pub fold: usize,
    pub standardizer: Standardizer,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

pub fn prepare_fold(ds: &Dataset, plan: &SplitPlan, fold: usize) -> Result<PreparedFold> {
    let split = plan.split(ds.n())?;
    if fold >= split.folds.len() {
        return Err(Error::Config(format!(
            "fold {fold} out of range for {} folds",
            split.folds.len()
        )));
    }
    if split.test.is_empty() {
        return Err(Error::Config("the test split is empty".into()));
    }
    let (train, val) = split.fold(fold);
    let raw_train = ds.select(&train);
    let standardizer = Standardizer::fit(&raw_train)?;
    Ok(PreparedFold {
        fold,
        train: standardizer.transform(&raw_train)?,
        val: standardizer.transform(&ds.select(&val))?,
        test: standardizer.transform(&ds.select(&split.test))?,
        standardizer,
    })
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    load_csv(&cfg.data.path, &cfg.data.schema)
}

fn check_format(found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(Error::format(format!("expected a '{expected}' file, found '{found}'")));
    }
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Trained reference network with the preprocessing of its fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceModel {
    pub format: String,
    pub fold: usize,
    pub task: Task,
    pub standardizer: Standardizer,
    pub net: Mlp,
}

impl ReferenceModel {
    pub const FORMAT: &'static str = "sian-reference";

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: ReferenceModel =
            serde_json::from_str(&read_text(path)?).map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
        check_format(&m.format, Self::FORMAT)?;
        Ok(m)
    }
}

/// Trained additive model with the preprocessing of its fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SianArtifact {
    pub format: String,
    pub fold: usize,
    pub standardizer: Standardizer,
    /// Standardized training range of each model input.
    pub ranges: Vec<(f64, f64)>,
    pub model: SianModel,
}

impl SianArtifact {
    pub const FORMAT: &'static str = "sian-model";

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: SianArtifact =
            serde_json::from_str(&read_text(path)?).map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
        check_format(&m.format, Self::FORMAT)?;
        if m.ranges.len() != m.model.arch().d {
            return Err(Error::format("ranges do not match the model's input count"));
        }
        Ok(m)
    }

    /// Metrics on raw (unstandardized) data, in standardized target units.
    pub fn evaluate(&self, raw: &Dataset) -> Result<MetricMap> {
        let ds = self.standardizer.transform(raw)?;
        let preds = self.model.forward(&ds.x)?;
        metrics(&preds, &ds.y, ds.task)
    }

    /// One grid per family member over its training range. Coordinates are
    /// converted back to raw feature units; values stay on the link scale.
    pub fn export_shapes(&self, points: Option<usize>) -> Result<Vec<(InteractionSet, ShapeGrid)>> {
        let lo: Vec<f64> = self.ranges.iter().map(|r| r.0).collect();
        let hi: Vec<f64> = self.ranges.iter().map(|r| r.1).collect();
        self.model
            .family()
            .iter()
            .map(|set| {
                let n = points.unwrap_or_else(|| default_grid_points(set.degree()));
                let mut grid = self.model.eval_shape(set, &grid_axes(set, &lo, &hi, n))?;
                for (axis, &f) in grid.axes.iter_mut().zip(set.indices()) {
                    let (m, s) = (self.standardizer.means[f], self.standardizer.stds[f]);
                    axis.iter_mut().for_each(|v| *v = *v * s + m);
                }
                Ok((set.clone(), grid))
            })
            .collect()
    }
}

fn ranges(ds: &Dataset) -> Vec<(f64, f64)> {
    (0..ds.d())
        .map(|j| {
            (0..ds.n())
                .map(|r| ds.x.get(r, j))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        })
        .collect()
}

/// Trains the reference network of one fold; metrics are on its test rows.
pub fn train_reference(cfg: &ExperimentConfig, fold: &PreparedFold) -> Result<(ReferenceModel, MetricMap)> {
    let mut widths = vec![fold.train.d()];
    widths.extend(&cfg.dnn.widths);
    widths.push(1);
    let seed = cfg.stage_seed(STAGE_DNN, fold.fold);
    let net = Mlp::new(&widths, &mut Rng::new(seed))?;
    let (net, _) = train_mlp(
        &net,
        cfg.head(),
        fold.train.samples(),
        Some(fold.val.samples()),
        &cfg.dnn.train_config(seed),
    )?;
    let m = metrics(&net.forward(&fold.test.x)?, &fold.test.y, fold.test.task)?;
    Ok((
        ReferenceModel {
            format: ReferenceModel::FORMAT.into(),
            fold: fold.fold,
            task: fold.train.task,
            standardizer: fold.standardizer.clone(),
            net,
        },
        m,
    ))
}

/// Scores interactions of the reference network on its fold's validation rows.
pub fn run_fis(cfg: &ExperimentConfig, reference: &ReferenceModel, fold: &PreparedFold) -> Result<FisOutcome> {
    if reference.standardizer != fold.standardizer {
        return Err(Error::validation(
            "the model was trained on different preprocessing than this data",
        ));
    }
    let d = fold.val.d();
    let mut rng = Rng::new(cfg.stage_seed(STAGE_FIS, fold.fold));
    let ctx = DetectionContext::subsampled(
        &fold.val.x,
        cfg.fis.baseline.resolve(d),
        cfg.fis.subsample_cap,
        &mut rng,
    )?;
    select_interactions(&reference.net, &ctx, &cfg.fis.fis_config())
}

/// Trains the additive model for `family` on one fold; metrics are on its
/// test rows.
pub fn train_sian_fold(
    cfg: &ExperimentConfig,
    family: &InteractionFamily,
    fold: &PreparedFold,
) -> Result<(SianArtifact, MetricMap)> {
    let arch = family_to_architecture(family, fold.train.d(), &cfg.sian.widths, cfg.head())?;
    let seed = cfg.stage_seed(STAGE_SIAN, fold.fold);
    let model = SianModel::build(arch, &mut Rng::new(seed))?;
    let (model, _) = train_sian(
        &model,
        fold.train.samples(),
        Some(fold.val.samples()),
        &cfg.sian.net().train_config(seed),
    )?;
    let model = model.convert(cfg.sian.mode);
    let m = metrics(&model.forward(&fold.test.x)?, &fold.test.y, fold.test.task)?;
    Ok((
        SianArtifact {
            format: SianArtifact::FORMAT.into(),
            fold: fold.fold,
            standardizer: fold.standardizer.clone(),
            ranges: ranges(&fold.train),
            model,
        },
        m,
    ))
}

pub fn save_metrics(summary: &BTreeMap<String, crate::data::MetricSummary>, path: &Path) -> Result<()> {
    write_json(summary, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fis::FamilyEntry;
    use crate::tensor::Matrix;

    fn toy(n: usize, seed: u64) -> Dataset {
        let mut rng = Rng::new(seed);
        let x: Vec<f64> = (0..n * 3).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let y = x.chunks(3).map(|r| r[0] + r[1] * r[2]).collect();
        Dataset::new(
            vec!["a".into(), "b".into(), "c".into()],
            Matrix::from_vec(n, 3, x).unwrap(),
            y,
            Task::Regression,
        )
        .unwrap()
    }

    fn config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(DataConfig {
            path: "unused.csv".into(),
            schema: Schema::new(Task::Regression),
            split: SplitSettings::default(),
            seed: 3,
        });
        cfg.dnn = NetConfig {
            epochs: 5,
            ..NetConfig::with_widths(&[8])
        };
        cfg.sian.epochs = 5;
        cfg
    }

    #[test]
    fn config_defaults_parse() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"data": {"path": "d.csv", "schema": {"task": "regression"}, "seed": 1}}"#)
                .unwrap();
        assert_eq!(cfg.dnn.widths, DEFAULT_DNN_WIDTHS);
        assert_eq!(cfg.sian.widths, DEFAULT_SUBNET_WIDTHS);
        assert_eq!(cfg.fis.tau, 0.5);
        assert_eq!(cfg.data.split.folds, 5);
        assert!(cfg.validate().is_ok());
        assert!(serde_json::from_str::<ExperimentConfig>(
            r#"{"data": {"path": "d.csv", "schema": {"task": "regression"}}}"#
        )
        .is_err());
        let s: SianSection = serde_json::from_str(r#"{"widths": [4], "mode": "compressed", "epochs": 3}"#).unwrap();
        assert_eq!((s.mode, s.epochs), (Mode::Compressed, 3));
        assert!(serde_json::from_str::<SianSection>(r#"{"widths": [4], "epoch": 3}"#).is_err());
    }

    #[test]
    fn stage_seeds_differ() {
        let cfg = config();
        assert_ne!(cfg.stage_seed(STAGE_DNN, 0), cfg.stage_seed(STAGE_DNN, 1));
        assert_ne!(cfg.stage_seed(STAGE_DNN, 0), cfg.stage_seed(STAGE_SIAN, 0));
        assert_eq!(cfg.stage_seed(STAGE_FIS, 2), config().stage_seed(STAGE_FIS, 2));
    }

    #[test]
    fn stages_run_and_artifacts_round_trip() {
        let cfg = config();
        let ds = toy(300, 1);
        let fold = prepare_fold(&ds, &cfg.split_plan(), 0).unwrap();
        let (reference, m) = train_reference(&cfg, &fold).unwrap();
        assert!(m["mse"].is_finite());
        let dir = std::env::temp_dir().join(format!("sian-pipeline-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("ref.json");
        reference.save(&p).unwrap();
        assert_eq!(ReferenceModel::load(&p).unwrap(), reference);
        let out = run_fis(&cfg, &reference, &fold).unwrap();
        assert_eq!(out.levels[0].candidates, 3);
        let family = InteractionFamily::new(vec![FamilyEntry {
            indices: InteractionSet::singleton(0),
            strength: 1.0,
            heredity: None,
        }])
        .unwrap();
        let (art, _) = train_sian_fold(&cfg, &family, &fold).unwrap();
        let p = dir.join("sian.json");
        art.save(&p).unwrap();
        let back = SianArtifact::load(&p).unwrap();
        assert_eq!(
            back.model.forward(&fold.test.x).unwrap(),
            art.model.forward(&fold.test.x).unwrap()
        );
        assert!(matches!(
            SianArtifact::load(&dir.join("ref.json")),
            Err(Error::Format(_))
        ));
        let shapes = art.export_shapes(Some(5)).unwrap();
        assert_eq!(shapes[0].1.len(), 5);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
