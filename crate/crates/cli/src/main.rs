use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use sian::data::{load_csv, summarize, MetricSummary};
use sian::fis::InteractionFamily;
use sian::oracle::{self, OracleReport};
use sian::pipeline::{self, ExperimentConfig, MetricMap, ReferenceModel, SianArtifact};
use sian::Rng;

#[derive(Parser)]
#[command(name = "sian", version, about = "Sparse interaction additive networks")]
struct Cli {
    /// Only print warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config data path.
    #[arg(long)]
    data: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.data.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(data) = &self.data {
            cfg.data.path = data.clone();
        }
        std::fs::create_dir_all(&cfg.output_dir)
            .with_context(|| format!("cannot create {}", cfg.output_dir.display()))?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the reference network on every fold (or one).
    TrainDnn {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fold: Option<usize>,
    },
    /// Select an interaction family from a reference network.
    Fis {
        #[command(flatten)]
        common: Common,
        /// Reference model; defaults to <out>/dnn_fold0.json.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train the additive model for a family on every fold (or one).
    TrainSian {
        #[command(flatten)]
        common: Common,
        /// Family file; defaults to <out>/family.json.
        #[arg(long)]
        family: Option<PathBuf>,
        #[arg(long)]
        fold: Option<usize>,
    },
    /// Metrics of a trained additive model. Without --data, uses the test
    /// rows of the config's dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Evaluate every row of this CSV instead.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Also write the metrics here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write one grid CSV per interaction set.
    ExportShapes {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Points per axis; the default depends on the set's degree.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Run a verification suite and print its JSON report.
    Oracle {
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Lemma,
    Recovery,
    Anova,
    Theory,
    Fourier,
    All,
}

#[derive(Serialize)]
struct FoldMetrics {
    fold: usize,
    metrics: MetricMap,
}

#[derive(Serialize)]
struct MetricsFile {
    folds: Vec<FoldMetrics>,
    summary: BTreeMap<String, MetricSummary>,
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

fn folds(cfg: &ExperimentConfig, only: Option<usize>) -> anyhow::Result<Vec<usize>> {
    let n = cfg.data.split.folds;
    match only {
        Some(k) if k >= n => Err(sian::Error::Config(format!("fold {k} out of range (config has {n} folds)")).into()),
        Some(k) => Ok(vec![k]),
        None => Ok((0..n).collect()),
    }
}

fn metrics_path(cfg: &ExperimentConfig, stem: &str, only: Option<usize>) -> PathBuf {
    match only {
        Some(k) => cfg.output_dir.join(format!("{stem}_metrics_fold{k}.json")),
        None => cfg.output_dir.join(format!("{stem}_metrics.json")),
    }
}

fn save_fold_metrics(per_fold: Vec<FoldMetrics>, path: &Path) -> anyhow::Result<()> {
    let maps: Vec<MetricMap> = per_fold.iter().map(|f| f.metrics.clone()).collect();
    let file = MetricsFile {
        summary: summarize(&maps),
        folds: per_fold,
    };
    write_json(&file, path)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn train_dnn(common: &Common, only: Option<usize>) -> anyhow::Result<()> {
    let cfg = common.load()?;
    let ds = pipeline::load_dataset(&cfg)?;
    let plan = cfg.split_plan();
    let mut per_fold = Vec::new();
    for k in folds(&cfg, only)? {
        let fold = pipeline::prepare_fold(&ds, &plan, k)?;
        let (model, metrics) = pipeline::train_reference(&cfg, &fold)?;
        let path = cfg.output_dir.join(format!("dnn_fold{k}.json"));
        model.save(&path)?;
        info!("fold {k}: {metrics:?} -> {}", path.display());
        per_fold.push(FoldMetrics { fold: k, metrics });
    }
    save_fold_metrics(per_fold, &metrics_path(&cfg, "dnn", only))
}

fn fis(common: &Common, model: Option<&Path>) -> anyhow::Result<()> {
    let cfg = common.load()?;
    let model_path = model
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output_dir.join("dnn_fold0.json"));
    let reference = ReferenceModel::load(&model_path)?;
    let ds = pipeline::load_dataset(&cfg)?;
    let fold = pipeline::prepare_fold(&ds, &cfg.split_plan(), reference.fold)?;
    let outcome = pipeline::run_fis(&cfg, &reference, &fold)?;
    for level in &outcome.levels {
        info!(
            "degree {}: {} candidates, {} admitted, {} skipped",
            level.degree, level.candidates, level.admitted, level.skipped
        );
    }
    let family_path = cfg.output_dir.join("family.json");
    outcome.family.save(&family_path)?;
    let scores_path = cfg.output_dir.join("scores.csv");
    std::fs::write(&scores_path, outcome.scores.to_csv())
        .with_context(|| format!("cannot write {}", scores_path.display()))?;
    info!("{} sets -> {}", outcome.family.len(), family_path.display());
    Ok(())
}

fn train_sian(common: &Common, family: Option<&Path>, only: Option<usize>) -> anyhow::Result<()> {
    let cfg = common.load()?;
    let family_path = family
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output_dir.join("family.json"));
    let family = InteractionFamily::load(&family_path)?;
    let ds = pipeline::load_dataset(&cfg)?;
    let plan = cfg.split_plan();
    let mut per_fold = Vec::new();
    for k in folds(&cfg, only)? {
        let fold = pipeline::prepare_fold(&ds, &plan, k)?;
        let (artifact, metrics) = pipeline::train_sian_fold(&cfg, &family, &fold)?;
        let path = cfg.output_dir.join(format!("sian_fold{k}.json"));
        artifact.save(&path)?;
        info!("fold {k}: {metrics:?} -> {}", path.display());
        per_fold.push(FoldMetrics { fold: k, metrics });
    }
    save_fold_metrics(per_fold, &metrics_path(&cfg, "sian", only))
}

fn evaluate(model: &Path, config: &Path, data: Option<&Path>, out: Option<&Path>) -> anyhow::Result<()> {
    let artifact = SianArtifact::load(model)?;
    let cfg = ExperimentConfig::load(config)?;
    let metrics = match data {
        Some(path) => artifact.evaluate(&load_csv(path, &cfg.data.schema)?)?,
        None => {
            let ds = pipeline::load_dataset(&cfg)?;
            let split = cfg.split_plan().split(ds.n())?;
            artifact.evaluate(&ds.select(&split.test))?
        }
    };
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    if let Some(path) = out {
        write_json(&metrics, path)?;
    }
    Ok(())
}

fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn export_shapes(model: &Path, out: &Path, points: Option<usize>) -> anyhow::Result<()> {
    let artifact = SianArtifact::load(model)?;
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let names = &artifact.standardizer.names;
    for (set, grid) in artifact.export_shapes(points)? {
        let path = out.join(format!("shape_{}.csv", file_label(&set.label())));
        std::fs::write(&path, grid.to_csv(Some(names))).with_context(|| format!("cannot write {}", path.display()))?;
        info!("{} ({} points) -> {}", set.label(), grid.len(), path.display());
    }
    Ok(())
}

fn run_suite(suite: Suite, seed: u64) -> sian::Result<OracleReport> {
    let mut rng = Rng::new(seed);
    let checks = match suite {
        Suite::All => return oracle::run_all(seed),
        Suite::Fourier => vec![oracle::check_fourier_round_trip(&mut rng)?],
        Suite::Lemma => vec![oracle::check_lemma(200, &mut rng)?],
        Suite::Recovery => vec![oracle::check_sparse_recovery(100)?],
        Suite::Anova => {
            let mut c = oracle::check_anova_example(1000)?;
            c.push(oracle::check_anova_invariants(50, &mut rng)?);
            c
        }
        Suite::Theory => {
            let mut c = oracle::check_interaction_mass()?;
            c.push(oracle::check_histogram()?);
            c.push(oracle::check_spectrum(2000, &mut rng)?);
            c
        }
    };
    Ok(OracleReport::new(checks))
}

fn oracle_cmd(suite: Suite, seed: u64, out: Option<&Path>) -> anyhow::Result<bool> {
    let report = run_suite(suite, seed)?;
    println!("{}", report.to_json()?);
    if let Some(path) = out {
        write_json(&report, path)?;
    }
    Ok(report.passed)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match &cli.command {
        Command::TrainDnn { common, fold } => train_dnn(common, *fold)?,
        Command::Fis { common, model } => fis(common, model.as_deref())?,
        Command::TrainSian { common, family, fold } => train_sian(common, family.as_deref(), *fold)?,
        Command::Evaluate {
            model,
            config,
            data,
            out,
        } => evaluate(model, config, data.as_deref(), out.as_deref())?,
        Command::ExportShapes { model, out, points } => export_shapes(model, out, *points)?,
        Command::Oracle { suite, seed, out } => return oracle_cmd(*suite, *seed, out.as_deref()),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet {
        log::LevelFilter::Warn
    } else {
        log::LevelFilter::Info
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: verification checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let user = e.downcast_ref::<sian::Error>().is_some_and(sian::Error::is_user_error);
            ExitCode::from(if user { 2 } else { 1 })
        }
    }
}
