use serde::Serialize;

use sian::data::mse;
use sian::detect::{Baseline, DetectionContext, FnPredictor};
use sian::fis::{select_interactions, FisConfig};
use sian::nn::{Samples, TaskHead, TrainConfig};
use sian::oracle::interaction_mass;
use sian::sian::{grid_axes, train_sian};
use sian::{Error, GamArchitecture, InteractionSet, Matrix, Result, Rng, SianModel};

pub const DEMO_INPUTS: usize = 4;
pub const SELECTION_INPUTS: usize = 6;
const TRAIN_ROWS: usize = 2000;
const TEST_ROWS: usize = 500;
const GRID_POINTS: usize = 41;

/// The regression target of [`train`], noise-free.
pub fn demo_target(x: &[f64]) -> f64 {
    x[0] + x[1] * x[2] + (3.0 * x[3]).sin()
}

/// The function scored by [`select`].
pub fn selection_target(x: &[f64]) -> f64 {
    x[0] + 2.0 * x[1] * x[2] + x[3] * x[4] * x[5] + 0.5 * x[4]
}

#[derive(Debug, Clone, Serialize)]
pub struct Shape {
    pub indices: Vec<usize>,
    pub axes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainResult {
    pub test_mse: f64,
    /// Test error of always predicting the training mean.
    pub baseline_mse: f64,
    pub train_loss: Vec<f64>,
    pub shapes: Vec<Shape>,
}

fn uniform_rows(n: usize, d: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_vec(n, d, (0..n * d).map(|_| rng.uniform(-1.0, 1.0)).collect()).expect("shape")
}

fn targets(x: &Matrix, rng: &mut Rng) -> Vec<f64> {
    (0..x.rows())
        .map(|r| demo_target(x.row(r)) + 0.1 * rng.normal())
        .collect()
}

/// Singletons, plus every pair when `order` is 2.
pub fn demo_family(order: usize) -> Result<Vec<InteractionSet>> {
    if !(1..=2).contains(&order) {
        return Err(Error::Config(format!("order must be 1 or 2, got {order}")));
    }
    let mut family: Vec<InteractionSet> = (0..DEMO_INPUTS).map(InteractionSet::singleton).collect();
    if order == 2 {
        for i in 0..DEMO_INPUTS {
            for j in i + 1..DEMO_INPUTS {
                family.push(InteractionSet::new(vec![i, j])?);
            }
        }
    }
    Ok(family)
}

pub fn train(seed: u64, order: usize, epochs: usize) -> Result<TrainResult> {
    if epochs == 0 || epochs > 500 {
        return Err(Error::Config("epochs must be between 1 and 500".into()));
    }
    let mut rng = Rng::new(seed);
    let x = uniform_rows(TRAIN_ROWS, DEMO_INPUTS, &mut rng);
    let y = targets(&x, &mut rng);
    let xt = uniform_rows(TEST_ROWS, DEMO_INPUTS, &mut rng);
    let yt = targets(&xt, &mut rng);

    let arch = GamArchitecture::new(
        DEMO_INPUTS,
        demo_family(order)?,
        vec![16, 12, 8],
        TaskHead::regression(),
    )?;
    let model = SianModel::build(arch, &mut rng.fork())?;
    let cfg = TrainConfig {
        learning_rate: 0.02,
        max_epochs: epochs,
        seed,
        ..TrainConfig::default()
    };
    let (model, trace) = train_sian(&model, Samples::new(&x, &y)?, None, &cfg)?;

    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let lo = vec![-1.0; DEMO_INPUTS];
    let hi = vec![1.0; DEMO_INPUTS];
    let shapes = model
        .family()
        .iter()
        .map(|set| {
            let g = model.eval_shape(set, &grid_axes(set, &lo, &hi, GRID_POINTS))?;
            Ok(Shape {
                indices: set.indices().to_vec(),
                axes: g.axes,
                values: g.values,
            })
        })
        .collect::<Result<_>>()?;
    Ok(TrainResult {
        test_mse: mse(&model.forward(&xt)?, &yt)?,
        baseline_mse: mse(&vec![mean; yt.len()], &yt)?,
        train_loss: trace.iter().map(|r| r.train_loss).collect(),
        shapes,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoredSet {
    pub indices: Vec<usize>,
    pub score: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionResult {
    pub family: Vec<Vec<usize>>,
    pub scores: Vec<ScoredSet>,
    /// `[degree, candidates, admitted]` per level.
    pub levels: Vec<[usize; 3]>,
}

pub fn select(seed: u64, theta: f64, tau: f64, max_order: usize) -> Result<SelectionResult> {
    let mut rng = Rng::new(seed);
    let samples = Matrix::from_vec(
        256,
        SELECTION_INPUTS,
        (0..256 * SELECTION_INPUTS).map(|_| rng.normal()).collect(),
    )?;
    let ctx = DetectionContext::new(samples, Baseline::zero(SELECTION_INPUTS))?;
    let cfg = FisConfig {
        tau,
        ..FisConfig::new(max_order, theta)
    };
    cfg.validate()?;
    let f = FnPredictor::new(SELECTION_INPUTS, selection_target);
    let out = select_interactions(&f, &ctx, &cfg)?;
    Ok(SelectionResult {
        family: out.family.sets().iter().map(|s| s.indices().to_vec()).collect(),
        scores: out
            .scores
            .scores
            .iter()
            .map(|s| ScoredSet {
                indices: s.set.indices().to_vec(),
                score: s.mean_score,
                selected: out.family.contains(&s.set),
            })
            .collect(),
        levels: out
            .levels
            .iter()
            .map(|l| [l.degree, l.candidates, l.admitted])
            .collect(),
    })
}

/// Entry `K` is the expected share of variance in interactions of exactly
/// `K` inputs.
pub fn spectrum(d: usize, k: f64) -> Result<Vec<f64>> {
    if d == 0 || d > 64 {
        return Err(Error::Config("d must be between 1 and 64".into()));
    }
    (0..=d).map(|big_k| interaction_mass(d, big_k, k)).collect()
}
