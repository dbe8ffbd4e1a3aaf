//! Higher-order Archipelago interaction strengths.
//!
//! For a set `J`, target `x*`, baseline `x′` and context `c`, the score is the
//! squared secant estimate of the mixed partial derivative over `J`:
//!
//! ```text
//! ω_J(c) = ( ∏_{i∈J} 1/hᵢ · Σ_{C⊆J} (−1)^{|J|−|C|} f(x* on C, x′ on J∖C, c elsewhere) )²
//! ```
//!
//! with `hᵢ = x*ᵢ − x′ᵢ`. The two-point score averages the contexts `x*` and
//! `x′`, and [`aggregate`] averages that over a validation set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::rng::Rng;
use crate::sian::{InteractionSet, SianModel};
use crate::tensor::Matrix;

pub const DEFAULT_SUBSAMPLE_CAP: usize = 1024;

/// Samples evaluated per model call when aggregating.
const CHUNK: usize = 256;

/// A real-valued function on ℝᵈ evaluated a batch of rows at a time.
pub trait Predictor {
    fn input_dim(&self) -> usize;
    fn predict_batch(&self, x: &Matrix) -> Result<Vec<f64>>;
}

impl Predictor for Mlp {
    fn input_dim(&self) -> usize {
        self.input_width()
    }

    fn predict_batch(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.forward(x)
    }
}

/// Scores the link-scale output (logits for classification).
impl Predictor for SianModel {
    fn input_dim(&self) -> usize {
        self.arch().d
    }

    fn predict_batch(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.forward(x)
    }
}

/// Wraps a pointwise closure.
pub struct FnPredictor<F> {
    d: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64> FnPredictor<F> {
    pub fn new(d: usize, f: F) -> Self {
        Self { d, f }
    }
}

impl<F: Fn(&[f64]) -> f64> Predictor for FnPredictor<F> {
    fn input_dim(&self) -> usize {
        self.d
    }

    fn predict_batch(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.d {
            return Err(Error::shape(format!("expected {} columns, found {}", self.d, x.cols())));
        }
        Ok((0..x.rows()).map(|r| (self.f)(x.row(r))).collect())
    }
}

/// How the baseline instance is chosen for each target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// One baseline for every target; zero for standardized data.
    Fixed(Vec<f64>),
    /// `x′ = −x*`, so every coordinate moves. On {−1,1}ᵈ this flips all bits.
    FlipAll,
}

impl Baseline {
    pub fn zero(d: usize) -> Self {
        Baseline::Fixed(vec![0.0; d])
    }

    fn for_target(&self, x_star: &[f64], out: &mut Vec<f64>) {
        out.clear();
        match self {
            Baseline::Fixed(b) => out.extend_from_slice(b),
            Baseline::FlipAll => out.extend(x_star.iter().map(|v| -v)),
        }
    }
}

/// Appends the `2^|J|` corner points of one secant to `rows`, subsets of `J`
/// enumerated as bitmasks in ascending order.
fn push_corners(rows: &mut Vec<f64>, x_star: &[f64], x_prime: &[f64], context: &[f64], set: &[usize]) {
    for mask in 0..1usize << set.len() {
        let start = rows.len();
        rows.extend_from_slice(context);
        for (bit, &i) in set.iter().enumerate() {
            rows[start + i] = if mask >> bit & 1 == 1 { x_star[i] } else { x_prime[i] };
        }
    }
}

/// `∏ 1/hᵢ`, or `None` when some `hᵢ` is zero.
fn inverse_steps(x_star: &[f64], x_prime: &[f64], set: &[usize]) -> Option<f64> {
    let mut scale = 1.0;
    for &i in set {
        let h = x_star[i] - x_prime[i];
        if h == 0.0 {
            return None;
        }
        scale /= h;
    }
    Some(scale)
}

fn secant_square(values: &[f64], degree: usize, scale: f64) -> f64 {
    let mut acc = 0.0;
    for (mask, &v) in values.iter().enumerate() {
        if (degree - mask.count_ones() as usize).is_multiple_of(2) {
            acc += v;
        } else {
            acc -= v;
        }
    }
    let s = scale * acc;
    s * s
}

fn check_point(f: &dyn Predictor, v: &[f64], what: &str) -> Result<()> {
    if v.len() != f.input_dim() {
        return Err(Error::shape(format!(
            "{what} has length {}, model expects {}",
            v.len(),
            f.input_dim()
        )));
    }
    Ok(())
}

fn check_set(f: &dyn Predictor, set: &InteractionSet) -> Result<()> {
    match set.indices().last() {
        Some(&i) if i >= f.input_dim() => Err(Error::validation(format!(
            "{set} is out of range for d = {}",
            f.input_dim()
        ))),
        _ => Ok(()),
    }
}

fn degenerate(set: &InteractionSet) -> Error {
    Error::DetectionImpossible {
        set: set.to_string(),
        samples: 1,
    }
}

/// Single-context score. A zero step `hᵢ` yields
/// [`Error::DetectionImpossible`].
pub fn archi_score(
    f: &dyn Predictor,
    x_star: &[f64],
    x_prime: &[f64],
    context: &[f64],
    set: &InteractionSet,
) -> Result<f64> {
    check_point(f, x_star, "x*")?;
    check_point(f, x_prime, "x′")?;
    check_point(f, context, "context")?;
    check_set(f, set)?;
    let scale = inverse_steps(x_star, x_prime, set.indices()).ok_or_else(|| degenerate(set))?;
    let mut rows = Vec::new();
    push_corners(&mut rows, x_star, x_prime, context, set.indices());
    let values = f.predict_batch(&Matrix::from_vec(1 << set.degree(), f.input_dim(), rows)?)?;
    Ok(secant_square(&values, set.degree(), scale))
}

/// Mean of [`archi_score`] over the contexts `x*` and `x′`.
pub fn two_point_score(f: &dyn Predictor, x_star: &[f64], x_prime: &[f64], set: &InteractionSet) -> Result<f64> {
    let a = archi_score(f, x_star, x_prime, x_star, set)?;
    let b = archi_score(f, x_star, x_prime, x_prime, set)?;
    Ok(0.5 * (a + b))
}

/// Validation targets and the baseline rule.
#[derive(Debug, Clone)]
pub struct DetectionContext {
    samples: Matrix,
    baseline: Baseline,
}

impl DetectionContext {
    pub fn new(samples: Matrix, baseline: Baseline) -> Result<Self> {
        if samples.rows() == 0 {
            return Err(Error::validation("validation set is empty"));
        }
        if let Baseline::Fixed(b) = &baseline {
            if b.len() != samples.cols() {
                return Err(Error::shape(format!(
                    "baseline has length {}, samples have {} columns",
                    b.len(),
                    samples.cols()
                )));
            }
            if !b.iter().all(|v| v.is_finite()) {
                return Err(Error::validation("baseline must be finite"));
            }
        }
        Ok(Self { samples, baseline })
    }

    /// At most `cap` rows drawn without replacement, kept in their original
    /// order.
    pub fn subsampled(samples: &Matrix, baseline: Baseline, cap: usize, rng: &mut Rng) -> Result<Self> {
        if samples.rows() <= cap {
            return Self::new(samples.clone(), baseline);
        }
        let mut idx = rng.sample_indices(samples.rows(), cap);
        idx.sort_unstable();
        Self::new(samples.select_rows(&idx), baseline)
    }

    pub fn samples(&self) -> &Matrix {
        &self.samples
    }

    pub fn baseline(&self) -> &Baseline {
        &self.baseline
    }
}

/// Mean two-point strength of one set over a validation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetScore {
    pub set: InteractionSet,
    pub mean_score: f64,
    pub n_samples_used: usize,
    pub n_skipped: usize,
}

impl SetScore {
    /// More than half the samples had a zero step along some feature.
    pub fn unreliable(&self) -> bool {
        self.n_skipped * 2 > self.n_samples_used + self.n_skipped
    }
}

/// Two-point scores averaged over every validation sample whose steps are all
/// nonzero, summed in sample order.
pub fn aggregate(f: &dyn Predictor, ctx: &DetectionContext, set: &InteractionSet) -> Result<SetScore> {
    let d = f.input_dim();
    if ctx.samples.cols() != d {
        return Err(Error::shape(format!(
            "validation samples have {} columns, model expects {d}",
            ctx.samples.cols()
        )));
    }
    check_set(f, set)?;
    let k = set.degree();
    let corners = 1usize << k;
    let mut x_prime = Vec::with_capacity(d);
    let mut total = 0.0;
    let mut used = 0;
    let mut skipped = 0;
    let mut rows = Vec::new();
    let mut scales = Vec::with_capacity(CHUNK);
    let n = ctx.samples.rows();
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        rows.clear();
        scales.clear();
        for r in start..end {
            let x_star = ctx.samples.row(r);
            ctx.baseline.for_target(x_star, &mut x_prime);
            match inverse_steps(x_star, &x_prime, set.indices()) {
                Some(scale) => {
                    push_corners(&mut rows, x_star, &x_prime, x_star, set.indices());
                    push_corners(&mut rows, x_star, &x_prime, &x_prime, set.indices());
                    scales.push(scale);
                }
                None => skipped += 1,
            }
        }
        if !scales.is_empty() {
            let values = f.predict_batch(&Matrix::from_vec(
                scales.len() * 2 * corners,
                d,
                std::mem::take(&mut rows),
            )?)?;
            for (s, &scale) in scales.iter().enumerate() {
                let base = s * 2 * corners;
                let a = secant_square(&values[base..base + corners], k, scale);
                let b = secant_square(&values[base + corners..base + 2 * corners], k, scale);
                total += 0.5 * (a + b);
                used += 1;
            }
        }
        start = end;
    }
    if used == 0 {
        return Err(Error::DetectionImpossible {
            set: set.to_string(),
            samples: n,
        });
    }
    Ok(SetScore {
        set: set.clone(),
        mean_score: total / used as f64,
        n_samples_used: used,
        n_skipped: skipped,
    })
}

/// Aggregated scores for a list of sets, plus summaries per degree.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArchipelagoReport {
    pub scores: Vec<SetScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeSummary {
    pub degree: usize,
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Number of scores per power of ten, keyed by `floor(log10(score))`;
    /// exact zeros are counted in `zeros`.
    pub decades: BTreeMap<i32, usize>,
    pub zeros: usize,
}

impl ArchipelagoReport {
    pub fn score_all(f: &dyn Predictor, ctx: &DetectionContext, sets: &[InteractionSet]) -> Result<Self> {
        let scores = sets.iter().map(|s| aggregate(f, ctx, s)).collect::<Result<_>>()?;
        Ok(Self { scores })
    }

    pub fn get(&self, set: &InteractionSet) -> Option<&SetScore> {
        self.scores.iter().find(|s| &s.set == set)
    }

    /// Columns `degree,indices,mean_score,n_samples_used`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("degree,indices,mean_score,n_samples_used\n");
        for s in &self.scores {
            out.push_str(&format!(
                "{},{},{},{}\n",
                s.set.degree(),
                s.set.label(),
                s.mean_score,
                s.n_samples_used
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut scores = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::format(format!("score table row {}: bad {what}", line + 2));
            if rec.len() != 4 {
                return Err(bad("column count"));
            }
            let indices = rec[1]
                .split('+')
                .map(|t| t.parse::<usize>().map_err(|_| bad("indices")))
                .collect::<Result<Vec<_>>>()?;
            let set = InteractionSet::try_from(indices)?;
            let degree: usize = rec[0].parse().map_err(|_| bad("degree"))?;
            if degree != set.degree() {
                return Err(bad("degree"));
            }
            scores.push(SetScore {
                set,
                mean_score: rec[2].parse().map_err(|_| bad("mean_score"))?,
                n_samples_used: rec[3].parse().map_err(|_| bad("n_samples_used"))?,
                n_skipped: 0,
            });
        }
        Ok(Self { scores })
    }

    pub fn degree_summaries(&self) -> Vec<DegreeSummary> {
        let mut by_degree: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for s in &self.scores {
            by_degree.entry(s.set.degree()).or_default().push(s.mean_score);
        }
        by_degree
            .into_iter()
            .map(|(degree, v)| {
                let mut decades = BTreeMap::new();
                let mut zeros = 0;
                for &x in &v {
                    if x > 0.0 {
                        *decades.entry(x.log10().floor() as i32).or_insert(0) += 1;
                    } else {
                        zeros += 1;
                    }
                }
                DegreeSummary {
                    degree,
                    count: v.len(),
                    min: v.iter().copied().fold(f64::INFINITY, f64::min),
                    max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    mean: v.iter().sum::<f64>() / v.len() as f64,
                    decades,
                    zeros,
                }
            })
            .collect()
    }
}
