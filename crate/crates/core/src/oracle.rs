//! Brute-force ground truth for pseudo-boolean functions, grid ANOVA
//! decompositions and the closed-form theory quantities, plus verification
//! suites that report as JSON.
//!
//! Points of {−1,1}ᵈ are bitmasks: bit `i` set means `xᵢ = −1`. Subsets of
//! `[d]` are bitmasks as well.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::detect::{Baseline, DetectionContext, Predictor};
use crate::error::{Error, Result};
use crate::fis::{select_interactions, FisConfig};
use crate::rng::Rng;
use crate::sian::InteractionSet;
use crate::tensor::Matrix;

pub const MAX_FOURIER_DIM: usize = 20;
pub const MAX_ENUMERATION_DIM: usize = 10;
/// Largest grid the ANOVA decomposition will tabulate.
pub const MAX_GRID_POINTS: usize = 1 << 24;

fn check_table(values: &[f64]) -> Result<usize> {
    let n = values.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::shape(format!("cube table needs 2^d entries, got {n}")));
    }
    let d = n.trailing_zeros() as usize;
    if d > MAX_FOURIER_DIM {
        return Err(Error::Resource(format!("d = {d} exceeds {MAX_FOURIER_DIM}")));
    }
    Ok(d)
}

/// In-place unnormalized Walsh–Hadamard transform.
fn walsh_hadamard(v: &mut [f64]) {
    let mut h = 1;
    while h < v.len() {
        for block in v.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
}

/// Coefficients of the multilinear expansion `f(x) = Σ_I c_I ∏_{i∈I} xᵢ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierTable {
    d: usize,
    coefficients: Vec<f64>,
}

impl FourierTable {
    pub fn from_coefficients(coefficients: Vec<f64>) -> Result<Self> {
        let d = check_table(&coefficients)?;
        Ok(Self { d, coefficients })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn coefficient(&self, subset: u64) -> f64 {
        self.coefficients[subset as usize]
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Subsets with a nonzero coefficient.
    pub fn support(&self) -> Vec<u64> {
        (0..self.coefficients.len() as u64)
            .filter(|&s| self.coefficients[s as usize] != 0.0)
            .collect()
    }

    /// Values on the cube, indexed by point bitmask.
    pub fn values(&self) -> Vec<f64> {
        let mut v = self.coefficients.clone();
        walsh_hadamard(&mut v);
        v
    }
}

pub fn fourier_transform(values: &[f64]) -> Result<FourierTable> {
    let d = check_table(values)?;
    let mut c = values.to_vec();
    walsh_hadamard(&mut c);
    let scale = 1.0 / values.len() as f64;
    c.iter_mut().for_each(|v| *v *= scale);
    Ok(FourierTable { d, coefficients: c })
}

/// `Σ_{I ⊇ A} c_I²`.
pub fn upper_cone_mass(t: &FourierTable, a: u64) -> f64 {
    let mut total = 0.0;
    for (i, c) in t.coefficients.iter().enumerate() {
        if i as u64 & a == a {
            total += c * c;
        }
    }
    total
}

/// `E_{x,y}[(Σ_{C⊆A} (−1)^{|A|−|C|} f(x on C, y elsewhere))²] / 2^{|A|}` by
/// enumerating every pair of cube points.
pub fn exact_archipelago_expectation(values: &[f64], a: u64) -> Result<f64> {
    let d = check_table(values)?;
    if d > MAX_ENUMERATION_DIM {
        return Err(Error::Resource(format!(
            "exhaustive pair enumeration is limited to d ≤ {MAX_ENUMERATION_DIM}, got {d}"
        )));
    }
    if a >> d != 0 {
        return Err(Error::validation(format!("subset {a:#b} is out of range for d = {d}")));
    }
    let n = values.len();
    let k = a.count_ones();
    let subsets: Vec<usize> = (0..=a).filter(|c| c & !a == 0).map(|c| c as usize).collect();
    let mut total = 0.0;
    for x in 0..n {
        for y in 0..n {
            let mut s = 0.0;
            for &c in &subsets {
                let v = values[(x & c) | (y & !c)];
                if (k - c.count_ones()).is_multiple_of(2) {
                    s += v;
                } else {
                    s -= v;
                }
            }
            total += s * s;
        }
    }
    Ok(total / (n * n) as f64 / f64::powi(2.0, k as i32))
}

/// All nonempty subsets of the members of `family`.
pub fn downward_closure(family: &[InteractionSet]) -> Result<BTreeSet<InteractionSet>> {
    let mut out = BTreeSet::new();
    for s in family {
        let idx = s.indices();
        if idx.len() > MAX_FOURIER_DIM {
            return Err(Error::Resource(format!("{s} has more than {MAX_FOURIER_DIM} members")));
        }
        for mask in 1..1u64 << idx.len() {
            let sub = (0..idx.len()).filter(|b| mask >> b & 1 == 1).map(|b| idx[b]).collect();
            out.insert(InteractionSet::new(sub)?);
        }
    }
    Ok(out)
}

pub fn mask_to_set(mask: u64) -> Result<InteractionSet> {
    InteractionSet::new((0..64).filter(|i| mask >> i & 1 == 1).collect())
}

/// A table over {−1,1}ᵈ as a model. Inputs must be exactly ±1.
#[derive(Debug, Clone)]
pub struct CubeFunction {
    d: usize,
    values: Vec<f64>,
}

impl CubeFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let d = check_table(&values)?;
        Ok(Self { d, values })
    }

    /// Every cube point as a row, in bitmask order.
    pub fn all_points(d: usize) -> Matrix {
        let data = (0..1usize << d)
            .flat_map(|m| (0..d).map(move |i| if m >> i & 1 == 1 { -1.0 } else { 1.0 }))
            .collect();
        Matrix::from_vec(1 << d, d, data).expect("cube shape")
    }
}

impl Predictor for CubeFunction {
    fn input_dim(&self) -> usize {
        self.d
    }

    fn predict_batch(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.d {
            return Err(Error::shape(format!("expected {} columns, found {}", self.d, x.cols())));
        }
        (0..x.rows())
            .map(|r| {
                let mut idx = 0;
                for (i, &v) in x.row(r).iter().enumerate() {
                    if v == -1.0 {
                        idx |= 1 << i;
                    } else if v != 1.0 {
                        return Err(Error::domain(format!("{v} is not a cube coordinate")));
                    }
                }
                Ok(self.values[idx])
            })
            .collect()
    }
}

/// One axis of a product grid: points with probability weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GridAxis {
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::shape(format!(
                "axis has {} points and {} weights",
                points.len(),
                weights.len()
            )));
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Measure(format!("weights sum to {sum}")));
        }
        Ok(Self { points, weights })
    }

    pub fn uniform(points: Vec<f64>) -> Self {
        let w = 1.0 / points.len() as f64;
        Self {
            weights: vec![w; points.len()],
            points,
        }
    }

    /// `n` cell midpoints of `[lo, hi]`, equally weighted.
    pub fn midpoints(lo: f64, hi: f64, n: usize) -> Self {
        let step = (hi - lo) / n as f64;
        Self::uniform((0..n).map(|i| lo + (i as f64 + 0.5) * step).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Components `f_I` of a function on a product grid. Component tables are
/// row-major over the axes in `I`, lowest feature slowest.
#[derive(Debug, Clone)]
pub struct AnovaDecomposition {
    axes: Vec<GridAxis>,
    components: Vec<Vec<f64>>,
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

impl AnovaDecomposition {
    pub fn d(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[GridAxis] {
        &self.axes
    }

    pub fn component(&self, subset: u64) -> &[f64] {
        &self.components[subset as usize]
    }

    fn dims(&self, subset: u64) -> Vec<usize> {
        (0..self.d())
            .filter(|i| subset >> i & 1 == 1)
            .map(|i| self.axes[i].len())
            .collect()
    }

    /// Index into the table of `subset` for a full grid multi-index.
    fn project(&self, subset: u64, full: &[usize]) -> usize {
        let mut idx = 0;
        for (i, &f) in full.iter().enumerate() {
            if subset >> i & 1 == 1 {
                idx = idx * self.axes[i].len() + f;
            }
        }
        idx
    }

    fn full_points(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        let dims: Vec<usize> = self.axes.iter().map(|a| a.len()).collect();
        let total: usize = dims.iter().product();
        let st = strides(&dims);
        (0..total).map(move |flat| {
            let mut w = 1.0;
            let idx: Vec<usize> = (0..dims.len())
                .map(|i| {
                    let k = flat / st[i] % dims[i];
                    w *= self.axes[i].weights[k];
                    k
                })
                .collect();
            (idx, w)
        })
    }

    /// `Σ_I f_I` at every grid point, row-major.
    pub fn reconstruct(&self) -> Vec<f64> {
        self.full_points()
            .map(|(idx, _)| {
                let mut s = 0.0;
                for m in 0..self.components.len() as u64 {
                    s += self.components[m as usize][self.project(m, &idx)];
                }
                s
            })
            .collect()
    }

    /// `E[f_I f_J]` under the grid measure.
    pub fn inner_product(&self, i: u64, j: u64) -> f64 {
        self.full_points()
            .map(|(idx, w)| {
                w * self.components[i as usize][self.project(i, &idx)]
                    * self.components[j as usize][self.project(j, &idx)]
            })
            .sum()
    }

    /// `‖f_I‖²`, computed over the axes of `I` only.
    pub fn squared_norm(&self, subset: u64) -> f64 {
        let dims = self.dims(subset);
        let st = strides(&dims);
        let members: Vec<usize> = (0..self.d()).filter(|i| subset >> i & 1 == 1).collect();
        self.components[subset as usize]
            .iter()
            .enumerate()
            .map(|(flat, v)| {
                let w: f64 = members
                    .iter()
                    .enumerate()
                    .map(|(p, &i)| self.axes[i].weights[flat / st[p] % dims[p]])
                    .product();
                w * v * v
            })
            .sum()
    }
}

/// Removes axis `pos` from a row-major table by taking its weighted mean.
fn marginalize(table: &[f64], dims: &[usize], pos: usize, weights: &[f64]) -> Vec<f64> {
    let outer: usize = dims[..pos].iter().product();
    let inner: usize = dims[pos + 1..].iter().product();
    let n = dims[pos];
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        for (k, &w) in weights.iter().enumerate() {
            let src = &table[(o * n + k) * inner..(o * n + k + 1) * inner];
            for (dst, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                *dst += w * s;
            }
        }
    }
    out
}

/// Decomposes a row-major table over the product grid `axes` (first axis
/// slowest) into its functional ANOVA components.
pub fn anova_decompose(values: &[f64], axes: Vec<GridAxis>) -> Result<AnovaDecomposition> {
    let d = axes.len();
    if d > 16 {
        return Err(Error::Resource(format!("{d} axes is too many to decompose")));
    }
    for a in &axes {
        GridAxis::new(a.points.clone(), a.weights.clone())?;
    }
    let dims: Vec<usize> = axes.iter().map(|a| a.len()).collect();
    let total = dims
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .filter(|&t| t <= MAX_GRID_POINTS);
    match total {
        Some(t) if t == values.len() => {}
        Some(t) => return Err(Error::shape(format!("grid has {t} points, table has {}", values.len()))),
        None => return Err(Error::Resource(format!("grid exceeds {MAX_GRID_POINTS} points"))),
    }
    let full = (1u64 << d) - 1;
    let dims_of = |m: u64| -> Vec<usize> { (0..d).filter(|i| m >> i & 1 == 1).map(|i| dims[i]).collect() };
    // Conditional expectations, each from a parent with one more axis.
    let mut cond: Vec<Vec<f64>> = vec![Vec::new(); 1 << d];
    cond[full as usize] = values.to_vec();
    for m in (0..full).rev() {
        let j = (!m).trailing_zeros() as usize;
        let parent = m | 1 << j;
        let pos = (0..j).filter(|i| parent >> i & 1 == 1).count();
        cond[m as usize] = marginalize(&cond[parent as usize], &dims_of(parent), pos, &axes[j].weights);
    }
    let mut dec = AnovaDecomposition {
        axes,
        components: Vec::with_capacity(1 << d),
    };
    // Möbius inversion over the subset lattice.
    for m in 0..=full {
        let md = dims_of(m);
        let st = strides(&md);
        let members: Vec<usize> = (0..d).filter(|i| m >> i & 1 == 1).collect();
        let size: usize = md.iter().product();
        let mut comp = vec![0.0; size];
        let mut sub = m;
        loop {
            let sign = if (m.count_ones() - sub.count_ones()) % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            let table = &cond[sub as usize];
            let mut full_idx = vec![0usize; d];
            for (flat, c) in comp.iter_mut().enumerate() {
                for (p, &i) in members.iter().enumerate() {
                    full_idx[i] = flat / st[p] % md[p];
                }
                *c += sign * table[dec.project(sub, &full_idx)];
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & m;
        }
        dec.components.push(comp);
    }
    Ok(dec)
}

/// Riemann zeta for real `s > 1`: a partial sum, then the integral of the
/// tail with Euler–Maclaurin corrections.
pub fn zeta(s: f64) -> Result<f64> {
    if !(s > 1.0) {
        return Err(Error::domain(format!("zeta needs s > 1, got {s}")));
    }
    const N: f64 = 64.0;
    let mut sum = 0.0;
    for n in (1..N as usize).rev() {
        sum += (n as f64).powf(-s);
    }
    let tail = N.powf(1.0 - s) / (s - 1.0) + 0.5 * N.powf(-s) + s / 12.0 * N.powf(-s - 1.0)
        - s * (s + 1.0) * (s + 2.0) / 720.0 * N.powf(-s - 3.0)
        + s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) / 30240.0 * N.powf(-s - 5.0);
    Ok(sum + tail)
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Share of the expected squared norm of a random `C^k` Fourier signal on
/// `[−1,1]^d` carried by interactions of exactly `big_k` features:
/// `C(d,K) a^K / (a+1)^d` with `a = ζ(2k)/2`.
pub fn interaction_mass(d: usize, big_k: usize, k: f64) -> Result<f64> {
    if !(k >= 1.0) {
        return Err(Error::domain(format!("smoothness k must be at least 1, got {k}")));
    }
    let a = zeta(2.0 * k)? / 2.0;
    let p = a / (a + 1.0);
    if big_k > d {
        return Ok(0.0);
    }
    Ok(binomial(d, big_k) * p.powi(big_k as i32) * (1.0 - p).powi((d - big_k) as i32))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramParams {
    /// Bins per axis.
    pub r: u32,
    /// Signal frequency.
    pub m: u32,
    /// Dimension.
    pub n: u32,
    /// μ²/σ².
    pub snr: f64,
    /// Samples per bin.
    pub samples_per_bin: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBenefit {
    pub c: f64,
    pub beneficial: bool,
}

/// `c = (sin(πm/r) / (πm/r))^{2n}`; the histogram estimate helps when
/// `1 + 1/snr < (N + 1) c`.
pub fn histogram_benefit(p: &HistogramParams) -> Result<HistogramBenefit> {
    if p.r == 0 || p.m == 0 || p.n == 0 || p.samples_per_bin == 0 || !(p.snr > 0.0) {
        return Err(Error::domain("r, m, n, N and snr must be positive"));
    }
    let c = if p.m.is_multiple_of(p.r) {
        0.0
    } else {
        let t = std::f64::consts::PI * p.m as f64 / p.r as f64;
        (t.sin() / t).powi(2 * p.n as i32)
    };
    Ok(HistogramBenefit {
        c,
        beneficial: 1.0 + 1.0 / p.snr < (p.samples_per_bin as f64 + 1.0) * c,
    })
}

/// A draw of the random smooth signal
/// `f(x) = Σ_m a_m ∏_j cos(2π m_j x_j) + b_m ∏_j sin(2π m_j x_j)`, where a
/// zero frequency contributes the factor 1 and the coefficients are standard
/// normals scaled by `∏_{m_j ≠ 0} m_j^{−k}`. Frequencies run over
/// `{0..=cutoff}^d`.
#[derive(Debug, Clone)]
pub struct FourierSignal {
    d: usize,
    cutoff: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl FourierSignal {
    pub fn sample(d: usize, k: f64, cutoff: usize, rng: &mut Rng) -> Result<Self> {
        let base = cutoff + 1;
        let count = u32::try_from(d)
            .ok()
            .and_then(|d| base.checked_pow(d))
            .filter(|&c| c <= MAX_GRID_POINTS)
            .ok_or_else(|| Error::Resource(format!("{base}^{d} frequencies")))?;
        let mut a = Vec::with_capacity(count);
        let mut b = Vec::with_capacity(count);
        for idx in 0..count {
            let decay: f64 = Self::digits(idx, d, base)
                .filter(|&m| m > 0)
                .map(|m| (m as f64).powf(-k))
                .product();
            a.push(rng.normal() * decay);
            b.push(rng.normal() * decay);
        }
        Ok(Self { d, cutoff, a, b })
    }

    fn digits(mut idx: usize, d: usize, base: usize) -> impl Iterator<Item = usize> {
        (0..d).map(move |_| {
            let m = idx % base;
            idx /= base;
            m
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let tau = 2.0 * std::f64::consts::PI;
        let mut total = 0.0;
        for idx in 0..self.a.len() {
            let (mut c, mut s) = (1.0, 1.0);
            for (j, m) in Self::digits(idx, self.d, self.cutoff + 1).enumerate() {
                if m > 0 {
                    c *= (tau * m as f64 * x[j]).cos();
                    s *= (tau * m as f64 * x[j]).sin();
                }
            }
            total += self.a[idx] * c + self.b[idx] * s;
        }
        total
    }

    /// Squared norm under the uniform measure carried by each interaction
    /// degree `0..=d`.
    pub fn degree_masses(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.d + 1];
        for idx in 0..self.a.len() {
            let k = Self::digits(idx, self.d, self.cutoff + 1).filter(|&m| m > 0).count();
            out[k] += if k == 0 {
                (self.a[idx] + self.b[idx]).powi(2)
            } else {
                (self.a[idx].powi(2) + self.b[idx].powi(2)) / f64::powi(2.0, k as i32)
            };
        }
        out
    }
}

/// Per-degree shares of the summed masses over `draws` random signals.
pub fn spectrum_monte_carlo(d: usize, k: f64, cutoff: usize, draws: usize, rng: &mut Rng) -> Result<Vec<f64>> {
    let mut sums = vec![0.0; d + 1];
    for _ in 0..draws {
        for (s, m) in sums
            .iter_mut()
            .zip(FourierSignal::sample(d, k, cutoff, rng)?.degree_masses())
        {
            *s += m;
        }
    }
    let total: f64 = sums.iter().sum();
    Ok(sums.into_iter().map(|s| s / total).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub max_deviation: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl OracleReport {
    pub fn new(checks: Vec<CheckResult>) -> Self {
        Self {
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check(name: &str, max_deviation: f64, tolerance: f64, detail: String) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed: max_deviation <= tolerance,
        max_deviation,
        detail,
    }
}

pub fn random_cube_function(d: usize, rng: &mut Rng) -> Vec<f64> {
    (0..1usize << d).map(|_| rng.uniform(-1.0, 1.0)).collect()
}

/// Random coefficients on `s` distinct subsets of `[d]`, magnitudes in
/// `[0.1, 1]` with random signs.
pub fn random_sparse_table(d: usize, s: usize, rng: &mut Rng) -> Result<FourierTable> {
    let mut c = vec![0.0; 1 << d];
    for mask in rng.sample_indices(1 << d, s) {
        let sign = if rng.below(2) == 0 { 1.0 } else { -1.0 };
        c[mask] = sign * rng.uniform(0.1, 1.0);
    }
    FourierTable::from_coefficients(c)
}

/// Brute-force expectation against the upper cone for random functions with
/// `d ∈ {3,4,5}`, every subset.
pub fn check_lemma(functions: usize, rng: &mut Rng) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for t in 0..functions {
        let d = 3 + t % 3;
        let values = random_cube_function(d, rng);
        let table = fourier_transform(&values)?;
        for a in 0..1u64 << d {
            let dev = (exact_archipelago_expectation(&values, a)? - upper_cone_mass(&table, a)).abs();
            worst = worst.max(dev);
        }
    }
    Ok(check(
        "archipelago_upper_cone",
        worst,
        1e-10,
        format!("{functions} random functions, d in 3..=5, all subsets"),
    ))
}

pub fn check_fourier_round_trip(rng: &mut Rng) -> Result<CheckResult> {
    let values = random_cube_function(6, rng);
    let table = fourier_transform(&values)?;
    let back = table.values();
    let mut worst = values.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mean_sq = values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64;
    let parseval: f64 = table.coefficients().iter().map(|c| c * c).sum();
    worst = worst.max((mean_sq - parseval).abs());
    Ok(check(
        "fourier_round_trip",
        worst,
        1e-12,
        "d = 6, reconstruction and Parseval".into(),
    ))
}

/// Selection with exact cube evaluation must return the downward closure of
/// the support, without the empty set.
pub fn check_sparse_recovery(seeds: u64) -> Result<CheckResult> {
    let d = 8;
    let ctx = DetectionContext::new(CubeFunction::all_points(d), Baseline::FlipAll)?;
    let mut cfg = FisConfig::new(d, 1e-4);
    cfg.tau = 0.5;
    let mut failures = Vec::new();
    for seed in 0..seeds {
        let mut rng = Rng::new(seed);
        let s = 1 + rng.below(5);
        let table = random_sparse_table(d, s, &mut rng)?;
        let support: Vec<InteractionSet> = table
            .support()
            .into_iter()
            .filter(|&m| m != 0)
            .map(mask_to_set)
            .collect::<Result<_>>()?;
        let expected = downward_closure(&support)?;
        let f = CubeFunction::new(table.values())?;
        let got: BTreeSet<InteractionSet> = select_interactions(&f, &ctx, &cfg)?.family.sets().into_iter().collect();
        if got != expected {
            failures.push(seed);
        }
    }
    Ok(CheckResult {
        name: "fis_downward_closure".into(),
        passed: failures.is_empty(),
        max_deviation: failures.len() as f64,
        detail: format!(
            "{} of {seeds} seeds recovered exactly; failing seeds {failures:?}",
            seeds - failures.len() as u64
        ),
    })
}

/// The worked example `1 + x + xy` on the two-point cube and on a fine grid.
pub fn check_anova_example(grid: usize) -> Result<Vec<CheckResult>> {
    let f = |x: f64, y: f64| 1.0 + x + x * y;
    let tabulate = |ax: &GridAxis| -> Vec<f64> {
        ax.points
            .iter()
            .flat_map(|&x| ax.points.iter().map(move |&y| f(x, y)))
            .collect()
    };
    let cube = GridAxis::uniform(vec![-1.0, 1.0]);
    let dec = anova_decompose(&tabulate(&cube), vec![cube.clone(), cube])?;
    let expect: [(u64, Vec<f64>); 4] = [
        (0b00, vec![1.0]),
        (0b01, vec![-1.0, 1.0]),
        (0b10, vec![0.0, 0.0]),
        (0b11, vec![1.0, -1.0, -1.0, 1.0]),
    ];
    let mut worst: f64 = 0.0;
    for (m, want) in &expect {
        for (a, b) in dec.component(*m).iter().zip(want) {
            worst = worst.max((a - b).abs());
        }
    }
    let exact = check("anova_cube_example", worst, 1e-12, "components 1, x, 0, xy".into());

    let axis = GridAxis::midpoints(-1.0, 1.0, grid);
    let dec = anova_decompose(&tabulate(&axis), vec![axis.clone(), axis])?;
    let targets = [1.0, 1.0 / 3.0, 0.0, 1.0 / 9.0];
    let worst = (0..4u64)
        .map(|m| (dec.squared_norm(m) - targets[m as usize]).abs())
        .fold(0.0, f64::max);
    let fine = check(
        "anova_grid_norms",
        worst,
        1e-3,
        format!("{grid}-point midpoint grid, norms 1, 1/3, 0, 1/9"),
    );
    Ok(vec![exact, fine])
}

/// Reconstruction, orthogonality and Parseval for random tables on random
/// weighted product grids of two to four axes.
pub fn check_anova_invariants(functions: usize, rng: &mut Rng) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for _ in 0..functions {
        let d = 2 + rng.below(3);
        let axes: Vec<GridAxis> = (0..d)
            .map(|_| {
                let n = 2 + rng.below(4);
                let raw: Vec<f64> = (0..n).map(|_| rng.uniform(0.1, 1.0)).collect();
                let s: f64 = raw.iter().sum();
                let mut w: Vec<f64> = raw.iter().map(|v| v / s).collect();
                let rest: f64 = w[1..].iter().sum();
                w[0] = 1.0 - rest;
                GridAxis::new((0..n).map(|i| i as f64).collect(), w)
            })
            .collect::<Result<_>>()?;
        let size: usize = axes.iter().map(|a| a.len()).product();
        let values: Vec<f64> = (0..size).map(|_| rng.normal()).collect();
        let dec = anova_decompose(&values, axes)?;
        for (a, b) in dec.reconstruct().iter().zip(&values) {
            worst = worst.max((a - b).abs());
        }
        let n = 1u64 << dec.d();
        let mut norms = 0.0;
        for i in 0..n {
            norms += dec.squared_norm(i);
            for j in i + 1..n {
                worst = worst.max(dec.inner_product(i, j).abs());
            }
        }
        let total: f64 = dec.full_points().zip(&values).map(|((_, w), v)| w * v * v).sum();
        worst = worst.max((norms - total).abs());
    }
    Ok(check(
        "anova_invariants",
        worst,
        1e-10,
        format!("{functions} random weighted grids, reconstruction, orthogonality, Parseval"),
    ))
}

pub fn check_interaction_mass() -> Result<Vec<CheckResult>> {
    let mut worst: f64 = 0.0;
    for k in [1.0, 2.0, 3.0] {
        for d in 0..=30 {
            let s: f64 = (0..=d).map(|kk| interaction_mass(d, kk, k)).sum::<Result<f64>>()?;
            worst = worst.max((s - 1.0).abs());
        }
    }
    let sums = check("interaction_mass_sums", worst, 1e-12, "d ≤ 30, k in {1,2,3}".into());
    let a = std::f64::consts::PI.powi(2) / 12.0;
    let single = check(
        "interaction_mass_d1",
        (interaction_mass(1, 1, 1.0)? - a / (1.0 + a)).abs(),
        1e-12,
        "d = 1, K = 1, k = 1".into(),
    );
    Ok(vec![sums, single])
}

pub fn check_histogram() -> Result<CheckResult> {
    let p = HistogramParams {
        r: 4,
        m: 1,
        n: 1,
        snr: 1.0,
        samples_per_bin: 10,
    };
    let t = std::f64::consts::FRAC_PI_4;
    let mut worst = (histogram_benefit(&p)?.c - (t.sin() / t).powi(2)).abs();
    let at_r = histogram_benefit(&HistogramParams { m: 4, ..p })?;
    if at_r.c != 0.0 || at_r.beneficial {
        worst = f64::INFINITY;
    }
    Ok(check(
        "histogram_benefit",
        worst,
        1e-12,
        "n=1, m=1, r=4; m = r gives c = 0".into(),
    ))
}

pub fn check_spectrum(draws: usize, rng: &mut Rng) -> Result<CheckResult> {
    let (d, k) = (3, 2.0);
    let shares = spectrum_monte_carlo(d, k, 20, draws, rng)?;
    let mut worst: f64 = 0.0;
    for (kk, s) in shares.iter().enumerate() {
        let m = interaction_mass(d, kk, k)?;
        worst = worst.max((s - m).abs() / m);
    }
    Ok(check(
        "spectrum_monte_carlo",
        worst,
        0.05,
        format!("d = 3, k = 2, cutoff 20, {draws} draws, shares {shares:?}"),
    ))
}

/// Every check with the default sizes.
pub fn run_all(seed: u64) -> Result<OracleReport> {
    let mut rng = Rng::new(seed);
    let mut checks = vec![
        check_fourier_round_trip(&mut rng.fork())?,
        check_lemma(200, &mut rng.fork())?,
        check_sparse_recovery(100)?,
    ];
    checks.extend(check_anova_example(1000)?);
    checks.push(check_anova_invariants(50, &mut rng.fork())?);
    checks.extend(check_interaction_mass()?);
    checks.push(check_histogram()?);
    checks.push(check_spectrum(2000, &mut rng.fork())?);
    Ok(OracleReport::new(checks))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[usize]) -> InteractionSet {
        InteractionSet::new(v.to_vec()).unwrap()
    }

    fn sign(point: usize, subset: usize) -> f64 {
        if (point & subset).count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    #[test]
    fn transform_matches_direct_sum() {
        let mut rng = Rng::new(8);
        let values = random_cube_function(4, &mut rng);
        let t = fourier_transform(&values).unwrap();
        for s in 0..16 {
            let direct = (0..16).map(|p| values[p] * sign(p, s)).sum::<f64>() / 16.0;
            assert!((t.coefficient(s as u64) - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn simple_transforms() {
        // f = x0: +1 at even points, −1 at odd
        let t = fourier_transform(&[1.0, -1.0, 1.0, -1.0]).unwrap();
        assert_eq!(t.coefficients(), &[0.0, 1.0, 0.0, 0.0]);
        let t = fourier_transform(&[1.0; 8]).unwrap();
        assert_eq!(t.support(), vec![0]);
        assert!(fourier_transform(&[1.0; 3]).is_err());
    }

    #[test]
    fn cone_mass_examples() {
        let xy = fourier_transform(&[1.0, -1.0, -1.0, 1.0]).unwrap();
        assert_eq!(upper_cone_mass(&xy, 0b11), 1.0);
        let mut rng = Rng::new(2);
        let values = random_cube_function(5, &mut rng);
        let t = fourier_transform(&values).unwrap();
        let mean_sq = values.iter().map(|v| v * v).sum::<f64>() / 32.0;
        assert!((upper_cone_mass(&t, 0) - mean_sq).abs() < 1e-14);
        let direct: f64 = (0..32usize)
            .filter(|i| i & 0b10010 == 0b10010)
            .map(|i| t.coefficients()[i].powi(2))
            .sum();
        assert!((upper_cone_mass(&t, 0b10010) - direct).abs() < 1e-15);
    }

    #[test]
    fn enumeration_examples() {
        let xy = [1.0, -1.0, -1.0, 1.0];
        assert!((exact_archipelago_expectation(&xy, 0b11).unwrap() - 1.0).abs() < 1e-15);
        let linear: Vec<f64> = (0..8usize)
            .map(|p| (0..3).map(|i| if p >> i & 1 == 1 { -1.0 } else { 1.0 }).sum())
            .collect();
        assert_eq!(exact_archipelago_expectation(&linear, 0b101).unwrap(), 0.0);
        assert!(matches!(
            exact_archipelago_expectation(&vec![0.0; 1 << 11], 1),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn lemma_on_small_functions() {
        let r = check_lemma(30, &mut Rng::new(5)).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn closure_examples() {
        let c = downward_closure(&[set(&[0, 1])]).unwrap();
        assert_eq!(
            c.into_iter().collect::<Vec<_>>(),
            vec![set(&[0]), set(&[1]), set(&[0, 1])]
        );
        let singles = vec![set(&[0]), set(&[3])];
        assert_eq!(
            downward_closure(&singles).unwrap().into_iter().collect::<Vec<_>>(),
            singles
        );
        assert_eq!(downward_closure(&[set(&[0, 1, 2])]).unwrap().len(), 7);
    }

    #[test]
    fn cube_function_predictor() {
        let f = CubeFunction::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let pts = CubeFunction::all_points(2);
        assert_eq!(f.predict_batch(&pts).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        assert!(f.predict_batch(&Matrix::from_rows(&[vec![0.5, 1.0]]).unwrap()).is_err());
    }

    #[test]
    fn anova_examples() {
        for c in check_anova_example(200).unwrap() {
            // 200 points: norms are within about 1e-5 of their limits
            assert!(c.passed, "{c:?}");
        }
        let constant = anova_decompose(
            &[2.0; 6],
            vec![
                GridAxis::uniform(vec![0.0, 1.0]),
                GridAxis::uniform(vec![0.0, 1.0, 2.0]),
            ],
        )
        .unwrap();
        assert_eq!(constant.component(0), &[2.0]);
        for m in 1..4 {
            assert!(constant.component(m).iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn anova_invariants_hold() {
        let c = check_anova_invariants(10, &mut Rng::new(1)).unwrap();
        assert!(c.passed, "{c:?}");
    }

    #[test]
    fn anova_rejects_bad_measures() {
        let bad = GridAxis {
            points: vec![0.0, 1.0],
            weights: vec![0.5, 0.5 + 1e-9],
        };
        assert!(matches!(anova_decompose(&[0.0; 2], vec![bad]), Err(Error::Measure(_))));
        assert!(matches!(
            GridAxis::new(vec![0.0, 1.0], vec![1.5, -0.5]),
            Err(Error::Measure(_))
        ));
        assert!(anova_decompose(&[0.0; 3], vec![GridAxis::uniform(vec![0.0, 1.0])]).is_err());
    }

    #[test]
    fn zeta_values() {
        let pi = std::f64::consts::PI;
        assert!((zeta(2.0).unwrap() - pi * pi / 6.0).abs() < 1e-14);
        assert!((zeta(4.0).unwrap() - pi.powi(4) / 90.0).abs() < 1e-14);
        assert!((zeta(6.0).unwrap() - pi.powi(6) / 945.0).abs() < 1e-14);
        assert!(zeta(1.0).is_err());
    }

    #[test]
    fn interaction_mass_properties() {
        for c in check_interaction_mass().unwrap() {
            assert!(c.passed, "{c:?}");
        }
        let a = zeta(4.0).unwrap() / 2.0;
        assert!((interaction_mass(5, 0, 2.0).unwrap() - (1.0 + a).powi(-5)).abs() < 1e-15);
        let a = std::f64::consts::PI.powi(2) / 12.0;
        assert!((interaction_mass(1, 1, 1.0).unwrap() - a / (1.0 + a)).abs() < 1e-15);
        assert!(matches!(interaction_mass(3, 1, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn histogram_examples() {
        let p = HistogramParams {
            r: 4,
            m: 1,
            n: 1,
            snr: 2.0,
            samples_per_bin: 3,
        };
        let h = histogram_benefit(&p).unwrap();
        assert!((h.c - 0.81057).abs() < 1e-5, "{}", h.c);
        // 1.5 < 4 × 0.81
        assert!(h.beneficial);
        let h = histogram_benefit(&HistogramParams { m: 8, ..p }).unwrap();
        assert_eq!(h.c, 0.0);
        assert!(!h.beneficial);
        // small m/r: c close to 1, so N + 1 > 1 + 1/snr decides
        let h = histogram_benefit(&HistogramParams {
            r: 100_000,
            m: 1,
            n: 1,
            snr: 0.5,
            samples_per_bin: 2,
        })
        .unwrap();
        assert!(h.c > 0.9999 && !h.beneficial);
        let h = histogram_benefit(&HistogramParams {
            r: 100_000,
            m: 1,
            n: 1,
            snr: 0.5,
            samples_per_bin: 3,
        })
        .unwrap();
        assert!(h.beneficial);
        assert!(histogram_benefit(&HistogramParams { r: 0, ..p }).is_err());
    }

    #[test]
    fn signal_masses_match_grid_anova() {
        // A uniform grid integrates these trigonometric products exactly, so
        // the per-degree component norms must equal the coefficient formula.
        let mut rng = Rng::new(11);
        let sig = FourierSignal::sample(2, 1.5, 3, &mut rng).unwrap();
        let n = 32;
        let axis = GridAxis::uniform((0..n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect());
        let values: Vec<f64> = axis
            .points
            .iter()
            .flat_map(|&x| axis.points.iter().map(move |&y| (x, y)))
            .map(|(x, y)| sig.eval(&[x, y]))
            .collect();
        let dec = anova_decompose(&values, vec![axis.clone(), axis]).unwrap();
        let masses = sig.degree_masses();
        let grid = [
            dec.squared_norm(0),
            dec.squared_norm(1) + dec.squared_norm(2),
            dec.squared_norm(3),
        ];
        for (a, b) in masses.iter().zip(grid) {
            assert!((a - b).abs() < 1e-10, "{masses:?} vs {grid:?}");
        }
    }

    #[test]
    fn sparse_recovery_few_seeds() {
        let c = check_sparse_recovery(5).unwrap();
        assert!(c.passed, "{c:?}");
    }

    #[test]
    fn report_json() {
        let r = OracleReport::new(vec![check_histogram().unwrap()]);
        let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(v["passed"], true);
        assert_eq!(v["checks"][0]["name"], "histogram_benefit");
    }
}
