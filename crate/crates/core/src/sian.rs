//! The additive model: a bias plus one ReLU subnetwork per interaction set.
//!
//! Parameters live in one of three layouts:
//!
//! * `Default`: one [`Mlp`] per interaction set, evaluated one after another.
//! * `BlockSparse`: for every depth level, the level weights of all subnets
//!   packed into one [`BlockDiagMatrix`] and the biases concatenated, so a
//!   whole layer of every subnet runs as a single product.
//! * `Compressed`: the block-sparse levels stored as [`CsrMatrix`].
//!
//! All three evaluate each output with the same floating-point operations in
//! the same order, so forwards agree exactly, and conversions are lossless.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    add_l1_subgradient, loss, minibatches, AdagradState, EpochRecord, Mlp, Samples, Task, TaskHead, TrainConfig,
};
use crate::rng::Rng;
use crate::tensor::{block_forward_row, from_csr, multiversion, to_csr, BlockDiagMatrix, CsrMatrix, Matrix};

pub const DEFAULT_SUBNET_WIDTHS: [usize; 3] = [16, 12, 8];

/// A nonempty, strictly increasing list of feature indices.
///
/// Ordered by degree first, then lexicographically, which is the order the
/// interaction search discovers sets in.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct InteractionSet(Vec<usize>);

impl InteractionSet {
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::validation("interaction sets must be nonempty"));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::validation(format!("duplicate feature in {indices:?}")));
        }
        Ok(Self(indices))
    }

    pub fn singleton(i: usize) -> Self {
        Self(vec![i])
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    /// `0+3+7`
    pub fn label(&self) -> String {
        self.0.iter().map(usize::to_string).collect::<Vec<_>>().join("+")
    }

    /// The subsets with one index removed, in lexicographic order.
    pub fn immediate_subsets(&self) -> Vec<InteractionSet> {
        if self.0.len() < 2 {
            return Vec::new();
        }
        let mut out: Vec<_> = (0..self.0.len())
            .map(|skip| {
                let v = self
                    .0
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != skip)
                    .map(|(_, &x)| x)
                    .collect();
                InteractionSet(v)
            })
            .collect();
        out.sort();
        out
    }

    pub fn mask(&self) -> Option<u64> {
        self.0.iter().try_fold(0u64, |m, &i| (i < 64).then(|| m | (1 << i)))
    }
}

impl TryFrom<Vec<usize>> for InteractionSet {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        if v.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::format(format!(
                "interaction set {v:?} is not strictly increasing"
            )));
        }
        InteractionSet::new(v)
    }
}

impl From<InteractionSet> for Vec<usize> {
    fn from(s: InteractionSet) -> Self {
        s.0
    }
}

impl Ord for InteractionSet {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for InteractionSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for InteractionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{{{}}}",
            self.0.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
        )
    }
}

/// Everything needed to shape a model's parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GamArchitecture {
    pub d: usize,
    pub family: Vec<InteractionSet>,
    /// Hidden widths shared by every subnet.
    pub widths: Vec<usize>,
    pub head: TaskHead,
}

impl GamArchitecture {
    pub fn new(d: usize, family: Vec<InteractionSet>, widths: Vec<usize>, head: TaskHead) -> Result<Self> {
        let arch = Self {
            d,
            family,
            widths,
            head,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.contains(&0) {
            return Err(Error::validation("subnet widths must be positive"));
        }
        let mut seen = std::collections::HashSet::new();
        for set in &self.family {
            if let Some(&bad) = set.indices().iter().find(|&&i| i >= self.d) {
                return Err(Error::validation(format!(
                    "feature {bad} in {set} is out of range for d = {}",
                    self.d
                )));
            }
            if !seen.insert(set) {
                return Err(Error::validation(format!("duplicate interaction set {set}")));
            }
        }
        Ok(())
    }

    /// Highest interaction degree (0 for a bias-only model).
    pub fn order(&self) -> usize {
        self.family.iter().map(InteractionSet::degree).max().unwrap_or(0)
    }

    /// Subnet depth: hidden layers plus the output layer.
    pub fn depth(&self) -> usize {
        self.widths.len() + 1
    }

    pub fn subnet_widths(&self, t: usize) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.widths.len() + 2);
        w.push(self.family[t].degree());
        w.extend_from_slice(&self.widths);
        w.push(1);
        w
    }

    /// Input width of level `l` for subnet `t`, and its output width.
    fn level_dims(&self, t: usize, l: usize) -> (usize, usize) {
        let input = if l == 0 {
            self.family[t].degree()
        } else {
            self.widths[l - 1]
        };
        let output = if l == self.widths.len() { 1 } else { self.widths[l] };
        (input, output)
    }

    fn level_offsets(&self, l: usize) -> (Vec<usize>, Vec<usize>) {
        let mut rows = vec![0];
        let mut cols = vec![0];
        for t in 0..self.family.len() {
            let (i, o) = self.level_dims(t, l);
            rows.push(rows[t] + i);
            cols.push(cols[t] + o);
        }
        (rows, cols)
    }

    /// Feature columns feeding the first block-sparse level, set by set.
    pub fn gather_plan(&self) -> Vec<usize> {
        self.family.iter().flat_map(|s| s.indices().iter().copied()).collect()
    }

    pub fn param_count(&self) -> usize {
        1 + (0..self.family.len())
            .map(|t| {
                self.subnet_widths(t)
                    .windows(2)
                    .map(|w| w[0] * w[1] + w[1])
                    .sum::<usize>()
            })
            .sum::<usize>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Default,
    BlockSparse,
    Compressed,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Mode::Default),
            "block_sparse" | "block-sparse" => Ok(Mode::BlockSparse),
            "compressed" => Ok(Mode::Compressed),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct BlockLevel {
    weights: BlockDiagMatrix,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct CsrLevel {
    weights: CsrMatrix,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Params {
    Default(Vec<Mlp>),
    BlockSparse(Vec<BlockLevel>),
    Compressed(Vec<CsrLevel>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SianModel {
    arch: GamArchitecture,
    bias: f64,
    params: Params,
}

/// One subnet's outputs on a tensor grid over its features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeGrid {
    pub interaction: InteractionSet,
    pub axes: Vec<Vec<f64>>,
    /// Row-major over the axes, last axis fastest.
    pub values: Vec<f64>,
}

impl ShapeGrid {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Coordinates of grid point `i`.
    pub fn point(&self, mut i: usize) -> Vec<f64> {
        let mut coords = vec![0.0; self.axes.len()];
        for (a, axis) in self.axes.iter().enumerate().rev() {
            coords[a] = axis[i % axis.len()];
            i /= axis.len();
        }
        coords
    }

    /// CSV with one column per axis then `value`. Column names default to
    /// `x<feature index>`.
    pub fn to_csv(&self, names: Option<&[String]>) -> String {
        let mut out = String::new();
        for &f in self.interaction.indices() {
            let name = names.and_then(|n| n.get(f)).cloned().unwrap_or_else(|| format!("x{f}"));
            out.push_str(&name);
            out.push(',');
        }
        out.push_str("value\n");
        for (i, v) in self.values.iter().enumerate() {
            for c in self.point(i) {
                out.push_str(&format!("{c},"));
            }
            out.push_str(&format!("{v}\n"));
        }
        out
    }
}

/// Points per axis used when no grid size is given.
pub fn default_grid_points(degree: usize) -> usize {
    match degree {
        1 => 256,
        2 => 64,
        3 => 16,
        _ => 8,
    }
}

/// Evenly spaced axes spanning `[lo[f], hi[f]]` for every feature of `set`.
pub fn grid_axes(set: &InteractionSet, lo: &[f64], hi: &[f64], points: usize) -> Vec<Vec<f64>> {
    set.indices()
        .iter()
        .map(|&f| {
            if points == 1 {
                return vec![0.5 * (lo[f] + hi[f])];
            }
            (0..points)
                .map(|i| lo[f] + (hi[f] - lo[f]) * i as f64 / (points - 1) as f64)
                .collect()
        })
        .collect()
}

impl SianModel {
    /// Random subnets from `rng`, zero bias, default mode.
    pub fn build(arch: GamArchitecture, rng: &mut Rng) -> Result<Self> {
        arch.validate()?;
        let subnets = (0..arch.family.len())
            .map(|t| Mlp::new(&arch.subnet_widths(t), rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            arch,
            bias: 0.0,
            params: Params::Default(subnets),
        })
    }

    /// All-zero subnets.
    pub fn zeros(arch: GamArchitecture) -> Result<Self> {
        arch.validate()?;
        let subnets = (0..arch.family.len())
            .map(|t| Mlp::zeros(&arch.subnet_widths(t)))
            .collect::<Result<_>>()?;
        Ok(Self {
            arch,
            bias: 0.0,
            params: Params::Default(subnets),
        })
    }

    pub fn from_subnets(arch: GamArchitecture, bias: f64, subnets: Vec<Mlp>) -> Result<Self> {
        arch.validate()?;
        if subnets.len() != arch.family.len() {
            return Err(Error::validation(format!(
                "{} subnets for {} interaction sets",
                subnets.len(),
                arch.family.len()
            )));
        }
        for (t, s) in subnets.iter().enumerate() {
            if s.widths() != arch.subnet_widths(t) {
                return Err(Error::validation(format!("subnet {t} has widths {:?}", s.widths())));
            }
        }
        Ok(Self {
            arch,
            bias,
            params: Params::Default(subnets),
        })
    }

    pub fn arch(&self) -> &GamArchitecture {
        &self.arch
    }

    pub fn family(&self) -> &[InteractionSet] {
        &self.arch.family
    }

    pub fn head(&self) -> TaskHead {
        self.arch.head
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn set_bias(&mut self, bias: f64) {
        self.bias = bias;
    }

    pub fn mode(&self) -> Mode {
        match self.params {
            Params::Default(_) => Mode::Default,
            Params::BlockSparse(_) => Mode::BlockSparse,
            Params::Compressed(_) => Mode::Compressed,
        }
    }

    /// Trainable parameters, bias included. Identical in every mode.
    pub fn param_count(&self) -> usize {
        1 + match &self.params {
            Params::Default(nets) => nets.iter().map(Mlp::param_count).sum::<usize>(),
            Params::BlockSparse(levels) => levels.iter().map(|l| l.weights.nnz() + l.bias.len()).sum(),
            Params::Compressed(levels) => levels.iter().map(|l| l.weights.nnz() + l.bias.len()).sum(),
        }
    }

    /// Bias set to the target mean (regression) or base-rate logit
    /// (classification).
    pub fn init_bias_from_targets(&mut self, y: &[f64]) {
        if y.is_empty() {
            return;
        }
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        self.bias = match self.arch.head.task {
            Task::Regression => mean,
            Task::Classification => {
                let p = mean.clamp(1e-6, 1.0 - 1e-6);
                (p / (1.0 - p)).ln()
            }
        };
    }

    pub fn subnet(&self, t: usize) -> Result<Mlp> {
        if t >= self.arch.family.len() {
            return Err(Error::Lookup(format!("#{t}")));
        }
        match &self.params {
            Params::Default(nets) => Ok(nets[t].clone()),
            Params::BlockSparse(levels) => subnet_from_levels(levels.iter().map(|l| (&l.weights, &l.bias)), t),
            Params::Compressed(_) => {
                let block = self.convert(Mode::BlockSparse);
                block.subnet(t)
            }
        }
    }

    fn check_batch(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.arch.d {
            return Err(Error::shape(format!(
                "batch has {} columns, model expects d = {}",
                batch.cols(),
                self.arch.d
            )));
        }
        Ok(())
    }

    /// Bias plus every subnet's output, summed in family order. Logits for
    /// classification.
    pub fn forward(&self, batch: &Matrix) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        let n = batch.rows();
        let mut pred = vec![self.bias; n];
        match &self.params {
            Params::Default(nets) => {
                for (net, set) in nets.iter().zip(&self.arch.family) {
                    let out = net.forward(&batch.select_columns(set.indices())?)?;
                    for (p, o) in pred.iter_mut().zip(out) {
                        *p += o;
                    }
                }
            }
            Params::BlockSparse(levels) => {
                let last = levels.len() - 1;
                let mut h = self.gather(batch)?;
                for (l, level) in levels.iter().enumerate() {
                    let mut next = Matrix::zeros(n, level.weights.cols());
                    for r in 0..n {
                        let o = next.row_mut(r);
                        block_forward_row(&level.weights, h.row(r), o);
                        add_bias_relu(o, &level.bias, l < last);
                    }
                    h = next;
                }
                sum_outputs(&h, &mut pred);
            }
            Params::Compressed(levels) => {
                let last = levels.len() - 1;
                let mut h = self.gather(batch)?;
                for (l, level) in levels.iter().enumerate() {
                    let mut next = level.weights.forward(&h)?;
                    for r in 0..n {
                        add_bias_relu(next.row_mut(r), &level.bias, l < last);
                    }
                    h = next;
                }
                sum_outputs(&h, &mut pred);
            }
        }
        Ok(pred)
    }

    /// Predictions through the inverse link: probabilities for
    /// classification, values for regression.
    pub fn predict(&self, batch: &Matrix) -> Result<Vec<f64>> {
        let head = self.arch.head;
        Ok(self.forward(batch)?.into_iter().map(|z| head.inverse_link(z)).collect())
    }

    fn gather(&self, batch: &Matrix) -> Result<Matrix> {
        batch.select_columns(&self.arch.gather_plan())
    }

    /// Re-lay the parameters out for `target`. Lossless in every direction.
    pub fn convert(&self, target: Mode) -> SianModel {
        let params = match (&self.params, target) {
            (p, m) if self.mode() == m => p.clone(),
            (Params::Default(nets), Mode::BlockSparse) => Params::BlockSparse(self.levels_from_subnets(nets)),
            (Params::Default(nets), Mode::Compressed) => Params::Compressed(compress(&self.levels_from_subnets(nets))),
            (Params::BlockSparse(levels), Mode::Default) => {
                Params::Default(split_levels(levels, self.arch.family.len()))
            }
            (Params::BlockSparse(levels), Mode::Compressed) => Params::Compressed(compress(levels)),
            (Params::Compressed(levels), m) => {
                let block = self.decompress(levels);
                match m {
                    Mode::Default => Params::Default(split_levels(&block, self.arch.family.len())),
                    _ => Params::BlockSparse(block),
                }
            }
            _ => unreachable!(),
        };
        SianModel {
            arch: self.arch.clone(),
            bias: self.bias,
            params,
        }
    }

    fn levels_from_subnets(&self, nets: &[Mlp]) -> Vec<BlockLevel> {
        (0..self.arch.depth())
            .map(|l| {
                let blocks = nets.iter().map(|n| n.weights()[l].clone()).collect();
                let bias = nets.iter().flat_map(|n| n.biases()[l].iter().copied()).collect();
                BlockLevel {
                    weights: BlockDiagMatrix::new(blocks).expect("subnet weights are nonempty"),
                    bias,
                }
            })
            .collect()
    }

    fn decompress(&self, levels: &[CsrLevel]) -> Vec<BlockLevel> {
        levels
            .iter()
            .enumerate()
            .map(|(l, level)| {
                let (ro, co) = self.arch.level_offsets(l);
                BlockLevel {
                    weights: from_csr(&level.weights, &ro, &co).expect("compressed levels follow the architecture"),
                    bias: level.bias.clone(),
                }
            })
            .collect()
    }

    /// Raw output of the subnet for `set` on the tensor grid `axes` (bias
    /// excluded).
    pub fn eval_shape(&self, set: &InteractionSet, axes: &[Vec<f64>]) -> Result<ShapeGrid> {
        let t = self
            .arch
            .family
            .iter()
            .position(|s| s == set)
            .ok_or_else(|| Error::Lookup(set.to_string()))?;
        if axes.len() != set.degree() {
            return Err(Error::shape(format!(
                "{} axes for a degree-{} set",
                axes.len(),
                set.degree()
            )));
        }
        let total: usize = axes.iter().map(Vec::len).product();
        let mut points = Matrix::zeros(total, axes.len());
        for i in 0..total {
            let mut rem = i;
            for a in (0..axes.len()).rev() {
                let len = axes[a].len();
                points.set(i, a, axes[a][rem % len]);
                rem /= len;
            }
        }
        let values = self.subnet(t)?.forward(&points)?;
        Ok(ShapeGrid {
            interaction: set.clone(),
            axes: axes.to_vec(),
            values,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_doc())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: SianDoc = serde_json::from_str(s)?;
        SianModel::from_doc(doc)
    }

    pub(crate) fn to_doc(&self) -> SianDoc {
        let levels = match &self.params {
            Params::Compressed(levels) => levels
                .iter()
                .map(|l| LevelDoc {
                    rows: l.weights.rows(),
                    cols: l.weights.cols(),
                    bias: l.bias.clone(),
                    weights: None,
                    values: Some(l.weights.values().to_vec()),
                    col_indices: Some(l.weights.col_indices().to_vec()),
                    row_starts: Some(l.weights.row_starts().to_vec()),
                })
                .collect(),
            _ => {
                let block = self.convert(Mode::BlockSparse);
                let Params::BlockSparse(levels) = block.params else {
                    unreachable!()
                };
                levels
                    .into_iter()
                    .map(|l| LevelDoc {
                        rows: l.weights.rows(),
                        cols: l.weights.cols(),
                        bias: l.bias,
                        weights: Some(l.weights.to_dense().into_vec()),
                        values: None,
                        col_indices: None,
                        row_starts: None,
                    })
                    .collect()
            }
        };
        SianDoc {
            format: FORMAT_TAG.into(),
            version: FORMAT_VERSION,
            d: self.arch.d,
            family: self.arch.family.clone(),
            widths: self.arch.widths.clone(),
            task: self.arch.head.task,
            mode: self.mode(),
            bias: self.bias,
            levels,
        }
    }

    pub(crate) fn from_doc(doc: SianDoc) -> Result<Self> {
        if doc.format != FORMAT_TAG {
            return Err(Error::format(format!(
                "expected format {FORMAT_TAG:?}, found {:?}",
                doc.format
            )));
        }
        if doc.version != FORMAT_VERSION {
            return Err(Error::format(format!("unsupported model version {}", doc.version)));
        }
        let arch = GamArchitecture::new(doc.d, doc.family, doc.widths, TaskHead { task: doc.task })?;
        if doc.levels.len() != arch.depth() {
            return Err(Error::format(format!(
                "{} levels for depth {}",
                doc.levels.len(),
                arch.depth()
            )));
        }
        let mut block = Vec::with_capacity(doc.levels.len());
        let mut csr = Vec::with_capacity(doc.levels.len());
        for (l, level) in doc.levels.into_iter().enumerate() {
            let (ro, co) = arch.level_offsets(l);
            let (rows, cols) = (*ro.last().unwrap(), *co.last().unwrap());
            if level.rows != rows || level.cols != cols || level.bias.len() != cols {
                return Err(Error::format(format!("level {l} does not match the architecture")));
            }
            if !level.bias.iter().all(|v| v.is_finite()) {
                return Err(Error::format(format!("level {l} has non-finite biases")));
            }
            match (level.weights, level.values, level.col_indices, level.row_starts) {
                (Some(w), None, None, None) if doc.mode != Mode::Compressed => {
                    let dense = Matrix::from_vec(rows, cols, w)?;
                    let weights = if arch.family.is_empty() {
                        BlockDiagMatrix::new(Vec::new())?
                    } else {
                        BlockDiagMatrix::from_dense(&dense, &ro, &co)?
                    };
                    block.push(BlockLevel {
                        weights,
                        bias: level.bias,
                    });
                }
                (None, Some(v), Some(c), Some(s)) if doc.mode == Mode::Compressed => {
                    let weights = CsrMatrix::new(rows, cols, v, c, s)?;
                    // validates the pattern against the architecture
                    from_csr(&weights, &ro, &co)?;
                    csr.push(CsrLevel {
                        weights,
                        bias: level.bias,
                    });
                }
                _ => {
                    return Err(Error::format(format!(
                        "level {l} storage does not match mode {:?}",
                        doc.mode
                    )))
                }
            }
        }
        let params = match doc.mode {
            Mode::Compressed => Params::Compressed(csr),
            Mode::BlockSparse => Params::BlockSparse(block),
            Mode::Default => Params::Default(split_levels(&block, arch.family.len())),
        };
        let model = SianModel {
            arch,
            bias: doc.bias,
            params,
        };
        Ok(model)
    }
}

const FORMAT_TAG: &str = "sian";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct SianDoc {
    format: String,
    version: u32,
    d: usize,
    family: Vec<InteractionSet>,
    widths: Vec<usize>,
    task: Task,
    mode: Mode,
    bias: f64,
    levels: Vec<LevelDoc>,
}

/// One depth level. Default and block-sparse models store the dense level
/// matrix (zeros outside the blocks included), compressed models store the
/// CSR triplet.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct LevelDoc {
    rows: usize,
    cols: usize,
    bias: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    col_indices: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    row_starts: Option<Vec<usize>>,
}

impl Serialize for SianModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_doc().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SianModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = SianDoc::deserialize(d)?;
        SianModel::from_doc(doc).map_err(serde::de::Error::custom)
    }
}

#[inline]
fn add_bias_relu(row: &mut [f64], bias: &[f64], relu: bool) {
    for (v, &b) in row.iter_mut().zip(bias) {
        *v += b;
        if relu && *v < 0.0 {
            *v = 0.0;
        }
    }
}

fn sum_outputs(h: &Matrix, pred: &mut [f64]) {
    for (r, p) in pred.iter_mut().enumerate() {
        for &o in h.row(r) {
            *p += o;
        }
    }
}

fn compress(levels: &[BlockLevel]) -> Vec<CsrLevel> {
    levels
        .iter()
        .map(|l| CsrLevel {
            weights: to_csr(&l.weights),
            bias: l.bias.clone(),
        })
        .collect()
}

fn split_levels(levels: &[BlockLevel], count: usize) -> Vec<Mlp> {
    (0..count)
        .map(|t| subnet_from_levels(levels.iter().map(|l| (&l.weights, &l.bias)), t).expect("levels hold every subnet"))
        .collect()
}

fn subnet_from_levels<'a>(levels: impl Iterator<Item = (&'a BlockDiagMatrix, &'a Vec<f64>)>, t: usize) -> Result<Mlp> {
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for (w, b) in levels {
        let (c0, c1) = (w.col_offsets()[t], w.col_offsets()[t + 1]);
        weights.push(w.blocks()[t].clone());
        biases.push(b[c0..c1].to_vec());
    }
    Mlp::from_parts(weights, biases)
}

/// Mini-batch Adagrad on a model, in the model's own layout.
///
/// In default mode every subnet runs its own forward and backward pass. In
/// block-sparse mode each depth level of all subnets is one fused pass over
/// preallocated buffers. Both perform identical arithmetic per parameter, so
/// they produce identical parameters from identical starts.
pub struct Trainer {
    cfg: TrainConfig,
    state: TrainerState,
    bias_state: AdagradState,
}

enum TrainerState {
    PerSubnet(Vec<AdagradState>),
    Fused(Box<FusedBuffers>),
}

struct FusedBuffers {
    optimizer: AdagradState,
    /// Activations, block-major: for each subnet, its level inputs then its
    /// output, each feature-major (width × batch). One subnet's slice stays
    /// cache-resident across all its levels.
    acts: Vec<f64>,
    /// Per subnet, the row offset (in units of batch) of each level input
    /// and of the output; the last entry closes the subnet.
    act_rows: Vec<Vec<usize>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
    /// `delta` transposed to batch-major.
    delta_rows: Vec<f64>,
    weight_scratch: Vec<f64>,
    /// Per level, the offset of each block's gradient in `grad_w`.
    grad_offsets: Vec<Vec<usize>>,
    grad_w: Vec<Vec<f64>>,
    grad_b: Vec<Vec<f64>>,
}

impl Trainer {
    /// Compressed models are trained in block-sparse layout; convert first.
    pub fn new(model: &SianModel, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let bias_state = AdagradState::with_epsilon(1, cfg.learning_rate, cfg.epsilon);
        let state = match &model.params {
            Params::Default(nets) => TrainerState::PerSubnet(
                nets.iter()
                    .map(|n| AdagradState::with_epsilon(n.param_count(), cfg.learning_rate, cfg.epsilon))
                    .collect(),
            ),
            Params::BlockSparse(levels) => {
                let total = levels.iter().map(|l| l.weights.nnz() + l.bias.len()).sum();
                let mut act_rows = Vec::with_capacity(model.arch.family.len());
                let mut next = 0;
                let mut widest = 1;
                for t in 0..model.arch.family.len() {
                    let mut rows = Vec::with_capacity(levels.len() + 2);
                    for l in 0..levels.len() {
                        rows.push(next);
                        let (i, o) = model.arch.level_dims(t, l);
                        next += i;
                        widest = widest.max(i).max(o);
                    }
                    rows.push(next);
                    next += 1;
                    rows.push(next);
                    act_rows.push(rows);
                }
                let grad_offsets = levels
                    .iter()
                    .map(|l| {
                        let mut off = vec![0];
                        for b in l.weights.blocks() {
                            off.push(off.last().unwrap() + b.data().len());
                        }
                        off
                    })
                    .collect();
                TrainerState::Fused(Box::new(FusedBuffers {
                    optimizer: AdagradState::with_epsilon(total, cfg.learning_rate, cfg.epsilon),
                    acts: vec![0.0; cfg.batch_size * next],
                    act_rows,
                    delta: vec![0.0; cfg.batch_size * widest],
                    delta_prev: vec![0.0; cfg.batch_size * widest],
                    delta_rows: vec![0.0; cfg.batch_size * widest],
                    weight_scratch: vec![0.0; widest],
                    grad_offsets,
                    grad_w: levels.iter().map(|l| vec![0.0; l.weights.nnz()]).collect(),
                    grad_b: levels.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
                }))
            }
            Params::Compressed(_) => {
                return Err(Error::validation(
                    "convert compressed models to block_sparse before training",
                ));
            }
        };
        Ok(Self {
            cfg: cfg.clone(),
            state,
            bias_state,
        })
    }

    /// One pass over `data` in shuffled mini-batches. Returns the mean data
    /// loss (L1 term excluded).
    pub fn epoch(&mut self, model: &mut SianModel, data: Samples<'_>, rng: &mut Rng) -> Result<f64> {
        if data.x.cols() != model.arch.d {
            return Err(Error::shape(format!(
                "data has {} columns, model expects {}",
                data.x.cols(),
                model.arch.d
            )));
        }
        if data.is_empty() {
            return Err(Error::domain("empty training set"));
        }
        let head = model.arch.head;
        let mut total = 0.0;
        for batch in minibatches(data.len(), self.cfg.batch_size, rng) {
            let y: Vec<f64> = batch.iter().map(|&i| data.y[i]).collect();
            let grad = match (&mut self.state, &mut model.params) {
                (TrainerState::PerSubnet(states), Params::Default(nets)) => {
                    let x = data.x.select_rows(&batch);
                    per_subnet_step(
                        nets,
                        &model.arch.family,
                        states,
                        model.bias,
                        head,
                        &x,
                        &y,
                        self.cfg.l1,
                        &mut total,
                    )?
                }
                (TrainerState::Fused(buf), Params::BlockSparse(levels)) => fused_step(
                    levels,
                    &model.arch.family,
                    buf,
                    model.bias,
                    head,
                    data,
                    &batch,
                    &y,
                    self.cfg.l1,
                    &mut total,
                )?,
                _ => return Err(Error::validation("model mode changed since the trainer was created")),
            };
            let mut b = [model.bias];
            self.bias_state.step(&mut b, &[grad.iter().sum()])?;
            model.bias = b[0];
        }
        Ok(total / data.len() as f64)
    }
}

#[allow(clippy::too_many_arguments)]
fn per_subnet_step(
    nets: &mut [Mlp],
    family: &[InteractionSet],
    states: &mut [AdagradState],
    bias: f64,
    head: TaskHead,
    x: &Matrix,
    y: &[f64],
    l1: f64,
    total: &mut f64,
) -> Result<Vec<f64>> {
    let mut pred = vec![bias; y.len()];
    let mut caches = Vec::with_capacity(nets.len());
    for (net, set) in nets.iter().zip(family) {
        let cache = net.forward_cached(&x.select_columns(set.indices())?)?;
        for (p, o) in pred.iter_mut().zip(&cache.output) {
            *p += o;
        }
        caches.push(cache);
    }
    let out = loss(head, &pred, y)?;
    *total += out.value * y.len() as f64;
    for ((net, cache), state) in nets.iter_mut().zip(&caches).zip(states) {
        let mut grads = net.backward(cache, &out.grad)?;
        for (g, w) in grads.weights.iter_mut().zip(net.weights()) {
            add_l1_subgradient(g.data_mut(), w.data(), l1);
        }
        net.apply_adagrad(&grads, state)?;
    }
    Ok(out.grad)
}

multiversion! {
    #[allow(clippy::too_many_arguments)]
    fn fused_step(
        levels: &mut [BlockLevel],
        family: &[InteractionSet],
        buf: &mut FusedBuffers,
        bias: f64,
        head: TaskHead,
        data: Samples<'_>,
        batch: &[usize],
        y: &[f64],
        l1: f64,
        total: &mut f64,
    ) -> Result<Vec<f64>> {
        // Every sum below runs over the same index, in the same order, as the
        // per-subnet kernels; only the loop nesting and memory layout differ.
        let n = batch.len();
        let depth = levels.len();
        let d = data.x.cols();
        let xs = data.x.data();
        let mut pred = vec![bias; n];

        for (t, set) in family.iter().enumerate() {
            let rows = &buf.act_rows[t];
            let acts = &mut buf.acts[rows[0] * n..rows[depth + 1] * n];
            for (c, &f) in set.indices().iter().enumerate() {
                for (dst, &r) in acts[c * n..(c + 1) * n].iter_mut().zip(batch) {
                    *dst = xs[r * d + f];
                }
            }
            for (l, level) in levels.iter().enumerate() {
                let block = &level.weights.blocks()[t];
                let c0 = level.weights.col_offsets()[t];
                let (k_rows, cols) = (block.rows(), block.cols());
                let split = (rows[l + 1] - rows[0]) * n;
                let (inputs, outputs) = acts.split_at_mut(split);
                let src = &inputs[(rows[l] - rows[0]) * n..];
                let relu = l + 1 < depth;
                for j in 0..cols {
                    let wcol = &mut buf.weight_scratch[..k_rows];
                    for (k, wv) in wcol.iter_mut().enumerate() {
                        *wv = block.data()[k * cols + j];
                    }
                    let o = &mut outputs[j * n..(j + 1) * n];
                    let bv = level.bias[c0 + j];
                    if relu {
                        weighted_row_sum(o, src, n, wcol, |v, _| {
                            let v = v + bv;
                            keep_if(v, !(v < 0.0))
                        });
                    } else {
                        weighted_row_sum(o, src, n, wcol, |v, _| v + bv);
                    }
                }
            }
            let out = &acts[(rows[depth] - rows[0]) * n..];
            for (p, &o) in pred.iter_mut().zip(out) {
                *p += o;
            }
        }
        let out = loss(head, &pred, y)?;
        *total += out.value * n as f64;

        for t in 0..family.len() {
            let rows = &buf.act_rows[t];
            buf.delta[..n].copy_from_slice(&out.grad);
            for l in (0..depth).rev() {
                let level = &levels[l];
                let block = &level.weights.blocks()[t];
                let c0 = level.weights.col_offsets()[t];
                let (k_rows, cols) = (block.rows(), block.cols());
                let act = &buf.acts[rows[l] * n..rows[l + 1] * n];
                let delta = &buf.delta[..cols * n];

                let dr = &mut buf.delta_rows[..n * cols];
                let gb = &mut buf.grad_b[l][c0..c0 + cols];
                for (j, g) in gb.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (r, &dv) in delta[j * n..(j + 1) * n].iter().enumerate() {
                        dr[r * cols + j] = dv;
                        acc += dv;
                    }
                    *g = acc;
                }
                let go = buf.grad_offsets[l][t];
                outer_product_sum(&mut buf.grad_w[l][go..go + k_rows * cols], cols, act, dr, n);

                if l > 0 {
                    for k in 0..k_rows {
                        let p = &mut buf.delta_prev[k * n..(k + 1) * n];
                        let a = &act[k * n..(k + 1) * n];
                        weighted_row_sum(p, delta, n, &block.data()[k * cols..(k + 1) * cols], |v, r| {
                            keep_if(v, !(a[r] <= 0.0))
                        });
                    }
                    std::mem::swap(&mut buf.delta, &mut buf.delta_prev);
                }
            }
        }

        let mut offset = 0;
        for (l, level) in levels.iter_mut().enumerate() {
            let mut goff = 0;
            for block in level.weights.blocks_mut() {
                let len = block.data().len();
                let g = &mut buf.grad_w[l][goff..goff + len];
                add_l1_subgradient(g, block.data(), l1);
                buf.optimizer.step_at(offset, block.data_mut(), g);
                offset += len;
                goff += len;
            }
            buf.optimizer.step_at(offset, &mut level.bias, &buf.grad_b[l]);
            offset += level.bias.len();
        }
        Ok(out.grad)
    }
}

/// `v` when `keep`, else `+0.0`; branch-free so ReLU masks vectorize.
#[inline(always)]
fn keep_if(v: f64, keep: bool) -> f64 {
    f64::from_bits(v.to_bits() & 0u64.wrapping_sub(keep as u64))
}

/// `out[r] = epilogue(Σᵢ src[i][r]·w[i], r)` with `src` holding `w.len()`
/// rows of length `n`; each sum starts at zero and runs over `i` ascending.
#[inline(always)]
fn weighted_row_sum(out: &mut [f64], src: &[f64], n: usize, w: &[f64], epilogue: impl Fn(f64, usize) -> f64) {
    const R: usize = 16;
    let mut r = 0;
    while r + R <= n {
        let mut acc = [0.0f64; R];
        for (i, &wv) in w.iter().enumerate() {
            let s: &[f64; R] = src[i * n + r..i * n + r + R].try_into().unwrap();
            for q in 0..R {
                acc[q] += s[q] * wv;
            }
        }
        for (q, (o, v)) in out[r..r + R].iter_mut().zip(acc).enumerate() {
            *o = epilogue(v, r + q);
        }
        r += R;
    }
    for (rr, o) in out.iter_mut().enumerate().take(n).skip(r) {
        let mut acc = 0.0;
        for (i, &wv) in w.iter().enumerate() {
            acc += src[i * n + rr] * wv;
        }
        *o = epilogue(acc, rr);
    }
}

/// `g[k][j] = Σ_r a[k][r]·d[r][j]` for a `rows × cols` block, summing over
/// `r` ascending from zero. `a` is feature-major, `d` batch-major.
#[inline(always)]
fn outer_product_sum(g: &mut [f64], cols: usize, a: &[f64], d: &[f64], n: usize) {
    let rows = g.len() / cols.max(1);
    let mut k = 0;
    while k < rows {
        let kt = if rows - k >= 4 { 4 } else { 1 };
        let mut j = 0;
        while j < cols {
            let jt = match cols - j {
                8.. => 8,
                4..=7 => 4,
                _ => 1,
            };
            match (kt, jt) {
                (4, 8) => tile::<4, 8>(g, cols, a, d, n, k, j),
                (1, 8) => tile::<1, 8>(g, cols, a, d, n, k, j),
                (4, 4) => tile::<4, 4>(g, cols, a, d, n, k, j),
                (4, _) => tile::<4, 1>(g, cols, a, d, n, k, j),
                (_, 4) => tile::<1, 4>(g, cols, a, d, n, k, j),
                _ => tile::<1, 1>(g, cols, a, d, n, k, j),
            }
            j += jt;
        }
        k += kt;
    }
}

#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn tile<const KT: usize, const JT: usize>(
    g: &mut [f64],
    cols: usize,
    a: &[f64],
    d: &[f64],
    n: usize,
    k0: usize,
    j0: usize,
) {
    let mut acc = [[0.0f64; JT]; KT];
    let a_rows: [&[f64]; KT] = std::array::from_fn(|kk| &a[(k0 + kk) * n..(k0 + kk + 1) * n]);
    for r in 0..n {
        let dv: &[f64; JT] = d[r * cols + j0..r * cols + j0 + JT].try_into().unwrap();
        for kk in 0..KT {
            let av = a_rows[kk][r];
            for jj in 0..JT {
                acc[kk][jj] += av * dv[jj];
            }
        }
    }
    for kk in 0..KT {
        g[(k0 + kk) * cols + j0..(k0 + kk) * cols + j0 + JT].copy_from_slice(&acc[kk]);
    }
}

/// Train with mini-batch Adagrad in block-sparse layout, returning the
/// validation-best parameters (in the input model's mode) and the per-epoch
/// loss trace. The bias is first reset from the training targets.
pub fn train_sian(
    model: &SianModel,
    train: Samples<'_>,
    val: Option<Samples<'_>>,
    cfg: &TrainConfig,
) -> Result<(SianModel, Vec<EpochRecord>)> {
    let original = model.mode();
    let mut work = model.convert(Mode::BlockSparse);
    work.init_bias_from_targets(train.y);
    let mut trainer = Trainer::new(&work, cfg)?;
    let mut rng = Rng::new(cfg.seed);
    let mut best = (f64::INFINITY, work.clone());
    let mut trace = Vec::with_capacity(cfg.max_epochs);
    let mut stale = 0;
    let head = work.head();
    for epoch in 0..cfg.max_epochs {
        let train_loss = trainer.epoch(&mut work, train, &mut rng)?;
        if !train_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: train_loss,
            });
        }
        let val_loss = match val {
            Some(v) => Some(loss(head, &work.forward(v.x)?, v.y)?.value),
            None => None,
        };
        trace.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        let score = val_loss.unwrap_or(train_loss);
        if score < best.0 {
            best = (score, work.clone());
            stale = 0;
        } else {
            stale += 1;
            if cfg.patience.is_some_and(|p| stale >= p) {
                break;
            }
        }
    }
    let chosen = if val.is_some() { best.1 } else { work };
    Ok((chosen.convert(original), trace))
}
