//! Dense, block-diagonal and CSR matrices.
//!
//! Every product sums over the inner dimension in ascending index order,
//! starting from `0.0`. Kernels may iterate in whatever loop order is fastest
//! as long as each output element sees the same sequence of additions, which
//! is what lets different execution modes agree bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Defines a function whose body is compiled twice, once for the baseline
/// target and once with AVX2 enabled, picking one at runtime. Only vector
/// width changes; no fused multiply-add is enabled, so results are identical.
macro_rules! multiversion {
    ($(#[$m:meta])* $vis:vis fn $name:ident$(<$($lt:lifetime),+>)?($($arg:ident: $ty:ty),* $(,)?) $(-> $ret:ty)? $body:block) => {
        $(#[$m])*
        $vis fn $name$(<$($lt),+>)?($($arg: $ty),*) $(-> $ret)? {
            #[inline(always)]
            fn body$(<$($lt),+>)?($($arg: $ty),*) $(-> $ret)? $body
            #[cfg(target_arch = "x86_64")]
            {
                #[target_feature(enable = "avx2")]
                unsafe fn avx2$(<$($lt),+>)?($($arg: $ty),*) $(-> $ret)? {
                    body($($arg),*)
                }
                if std::arch::is_x86_feature_detected!("avx2") {
                    // SAFETY: AVX2 support was detected just above.
                    return unsafe { avx2($($arg),*) };
                }
            }
            body($($arg),*)
        }
    };
}
pub(crate) use multiversion;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        matmul(self, rhs)
    }

    /// Copy of the listed columns, in the listed order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Matrix> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.cols) {
            return Err(Error::shape(format!(
                "column {bad} out of range for {} columns",
                self.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, columns.len());
        for i in 0..self.rows {
            let src = self.row(i);
            for (dst, &c) in out.row_mut(i).iter_mut().zip(columns) {
                *dst = src[c];
            }
        }
        Ok(out)
    }

    /// Copy of the listed rows, in the listed order.
    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Matrix {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }
}

/// `a · b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::shape(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        gemv_row(a.row(i), &b.data, b.cols, out.row_mut(i));
    }
    Ok(out)
}

/// `aᵀ · b`, summing over rows of `a` and `b` in ascending order.
pub fn matmul_at_b(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(Error::shape(format!(
            "cannot multiply ({}x{})ᵀ by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.cols, b.cols);
    at_b_kernel(&a.data, a.cols, &b.data, b.cols, &mut out.data);
    Ok(out)
}

multiversion! {
    fn at_b_kernel(a: &[f64], a_cols: usize, b: &[f64], b_cols: usize, out: &mut [f64]) {
        for (ar, br) in a.chunks_exact(a_cols.max(1)).zip(b.chunks_exact(b_cols.max(1))) {
            for (k, &av) in ar.iter().enumerate() {
                let dst = &mut out[k * b_cols..(k + 1) * b_cols];
                for (d, &bv) in dst.iter_mut().zip(br) {
                    *d += av * bv;
                }
            }
        }
    }
}

/// `a · bᵀ`.
pub fn matmul_a_bt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::shape(format!(
            "cannot multiply {}x{} by ({}x{})ᵀ",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    a_bt_kernel(&a.data, a.rows, &b.data, b.rows, a.cols, &mut out.data);
    Ok(out)
}

multiversion! {
    fn a_bt_kernel(a: &[f64], a_rows: usize, b: &[f64], b_rows: usize, inner: usize, out: &mut [f64]) {
        for i in 0..a_rows {
            let ar = &a[i * inner..(i + 1) * inner];
            for j in 0..b_rows {
                let mut acc = 0.0;
                for (x, y) in ar.iter().zip(&b[j * inner..(j + 1) * inner]) {
                    acc += x * y;
                }
                out[i * b_rows + j] = acc;
            }
        }
    }
}

/// `out += x · w` for one row `x` and a row-major `w` with `cols` columns.
/// `out` must start zeroed for a plain product.
#[inline(always)]
pub(crate) fn gemv_row(x: &[f64], w: &[f64], cols: usize, out: &mut [f64]) {
    for (k, &xk) in x.iter().enumerate() {
        let wk = &w[k * cols..(k + 1) * cols];
        for (o, &wv) in out.iter_mut().zip(wk) {
            *o += xk * wv;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiagMatrix {
    blocks: Vec<Matrix>,
    row_offsets: Vec<usize>,
    col_offsets: Vec<usize>,
}

impl BlockDiagMatrix {
    pub fn new(blocks: Vec<Matrix>) -> Result<Self> {
        let mut row_offsets = Vec::with_capacity(blocks.len() + 1);
        let mut col_offsets = Vec::with_capacity(blocks.len() + 1);
        row_offsets.push(0);
        col_offsets.push(0);
        for (i, b) in blocks.iter().enumerate() {
            if b.rows == 0 || b.cols == 0 {
                return Err(Error::shape(format!("block {i} is empty ({}x{})", b.rows, b.cols)));
            }
            row_offsets.push(row_offsets[i] + b.rows);
            col_offsets.push(col_offsets[i] + b.cols);
        }
        Ok(Self {
            blocks,
            row_offsets,
            col_offsets,
        })
    }

    pub fn rows(&self) -> usize {
        *self.row_offsets.last().unwrap()
    }

    pub fn cols(&self) -> usize {
        *self.col_offsets.last().unwrap()
    }

    pub fn blocks(&self) -> &[Matrix] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Matrix] {
        &mut self.blocks
    }

    pub fn into_blocks(self) -> Vec<Matrix> {
        self.blocks
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_offsets(&self) -> &[usize] {
        &self.col_offsets
    }

    /// Stored entries, i.e. Σ rows × cols over blocks.
    pub fn nnz(&self) -> usize {
        self.blocks.iter().map(|b| b.rows * b.cols).sum()
    }

    pub fn to_dense(&self) -> Matrix {
        let mut dense = Matrix::zeros(self.rows(), self.cols());
        for (b, block) in self.blocks.iter().enumerate() {
            let (r0, c0) = (self.row_offsets[b], self.col_offsets[b]);
            for i in 0..block.rows {
                dense.row_mut(r0 + i)[c0..c0 + block.cols].copy_from_slice(block.row(i));
            }
        }
        dense
    }

    /// Rebuild from a dense matrix, checking that every entry outside the
    /// blocks given by `row_offsets`/`col_offsets` is zero.
    pub fn from_dense(dense: &Matrix, row_offsets: &[usize], col_offsets: &[usize]) -> Result<Self> {
        check_offsets(row_offsets, col_offsets, dense.rows, dense.cols)?;
        let nblocks = row_offsets.len() - 1;
        let mut blocks = Vec::with_capacity(nblocks);
        let mut b = 0;
        for i in 0..dense.rows {
            while row_offsets[b + 1] <= i {
                b += 1;
            }
            let (c0, c1) = (col_offsets[b], col_offsets[b + 1]);
            let row = dense.row(i);
            if row[..c0].iter().chain(&row[c1..]).any(|&v| v != 0.0) {
                return Err(Error::format(format!("row {i} has nonzero entries outside block {b}")));
            }
        }
        for b in 0..nblocks {
            let (r0, r1) = (row_offsets[b], row_offsets[b + 1]);
            let (c0, c1) = (col_offsets[b], col_offsets[b + 1]);
            let mut data = Vec::with_capacity((r1 - r0) * (c1 - c0));
            for i in r0..r1 {
                data.extend_from_slice(&dense.row(i)[c0..c1]);
            }
            blocks.push(Matrix::from_vec(r1 - r0, c1 - c0, data)?);
        }
        BlockDiagMatrix::new(blocks)
    }

    /// `x · W` where each batch row of `x` holds the per-block inputs laid out
    /// contiguously in block order.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        block_forward(self, x)
    }
}

fn check_offsets(row_offsets: &[usize], col_offsets: &[usize], rows: usize, cols: usize) -> Result<()> {
    if row_offsets.len() != col_offsets.len() || row_offsets.is_empty() {
        return Err(Error::format("row and column offsets must have equal nonzero length"));
    }
    if row_offsets[0] != 0 || col_offsets[0] != 0 {
        return Err(Error::format("offsets must start at zero"));
    }
    for w in row_offsets.windows(2).chain(col_offsets.windows(2)) {
        if w[1] <= w[0] {
            return Err(Error::format("offsets must be strictly increasing"));
        }
    }
    if *row_offsets.last().unwrap() != rows || *col_offsets.last().unwrap() != cols {
        return Err(Error::format(format!(
            "offsets end at {}x{} but matrix is {rows}x{cols}",
            row_offsets.last().unwrap(),
            col_offsets.last().unwrap()
        )));
    }
    Ok(())
}

pub fn block_forward(w: &BlockDiagMatrix, x: &Matrix) -> Result<Matrix> {
    if x.cols != w.rows() {
        return Err(Error::shape(format!(
            "input has {} columns but block matrix expects {}",
            x.cols,
            w.rows()
        )));
    }
    let mut out = Matrix::zeros(x.rows, w.cols());
    for r in 0..x.rows {
        block_forward_row(w, x.row(r), out.row_mut(r));
    }
    Ok(out)
}

/// One batch row of [`block_forward`]; `out` must be zeroed.
#[inline]
pub(crate) fn block_forward_row(w: &BlockDiagMatrix, x: &[f64], out: &mut [f64]) {
    for (b, block) in w.blocks.iter().enumerate() {
        let xin = &x[w.row_offsets[b]..w.row_offsets[b + 1]];
        let o = &mut out[w.col_offsets[b]..w.col_offsets[b + 1]];
        gemv_row(xin, &block.data, block.cols, o);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    col_indices: Vec<usize>,
    row_starts: Vec<usize>,
}

impl CsrMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        col_indices: Vec<usize>,
        row_starts: Vec<usize>,
    ) -> Result<Self> {
        if row_starts.len() != rows + 1 {
            return Err(Error::format(format!(
                "row_starts has {} entries, expected {}",
                row_starts.len(),
                rows + 1
            )));
        }
        if row_starts[0] != 0 || *row_starts.last().unwrap() != values.len() {
            return Err(Error::format("row_starts must run from 0 to the value count"));
        }
        if col_indices.len() != values.len() {
            return Err(Error::format("col_indices and values differ in length"));
        }
        for r in 0..rows {
            let (s, e) = (row_starts[r], row_starts[r + 1]);
            if e < s {
                return Err(Error::format(format!("row_starts decreases at row {r}")));
            }
            let cs = &col_indices[s..e];
            if cs.iter().any(|&c| c >= cols) {
                return Err(Error::format(format!("column index out of range in row {r}")));
            }
            if cs.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::format(format!("column indices not increasing in row {r}")));
            }
        }
        Ok(Self {
            rows,
            cols,
            values,
            col_indices,
            row_starts,
        })
    }

    pub fn empty() -> Self {
        Self {
            rows: 0,
            cols: 0,
            values: Vec::new(),
            col_indices: Vec::new(),
            row_starts: vec![0],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn row_starts(&self) -> &[usize] {
        &self.row_starts
    }

    /// `x · C`. Each output column accumulates its stored entries in
    /// ascending row order.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols != self.rows {
            return Err(Error::shape(format!(
                "input has {} columns but CSR matrix has {} rows",
                x.cols, self.rows
            )));
        }
        let mut out = Matrix::zeros(x.rows, self.cols);
        for r in 0..x.rows {
            let xr = x.row(r);
            let o = out.row_mut(r);
            for (k, &xk) in xr.iter().enumerate() {
                for e in self.row_starts[k]..self.row_starts[k + 1] {
                    o[self.col_indices[e]] += xk * self.values[e];
                }
            }
        }
        Ok(out)
    }
}

pub fn to_csr(w: &BlockDiagMatrix) -> CsrMatrix {
    let mut values = Vec::with_capacity(w.nnz());
    let mut col_indices = Vec::with_capacity(w.nnz());
    let mut row_starts = Vec::with_capacity(w.rows() + 1);
    row_starts.push(0);
    for (b, block) in w.blocks.iter().enumerate() {
        let c0 = w.col_offsets[b];
        for i in 0..block.rows {
            values.extend_from_slice(block.row(i));
            col_indices.extend(c0..c0 + block.cols);
            row_starts.push(values.len());
        }
    }
    CsrMatrix {
        rows: w.rows(),
        cols: w.cols(),
        values,
        col_indices,
        row_starts,
    }
}

/// Inverse of [`to_csr`]. Fails unless every row stores exactly the full
/// column range of its block.
pub fn from_csr(c: &CsrMatrix, row_offsets: &[usize], col_offsets: &[usize]) -> Result<BlockDiagMatrix> {
    if row_offsets == [0] && col_offsets == [0] {
        if c.rows != 0 || c.cols != 0 {
            return Err(Error::format("empty offsets for a nonempty CSR matrix"));
        }
        return BlockDiagMatrix::new(Vec::new());
    }
    check_offsets(row_offsets, col_offsets, c.rows, c.cols)?;
    let mut blocks = Vec::with_capacity(row_offsets.len() - 1);
    for b in 0..row_offsets.len() - 1 {
        let (r0, r1) = (row_offsets[b], row_offsets[b + 1]);
        let (c0, c1) = (col_offsets[b], col_offsets[b + 1]);
        let mut data = Vec::with_capacity((r1 - r0) * (c1 - c0));
        for r in r0..r1 {
            let (s, e) = (c.row_starts[r], c.row_starts[r + 1]);
            let expected = c0..c1;
            if e - s != expected.len() || !c.col_indices[s..e].iter().copied().eq(expected) {
                return Err(Error::format(format!(
                    "row {r} does not store exactly columns {c0}..{c1} of block {b}"
                )));
            }
            data.extend_from_slice(&c.values[s..e]);
        }
        blocks.push(Matrix::from_vec(r1 - r0, c1 - c0, data)?);
    }
    BlockDiagMatrix::new(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.uniform(-1.0, 1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn naive(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    #[test]
    fn identity_product() {
        let mut rng = Rng::new(1);
        let b = random(3, 4, &mut rng);
        assert_eq!(matmul(&Matrix::identity(3), &b).unwrap(), b);
    }

    #[test]
    fn small_product() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![5.0], vec![6.0]]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().data(), &[17.0, 39.0]);
    }

    #[test]
    fn product_matches_triple_loop() {
        let mut rng = Rng::new(2);
        let a = random(7, 5, &mut rng);
        let b = random(5, 3, &mut rng);
        assert_eq!(matmul(&a, &b).unwrap(), naive(&a, &b));
    }

    #[test]
    fn transposed_products_match_triple_loop() {
        let mut rng = Rng::new(3);
        let a = random(6, 4, &mut rng);
        let b = random(6, 3, &mut rng);
        assert_eq!(matmul_at_b(&a, &b).unwrap(), naive(&a.transpose(), &b));
        let c = random(5, 4, &mut rng);
        assert_eq!(matmul_a_bt(&a, &c).unwrap(), naive(&a, &c.transpose()));
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            matmul(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3)),
            Err(Error::Shape(_))
        ));
        assert!(Matrix::from_vec(2, 2, vec![1.0]).is_err());
    }

    #[test]
    fn single_block_is_matmul() {
        let mut rng = Rng::new(4);
        let w = random(4, 3, &mut rng);
        let x = random(5, 4, &mut rng);
        let bd = BlockDiagMatrix::new(vec![w.clone()]).unwrap();
        assert_eq!(block_forward(&bd, &x).unwrap(), matmul(&x, &w).unwrap());
    }

    #[test]
    fn two_scalar_blocks() {
        let bd = BlockDiagMatrix::new(vec![
            Matrix::from_vec(1, 1, vec![2.0]).unwrap(),
            Matrix::from_vec(1, 1, vec![3.0]).unwrap(),
        ])
        .unwrap();
        let x = Matrix::from_vec(1, 2, vec![5.0, 7.0]).unwrap();
        assert_eq!(block_forward(&bd, &x).unwrap().data(), &[10.0, 21.0]);
    }

    #[test]
    fn twenty_blocks_match_per_block_loop() {
        let mut rng = Rng::new(5);
        let blocks: Vec<Matrix> = (0..20)
            .map(|_| {
                let r = 1 + rng.below(4);
                let c = 1 + rng.below(4);
                random(r, c, &mut rng)
            })
            .collect();
        let bd = BlockDiagMatrix::new(blocks.clone()).unwrap();
        let x = random(9, bd.rows(), &mut rng);
        let out = block_forward(&bd, &x).unwrap();
        for (b, block) in blocks.iter().enumerate() {
            let (r0, c0) = (bd.row_offsets()[b], bd.col_offsets()[b]);
            let cols: Vec<usize> = (r0..r0 + block.rows()).collect();
            let expected = naive(&x.select_columns(&cols).unwrap(), block);
            for i in 0..x.rows() {
                assert_eq!(&out.row(i)[c0..c0 + block.cols()], expected.row(i));
            }
        }
        // densified equivalence
        assert_eq!(out, naive(&x, &bd.to_dense()));
        assert_eq!(out, matmul(&x, &bd.to_dense()).unwrap());
    }

    #[test]
    fn block_shape_error() {
        let bd = BlockDiagMatrix::new(vec![Matrix::identity(2)]).unwrap();
        assert!(block_forward(&bd, &Matrix::zeros(1, 3)).is_err());
        assert!(BlockDiagMatrix::new(vec![Matrix::zeros(0, 2)]).is_err());
    }

    #[test]
    fn identity_to_csr() {
        let bd = BlockDiagMatrix::new(vec![Matrix::identity(3)]).unwrap();
        let c = to_csr(&bd);
        assert_eq!(c.values(), &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(c.row_starts(), &[0, 3, 6, 9]);
        // stored zeros are kept: the pattern is the block structure
        let single: Vec<_> = (0..3).map(|_| Matrix::from_vec(1, 1, vec![1.0]).unwrap()).collect();
        let c = to_csr(&BlockDiagMatrix::new(single).unwrap());
        assert_eq!(c.values(), &[1.0, 1.0, 1.0]);
        assert_eq!(c.row_starts(), &[0, 1, 2, 3]);
    }

    #[test]
    fn empty_block_list() {
        let bd = BlockDiagMatrix::new(Vec::new()).unwrap();
        let c = to_csr(&bd);
        assert_eq!(c.row_starts(), &[0]);
        assert_eq!(c, CsrMatrix::empty());
        assert_eq!(from_csr(&c, &[0], &[0]).unwrap(), bd);
    }

    #[test]
    fn csr_round_trip_and_forward() {
        let mut rng = Rng::new(6);
        let blocks: Vec<Matrix> = (0..10)
            .map(|_| {
                let r = 1 + rng.below(5);
                let c = 1 + rng.below(5);
                random(r, c, &mut rng)
            })
            .collect();
        let bd = BlockDiagMatrix::new(blocks).unwrap();
        let c = to_csr(&bd);
        assert_eq!(c.nnz(), bd.nnz());
        let back = from_csr(&c, bd.row_offsets(), bd.col_offsets()).unwrap();
        assert_eq!(back, bd);
        let x = random(4, bd.rows(), &mut rng);
        assert_eq!(c.forward(&x).unwrap(), bd.forward(&x).unwrap());
    }

    #[test]
    fn csr_pattern_violation() {
        let bd = BlockDiagMatrix::new(vec![Matrix::identity(2), Matrix::identity(2)]).unwrap();
        let c = to_csr(&bd);
        assert!(matches!(from_csr(&c, &[0, 4], &[0, 4]), Err(Error::Format(_))));
        assert!(matches!(from_csr(&c, &[0, 1, 4], &[0, 1, 4]), Err(Error::Format(_))));
        assert!(CsrMatrix::new(1, 2, vec![1.0, 2.0], vec![1, 0], vec![0, 2]).is_err());
    }

    #[test]
    fn dense_round_trip_rejects_off_block_values() {
        let bd = BlockDiagMatrix::new(vec![Matrix::identity(2), Matrix::identity(1)]).unwrap();
        let mut dense = bd.to_dense();
        assert_eq!(
            BlockDiagMatrix::from_dense(&dense, bd.row_offsets(), bd.col_offsets()).unwrap(),
            bd
        );
        dense.set(0, 2, 1.0);
        assert!(BlockDiagMatrix::from_dense(&dense, bd.row_offsets(), bd.col_offsets()).is_err());
    }
}
