//! Dense vector/matrix kernels, block-indexed access, spectral-norm
//! estimation, and the weighted-norm primitives the solvers and inequality
//! checks are built on.
//!
//! Everything here is a pure function on immutable inputs. Matrices are dense
//! row-major `f64`; the experiment families use dense Gaussian data and desk
//! scale needs no sparsity.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "DenseMatrix::new",
                expected: rows * cols,
                got: entries.len(),
            });
        }
        if entries.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidArgument(
                "matrix entries must be finite".into(),
            ));
        }
        Ok(DenseMatrix {
            rows,
            cols,
            entries,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            entries: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.entries[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.entries[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.entries[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&e| e == 0.0)
    }

    pub fn scale(&mut self, factor: f64) {
        for e in &mut self.entries {
            *e *= factor;
        }
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                context: "matvec",
                expected: self.cols,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.rows];
        for (r, out) in y.iter_mut().enumerate() {
            let row = self.row(r);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            *out = acc;
        }
        Ok(y)
    }

    /// y = A^T x
    pub fn tr_matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::DimensionMismatch {
                context: "tr_matvec",
                expected: self.rows,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.cols];
        for (r, &xr) in x.iter().enumerate() {
            let row = self.row(r);
            for (out, a) in y.iter_mut().zip(row) {
                *out += a * xr;
            }
        }
        Ok(y)
    }

    /// C = A B
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                context: "matmul",
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.get(i, k);
                if aik == 0.0 {
                    continue;
                }
                let brow = other.row(k);
                let orow = &mut out.entries[i * other.cols..(i + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += aik * b;
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }
}

impl TryFrom<Vec<Vec<f64>>> for DenseMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        DenseMatrix::from_rows(&rows)
    }
}

impl From<DenseMatrix> for Vec<Vec<f64>> {
    fn from(m: DenseMatrix) -> Self {
        (0..m.rows).map(|r| m.row(r).to_vec()).collect()
    }
}

/// Disjoint contiguous decomposition of a decision vector into blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct BlockPartition {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl BlockPartition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidArgument(
                "block sizes must be nonempty and positive".into(),
            ));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut total = 0;
        for &s in &sizes {
            offsets.push(total);
            total += s;
        }
        Ok(BlockPartition {
            sizes,
            offsets,
            total,
        })
    }

    /// Evenly split `total` into `blocks` blocks; `blocks` must divide `total`.
    pub fn even(total: usize, blocks: usize) -> Result<Self> {
        if blocks == 0 || total % blocks != 0 {
            return Err(Error::InvalidArgument(format!(
                "block count {blocks} does not divide dimension {total}"
            )));
        }
        Self::new(vec![total / blocks; blocks])
    }

    pub fn num_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn size(&self, i: usize) -> usize {
        self.sizes[i]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        let off = self.offsets[i];
        off..off + self.sizes[i]
    }
}

impl TryFrom<Vec<usize>> for BlockPartition {
    type Error = Error;
    fn try_from(sizes: Vec<usize>) -> Result<Self> {
        BlockPartition::new(sizes)
    }
}

impl From<BlockPartition> for Vec<usize> {
    fn from(p: BlockPartition) -> Self {
        p.sizes
    }
}

/// Per-block nonnegative scalar weights; block i's proximal matrix is
/// `w_i * I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDiagWeights {
    weights: Vec<f64>,
}

impl BlockDiagWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(
                "block weights must be nonnegative and finite".into(),
            ));
        }
        Ok(BlockDiagWeights { weights })
    }

    pub fn uniform(blocks: usize, w: f64) -> Result<Self> {
        Self::new(vec![w; blocks])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Weighting matrix accepted by [`weighted_norm_sq`] and [`delta_w`]: either
/// scalar-weighted blocks or an explicit dense PSD matrix.
#[derive(Debug, Clone, Copy)]
pub enum Weight<'a> {
    BlockDiag(&'a BlockPartition, &'a BlockDiagWeights),
    Dense(&'a DenseMatrix),
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(v: &[f64]) -> f64 {
    dot(v, v)
}

pub fn norm(v: &[f64]) -> f64 {
    norm_sq(v).sqrt()
}

/// v^T W v for a PSD weighting W.
pub fn weighted_norm_sq(v: &[f64], w: Weight<'_>) -> Result<f64> {
    match w {
        Weight::BlockDiag(part, weights) => {
            if v.len() != part.total() {
                return Err(Error::DimensionMismatch {
                    context: "weighted_norm_sq",
                    expected: part.total(),
                    got: v.len(),
                });
            }
            if weights.weights().len() != part.num_blocks() {
                return Err(Error::DimensionMismatch {
                    context: "weighted_norm_sq",
                    expected: part.num_blocks(),
                    got: weights.weights().len(),
                });
            }
            let mut acc = 0.0;
            for (i, &wi) in weights.weights().iter().enumerate() {
                acc += wi * norm_sq(&v[part.range(i)]);
            }
            Ok(acc)
        }
        Weight::Dense(m) => {
            if m.rows() != m.cols() || v.len() != m.cols() {
                return Err(Error::DimensionMismatch {
                    context: "weighted_norm_sq",
                    expected: m.cols(),
                    got: v.len(),
                });
            }
            Ok(dot(v, &m.matvec(v)?))
        }
    }
}

/// The three-point quantity
/// `1/2 [ ||v+ - v||_W^2 - ||vo - v||_W^2 + ||v+ - vo||_W^2 ]`.
pub fn delta_w(v_plus: &[f64], v_o: &[f64], v: &[f64], w: Weight<'_>) -> Result<f64> {
    if v_plus.len() != v.len() || v_o.len() != v.len() {
        return Err(Error::DimensionMismatch {
            context: "delta_w",
            expected: v.len(),
            got: if v_plus.len() != v.len() {
                v_plus.len()
            } else {
                v_o.len()
            },
        });
    }
    let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
    let t1 = weighted_norm_sq(&diff(v_plus, v), w)?;
    let t2 = weighted_norm_sq(&diff(v_o, v), w)?;
    let t3 = weighted_norm_sq(&diff(v_plus, v_o), w)?;
    Ok(0.5 * (t1 - t2 + t3))
}

/// Constraint residual A x - b.
pub fn residual(a: &DenseMatrix, x: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            context: "residual",
            expected: a.rows(),
            got: b.len(),
        });
    }
    let mut r = a.matvec(x)?;
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri -= bi;
    }
    Ok(r)
}

/// Product of the column sub-block A_i with a block vector v_i.
pub fn block_apply(
    a: &DenseMatrix,
    part: &BlockPartition,
    i: usize,
    v_i: &[f64],
) -> Result<Vec<f64>> {
    if i >= part.num_blocks() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: part.num_blocks(),
        });
    }
    if part.total() != a.cols() {
        return Err(Error::DimensionMismatch {
            context: "block_apply",
            expected: a.cols(),
            got: part.total(),
        });
    }
    if v_i.len() != part.size(i) {
        return Err(Error::DimensionMismatch {
            context: "block_apply",
            expected: part.size(i),
            got: v_i.len(),
        });
    }
    let range = part.range(i);
    let mut y = vec![0.0; a.rows()];
    for (r, out) in y.iter_mut().enumerate() {
        let row = &a.row(r)[range.clone()];
        let mut acc = 0.0;
        for (av, vv) in row.iter().zip(v_i) {
            acc += av * vv;
        }
        *out = acc;
    }
    Ok(y)
}

/// Spectral norm of A by power iteration on A^T A with a deterministic start
/// (normalized all-ones). Returns 0 for the zero matrix; errors with the last
/// estimate attached when `max_iter` is exhausted.
pub fn spectral_norm(a: &DenseMatrix, tol: f64, max_iter: usize) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("spectral_norm: tol must be > 0".into()));
    }
    if a.is_zero() {
        return Ok(0.0);
    }
    let n = a.cols();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut sigma_prev = f64::INFINITY;
    let mut sigma = 0.0;
    let mut reseeded = false;
    for it in 0..max_iter {
        let w = a.matvec(&v)?;
        // Rayleigh quotient of A^T A at unit v.
        let lambda = norm_sq(&w);
        sigma = lambda.sqrt();
        let u = a.tr_matvec(&w)?;
        let nu = norm(&u);
        if nu == 0.0 {
            // Start vector was orthogonal to the range; one deterministic
            // reseed, then give up.
            if reseeded {
                return Err(Error::NonConvergence {
                    context: "spectral_norm",
                    estimate: sigma,
                    iterations: it,
                });
            }
            reseeded = true;
            let mut alt: Vec<f64> = (0..n).map(|j| (j + 1) as f64).collect();
            let an = norm(&alt);
            for x in &mut alt {
                *x /= an;
            }
            v = alt;
            sigma_prev = f64::INFINITY;
            continue;
        }
        for (vi, ui) in v.iter_mut().zip(&u) {
            *vi = ui / nu;
        }
        if (sigma - sigma_prev).abs() <= tol * sigma {
            return Ok(sigma);
        }
        sigma_prev = sigma;
    }
    Err(Error::NonConvergence {
        context: "spectral_norm",
        estimate: sigma,
        iterations: max_iter,
    })
}

/// Solve A x = b by LU with partial pivoting. Returns `None` when the matrix
/// is numerically singular (callers treat that as "skip", not failure).
pub fn lu_solve(a: &DenseMatrix, b: &[f64]) -> Result<Option<Vec<f64>>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch {
            context: "lu_solve",
            expected: n,
            got: a.cols(),
        });
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            context: "lu_solve",
            expected: n,
            got: b.len(),
        });
    }
    let mut m = a.clone();
    let mut rhs = b.to_vec();
    let scale = m
        .entries
        .iter()
        .fold(0.0f64, |acc, &e| acc.max(e.abs()))
        .max(1.0);
    let pivot_tol = 1e-13 * scale;
    for col in 0..n {
        let mut pivot_row = col;
        let mut best = m.get(col, col).abs();
        for r in col + 1..n {
            let cand = m.get(r, col).abs();
            if cand > best {
                best = cand;
                pivot_row = r;
            }
        }
        if best <= pivot_tol {
            return Ok(None);
        }
        if pivot_row != col {
            for c in 0..n {
                let tmp = m.get(col, c);
                m.set(col, c, m.get(pivot_row, c));
                m.set(pivot_row, c, tmp);
            }
            rhs.swap(col, pivot_row);
        }
        let pivot = m.get(col, col);
        for r in col + 1..n {
            let factor = m.get(r, col) / pivot;
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                let v = m.get(r, c) - factor * m.get(col, c);
                m.set(r, c, v);
            }
            rhs[r] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = rhs[r];
        for c in r + 1..n {
            acc -= m.get(r, c) * x[c];
        }
        x[r] = acc / m.get(r, r);
    }
    Ok(Some(x))
}
