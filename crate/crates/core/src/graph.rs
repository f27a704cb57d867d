//! Sparse and dense matrix types plus the adjacency preprocessing used by the
//! GNN models.
//!
//! [`CsrMatrix`] is kept in canonical form: within a row, column indices are
//! strictly increasing. Every constructor in this module either produces a
//! canonical matrix or reports the first violated invariant through
//! [`CsrError`].

use rayon::prelude::*;
use thiserror::Error;

/// Violations reported by [`validate_csr`] and the normalizers.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CsrError {
    #[error("row_ptr decreases at row {row}")]
    NonMonotonicRowPtr { row: usize },
    #[error("column {col} in row {row} is outside [0, {n_cols})")]
    ColumnOutOfRange { row: usize, col: u32, n_cols: usize },
    #[error("row {row} has unsorted or duplicate column indices")]
    UnsortedRow { row: usize },
    #[error("length mismatch: {what}")]
    LengthMismatch { what: String },
    #[error("matrix is {n_rows}x{n_cols}, expected a square matrix")]
    NotSquare { n_rows: usize, n_cols: usize },
}

/// Errors raised by [`DenseMatrix`] constructors.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DenseError {
    #[error("dense data has {got} entries, expected {rows}x{cols}")]
    LengthMismatch { rows: usize, cols: usize, got: usize },
    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Sparse matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_ind: Vec<u32>,
    val: Vec<f32>,
}

impl CsrMatrix {
    /// Builds a matrix from raw arrays, validating every invariant.
    pub fn try_new(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_ind: Vec<u32>,
        val: Vec<f32>,
    ) -> Result<Self, CsrError> {
        let m = Self::from_parts_unchecked(n_rows, n_cols, row_ptr, col_ind, val);
        validate_csr(&m)?;
        Ok(m)
    }

    /// Wraps raw arrays without checking them. Pair with [`validate_csr`]
    /// when the arrays come from an untrusted source.
    pub fn from_parts_unchecked(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_ind: Vec<u32>,
        val: Vec<f32>,
    ) -> Self {
        Self { n_rows, n_cols, row_ptr, col_ind, val }
    }

    /// Builds a canonical matrix from `(row, col, value)` triplets in any
    /// order. Duplicate coordinates are summed.
    pub fn from_triplets<I>(n_rows: usize, n_cols: usize, triplets: I) -> Result<Self, CsrError>
    where
        I: IntoIterator<Item = (usize, usize, f32)>,
    {
        let mut entries: Vec<(usize, usize, f32)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            if r >= n_rows {
                return Err(CsrError::LengthMismatch {
                    what: format!("triplet row {r} >= n_rows {n_rows}"),
                });
            }
            if c >= n_cols {
                return Err(CsrError::ColumnOutOfRange {
                    row: r,
                    col: c as u32,
                    n_cols,
                });
            }
        }
        // stable so that duplicate values are summed in input order
        entries.sort_by_key(|&(r, c, _)| (r, c));

        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_ind: Vec<u32> = Vec::with_capacity(entries.len());
        let mut val: Vec<f32> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *val.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            last = Some((r, c));
            col_ind.push(c as u32);
            val.push(v);
            row_ptr[r + 1] += 1;
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self::try_new(n_rows, n_cols, row_ptr, col_ind, val)
    }

    /// Sparse identity of order `n`.
    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_ind: (0..n as u32).collect(),
            val: vec![1.0; n],
        }
    }

    /// Compresses the nonzero entries of a dense matrix.
    pub fn from_dense(d: &DenseMatrix) -> Self {
        let mut row_ptr = Vec::with_capacity(d.n_rows() + 1);
        let mut col_ind = Vec::new();
        let mut val = Vec::new();
        row_ptr.push(0);
        for i in 0..d.n_rows() {
            for (j, &v) in d.row(i).iter().enumerate() {
                if v != 0.0 {
                    col_ind.push(j as u32);
                    val.push(v);
                }
            }
            row_ptr.push(col_ind.len());
        }
        Self::from_parts_unchecked(d.n_rows(), d.n_cols(), row_ptr, col_ind, val)
    }

    /// Expands to a dense matrix. Intended for small matrices and tests.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut data = vec![0.0f32; self.n_rows * self.n_cols];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                data[i * self.n_cols + c as usize] = v;
            }
        }
        DenseMatrix::from_vec_unchecked(self.n_rows, self.n_cols, data)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_ind.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_ind(&self) -> &[u32] {
        &self.col_ind
    }

    pub fn val(&self) -> &[f32] {
        &self.val
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[u32], &[f32]) {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_ind[s..e], &self.val[s..e])
    }

    #[inline]
    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    /// Same sparsity pattern as `self` with replacement values.
    pub fn with_values(&self, val: Vec<f32>) -> Result<Self, CsrError> {
        if val.len() != self.nnz() {
            return Err(CsrError::LengthMismatch {
                what: format!("{} values for {} nonzeros", val.len(), self.nnz()),
            });
        }
        Ok(Self { val, ..self.clone() })
    }

    /// True when both matrices share `row_ptr` and `col_ind`.
    pub fn same_structure(&self, other: &Self) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self.row_ptr == other.row_ptr
            && self.col_ind == other.col_ind
    }
}

/// Checks every [`CsrMatrix`] invariant, reporting the first violation.
pub fn validate_csr(m: &CsrMatrix) -> Result<(), CsrError> {
    if m.row_ptr.len() != m.n_rows + 1 {
        return Err(CsrError::LengthMismatch {
            what: format!("row_ptr has {} entries, expected {}", m.row_ptr.len(), m.n_rows + 1),
        });
    }
    if m.row_ptr[0] != 0 {
        return Err(CsrError::LengthMismatch {
            what: format!("row_ptr[0] is {}, expected 0", m.row_ptr[0]),
        });
    }
    if let Some(i) = m.row_ptr.windows(2).position(|w| w[1] < w[0]) {
        return Err(CsrError::NonMonotonicRowPtr { row: i + 1 });
    }
    let nnz = m.row_ptr[m.n_rows];
    if nnz != m.col_ind.len() || nnz != m.val.len() {
        return Err(CsrError::LengthMismatch {
            what: format!(
                "row_ptr ends at {nnz}, col_ind has {}, val has {}",
                m.col_ind.len(),
                m.val.len()
            ),
        });
    }
    for row in 0..m.n_rows {
        let (cols, _) = m.row(row);
        for (k, &c) in cols.iter().enumerate() {
            if c as usize >= m.n_cols {
                return Err(CsrError::ColumnOutOfRange { row, col: c, n_cols: m.n_cols });
            }
            if k > 0 && cols[k - 1] >= c {
                return Err(CsrError::UnsortedRow { row });
            }
        }
    }
    Ok(())
}

/// Per-row nonzero counts of a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RowStats {
    pub row_nnz: Vec<usize>,
    pub max_row_nnz: usize,
    pub avg_degree: f64,
}

impl RowStats {
    pub fn nnz(&self) -> usize {
        self.row_nnz.iter().sum()
    }
}

pub fn row_stats(m: &CsrMatrix) -> RowStats {
    let row_nnz: Vec<usize> = m.row_ptr.windows(2).map(|w| w[1] - w[0]).collect();
    let max_row_nnz = row_nnz.iter().copied().max().unwrap_or(0);
    let avg_degree = if m.n_rows == 0 {
        0.0
    } else {
        m.nnz() as f64 / m.n_rows as f64
    };
    RowStats { row_nnz, max_row_nnz, avg_degree }
}

/// Symmetric GCN normalization `D^-1/2 (A [+ I]) D^-1/2`.
///
/// The result keeps the structure of `a` (plus the diagonal when
/// `add_self_loops` is set) and replaces every value with
/// `1 / sqrt(deg(i) * deg(j))`, where `deg` is the row nonzero count after
/// self-loop insertion. Degrees are clamped to at least 1 so that a column
/// pointing at an empty row stays finite.
pub fn gcn_normalize(a: &CsrMatrix, add_self_loops: bool) -> Result<CsrMatrix, CsrError> {
    if !a.is_square() {
        return Err(CsrError::NotSquare { n_rows: a.n_rows, n_cols: a.n_cols });
    }
    let structure = if add_self_loops { insert_diagonal(a) } else { a.clone() };
    let inv_sqrt: Vec<f64> = (0..structure.n_rows)
        .map(|i| 1.0 / (structure.row_nnz(i).max(1) as f64).sqrt())
        .collect();
    let mut val = Vec::with_capacity(structure.nnz());
    for i in 0..structure.n_rows {
        let (cols, _) = structure.row(i);
        val.extend(cols.iter().map(|&c| (inv_sqrt[i] * inv_sqrt[c as usize]) as f32));
    }
    structure.with_values(val)
}

/// Mean-aggregation weights: every entry of a nonempty row becomes
/// `1 / row_nnz`. Empty rows stay empty.
pub fn row_mean_normalize(a: &CsrMatrix) -> Result<CsrMatrix, CsrError> {
    if !a.is_square() {
        return Err(CsrError::NotSquare { n_rows: a.n_rows, n_cols: a.n_cols });
    }
    let mut val = Vec::with_capacity(a.nnz());
    for i in 0..a.n_rows {
        let d = a.row_nnz(i);
        val.extend(std::iter::repeat_n(1.0 / d as f32, d));
    }
    a.with_values(val)
}

fn insert_diagonal(a: &CsrMatrix) -> CsrMatrix {
    let mut row_ptr = Vec::with_capacity(a.n_rows + 1);
    let mut col_ind = Vec::with_capacity(a.nnz() + a.n_rows);
    let mut val = Vec::with_capacity(a.nnz() + a.n_rows);
    row_ptr.push(0);
    for i in 0..a.n_rows {
        let (cols, vals) = a.row(i);
        let diag = i as u32;
        let split = cols.partition_point(|&c| c < diag);
        col_ind.extend_from_slice(&cols[..split]);
        val.extend_from_slice(&vals[..split]);
        if cols.get(split) != Some(&diag) {
            col_ind.push(diag);
            val.push(1.0);
        }
        col_ind.extend_from_slice(&cols[split..]);
        val.extend_from_slice(&vals[split..]);
        row_ptr.push(col_ind.len());
    }
    CsrMatrix::from_parts_unchecked(a.n_rows, a.n_cols, row_ptr, col_ind, val)
}

/// Row-major dense matrix of finite `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f32>,
}

impl DenseMatrix {
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<f32>) -> Result<Self, DenseError> {
        if data.len() != n_rows * n_cols {
            return Err(DenseError::LengthMismatch { rows: n_rows, cols: n_cols, got: data.len() });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(DenseError::NonFinite { index });
        }
        Ok(Self { n_rows, n_cols, data })
    }

    pub(crate) fn from_vec_unchecked(n_rows: usize, n_cols: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), n_rows * n_cols);
        Self { n_rows, n_cols, data }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, data: vec![0.0; n_rows * n_cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for i in 0..n_rows {
            for j in 0..n_cols {
                data.push(f(i, j));
            }
        }
        Self { n_rows, n_cols, data }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.n_cols + j]
    }

    /// Dense product `self × rhs`. Each output element is accumulated over
    /// the inner dimension in ascending order, so results do not depend on
    /// how rows are split across threads.
    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix, DenseError> {
        if self.n_cols != rhs.n_rows {
            return Err(DenseError::ShapeMismatch(format!(
                "{}x{} times {}x{}",
                self.n_rows, self.n_cols, rhs.n_rows, rhs.n_cols
            )));
        }
        let out_cols = rhs.n_cols;
        let mut out = vec![0.0f32; self.n_rows * out_cols];
        if out_cols > 0 {
            out.par_chunks_mut(out_cols).enumerate().for_each(|(i, acc)| {
                for (k, &h) in self.row(i).iter().enumerate() {
                    if h == 0.0 {
                        continue;
                    }
                    for (o, &w) in acc.iter_mut().zip(rhs.row(k)) {
                        *o += h * w;
                    }
                }
            });
        }
        Ok(DenseMatrix::from_vec_unchecked(self.n_rows, out_cols, out))
    }

    /// Adds `bias` to every row.
    pub fn add_row_bias(&mut self, bias: &[f32]) -> Result<(), DenseError> {
        if bias.len() != self.n_cols {
            return Err(DenseError::ShapeMismatch(format!(
                "bias of length {} for {} columns",
                bias.len(),
                self.n_cols
            )));
        }
        if self.n_cols > 0 {
            for row in self.data.chunks_mut(self.n_cols) {
                for (x, b) in row.iter_mut().zip(bias) {
                    *x += b;
                }
            }
        }
        Ok(())
    }

    pub fn relu_in_place(&mut self) {
        for x in &mut self.data {
            *x = x.max(0.0);
        }
    }

    /// `[self | rhs]`, column-wise concatenation.
    pub fn concat_cols(&self, rhs: &DenseMatrix) -> Result<DenseMatrix, DenseError> {
        if self.n_rows != rhs.n_rows {
            return Err(DenseError::ShapeMismatch(format!(
                "concat of {} rows with {} rows",
                self.n_rows, rhs.n_rows
            )));
        }
        let n_cols = self.n_cols + rhs.n_cols;
        let mut data = Vec::with_capacity(self.n_rows * n_cols);
        for i in 0..self.n_rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(rhs.row(i));
        }
        Ok(DenseMatrix::from_vec_unchecked(self.n_rows, n_cols, data))
    }

    /// Index of the largest entry of each row; ties go to the lowest index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.n_rows)
            .map(|i| {
                let row = self.row(i);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate().skip(1) {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    /// Bitwise equality of shape and every entry.
    pub fn bit_eq(&self, other: &DenseMatrix) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}
