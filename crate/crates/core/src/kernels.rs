//! Sparse × dense kernels.
//!
//! [`spmm_exact`] is the no-loss reference. [`spmm_sampled`] runs in two
//! phases per row: the row's plan is first copied into a scratch buffer
//! (`vals`/`cols`, one per worker), then the output row is accumulated from
//! the buffer in ascending slot order, gathering rows of the dense operand by
//! the buffered column indices.
//!
//! Both kernels parallelize over output rows only. Every output element is
//! produced by a single sequential loop, so results are bit-identical for any
//! thread count.

use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{CsrMatrix, DenseMatrix};
use crate::sampling::{RowSamplePlan, SamplePlanSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("shape mismatch: sparse is {a_rows}x{a_cols}, dense is {b_rows}x{b_cols}")]
    ShapeMismatch { a_rows: usize, a_cols: usize, b_rows: usize, b_cols: usize },
    #[error("sample plans do not match the matrix: {0}")]
    PlanMatrixMismatch(String),
}

/// Operation counts of one kernel call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkCounter {
    /// Multiply-accumulates.
    pub fma_count: u64,
    /// Sparse (value, column) pairs read.
    pub loads_a: u64,
    /// Dense operand elements read.
    pub loads_b: u64,
}

impl WorkCounter {
    fn for_elements(elements: usize, dense_cols: usize) -> Self {
        let e = elements as u64;
        let k = dense_cols as u64;
        Self { fma_count: e * k, loads_a: e, loads_b: e * k }
    }
}

impl std::ops::Add for WorkCounter {
    type Output = WorkCounter;

    fn add(self, rhs: Self) -> Self {
        Self {
            fma_count: self.fma_count + rhs.fma_count,
            loads_a: self.loads_a + rhs.loads_a,
            loads_b: self.loads_b + rhs.loads_b,
        }
    }
}

impl std::ops::AddAssign for WorkCounter {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

fn check_shapes(a: &CsrMatrix, b: &DenseMatrix) -> Result<(), KernelError> {
    if a.n_cols() != b.n_rows() {
        return Err(KernelError::ShapeMismatch {
            a_rows: a.n_rows(),
            a_cols: a.n_cols(),
            b_rows: b.n_rows(),
            b_cols: b.n_cols(),
        });
    }
    Ok(())
}

/// `C = A × B`, each output row summed in ascending column order.
pub fn spmm_exact(a: &CsrMatrix, b: &DenseMatrix) -> Result<DenseMatrix, KernelError> {
    spmm_exact_instrumented(a, b).map(|(c, _)| c)
}

pub fn spmm_exact_instrumented(
    a: &CsrMatrix,
    b: &DenseMatrix,
) -> Result<(DenseMatrix, WorkCounter), KernelError> {
    check_shapes(a, b)?;
    let k = b.n_cols();
    let mut out = vec![0.0f32; a.n_rows() * k];
    if k > 0 {
        out.par_chunks_mut(k).enumerate().for_each(|(i, acc)| {
            let (cols, vals) = a.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                for (o, &x) in acc.iter_mut().zip(b.row(c as usize)) {
                    *o += v * x;
                }
            }
        });
    }
    let work = WorkCounter::for_elements(a.nnz(), k);
    Ok((DenseMatrix::from_vec_unchecked(a.n_rows(), k, out), work))
}

/// Scratch buffer holding one row's sampled elements.
#[derive(Debug, Default)]
pub struct SampledBuffer {
    pub vals: Vec<f32>,
    pub cols: Vec<u32>,
}

impl SampledBuffer {
    pub fn with_width(width: usize) -> Self {
        Self { vals: Vec::with_capacity(width), cols: Vec::with_capacity(width) }
    }

    /// Loads the elements selected by `plan` from `row`, slot by slot.
    pub fn fill(&mut self, plan: &RowSamplePlan, row_cols: &[u32], row_vals: &[f32]) {
        let slots = plan.slots();
        self.vals.clear();
        self.cols.clear();
        self.vals.resize(slots, 0.0);
        self.cols.resize(slots, 0);
        let cnt = plan.params.sample_cnt;
        for (s, &start) in plan.starts.iter().enumerate() {
            let start = start as usize;
            for j in 0..plan.params.granularity {
                let slot = s + j * cnt;
                self.vals[slot] = row_vals[start + j];
                self.cols[slot] = row_cols[start + j];
            }
        }
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }
}

fn check_plans(a: &CsrMatrix, plans: &SamplePlanSet) -> Result<(), KernelError> {
    if plans.n_rows() != a.n_rows() {
        return Err(KernelError::PlanMatrixMismatch(format!(
            "{} plans for {} rows",
            plans.n_rows(),
            a.n_rows()
        )));
    }
    let mismatch = plans
        .plans
        .iter()
        .enumerate()
        .find(|&(i, p)| p.row_id != i || p.row_nnz != a.row_nnz(i));
    if let Some((i, p)) = mismatch {
        return Err(KernelError::PlanMatrixMismatch(format!(
            "plan {i} (row {}) expects {} nonzeros, matrix row has {}",
            p.row_id,
            p.row_nnz,
            a.row_nnz(i)
        )));
    }
    Ok(())
}

/// `C ≈ A × B` using only the elements selected by `plans`. Rows with an
/// empty plan produce zero rows.
pub fn spmm_sampled(
    a: &CsrMatrix,
    b: &DenseMatrix,
    plans: &SamplePlanSet,
) -> Result<DenseMatrix, KernelError> {
    spmm_sampled_instrumented(a, b, plans).map(|(c, _)| c)
}

pub fn spmm_sampled_instrumented(
    a: &CsrMatrix,
    b: &DenseMatrix,
    plans: &SamplePlanSet,
) -> Result<(DenseMatrix, WorkCounter), KernelError> {
    check_shapes(a, b)?;
    check_plans(a, plans)?;
    let k = b.n_cols();
    let mut out = vec![0.0f32; a.n_rows() * k];
    if k > 0 {
        out.par_chunks_mut(k).enumerate().for_each_init(
            || SampledBuffer::with_width(plans.width),
            |buf, (i, acc)| {
                let plan = &plans.plans[i];
                if plan.is_empty() {
                    return;
                }
                let (cols, vals) = a.row(i);
                buf.fill(plan, cols, vals);
                for (&c, &v) in buf.cols.iter().zip(&buf.vals) {
                    for (o, &x) in acc.iter_mut().zip(b.row(c as usize)) {
                        *o += v * x;
                    }
                }
            },
        );
    }
    let work = WorkCounter::for_elements(plans.total_slots(), k);
    Ok((DenseMatrix::from_vec_unchecked(a.n_rows(), k, out), work))
}
