//! Sparse × dense matrix multiplication over adaptively edge-sampled CSR
//! rows, with INT8 feature quantization and a CPU harness for GNN
//! inference.
//!
//! The pieces, bottom-up:
//!
//! * [`graph`]: CSR and dense matrices, adjacency normalization.
//! * [`sampling`]: per-row sampling plans under a buffer width `W`.
//! * [`kernels`]: exact and plan-driven SpMM with work counters.
//! * [`quantization`]: scalar min/max quantization of features.
//! * [`gnn`]: GCN and GraphSAGE-mean forward passes and evaluation.
//! * [`io`], [`synth`], [`fixtures`], [`bench`]: file formats, generated
//!   graphs and datasets, sweeps and reports.
//!
//! ```
//! use adaptive_spmm::graph::{CsrMatrix, DenseMatrix};
//! use adaptive_spmm::kernels::{spmm_exact, spmm_sampled};
//! use adaptive_spmm::sampling::{build_plan_set, Strategy};
//!
//! // one row with 100 nonzeros, buffer width 32
//! let a = CsrMatrix::from_triplets(1, 100, (0..100).map(|c| (0, c, 1.0))).unwrap();
//! let b = DenseMatrix::from_fn(100, 2, |_, _| 1.0);
//! let plans = build_plan_set(&a, 32, Strategy::Adaptive).unwrap();
//! assert_eq!(plans.plans[0].slots(), 32);
//!
//! let c = spmm_sampled(&a, &b, &plans).unwrap();
//! assert_eq!(c.row(0), &[32.0, 32.0]);
//! assert_eq!(spmm_exact(&a, &b).unwrap().row(0), &[100.0, 100.0]);
//! ```

pub mod bench;
pub mod fixtures;
pub mod gnn;
pub mod graph;
pub mod io;
pub mod kernels;
pub mod quantization;
pub mod sampling;
pub mod synth;
pub mod verify;

// Book chapters are compiled as doc-tests so their snippets stay in sync.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/csr.md")]
    mod csr {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/quantization.md")]
    mod quantization {}
    #[doc = include_str!("../../../book/src/inference.md")]
    mod inference {}
    #[doc = include_str!("../../../book/src/benchmarking.md")]
    mod benchmarking {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
