//! Seeded synthetic graphs for benchmarks.
//!
//! Power-law row degrees are drawn by stratified inverse-CDF sampling of
//! `P(k) ∝ k^-alpha` on `1..=max_deg`: row `i` of a random permutation gets
//! the quantile at `(i + 0.5) / n`. The tail of the distribution is therefore
//! always represented, whatever the seed, and the top row is pinned to
//! `max_deg` so the requested maximum is always present. Each row then picks its columns
//! uniformly without replacement.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::CsrMatrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DegreeModel {
    /// Every row has exactly `degree` nonzeros.
    Uniform { degree: usize },
    /// Row degrees follow a truncated discrete power law.
    PowerLaw { alpha: f64, max_deg: usize },
}

/// Square `n × n` matrix with unit values and the requested degree profile.
pub fn gen_synthetic(n: usize, model: DegreeModel, seed: u64) -> Result<CsrMatrix, SynthError> {
    if n == 0 {
        return Err(SynthError::InvalidParams("need at least one node".into()));
    }
    if n > u32::MAX as usize {
        return Err(SynthError::InvalidParams(format!("{n} nodes exceed u32 column indices")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let degrees = match model {
        DegreeModel::Uniform { degree } => {
            if degree > n {
                return Err(SynthError::InvalidParams(format!("degree {degree} exceeds {n} nodes")));
            }
            vec![degree; n]
        }
        DegreeModel::PowerLaw { alpha, max_deg } => {
            if !(alpha.is_finite() && alpha > 0.0) {
                return Err(SynthError::InvalidParams(format!("alpha must be positive, got {alpha}")));
            }
            if max_deg == 0 || max_deg > n {
                return Err(SynthError::InvalidParams(format!(
                    "max_deg must be in 1..={n}, got {max_deg}"
                )));
            }
            let mut d = power_law_quantiles(n, alpha, max_deg);
            d.shuffle(&mut rng);
            d
        }
    };

    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0usize);
    let mut col_ind = Vec::with_capacity(degrees.iter().sum());
    for &d in &degrees {
        let mut cols: Vec<u32> = index::sample(&mut rng, n, d).into_iter().map(|c| c as u32).collect();
        cols.sort_unstable();
        col_ind.extend_from_slice(&cols);
        row_ptr.push(col_ind.len());
    }
    let val = vec![1.0f32; col_ind.len()];
    CsrMatrix::try_new(n, n, row_ptr, col_ind, val)
        .map_err(|e| SynthError::InvalidParams(format!("generator produced an invalid matrix: {e}")))
}

/// Degrees at the `n` mid-quantiles of the truncated power law, ascending,
/// with the last one raised to `max_deg`.
fn power_law_quantiles(n: usize, alpha: f64, max_deg: usize) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(max_deg);
    let mut acc = 0.0f64;
    for k in 1..=max_deg {
        acc += (k as f64).powf(-alpha);
        cdf.push(acc);
    }
    let total = acc;
    let mut d: Vec<usize> = (0..n)
        .map(|i| {
            let u = (i as f64 + 0.5) / n as f64 * total;
            cdf.partition_point(|&c| c < u).min(max_deg - 1) + 1
        })
        .collect();
    d[n - 1] = max_deg;
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{row_stats, validate_csr};

    #[test]
    fn uniform_rows() {
        let m = gen_synthetic(100, DegreeModel::Uniform { degree: 4 }, 3).unwrap();
        assert!(row_stats(&m).row_nnz.iter().all(|&d| d == 4));
        assert_eq!(validate_csr(&m), Ok(()));
    }

    #[test]
    fn same_seed_same_graph() {
        let model = DegreeModel::PowerLaw { alpha: 1.2, max_deg: 300 };
        let a = gen_synthetic(500, model, 11).unwrap();
        let b = gen_synthetic(500, model, 11).unwrap();
        let c = gen_synthetic(500, model, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn power_law_reaches_its_tail() {
        let m = gen_synthetic(2000, DegreeModel::PowerLaw { alpha: 1.0, max_deg: 1000 }, 5).unwrap();
        let s = row_stats(&m);
        assert_eq!(s.max_row_nnz, 1000);
        assert!(s.row_nnz.iter().filter(|&&d| d == 1).count() > 100);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(gen_synthetic(0, DegreeModel::Uniform { degree: 0 }, 0).is_err());
        assert!(gen_synthetic(5, DegreeModel::Uniform { degree: 6 }, 0).is_err());
        assert!(gen_synthetic(5, DegreeModel::PowerLaw { alpha: -1.0, max_deg: 2 }, 0).is_err());
        assert!(gen_synthetic(5, DegreeModel::PowerLaw { alpha: 2.0, max_deg: 9 }, 0).is_err());
    }
}
