//! Self-checks behind the `verify` CLI subcommand.
//!
//! Each check compares the library against a separately written oracle:
//! the strategy table is re-derived from a floating-point ratio, sampled
//! SpMM is replayed element by element from the plans, and the quantizer is
//! checked against its one-step error bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{CsrMatrix, DenseMatrix};
use crate::kernels::{spmm_exact, spmm_sampled};
use crate::quantization::QuantParams;
use crate::sampling::{build_plan_set, hash_start, select_strategy, SamplePlanSet, Strategy};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, failure: Option<String>, ok_detail: String) -> Self {
        match failure {
            Some(detail) => Self { name, passed: false, detail },
            None => Self { name, passed: true, detail: ok_detail },
        }
    }
}

/// `(N, sample_cnt)` straight from the table, using the real-valued ratio.
fn table_oracle(row_nnz: usize, w: usize) -> (usize, usize) {
    if row_nnz == 0 {
        return (0, 0);
    }
    let r = row_nnz as f64 / w as f64;
    let (n, cnt) = if r <= 1.0 {
        (row_nnz, 1)
    } else if r <= 2.0 {
        (w / 4, 4)
    } else if r <= 36.0 {
        (w / 8, 8)
    } else if r <= 54.0 {
        (w / 16, 16)
    } else {
        (w / 32, 32)
    };
    (n.max(1), cnt.min(w))
}

pub fn check_strategy_table(max_row_nnz: usize) -> CheckOutcome {
    let widths = [16usize, 32, 64, 128, 256, 512, 1024];
    let mut failure = None;
    'outer: for &w in &widths {
        for row_nnz in 0..=max_row_nnz {
            let p = match select_strategy(row_nnz, w) {
                Ok(p) => p,
                Err(e) => {
                    failure = Some(format!("select_strategy({row_nnz}, {w}) failed: {e}"));
                    break 'outer;
                }
            };
            if (p.granularity, p.sample_cnt) != table_oracle(row_nnz, w) || p.slots() > w {
                failure = Some(format!(
                    "row_nnz={row_nnz} W={w}: got ({}, {}), table says {:?}",
                    p.granularity,
                    p.sample_cnt,
                    table_oracle(row_nnz, w)
                ));
                break 'outer;
            }
        }
    }
    CheckOutcome::new(
        "strategy table",
        failure,
        format!("{} cases", widths.len() * (max_row_nnz + 1)),
    )
}

pub fn check_hash(max_row_nnz: usize, max_n: usize, max_s: usize) -> CheckOutcome {
    let mut cases = 0u64;
    for row_nnz in 1..=max_row_nnz {
        for n in 1..=max_n.min(row_nnz) {
            let modulus = (row_nnz - n + 1) as u64;
            for s in 0..=max_s {
                let got = hash_start(s, row_nnz, n);
                let want = ((s as u64 * 1429) % modulus) as usize;
                if got != want || got > row_nnz - n {
                    return CheckOutcome::new(
                        "window hash",
                        Some(format!("hash({s}, {row_nnz}, {n}) = {got}, expected {want}")),
                        String::new(),
                    );
                }
                cases += 1;
            }
        }
    }
    CheckOutcome::new("window hash", None, format!("{cases} cases"))
}

/// Element-by-element replay of the plans.
pub fn replay_plans(a: &CsrMatrix, b: &DenseMatrix, plans: &SamplePlanSet) -> Vec<f32> {
    let k = b.n_cols();
    let mut out = vec![0.0f32; a.n_rows() * k];
    for (i, plan) in plans.plans.iter().enumerate() {
        let base = a.row_ptr()[i];
        let cnt = plan.params.sample_cnt;
        let n = plan.params.granularity;
        let mut slots: Vec<(f32, usize)> = vec![(0.0, 0); cnt * n];
        for s in 0..cnt {
            for j in 0..n {
                let e = base + plan.starts[s] as usize + j;
                slots[s + j * cnt] = (a.val()[e], a.col_ind()[e] as usize);
            }
        }
        for col in 0..k {
            let mut acc = 0.0f32;
            for &(v, c) in &slots {
                acc += v * b.get(c, col);
            }
            out[i * k + col] = acc;
        }
    }
    out
}

pub fn random_instance(rng: &mut ChaCha8Rng, max_n: usize, max_cols: usize) -> (CsrMatrix, DenseMatrix) {
    let n = rng.random_range(1..=max_n);
    let density = rng.random_range(0.0..=0.5);
    let mut triplets = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if rng.random_bool(density) {
                triplets.push((i, j, rng.random_range(-1.0f32..1.0)));
            }
        }
    }
    let a = CsrMatrix::from_triplets(n, n, triplets).expect("in-range triplets");
    let cols = rng.random_range(1..=max_cols);
    let b = DenseMatrix::from_fn(n, cols, |_, _| rng.random_range(-2.0f32..2.0));
    (a, b)
}

pub fn check_sampled_kernel(instances: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..instances {
        let (a, b) = random_instance(&mut rng, 64, 8);
        let w = [4usize, 8, 16][t % 3];
        let plans = build_plan_set(&a, w, Strategy::Adaptive).expect("nonzero width");
        let got = spmm_sampled(&a, &b, &plans).expect("consistent shapes");
        let want = replay_plans(&a, &b, &plans);
        if !bits_equal(got.data(), &want) {
            return CheckOutcome::new(
                "sampled kernel vs plan replay",
                Some(format!("instance {t} (n={}, W={w}) differs", a.n_rows())),
                String::new(),
            );
        }
        let max_nnz = (0..a.n_rows()).map(|i| a.row_nnz(i)).max().unwrap_or(0).max(1);
        let wide = build_plan_set(&a, max_nnz, Strategy::Adaptive).expect("nonzero width");
        let got = spmm_sampled(&a, &b, &wide).expect("consistent shapes");
        let exact = spmm_exact(&a, &b).expect("consistent shapes");
        if !got.bit_eq(&exact) {
            return CheckOutcome::new(
                "sampled kernel vs plan replay",
                Some(format!("instance {t}: full-coverage output differs from exact")),
                String::new(),
            );
        }
    }
    CheckOutcome::new("sampled kernel vs plan replay", None, format!("{instances} random instances"))
}

pub fn check_quantization(samples: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranges = [(0.0f32, 1.0f32), (-1.0, 1.0), (-250.0, 3.5), (1e3, 1e3 + 7.0)];
    for &(lo, hi) in &ranges {
        let p = QuantParams::new(lo, hi, 8).expect("valid range");
        let bound = (hi as f64 - lo as f64) / 255.0;
        for _ in 0..samples {
            let x = rng.random_range(lo..=hi);
            let err = (p.decode(p.encode(x)) as f64 - x as f64).abs();
            if err > bound {
                return CheckOutcome::new(
                    "quantization bound",
                    Some(format!("x={x} in [{lo}, {hi}]: error {err} > {bound}")),
                    String::new(),
                );
            }
        }
        if p.encode(lo) != 0 || p.encode(hi) != 255 {
            return CheckOutcome::new(
                "quantization bound",
                Some(format!("endpoint codes wrong for [{lo}, {hi}]")),
                String::new(),
            );
        }
    }
    CheckOutcome::new("quantization bound", None, format!("{} samples", samples * ranges.len()))
}

fn bits_equal(a: &[f32], b: &[f32]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// All checks at the sizes used by the CLI.
pub fn run_all() -> Vec<CheckOutcome> {
    vec![
        check_strategy_table(65536),
        check_hash(4096, 64, 32),
        check_sampled_kernel(1000, 0x5eed),
        check_quantization(250_000, 0x9a17),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_checks_pass() {
        assert!(check_strategy_table(2000).passed);
        assert!(check_hash(200, 8, 8).passed);
        assert!(check_sampled_kernel(50, 1).passed);
        assert!(check_quantization(10_000, 2).passed);
    }
}
