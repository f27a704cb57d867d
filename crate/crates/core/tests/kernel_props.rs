use adaptive_spmm::graph::{row_stats, CsrMatrix, DenseMatrix};
use adaptive_spmm::kernels::{spmm_exact, spmm_exact_instrumented, spmm_sampled, spmm_sampled_instrumented, KernelError};
use adaptive_spmm::sampling::{build_plan_set, sampling_rate, Strategy};
use proptest::prelude::{prop_assert, prop_assert_eq, proptest};
use proptest::sample::select;
use proptest::strategy::Strategy as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dense_oracle(a: &DenseMatrix, b: &DenseMatrix) -> Vec<f64> {
    let (n, m, k) = (a.n_rows(), a.n_cols(), b.n_cols());
    let mut out = vec![0.0f64; n * k];
    for i in 0..n {
        for l in 0..m {
            for j in 0..k {
                out[i * k + j] += a.get(i, l) as f64 * b.get(l, j) as f64;
            }
        }
    }
    out
}

/// Plan replay that walks every window directly, independent of the slot
/// helpers on the plan type.
fn replay(a: &CsrMatrix, b: &DenseMatrix, w: usize, s: Strategy) -> DenseMatrix {
    let plans = build_plan_set(a, w, s).unwrap();
    let k = b.n_cols();
    let mut out = vec![0.0f32; a.n_rows() * k];
    for (i, p) in plans.plans.iter().enumerate() {
        let (cols, vals) = a.row(i);
        let (n, cnt) = (p.params.granularity, p.params.sample_cnt);
        let mut order = vec![0usize; n * cnt];
        for (s, &start) in p.starts.iter().enumerate() {
            for j in 0..n {
                order[s + j * cnt] = start as usize + j;
            }
        }
        for c in 0..k {
            out[i * k + c] = order.iter().fold(0.0f32, |acc, &e| acc + vals[e] * b.get(cols[e] as usize, c));
        }
    }
    DenseMatrix::new(a.n_rows(), k, out).unwrap()
}

fn random_pair(seed: u64, n: usize, density: f64, k: usize) -> (CsrMatrix, DenseMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if rng.random_bool(density) {
                t.push((i, j, rng.random_range(-1.0f32..1.0)));
            }
        }
    }
    let a = CsrMatrix::from_triplets(n, n, t).unwrap();
    let b = DenseMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0f32..1.0));
    (a, b)
}

#[test]
fn three_by_three_times_ones_gives_row_sums() {
    let a = CsrMatrix::try_new(3, 3, vec![0, 2, 4, 6], vec![0, 1, 1, 2, 0, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap();
    let ones = DenseMatrix::from_fn(3, 1, |_, _| 1.0);
    assert_eq!(spmm_exact(&a, &ones).unwrap().data(), &[3.0, 7.0, 11.0]);
}

#[test]
fn exact_matches_dense_matmul() {
    for seed in 0..20 {
        let (a, b) = random_pair(seed, 32, 0.3, 8);
        let got = spmm_exact(&a, &b).unwrap();
        let want = dense_oracle(&a.to_dense(), &b);
        for (g, w) in got.data().iter().zip(&want) {
            let rel = (*g as f64 - w).abs() / w.abs().max(1.0);
            assert!(rel <= 1e-6, "seed {seed}: {g} vs {w}");
        }
    }
}

#[test]
fn replay_at_w8_is_exact() {
    let (a, b) = random_pair(4, 64, 0.4, 4);
    for s in Strategy::ALL {
        assert!(spmm_sampled(&a, &b, &build_plan_set(&a, 8, s).unwrap()).unwrap().bit_eq(&replay(&a, &b, 8, s)));
    }
}

#[test]
fn shape_and_plan_mismatches_are_rejected() {
    let (a, b) = random_pair(1, 10, 0.3, 2);
    let wrong = DenseMatrix::zeros(9, 2);
    assert!(matches!(spmm_exact(&a, &wrong), Err(KernelError::ShapeMismatch { .. })));
    let (other, _) = random_pair(2, 10, 0.3, 2);
    let plans = build_plan_set(&other, 4, Strategy::Adaptive).unwrap();
    if other != a {
        assert!(matches!(spmm_sampled(&a, &b, &plans), Err(KernelError::PlanMatrixMismatch(_))));
    }
}

#[test]
fn fma_bounded_by_slots() {
    let (a, b) = random_pair(7, 64, 0.5, 3);
    let w = 8;
    let plans = build_plan_set(&a, w, Strategy::Adaptive).unwrap();
    let (_, work) = spmm_sampled_instrumented(&a, &b, &plans).unwrap();
    assert!(work.fma_count <= (a.n_rows() * w * b.n_cols()) as u64);
    let rates = sampling_rate(&plans, &row_stats(&a));
    let slots: f64 = rates.aggregate * a.nnz() as f64;
    assert_eq!(work.fma_count, (slots.round() as u64) * b.n_cols() as u64);
}

fn instance() -> impl proptest::strategy::Strategy<Value = (CsrMatrix, DenseMatrix)> {
    (1..24usize, 1..6usize).prop_flat_map(|(n, k)| {
        let entries = proptest::collection::vec((0..n, 0..n, -2.0f32..2.0), 0..n * 6);
        let dense = proptest::collection::vec(-2.0f32..2.0, n * k);
        (entries, dense).prop_map(move |(e, d)| {
            (CsrMatrix::from_triplets(n, n, e).unwrap(), DenseMatrix::new(n, k, d).unwrap())
        })
    })
}

proptest! {
    #[test]
    fn sampled_equals_replay((a, b) in instance(), w in 1usize..20, s in select(Strategy::ALL.to_vec())) {
        let plans = build_plan_set(&a, w, s).unwrap();
        prop_assert!(spmm_sampled(&a, &b, &plans).unwrap().bit_eq(&replay(&a, &b, w, s)));
    }

    #[test]
    fn full_coverage_equals_exact((a, b) in instance(), extra in 0usize..4) {
        let w = row_stats(&a).max_row_nnz.max(1) + extra;
        for s in [Strategy::Adaptive, Strategy::Full] {
            let plans = build_plan_set(&a, w, s).unwrap();
            prop_assert!(spmm_sampled(&a, &b, &plans).unwrap().bit_eq(&spmm_exact(&a, &b).unwrap()));
        }
    }

    #[test]
    fn sampled_never_does_more_work((a, b) in instance(), w in 1usize..20, s in select(Strategy::ALL.to_vec())) {
        let plans = build_plan_set(&a, w, s).unwrap();
        let (_, ws) = spmm_sampled_instrumented(&a, &b, &plans).unwrap();
        let (_, we) = spmm_exact_instrumented(&a, &b).unwrap();
        prop_assert!(ws.fma_count <= we.fma_count);
        prop_assert_eq!(ws.fma_count, (plans.total_slots() * b.n_cols()) as u64);
    }

    #[test]
    fn linear_in_the_dense_operand((a, b) in instance(), w in 1usize..20, alpha in -3.0f32..3.0) {
        let plans = build_plan_set(&a, w, Strategy::Adaptive).unwrap();
        let scaled = DenseMatrix::from_fn(b.n_rows(), b.n_cols(), |i, j| alpha * b.get(i, j));
        let base = spmm_sampled(&a, &b, &plans).unwrap();
        let got = spmm_sampled(&a, &scaled, &plans).unwrap();
        // |sum v*alpha*x - alpha*sum v*x| is bounded by rounding on the absolute sum
        let abs_a = a.with_values(a.val().iter().map(|v| v.abs()).collect()).unwrap();
        let abs_b = DenseMatrix::from_fn(b.n_rows(), b.n_cols(), |i, j| b.get(i, j).abs());
        let mag = spmm_sampled(&abs_a, &abs_b, &plans).unwrap();
        for ((g, x), m) in got.data().iter().zip(base.data()).zip(mag.data()) {
            let tol = 1e-5 * (alpha.abs() * m).max(1e-30);
            prop_assert!((g - alpha * x).abs() <= tol, "{} vs {}", g, alpha * x);
        }
    }

    #[test]
    fn zero_operand_gives_zero((a, b) in instance(), w in 1usize..20) {
        let plans = build_plan_set(&a, w, Strategy::Adaptive).unwrap();
        let zero = DenseMatrix::zeros(b.n_rows(), b.n_cols());
        prop_assert!(spmm_sampled(&a, &zero, &plans).unwrap().data().iter().all(|&x| x == 0.0));
        let empty = a.with_values(vec![0.0; a.nnz()]).unwrap();
        prop_assert!(spmm_sampled(&empty, &b, &plans).unwrap().data().iter().all(|&x| x == 0.0));
    }
}
