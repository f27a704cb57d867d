use adaptive_spmm::bench::{run_sweep, Normalization, SweepConfig};
use adaptive_spmm::fixtures::{citation_dataset, fixture_model, CORA};
use adaptive_spmm::gnn::{evaluate, forward, gcn_forward, sage_forward, GnnError, GnnModel, Layer, ModelKind};
use adaptive_spmm::graph::{gcn_normalize, row_mean_normalize, row_stats, CsrMatrix, DenseMatrix};
use adaptive_spmm::sampling::{build_plan_set, sampling_rate, Strategy};
use adaptive_spmm::synth::{gen_synthetic, DegreeModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn agreement(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let (x, y) = (a.argmax_rows(), b.argmax_rows());
    x.iter().zip(&y).filter(|(p, q)| p == q).count() as f64 / x.len() as f64
}

fn random_model(kind: ModelKind, dims: &[usize], seed: u64) -> GnnModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factor = if kind == ModelKind::SageMean { 2 } else { 1 };
    let layers = dims
        .windows(2)
        .map(|d| {
            let w = DenseMatrix::from_fn(factor * d[0], d[1], |_, _| rng.random_range(-1.0f32..1.0));
            let b = (0..d[1]).map(|_| rng.random_range(-0.1f32..0.1)).collect();
            Layer::new(w, Some(b)).unwrap()
        })
        .collect();
    GnnModel::new(kind, layers).unwrap()
}

#[test]
fn dense_gcn_oracle_agrees() {
    // H' = A_hat relu(A_hat X W0 + b0) W1 + b1 computed densely in f64
    let g = gen_synthetic(60, DegreeModel::PowerLaw { alpha: 1.1, max_deg: 20 }, 3).unwrap();
    let adj = gcn_normalize(&g, true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = DenseMatrix::from_fn(60, 6, |_, _| rng.random_range(-1.0f32..1.0));
    let m = random_model(ModelKind::Gcn, &[6, 5, 3], 8);
    let got = gcn_forward(&adj, &x, &m, None).unwrap();

    let a = adj.to_dense();
    let mm = |p: &[f64], pr: usize, pc: usize, q: &DenseMatrix| -> Vec<f64> {
        let qc = q.n_cols();
        let mut o = vec![0.0; pr * qc];
        for i in 0..pr {
            for l in 0..pc {
                for j in 0..qc {
                    o[i * qc + j] += p[i * pc + l] * q.get(l, j) as f64;
                }
            }
        }
        o
    };
    let to64 = |d: &DenseMatrix| d.data().iter().map(|&v| v as f64).collect::<Vec<f64>>();
    let mut h = to64(&x);
    let mut cols = 6;
    for (li, layer) in m.layers().iter().enumerate() {
        let agg = {
            let hm = DenseMatrix::new(60, cols, h.iter().map(|&v| v as f32).collect()).unwrap();
            mm(&to64(&a), 60, 60, &hm)
        };
        let mut z = mm(&agg, 60, cols, &layer.weight);
        cols = layer.weight.n_cols();
        for i in 0..60 {
            for j in 0..cols {
                z[i * cols + j] += layer.bias.as_ref().unwrap()[j] as f64;
                if li == 0 {
                    z[i * cols + j] = z[i * cols + j].max(0.0);
                }
            }
        }
        h = z;
    }
    for (g, w) in got.data().iter().zip(&h) {
        assert!((*g as f64 - w).abs() <= 1e-4 * w.abs().max(1.0), "{g} vs {w}");
    }
}

#[test]
fn wide_buffer_gives_identical_logits() {
    for seed in 0..4 {
        let g = gen_synthetic(80, DegreeModel::PowerLaw { alpha: 1.0, max_deg: 40 }, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DenseMatrix::from_fn(80, 5, |_, _| rng.random_range(-1.0f32..1.0));
        for kind in [ModelKind::Gcn, ModelKind::SageMean] {
            let adj = Normalization::for_model(kind, true).apply(&g).unwrap();
            let m = random_model(kind, &[5, 8, 4], seed);
            let w = row_stats(&adj).max_row_nnz;
            let plans = build_plan_set(&adj, w, Strategy::Adaptive).unwrap();
            let exact = forward(&adj, &x, &m, None).unwrap().logits;
            let sampled = forward(&adj, &x, &m, Some(&plans)).unwrap().logits;
            assert!(sampled.bit_eq(&exact));
            assert_eq!(agreement(&sampled, &exact), 1.0);
        }
    }
}

#[test]
fn agreement_is_mostly_monotone_in_width() {
    let widths = [16usize, 32, 64, 128, 256, 512, 1024];
    let mut inversions = 0;
    for seed in 0..5 {
        let g = gen_synthetic(1200, DegreeModel::PowerLaw { alpha: 0.9, max_deg: 1000 }, seed).unwrap();
        let adj = gcn_normalize(&g, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = DenseMatrix::from_fn(1200, 8, |_, _| rng.random_range(-1.0f32..1.0));
        let m = random_model(ModelKind::Gcn, &[8, 8, 4], seed);
        let exact = forward(&adj, &x, &m, None).unwrap().logits;
        let agree: Vec<f64> = widths
            .iter()
            .map(|&w| {
                let plans = build_plan_set(&adj, w, Strategy::Adaptive).unwrap();
                agreement(&forward(&adj, &x, &m, Some(&plans)).unwrap().logits, &exact)
            })
            .collect();
        inversions += agree.windows(2).filter(|p| p[1] < p[0]).count();
        assert_eq!(*agree.last().unwrap(), 1.0, "W=1024 covers every row");
    }
    assert!(inversions <= 1, "{inversions} inversions");
}

#[test]
fn cora_fma_matches_slot_count() {
    let d = citation_dataset(&CORA, 7);
    let adj = gcn_normalize(&d.graph, true).unwrap();
    let model = fixture_model(&CORA, ModelKind::Gcn, 16, 7);
    let x = d.features.to_dense();
    let plans = build_plan_set(&adj, 16, Strategy::Adaptive).unwrap();
    let out = forward(&adj, &x, &model, Some(&plans)).unwrap();
    let rates = sampling_rate(&plans, &row_stats(&adj));
    let slots = (rates.aggregate * adj.nnz() as f64).round() as u64;
    assert_eq!(slots, plans.total_slots() as u64);
    // one aggregation per layer: 1433 input columns, then 16 hidden
    assert_eq!(out.work.fma_count, slots * (1433 + 16));
}

#[test]
fn fixture_sweep_full_strategy_agrees_and_fma_grows() {
    let d = citation_dataset(&CORA, 7);
    let model = fixture_model(&CORA, ModelKind::Gcn, 16, 7);
    let config = SweepConfig {
        strategies: vec![Strategy::Adaptive, Strategy::Full],
        widths: vec![16, 32, 64, 128, 256, 512, 1024],
        repeats: 1,
        normalization: Normalization::SymmetricSelfLoops,
    };
    let report = run_sweep(&d, &model, &config).unwrap();
    for w in &config.widths {
        assert_eq!(report.find(Strategy::Full, *w).unwrap().agreement, 1.0);
    }
    let fma: Vec<u64> = config.widths.iter().map(|&w| report.find(Strategy::Adaptive, w).unwrap().fma).collect();
    assert!(fma.windows(2).all(|p| p[0] <= p[1]), "{fma:?}");
    let acc = report.find(Strategy::Full, 16).unwrap().accuracy;
    assert!(acc > 0.9, "fixture model accuracy {acc}");
}

#[test]
fn sage_on_cora_stays_close() {
    let d = citation_dataset(&CORA, 7);
    let adj = row_mean_normalize(&d.graph).unwrap();
    let model = fixture_model(&CORA, ModelKind::SageMean, 16, 7);
    let x = d.features.to_dense();
    let exact = sage_forward(&adj, &x, &model, None).unwrap();
    let plans = build_plan_set(&adj, 16, Strategy::Adaptive).unwrap();
    let sampled = sage_forward(&adj, &x, &model, Some(&plans)).unwrap();
    assert!(agreement(&sampled, &exact) >= 0.97);
}

#[test]
fn wrong_kind_and_shapes_are_errors() {
    let g = CsrMatrix::identity(4);
    let x = DenseMatrix::zeros(4, 3);
    let gcn = random_model(ModelKind::Gcn, &[3, 2], 0);
    assert!(matches!(sage_forward(&g, &x, &gcn, None), Err(GnnError::WrongKind(ModelKind::Gcn))));
    assert!(matches!(gcn_forward(&g, &DenseMatrix::zeros(4, 2), &gcn, None), Err(GnnError::ShapeMismatch(_))));
    let logits = DenseMatrix::zeros(4, 2);
    assert!(matches!(evaluate(&logits, &[0, 1, 2, 0], None, None), Err(GnnError::LabelOutOfRange { node: 2, .. })));
}

#[test]
fn random_logits_score_near_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let n = 70_000;
    let logits = DenseMatrix::from_fn(n, 7, |_, _| rng.random::<f32>());
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..7)).collect();
    let r = evaluate(&logits, &labels, None, None).unwrap();
    // standard error is about 0.0013
    assert!((r.accuracy - 1.0 / 7.0).abs() < 0.01, "{}", r.accuracy);
    assert_eq!(r.per_class.iter().map(|c| c.total).sum::<usize>(), n);
}

#[test]
fn mask_restricts_evaluation() {
    let logits = DenseMatrix::new(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
    let r = evaluate(&logits, &[0, 0, 1], None, Some(&[true, false, false])).unwrap();
    assert_eq!((r.evaluated, r.accuracy), (1, 1.0));
}
