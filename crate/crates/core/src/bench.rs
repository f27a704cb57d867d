//! Benchmark orchestration: width sweeps over sampling strategies, timing,
//! sampling statistics and report emission.
//!
//! Outputs of every sweep are deterministic; only the wall-clock columns
//! vary between runs.

use std::fmt::Write as _;
use std::io;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnn::{evaluate, forward, GnnError, GnnModel, ModelKind};
use crate::graph::{gcn_normalize, row_mean_normalize, row_stats, CsrError, CsrMatrix, DenseMatrix};
use crate::io::Features;
use crate::kernels::{spmm_exact_instrumented, spmm_sampled_instrumented, KernelError};
use crate::sampling::{build_plan_set, sampling_rate, SamplingError, Strategy};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Csr(#[from] CsrError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error("dataset is inconsistent: {0}")]
    Dataset(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Graph, features and labels of one benchmark input.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub graph: CsrMatrix,
    pub features: Features,
    pub labels: Vec<usize>,
    pub mask: Option<Vec<bool>>,
    /// Wall time spent loading the feature file, when it came from disk.
    pub feature_load_time: Option<Duration>,
}

impl Dataset {
    pub fn validate(&self) -> Result<(), BenchError> {
        let n = self.graph.n_rows();
        if !self.graph.is_square() || self.features.n_rows() != n || self.labels.len() != n {
            return Err(BenchError::Dataset(format!(
                "graph {}x{}, {} feature rows, {} labels",
                self.graph.n_rows(),
                self.graph.n_cols(),
                self.features.n_rows(),
                self.labels.len()
            )));
        }
        if self.mask.as_ref().is_some_and(|m| m.len() != n) {
            return Err(BenchError::Dataset("mask length differs from node count".into()));
        }
        Ok(())
    }
}

/// Adjacency preprocessing applied before inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    /// `D^-1/2 (A + I) D^-1/2`
    SymmetricSelfLoops,
    /// `D^-1/2 A D^-1/2`
    Symmetric,
    /// `1 / row_nnz` per entry.
    RowMean,
    /// Values used as stored.
    Raw,
}

impl Normalization {
    /// Default preprocessing for a model kind.
    pub fn for_model(kind: ModelKind, self_loops: bool) -> Self {
        match (kind, self_loops) {
            (ModelKind::Gcn, true) => Normalization::SymmetricSelfLoops,
            (ModelKind::Gcn, false) => Normalization::Symmetric,
            (ModelKind::SageMean, _) => Normalization::RowMean,
        }
    }

    pub fn apply(self, a: &CsrMatrix) -> Result<CsrMatrix, CsrError> {
        match self {
            Normalization::SymmetricSelfLoops => gcn_normalize(a, true),
            Normalization::Symmetric => gcn_normalize(a, false),
            Normalization::RowMean => row_mean_normalize(a),
            Normalization::Raw => Ok(a.clone()),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::SymmetricSelfLoops => "symmetric+self-loops",
            Normalization::Symmetric => "symmetric",
            Normalization::RowMean => "row-mean",
            Normalization::Raw => "raw",
        }
    }
}

/// One `(strategy, W)` measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub strategy: Strategy,
    pub width: usize,
    /// Median SpMM kernel time over the repeats.
    pub kernel_ms: f64,
    /// Median plan construction time.
    pub plan_ms: f64,
    /// Median of plan construction plus kernel, measured together.
    pub fused_ms: f64,
    pub load_ms: f64,
    pub fma: u64,
    pub rate: f64,
    pub unique_rate: f64,
    pub accuracy: f64,
    pub agreement: f64,
}

/// Row of the CSV report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRecord {
    pub strategy: String,
    #[serde(rename = "W")]
    pub width: usize,
    pub kernel_ms: f64,
    pub load_ms: f64,
    pub fma: u64,
    pub rate: f64,
    pub unique_rate: f64,
    pub accuracy: f64,
    pub agreement: f64,
}

pub const CSV_HEADER: &str = "strategy,W,kernel_ms,load_ms,fma,rate,unique_rate,accuracy,agreement";

impl From<&BenchRecord> for CsvRecord {
    fn from(r: &BenchRecord) -> Self {
        Self {
            strategy: r.strategy.to_string(),
            width: r.width,
            kernel_ms: r.kernel_ms,
            load_ms: r.load_ms,
            fma: r.fma,
            rate: r.rate,
            unique_rate: r.unique_rate,
            accuracy: r.accuracy,
            agreement: r.agreement,
        }
    }
}

/// Measurements plus the context needed to interpret them.
#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
    /// Free-form `key: value` metadata: thread count, model, normalization,
    /// calibration.
    pub metadata: Vec<(String, String)>,
}

impl BenchReport {
    pub fn push_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.metadata.push((key.into(), value.to_string()));
    }

    pub fn find(&self, strategy: Strategy, width: usize) -> Option<&BenchRecord> {
        self.records.iter().find(|r| r.strategy == strategy && r.width == width)
    }
}

pub fn median_ms(samples: &mut [Duration]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.sort_unstable();
    let mid = samples.len() / 2;
    let d = if samples.len() % 2 == 1 {
        samples[mid]
    } else {
        (samples[mid - 1] + samples[mid]) / 2
    };
    d.as_secs_f64() * 1e3
}

/// Runs `f` `repeats` times (at least once), returning the last result and
/// the median wall time in milliseconds.
pub fn time_median<T>(repeats: usize, mut f: impl FnMut() -> T) -> (T, f64) {
    let mut samples = Vec::with_capacity(repeats.max(1));
    let mut last = None;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        let out = std::hint::black_box(f());
        samples.push(start.elapsed());
        last = Some(out);
    }
    (last.expect("at least one run"), median_ms(&mut samples))
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub strategies: Vec<Strategy>,
    pub widths: Vec<usize>,
    pub repeats: usize,
    pub normalization: Normalization,
}

/// Runs inference for every `(strategy, W)` pair and scores it against the
/// exact pipeline.
///
/// Kernel timings cover the first-layer aggregation `Â × X` on the dataset
/// features, which is where the sampled kernel does its work; `fma` counts
/// the SpMM work of the whole forward pass.
pub fn run_sweep(dataset: &Dataset, model: &GnnModel, config: &SweepConfig) -> Result<BenchReport, BenchError> {
    dataset.validate()?;
    let adj = config.normalization.apply(&dataset.graph)?;
    let features = dataset.features.to_dense();
    let stats = row_stats(&adj);

    let reference = forward(&adj, &features, model, None)?;
    let mask = dataset.mask.as_deref();
    let load_ms = dataset.feature_load_time.map_or(0.0, |d| d.as_secs_f64() * 1e3);

    let mut report = BenchReport::default();
    report.push_meta("dataset", &dataset.name);
    report.push_meta("nodes", adj.n_rows());
    report.push_meta("nnz", adj.nnz());
    report.push_meta("max_row_nnz", stats.max_row_nnz);
    report.push_meta("model", model.kind());
    report.push_meta(
        "layer_dims",
        model.dims().iter().map(usize::to_string).collect::<Vec<_>>().join("-"),
    );
    report.push_meta("normalization", config.normalization.as_str());
    if model.kind() == ModelKind::SageMean {
        report.push_meta("sage_variant", "mean aggregator, [self | mean(neighbors)] concatenation");
    }
    report.push_meta(
        "features",
        match &dataset.features {
            Features::Dense(_) => "f32".to_string(),
            Features::Quantized(q) => format!("dequantized u{} (global min/max)", q.params().bits()),
        },
    );
    report.push_meta("threads", rayon::current_num_threads());
    report.push_meta("repeats", config.repeats.max(1));
    report.push_meta("exact_fma", reference.work.fma_count);

    for &strategy in &config.strategies {
        for &width in &config.widths {
            let (plans, plan_ms) = time_median(config.repeats, || build_plan_set(&adj, width, strategy));
            let plans = plans?;
            let (timed, kernel_ms) =
                time_median(config.repeats, || spmm_sampled_instrumented(&adj, &features, &plans));
            timed?;
            let (fused, fused_ms) = time_median(config.repeats, || {
                build_plan_set(&adj, width, strategy)
                    .map_err(BenchError::from)
                    .and_then(|p| Ok(spmm_sampled_instrumented(&adj, &features, &p)?))
            });
            fused?;

            let out = forward(&adj, &features, model, Some(&plans))?;
            let eval = evaluate(&out.logits, &dataset.labels, Some(&reference.logits), mask)?;
            let rates = sampling_rate(&plans, &stats);
            report.records.push(BenchRecord {
                strategy,
                width,
                kernel_ms,
                plan_ms,
                fused_ms,
                load_ms,
                fma: out.work.fma_count,
                rate: rates.aggregate,
                unique_rate: rates.unique_aggregate,
                accuracy: eval.accuracy,
                agreement: eval.agreement.unwrap_or(1.0),
            });
        }
    }
    Ok(report)
}

/// Kernel-only sweep: `A × B` for a given dense operand. Accuracy and
/// agreement both compare row argmaxes of the sampled output with the exact
/// output.
pub fn run_spmm_sweep(
    a: &CsrMatrix,
    b: &DenseMatrix,
    strategies: &[Strategy],
    widths: &[usize],
    repeats: usize,
    load_ms: f64,
) -> Result<BenchReport, BenchError> {
    let stats = row_stats(a);
    let (exact, exact_ms) = time_median(repeats, || spmm_exact_instrumented(a, b));
    let (exact, exact_work) = exact?;
    let exact_argmax = exact.argmax_rows();

    let mut report = BenchReport::default();
    report.push_meta("rows", a.n_rows());
    report.push_meta("nnz", a.nnz());
    report.push_meta("max_row_nnz", stats.max_row_nnz);
    report.push_meta("dense_cols", b.n_cols());
    report.push_meta("exact_kernel_ms", format!("{exact_ms:.4}"));
    report.push_meta("exact_fma", exact_work.fma_count);
    report.push_meta("threads", rayon::current_num_threads());
    report.push_meta("repeats", repeats.max(1));

    for &strategy in strategies {
        for &width in widths {
            let (plans, plan_ms) = time_median(repeats, || build_plan_set(a, width, strategy));
            let plans = plans?;
            let (out, kernel_ms) = time_median(repeats, || spmm_sampled_instrumented(a, b, &plans));
            let (c, work) = out?;
            let (fused, fused_ms) = time_median(repeats, || {
                build_plan_set(a, width, strategy)
                    .map_err(BenchError::from)
                    .and_then(|p| Ok(spmm_sampled_instrumented(a, b, &p)?))
            });
            fused?;
            let pred = c.argmax_rows();
            let agree = if pred.is_empty() {
                1.0
            } else {
                pred.iter().zip(&exact_argmax).filter(|(x, y)| x == y).count() as f64 / pred.len() as f64
            };
            let rates = sampling_rate(&plans, &stats);
            report.records.push(BenchRecord {
                strategy,
                width,
                kernel_ms,
                plan_ms,
                fused_ms,
                load_ms,
                fma: work.fma_count,
                rate: rates.aggregate,
                unique_rate: rates.unique_aggregate,
                accuracy: agree,
                agreement: agree,
            });
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Text,
}

pub fn write_csv<W: io::Write>(w: W, report: &BenchReport) -> Result<(), BenchError> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(CSV_HEADER.split(','))?;
    for r in &report.records {
        wtr.serialize(CsvRecord::from(r))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_csv<R: io::Read>(r: R) -> Result<Vec<CsvRecord>, BenchError> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(BenchError::Dataset(format!("unexpected report header {header:?}")));
    }
    Ok(rdr.deserialize().collect::<Result<Vec<_>, _>>()?)
}

/// Fixed-width table with the metadata above it.
pub fn render_text(report: &BenchReport) -> String {
    let mut s = String::new();
    for (k, v) in &report.metadata {
        let _ = writeln!(s, "# {k}: {v}");
    }
    let _ = writeln!(
        s,
        "{:<9} {:>6} {:>11} {:>9} {:>10} {:>9} {:>14} {:>7} {:>11} {:>9} {:>9}",
        "strategy", "W", "kernel_ms", "plan_ms", "fused_ms", "load_ms", "fma", "rate", "unique_rate", "accuracy",
        "agreement"
    );
    for r in &report.records {
        let _ = writeln!(
            s,
            "{:<9} {:>6} {:>11.4} {:>9.4} {:>10.4} {:>9.4} {:>14} {:>7.4} {:>11.4} {:>9.4} {:>9.4}",
            r.strategy.as_str(),
            r.width,
            r.kernel_ms,
            r.plan_ms,
            r.fused_ms,
            r.load_ms,
            r.fma,
            r.rate,
            r.unique_rate,
            r.accuracy,
            r.agreement
        );
    }
    s
}

pub fn emit_report(report: &BenchReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<(), BenchError> {
    let file = std::fs::File::create(path)?;
    match format {
        ReportFormat::Csv => write_csv(io::BufWriter::new(file), report),
        ReportFormat::Text => {
            let mut w = io::BufWriter::new(file);
            io::Write::write_all(&mut w, render_text(report).as_bytes())?;
            io::Write::flush(&mut w)?;
            Ok(())
        }
    }
}

/// Empirical CDF: distinct values in ascending order with the fraction of
/// samples at or below each.
pub fn cdf_stats(rates: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = rates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &r) in sorted.iter().enumerate() {
        let cum = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == r => last.1 = cum,
            _ => out.push((r, cum)),
        }
    }
    out
}

pub fn write_cdf_csv<W: io::Write>(mut w: W, cdf: &[(f64, f64)]) -> io::Result<()> {
    writeln!(w, "rate,cumulative")?;
    for (r, c) in cdf {
        writeln!(w, "{r},{c}")?;
    }
    Ok(())
}
