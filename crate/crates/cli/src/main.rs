//! `adaptive-spmm` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptive_spmm::bench::{
    cdf_stats, emit_report, render_text, run_spmm_sweep, run_sweep, time_median, write_cdf_csv, write_csv, Dataset,
    Normalization, ReportFormat, SweepConfig,
};
use adaptive_spmm::fixtures::{self, citation_dataset, fixture_model};
use adaptive_spmm::gnn::{evaluate, forward, GnnModel, ModelKind};
use adaptive_spmm::graph::{row_stats, CsrMatrix, DenseMatrix};
use adaptive_spmm::io::{
    load_features_timed, load_graph, load_labels, load_mask, load_model, save_csr, save_dense, save_labels,
    save_model, save_quantized, Features, GraphFormat,
};
use adaptive_spmm::quantization::{dequantize, fit_params, quantize};
use adaptive_spmm::sampling::{build_plan_set, sampling_rate, Branch, Strategy};
use adaptive_spmm::synth::{gen_synthetic, DegreeModel};
use adaptive_spmm::verify;
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "adaptive-spmm", version, about = "Adaptive edge-sampled SpMM benchmark harness")]
struct Cli {
    /// Worker threads for the kernels (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sampling statistics of one strategy at one width.
    SampleStats {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        width: usize,
        #[arg(long, default_value = "adaptive")]
        strategy: Strategy,
        /// Write the per-row sampling-rate CDF as CSV.
        #[arg(long)]
        cdf_out: Option<PathBuf>,
    },
    /// Time exact and sampled SpMM against a random dense operand.
    SpmmBench {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 32)]
        cols: usize,
        #[arg(long, value_delimiter = ',', default_value = "16,32,64,128,256,512,1024")]
        widths: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "adaptive,afs,sfs,full")]
        strategies: Vec<Strategy>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run one inference and compare it with the exact pipeline.
    Infer {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        width: usize,
        #[arg(long, default_value = "adaptive")]
        strategy: Strategy,
        /// Run on 8-bit quantized features (quantizing f32 input on the fly).
        #[arg(long)]
        quantized: bool,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Insert self-loops before GCN normalization.
        #[arg(long)]
        self_loops: bool,
    },
    /// Sweep strategies and widths over a dataset and model.
    Sweep {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        self_loops: bool,
        #[arg(long, value_delimiter = ',', default_value = "16,32,64,128,256,512,1024")]
        widths: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "adaptive,afs,sfs,full")]
        strategies: Vec<Strategy>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutFormat,
    },
    /// Quantize an f32 FMAT file to 8-bit codes.
    Quantize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic graph as CSRB.
    Gen {
        #[arg(long)]
        nodes: usize,
        #[arg(long, value_enum, default_value = "power-law")]
        model: GenModel,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 2000)]
        max_deg: usize,
        /// Row degree for the uniform model.
        #[arg(long, default_value_t = 4)]
        degree: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a generated citation dataset with fixture weights.
    Fixture {
        #[arg(long, default_value = "cora")]
        name: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        hidden: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the built-in oracle checks.
    Verify,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenModel {
    #[value(name = "power_law", alias = "power-law")]
    PowerLaw,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Text,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn read_graph(path: &Path) -> Result<CsrMatrix> {
    load_graph(path, GraphFormat::from_path(path)).with_context(|| format!("loading graph {}", path.display()))
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::SampleStats { graph, width, strategy, cdf_out } => {
            let g = read_graph(&graph)?;
            let stats = row_stats(&g);
            let plans = build_plan_set(&g, width, strategy)?;
            let rates = sampling_rate(&plans, &stats);
            println!("rows: {}", g.n_rows());
            println!("nnz: {}", g.nnz());
            println!("avg_degree: {:.4}", stats.avg_degree);
            println!("max_row_nnz: {}", stats.max_row_nnz);
            println!("strategy: {strategy}");
            println!("W: {width}");
            for (branch, count) in Branch::TABLE.iter().zip(plans.branch_histogram()) {
                println!("rows[{branch:?}]: {count}");
            }
            println!("slots: {}", plans.total_slots());
            println!("rate: {:.6}", rates.aggregate);
            println!("unique_rate: {:.6}", rates.unique_aggregate);
            let cdf = cdf_stats(&rates.unique_per_row);
            let at_least_80 = rates.unique_per_row.iter().filter(|&&r| r >= 0.8).count() as f64
                / rates.unique_per_row.len().max(1) as f64;
            println!("rows_with_unique_rate_ge_0.8: {at_least_80:.6}");
            if let Some(path) = cdf_out {
                let f = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                write_cdf_csv(std::io::BufWriter::new(f), &cdf)?;
            }
        }
        Command::SpmmBench { graph, cols, widths, strategies, repeats, out, seed } => {
            let (g, load_ms) = time_median(repeats, || read_graph(&graph));
            let g = g?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = DenseMatrix::from_fn(g.n_cols(), cols, |_, _| rng.random_range(-1.0f32..1.0));
            let report = run_spmm_sweep(&g, &b, &strategies, &widths, repeats, load_ms)?;
            match out {
                Some(path) => emit_report(&report, &path, ReportFormat::Csv)?,
                None => write_csv(std::io::stdout().lock(), &report)?,
            }
            eprint!("{}", render_text(&report));
        }
        Command::Infer { graph, features, model, width, strategy, quantized, labels, mask, self_loops } => {
            let g = read_graph(&graph)?;
            let model = load_model(&model).context("loading model")?;
            let (feats, load) = load_features_timed(&features).context("loading features")?;
            let original = feats.to_dense();
            let input = if quantized {
                match &feats {
                    Features::Quantized(_) => original.clone(),
                    Features::Dense(d) => dequantize(&quantize(d, fit_params(d, 8)?)),
                }
            } else {
                original.clone()
            };
            let labels = labels.map(load_labels).transpose()?;
            let mask = mask.map(load_mask).transpose()?;
            infer(&g, &model, &original, &input, width, strategy, labels.as_deref(), mask.as_deref(), self_loops)?;
            println!("feature_load_ms: {:.4}", load.as_secs_f64() * 1e3);
        }
        Command::Sweep { graph, features, model, labels, mask, self_loops, widths, strategies, repeats, out, format } => {
            let g = read_graph(&graph)?;
            let model = load_model(&model).context("loading model")?;
            let (feats, load) = load_features_timed(&features).context("loading features")?;
            let labels = match labels {
                Some(p) => load_labels(p)?,
                None => {
                    // score against the exact pipeline when no labels are given
                    let adj = Normalization::for_model(model.kind(), self_loops).apply(&g)?;
                    forward(&adj, &feats.to_dense(), &model, None)?.logits.argmax_rows()
                }
            };
            let dataset = Dataset {
                name: graph.display().to_string(),
                graph: g,
                features: feats,
                labels,
                mask: mask.map(load_mask).transpose()?,
                feature_load_time: Some(load),
            };
            let config = SweepConfig {
                strategies,
                widths,
                repeats,
                normalization: Normalization::for_model(model.kind(), self_loops),
            };
            let report = run_sweep(&dataset, &model, &config)?;
            let format = match format {
                OutFormat::Csv => ReportFormat::Csv,
                OutFormat::Text => ReportFormat::Text,
            };
            match (out, format) {
                (Some(path), f) => emit_report(&report, &path, f)?,
                (None, ReportFormat::Csv) => write_csv(std::io::stdout().lock(), &report)?,
                (None, ReportFormat::Text) => print!("{}", render_text(&report)),
            }
        }
        Command::Quantize { input, out } => {
            let (feats, _) = load_features_timed(&input).context("loading features")?;
            let Features::Dense(x) = feats else {
                bail!("{} is already quantized", input.display());
            };
            let params = fit_params(&x, 8)?;
            let q = quantize(&x, params);
            save_quantized(&out, &q)?;
            println!("x_min: {}", params.x_min());
            println!("x_max: {}", params.x_max());
            println!("f32_payload_bytes: {}", x.data().len() * 4);
            println!("q8_payload_bytes: {}", q.payload_bytes());
        }
        Command::Gen { nodes, model, alpha, max_deg, degree, seed, out } => {
            let degrees = match model {
                GenModel::PowerLaw => DegreeModel::PowerLaw { alpha, max_deg },
                GenModel::Uniform => DegreeModel::Uniform { degree },
            };
            let g = gen_synthetic(nodes, degrees, seed)?;
            save_csr(&out, &g)?;
            let stats = row_stats(&g);
            println!("rows: {}", g.n_rows());
            println!("nnz: {}", g.nnz());
            println!("max_row_nnz: {}", stats.max_row_nnz);
        }
        Command::Fixture { name, seed, hidden, out_dir } => {
            let spec = fixtures::by_name(&name).with_context(|| format!("unknown fixture {name:?}"))?;
            std::fs::create_dir_all(&out_dir)?;
            let d = citation_dataset(&spec, seed);
            save_csr(out_dir.join("graph.csrb"), &d.graph)?;
            let x = d.features.to_dense();
            save_dense(out_dir.join("features.fmat"), &x)?;
            save_quantized(out_dir.join("features.q8.fmat"), &quantize(&x, fit_params(&x, 8)?))?;
            save_labels(out_dir.join("labels.txt"), &d.labels)?;
            for kind in [ModelKind::Gcn, ModelKind::SageMean] {
                let path = save_model(&out_dir, kind.as_str(), &fixture_model(&spec, kind, hidden, seed))?;
                println!("model: {}", path.display());
            }
            println!("nodes: {}", d.graph.n_rows());
            println!("nnz: {}", d.graph.nnz());
        }
        Command::Verify => {
            let mut ok = true;
            for c in verify::run_all() {
                println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            if !ok {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn infer(
    g: &CsrMatrix,
    model: &GnnModel,
    original: &DenseMatrix,
    input: &DenseMatrix,
    width: usize,
    strategy: Strategy,
    labels: Option<&[usize]>,
    mask: Option<&[bool]>,
    self_loops: bool,
) -> Result<()> {
    let norm = Normalization::for_model(model.kind(), self_loops);
    let adj = norm.apply(g)?;
    let reference = forward(&adj, original, model, None)?;
    let plans = build_plan_set(&adj, width, strategy)?;
    let (out, ms) = time_median(1, || forward(&adj, input, model, Some(&plans)));
    let out = out?;
    let reference_labels = reference.logits.argmax_rows();
    let labels = labels.unwrap_or(&reference_labels);
    let eval = evaluate(&out.logits, labels, Some(&reference.logits), mask)?;
    let rates = sampling_rate(&plans, &row_stats(&adj));
    println!("model: {}", model.kind());
    println!("normalization: {}", norm.as_str());
    println!("strategy: {strategy}");
    println!("W: {width}");
    println!("rate: {:.6}", rates.aggregate);
    println!("unique_rate: {:.6}", rates.unique_aggregate);
    println!("fma: {}", out.work.fma_count);
    println!("exact_fma: {}", reference.work.fma_count);
    println!("forward_ms: {ms:.4}");
    println!("accuracy: {:.6}", eval.accuracy);
    println!("agreement: {:.6}", eval.agreement.unwrap_or(1.0));
    Ok(())
}
