use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use tada::evaluation::{evaluate, EvalResult};
use tada::persistence::{write_diagram_rows, DIAGRAM_CSV_HEADER};
use tada::pipeline::{
    compute_diagrams, embed_series, fit_with_report, load_model, save_model, score_series_with, window_center_scores,
    write_scores_csv, write_window_csv, Quantizer, ThresholdLevel,
};
use tada::quantization::SpacingMode;
use tada::scoring::Estimator;
use tada::synthgen::{
    generate_ar1_pointanomaly, generate_wheels_with_start, random_point_anomalies, Ar1Spec, WheelSpec,
};
use tada::timeseries::{load_csv, save_csv, CsvOptions};
use tada::{Parallelism, TadaConfig, TimeSeries, WeightFn, WindowConfig};

#[derive(Parser, Debug)]
#[command(
    name = "tada",
    version,
    about = "Topological anomaly detection for multivariate time series"
)]
struct Cli {
    /// Worker threads; 1 runs every stage sequentially.
    #[arg(long, env = "TADA_THREADS", global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write synthetic datasets as CSV.
    Generate {
        #[command(subcommand)]
        kind: Generate,
    },
    /// Fit a model on a CSV series and write it as JSON.
    Fit(FitArgs),
    /// Score a CSV series with a fitted model.
    Score(ScoreArgs),
    /// Evaluate score files against labeled series.
    Eval(EvalArgs),
    /// Export per-window persistence diagrams.
    Diagrams(DiagramArgs),
}

#[derive(Subcommand, Debug)]
enum Generate {
    /// Double-wheel latent graphs with one anomalous segment.
    Wheels(WheelArgs),
    /// Independent AR(1) channels with point spikes.
    Ar1(Ar1Args),
}

#[derive(Args, Debug)]
struct WheelArgs {
    /// Number of datasets; dataset i uses seed + i.
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    channels: usize,
    #[arg(long, default_value_t = 500.0)]
    sample_rate: f64,
    /// Seconds.
    #[arg(long, default_value_t = 20.0)]
    duration: f64,
    #[arg(long, default_value_t = 500)]
    anomaly_len: usize,
    #[arg(long)]
    anomaly_start: Option<usize>,
    /// AR(2) peak frequency in Hz.
    #[arg(long, default_value_t = 10.0)]
    peak: f64,
    /// AR(2) root modulus, above 1.
    #[arg(long, default_value_t = 1.01)]
    modulus: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct Ar1Args {
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    channels: usize,
    #[arg(long, default_value_t = 2000)]
    length: usize,
    #[arg(long, default_value_t = 0.9)]
    phi: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    /// Number of spikes.
    #[arg(long, default_value_t = 0)]
    anomalies: usize,
    #[arg(long, default_value_t = 8.0)]
    magnitude: f64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct WindowArgs {
    /// Window length in samples.
    #[arg(long, default_value_t = 100)]
    window: usize,
    #[arg(long, default_value_t = 10)]
    stride: usize,
    /// Homology orders 0..max-order are used.
    #[arg(long, default_value_t = 2)]
    max_order: usize,
    #[arg(long, value_enum, default_value_t = Weight::Unit)]
    weight: Weight,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Training series (CSV, one row per timestamp).
    input: PathBuf,
    #[command(flatten)]
    window: WindowArgs,
    /// Centroids per homology order.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// MCD contamination.
    #[arg(long, default_value_t = 0.1)]
    h: f64,
    /// Quantization restarts.
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = QuantizerArg::Batch)]
    quantizer: QuantizerArg,
    /// Minibatch size.
    #[arg(long)]
    q: Option<usize>,
    #[arg(long, value_enum, default_value_t = Spacing::Dense)]
    spacing: Spacing,
    /// Batch iteration cap.
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Mcd)]
    estimator: EstimatorArg,
    #[arg(long, default_value_t = 50)]
    mcd_starts: usize,
    /// Calibrate a threshold at this level (needs --delta).
    #[arg(long, requires = "delta")]
    alpha: Option<f64>,
    #[arg(long, requires = "alpha")]
    delta: Option<f64>,
    /// Model output path.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    label_column: Option<String>,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    input: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Per-timestamp scores.
    #[arg(long)]
    out: PathBuf,
    /// Optional per-window scores.
    #[arg(long)]
    windows: Option<PathBuf>,
    /// Add per-center scores to the window file.
    #[arg(long, requires = "windows")]
    centers: bool,
    #[arg(long)]
    label_column: Option<String>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Score files written by `score`.
    #[arg(long, required = true, num_args = 1..)]
    scores: Vec<PathBuf>,
    /// Labeled series, one per score file.
    #[arg(long, required = true, num_args = 1..)]
    labels: Vec<PathBuf>,
    #[arg(long)]
    label_column: Option<String>,
    /// Metrics JSON; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Append one CSV row per dataset.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DiagramArgs {
    input: PathBuf,
    #[command(flatten)]
    window: WindowArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    label_column: Option<String>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Weight {
    Unit,
    Persistence,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum QuantizerArg {
    Batch,
    Minibatch,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Spacing {
    Strided,
    Dense,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum EstimatorArg {
    Mcd,
    Plain,
}

impl From<Weight> for WeightFn {
    fn from(w: Weight) -> Self {
        match w {
            Weight::Unit => WeightFn::Unit,
            Weight::Persistence => WeightFn::Persistence,
        }
    }
}

fn csv_options(label_column: &Option<String>) -> CsvOptions {
    match label_column {
        Some(name) => CsvOptions {
            label_column: Some(name.clone()),
            label_optional: false,
            ..CsvOptions::default()
        },
        None => CsvOptions::default(),
    }
}

fn load_series(path: &Path, label_column: &Option<String>) -> Result<TimeSeries> {
    load_csv(path, &csv_options(label_column)).with_context(|| format!("cannot read series {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn generate_wheels(a: &WheelArgs) -> Result<()> {
    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    for i in 0..a.n {
        let spec = WheelSpec {
            n_channels: a.channels,
            sample_rate: a.sample_rate,
            duration_s: a.duration,
            anomaly_len: a.anomaly_len,
            anomaly_start: a.anomaly_start,
            seed: a.seed + i as u64,
            ar2_peak_freq: a.peak,
            ar2_modulus: a.modulus,
            noise_std: a.noise,
        };
        let (ts, start) = generate_wheels_with_start(&spec)?;
        let path = a.out.join(format!("wheels_{i}.csv"));
        save_csv(&ts, &path)?;
        info!(
            "wrote {} (seed {}, anomaly [{start}, {}), {spec:?})",
            path.display(),
            spec.seed,
            start + spec.anomaly_len
        );
    }
    Ok(())
}

fn generate_ar1(a: &Ar1Args) -> Result<()> {
    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    for i in 0..a.n {
        let spec = Ar1Spec {
            n_channels: a.channels,
            length: a.length,
            phi: a.phi,
            noise_std: a.noise,
            seed: a.seed + i as u64,
        };
        let spikes = random_point_anomalies(&spec, a.anomalies, a.magnitude)?;
        let ts = generate_ar1_pointanomaly(&spec, &spikes)?;
        let path = a.out.join(format!("ar1_{i}.csv"));
        save_csv(&ts, &path)?;
        info!(
            "wrote {} (seed {}, {} spikes, {spec:?})",
            path.display(),
            spec.seed,
            spikes.len()
        );
    }
    Ok(())
}

fn fit(a: &FitArgs, parallelism: Parallelism) -> Result<()> {
    let clock = Instant::now();
    let ts = load_series(&a.input, &a.label_column)?;
    let load_time = clock.elapsed();
    let cfg = TadaConfig {
        window: WindowConfig::new(a.window.window, a.window.stride),
        k: a.k,
        max_order: a.window.max_order,
        n_start: a.restarts,
        h: a.h,
        seed: a.seed,
        quantizer: match a.quantizer {
            QuantizerArg::Batch => Quantizer::Batch,
            QuantizerArg::Minibatch => Quantizer::Minibatch,
        },
        minibatch_q: a.q,
        spacing: match a.spacing {
            Spacing::Strided => SpacingMode::Strided,
            Spacing::Dense => SpacingMode::Dense,
        },
        t_max: a.t_max,
        weight_fn: a.window.weight.into(),
        estimator: match a.estimator {
            EstimatorArg::Mcd => Estimator::Mcd,
            EstimatorArg::Plain => Estimator::Plain,
        },
        threshold: a
            .alpha
            .zip(a.delta)
            .map(|(alpha, delta)| ThresholdLevel { alpha, delta }),
        mcd_starts: a.mcd_starts,
        parallelism,
    };
    info!("config: fit input={} {cfg:?}", a.input.display());
    let (model, report) = fit_with_report(&ts, &cfg)?;
    info!("timing load: {:.3}s", load_time.as_secs_f64());
    for (stage, t) in &report.timings {
        info!("timing {stage}: {:.3}s", t.as_secs_f64());
    }
    save_model(&model, &a.model)?;
    info!(
        "wrote {} ({} windows, embedding dim {}, total {:.3}s)",
        a.model.display(),
        report.n_windows,
        model.embedding_dim(),
        clock.elapsed().as_secs_f64()
    );
    if let Some(t) = model.threshold {
        info!("threshold {} at alpha {} delta {}", t.t_hat, t.alpha, t.delta);
    }
    Ok(())
}

fn score(a: &ScoreArgs, parallelism: Parallelism) -> Result<()> {
    let clock = Instant::now();
    let model = load_model(&a.model).with_context(|| format!("cannot load model {}", a.model.display()))?;
    let ts = load_series(&a.input, &a.label_column)?;
    info!(
        "config: score input={} model={} window={:?} seed={}",
        a.input.display(),
        a.model.display(),
        model.window,
        model.seed
    );
    let s = score_series_with(&model, &ts, parallelism)?;
    let mut out = create(&a.out)?;
    write_scores_csv(&mut out, &s.timestamp_scores)?;
    out.flush()?;
    if let Some(path) = &a.windows {
        let centers = if a.centers {
            let emb = embed_series(&model, &ts, parallelism)?;
            Some(window_center_scores(&model, &emb)?)
        } else {
            None
        };
        let mut w = create(path)?;
        write_window_csv(&mut w, &s.window_scores, centers.as_deref())?;
        w.flush()?;
    }
    if let Some(t) = model.threshold {
        let flagged = s.window_scores.iter().filter(|&&v| t.is_anomalous(v)).count();
        info!(
            "{flagged} of {} windows exceed threshold {}",
            s.window_scores.len(),
            t.t_hat
        );
    }
    info!(
        "scored {} timestamps in {:.3}s",
        ts.len(),
        clock.elapsed().as_secs_f64()
    );
    Ok(())
}

fn read_scores(path: &Path) -> Result<Vec<f64>> {
    let opts = CsvOptions {
        label_column: None,
        ..CsvOptions::default()
    };
    let table = load_csv(path, &opts).with_context(|| format!("cannot read scores {}", path.display()))?;
    if table.n_channels() != 2 {
        bail!("{} should have columns timestamp_index,score", path.display());
    }
    Ok(table.channel(1).to_vec())
}

fn eval(a: &EvalArgs) -> Result<()> {
    if a.scores.len() != a.labels.len() {
        bail!("{} score files for {} labeled series", a.scores.len(), a.labels.len());
    }
    info!("config: eval scores={:?} labels={:?}", a.scores, a.labels);
    let mut results: Vec<(String, EvalResult)> = Vec::new();
    for (scores_path, labels_path) in a.scores.iter().zip(&a.labels) {
        let scores = read_scores(scores_path)?;
        let ts = load_series(labels_path, &a.label_column)?;
        let labels = ts
            .labels()
            .with_context(|| format!("{} has no label column", labels_path.display()))?;
        let r = evaluate(&scores, labels)
            .with_context(|| format!("evaluating {} against {}", scores_path.display(), labels_path.display()))?;
        results.push((scores_path.display().to_string(), r));
    }

    let json = if let [(_, r)] = results.as_slice() {
        serde_json::to_value(r)?
    } else {
        let above = |f: fn(&EvalResult) -> f64| results.iter().filter(|(_, r)| f(r) > 0.9).count();
        serde_json::json!({
            "results": results
                .iter()
                .map(|(name, r)| {
                    let mut v = serde_json::to_value(r).expect("plain struct");
                    v["dataset"] = serde_json::Value::String(name.clone());
                    v
                })
                .collect::<Vec<_>>(),
            "above_0.9": {
                "roc_auc": above(|r| r.roc_auc),
                "pr_auc": above(|r| r.pr_auc),
                "range_pr_auc": above(|r| r.range_pr_auc),
            },
        })
    };
    let text = serde_json::to_string_pretty(&json)?;
    match &a.out {
        Some(path) => {
            let mut f = create(path)?;
            writeln!(f, "{text}")?;
            f.flush()?;
        }
        None => println!("{text}"),
    }

    if let Some(path) = &a.csv {
        let fresh = !path.exists();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("cannot open {}", path.display()))?;
        if fresh {
            writeln!(f, "dataset,roc_auc,pr_auc,range_pr_auc,n_ranges")?;
        }
        for (name, r) in &results {
            writeln!(
                f,
                "{name},{},{},{},{}",
                r.roc_auc, r.pr_auc, r.range_pr_auc, r.n_anomaly_ranges
            )?;
        }
    }
    Ok(())
}

fn diagrams(a: &DiagramArgs, parallelism: Parallelism) -> Result<()> {
    let ts = load_series(&a.input, &a.label_column)?;
    let window = WindowConfig::new(a.window.window, a.window.stride);
    info!(
        "config: diagrams input={} {window:?} max_order={} weight={:?}",
        a.input.display(),
        a.window.max_order,
        a.window.weight
    );
    let clock = Instant::now();
    let all = compute_diagrams(&ts, &window, a.window.max_order, a.window.weight.into(), parallelism)?;
    let mut out = create(&a.out)?;
    writeln!(out, "{DIAGRAM_CSV_HEADER}")?;
    for (w, d) in all.iter().enumerate() {
        write_diagram_rows(&mut out, w, d)?;
    }
    out.flush()?;
    info!(
        "wrote {} windows to {} in {:.3}s",
        all.len(),
        a.out.display(),
        clock.elapsed().as_secs_f64()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let parallelism = match cli.threads {
        Some(0) => bail!("--threads must be at least 1"),
        Some(1) => Parallelism::Sequential,
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("cannot build the thread pool")?;
            Parallelism::Parallel
        }
        None => Parallelism::Parallel,
    };
    match &cli.command {
        Command::Generate {
            kind: Generate::Wheels(a),
        } => generate_wheels(a),
        Command::Generate { kind: Generate::Ar1(a) } => generate_ar1(a),
        Command::Fit(a) => fit(a, parallelism),
        Command::Score(a) => score(a, parallelism),
        Command::Eval(a) => eval(a),
        Command::Diagrams(a) => diagrams(a, parallelism),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
