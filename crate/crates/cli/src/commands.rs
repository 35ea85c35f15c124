use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use rpca_core::io::{self, GrayImage, MatrixFormat};
use rpca_core::metrics::{self, MetricsReport};
use rpca_core::solver::{self, SolverConfig};
use rpca_core::synth::{self, Split, SynthCase};
use rpca_core::trainer::{self, BatchMode, Optimizer, TrainConfig, TrainReport, TrainSample};
use rpca_core::unrolled::{self, UnrolledParams};
use rpca_core::{linalg, DenseMatrix, Shrinkage};

use crate::args::*;
use crate::manifest::RunManifest;

/// How a command finished when it did not fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    /// Outputs were written but the classical solver hit its iteration cap.
    NotConverged,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Done => 0,
            Outcome::NotConverged => 1,
        }
    }
}

/// Tolerance used when AccAltProj produces training targets.
pub const SOLVER_TARGET_EPSILON: f64 = 1e-8;
const SOLVER_TARGET_MAX_ITERS: usize = 200;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn run_manifest_path(out: &Path) -> PathBuf {
    let mut name = out
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".run.json");
    out.with_file_name(name)
}

// ---------------------------------------------------------------- gen

pub fn gen(args: &GenArgs) -> Result<Outcome> {
    let start = Instant::now();
    let case = match args.case {
        Some(id) => SynthCase::preset(id, args.seed)?,
        None => match (args.d, args.r, args.alpha, args.c) {
            (Some(d), Some(r), Some(alpha), Some(c)) => SynthCase::new(d, r, alpha, c, args.seed),
            _ => bail!("either --case or all of --d, --r, --alpha, --c are required"),
        },
    };
    case.validate()?;
    let (train, test) = synth::gen_dataset(&case, args.total, args.train)?;
    create_dir(&args.out)?;
    synth::save_dataset(&args.out, &case, &train, &test)?;
    RunManifest::new("gen", args)
        .seeds(vec![args.seed])
        .artifact(args.out.join(synth::MANIFEST_NAME))
        .finish(start)
        .write(&args.out.join("run.json"))?;
    Ok(Outcome::Done)
}

// ---------------------------------------------------------------- parameters

/// Reads trained parameters from a `train` report (its `final` record) or a
/// bare parameter record.
pub fn load_params(path: &Path) -> Result<UnrolledParams> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let record = value.get("final").cloned().unwrap_or(value);
    serde_json::from_value(record)
        .with_context(|| format!("{} holds no parameter record", path.display()))
}

/// Unrolled parameters for a `d1 x d2` problem: defaults, then `--params`,
/// then explicit flags.
pub fn resolve_params(net: &NetworkArgs, d1: usize, d2: usize) -> Result<UnrolledParams> {
    let mut p = match &net.params {
        Some(path) => load_params(path)?,
        None => UnrolledParams::with_defaults(d1, d2),
    };
    if let Some(b) = net.beta {
        p.beta = b;
    }
    if let Some(g) = net.gamma {
        p.gamma = g;
    }
    if let Some(k) = net.layers {
        p.layers = k;
    }
    if let Some(u) = net.upsilon {
        p.upsilon = u;
    }
    if let Some(s) = net.shrinkage {
        p.shrinkage = s.into();
    }
    p.validate()?;
    Ok(p)
}

fn has_trained_params(net: &NetworkArgs) -> bool {
    net.params.is_some() || (net.beta.is_some() && net.gamma.is_some())
}

fn solver_config(
    m: &DenseMatrix,
    r: usize,
    net: &NetworkArgs,
    s: &SolverArgs,
) -> Result<SolverConfig> {
    let (d1, d2) = m.shape();
    let mut cfg = SolverConfig::with_defaults(d1, d2, r);
    cfg.epsilon = s.epsilon;
    cfg.max_iters = s.max_iters;
    if let Some(b) = net.beta {
        cfg.beta = b;
        cfg.beta_init = b;
    }
    if let Some(g) = net.gamma {
        cfg.gamma = g;
    }
    cfg.validate()?;
    Ok(cfg)
}

// ---------------------------------------------------------------- decompose

/// Result of one decomposition with its bookkeeping.
#[derive(Debug, Clone, Serialize)]
pub struct Decomposition {
    pub method: Method,
    #[serde(skip)]
    pub l: DenseMatrix,
    #[serde(skip)]
    pub s: DenseMatrix,
    /// Only meaningful for AccAltProj; the unrolled network always runs all layers.
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub trace: Vec<f64>,
    pub solver: Option<SolverConfig>,
    pub params: Option<UnrolledParams>,
    pub wall_time_secs: f64,
}

pub fn run_method(
    m: &DenseMatrix,
    r: usize,
    method: Method,
    net: &NetworkArgs,
    solver_args: &SolverArgs,
) -> Result<Decomposition> {
    let start = Instant::now();
    match method {
        Method::Accaltproj => {
            let cfg = solver_config(m, r, net, solver_args)?;
            let out = solver::solve(m, &cfg)?;
            Ok(Decomposition {
                method,
                converged: out.converged,
                iterations: out.state.k,
                residual: out.state.residual,
                trace: out.trace,
                l: out.state.l,
                s: out.state.s,
                solver: Some(cfg),
                params: None,
                wall_time_secs: start.elapsed().as_secs_f64(),
            })
        }
        Method::Unrolled => {
            let p = resolve_params(net, m.nrows(), m.ncols())?;
            let out = unrolled::forward(m, r, &p)?;
            Ok(Decomposition {
                method,
                converged: true,
                iterations: p.layers,
                residual: out.state.residual,
                trace: out.trace,
                l: out.l,
                s: out.s,
                solver: None,
                params: Some(p),
                wall_time_secs: start.elapsed().as_secs_f64(),
            })
        }
    }
}

fn load_any(dir: &Path, stem: &str) -> Result<DenseMatrix> {
    for fmt in [MatrixFormat::Binary, MatrixFormat::Csv] {
        let path = dir.join(format!("{stem}.{}", fmt.extension()));
        if path.exists() {
            return Ok(io::load_matrix(&path, fmt)?);
        }
    }
    Err(anyhow!("{} has no {stem}.bin or {stem}.csv", dir.display()))
}

#[derive(Serialize)]
struct DecomposeReport<'a> {
    schema_version: u32,
    input: &'a Path,
    rank: usize,
    shape: (usize, usize),
    #[serde(flatten)]
    run: &'a Decomposition,
    metrics: Option<MetricsReport>,
}

pub fn decompose(args: &DecomposeArgs) -> Result<Outcome> {
    let start = Instant::now();
    let m = io::load_matrix(&args.input, MatrixFormat::from_path(&args.input))?;
    let run = run_method(&m, args.rank, args.method, &args.network, &args.solver)
        .with_context(|| format!("decomposing {}", args.input.display()))?;
    let metrics = match &args.truth_dir {
        Some(dir) => {
            let l_star = load_any(dir, "L")?;
            let s_star = load_any(dir, "S")?;
            Some(MetricsReport::compute_with_tol(
                &l_star,
                &s_star,
                &m,
                &run.l,
                &run.s,
                args.supp_tol,
            )?)
        }
        None => None,
    };
    create_dir(&args.out)?;
    let fmt: MatrixFormat = args.format.into();
    let l_path = args.out.join(format!("L.{}", fmt.extension()));
    let s_path = args.out.join(format!("S.{}", fmt.extension()));
    io::save_matrix(&run.l, &l_path, fmt)?;
    io::save_matrix(&run.s, &s_path, fmt)?;
    let report_path = args.out.join("report.json");
    write_json(
        &report_path,
        &DecomposeReport {
            schema_version: 1,
            input: &args.input,
            rank: args.rank,
            shape: m.shape(),
            run: &run,
            metrics,
        },
    )?;
    RunManifest::new("decompose", args)
        .artifact(l_path)
        .artifact(s_path)
        .artifact(report_path)
        .finish(start)
        .write(&args.out.join("run.json"))?;
    Ok(if run.converged {
        Outcome::Done
    } else {
        Outcome::NotConverged
    })
}

// ---------------------------------------------------------------- train

/// Training pairs for `samples` with the chosen targets.
pub fn training_set(
    samples: &[synth::StoredSample],
    r: usize,
    targets: TargetsArg,
) -> Result<Vec<TrainSample>> {
    samples
        .par_iter()
        .map(|s| {
            let (l, sp) = match targets {
                TargetsArg::Truth => (s.l.clone(), s.s.clone()),
                TargetsArg::FromSolver => {
                    let (d1, d2) = s.m.shape();
                    let cfg = SolverConfig {
                        epsilon: SOLVER_TARGET_EPSILON,
                        max_iters: SOLVER_TARGET_MAX_ITERS,
                        ..SolverConfig::with_defaults(d1, d2, r)
                    };
                    let out = solver::solve(&s.m, &cfg)
                        .with_context(|| format!("solver targets for sample {}", s.index))?;
                    (out.state.l, out.state.s)
                }
            };
            Ok(TrainSample::new(s.m.clone(), l, sp)?)
        })
        .collect()
}

#[derive(Serialize)]
struct TrainOutput<'a> {
    schema_version: u32,
    dataset: &'a Path,
    samples: usize,
    targets: TargetsArg,
    config: TrainConfig,
    #[serde(flatten)]
    report: &'a TrainReport,
}

pub fn train(args: &TrainArgs) -> Result<Outcome> {
    let start = Instant::now();
    let manifest = synth::load_manifest(&args.dataset)?;
    let mut samples = synth::load_split(&args.dataset, Split::Train)?;
    if let Some(n) = args.limit {
        samples.truncate(n);
    }
    if samples.is_empty() {
        bail!("{} has an empty train split", args.dataset.display());
    }
    let r = manifest.case.r;
    let (d1, d2) = samples[0].m.shape();
    let shrinkage: Shrinkage = args.shrinkage.into();
    if shrinkage == Shrinkage::Hard {
        bail!("hard thresholding is not subdifferentiable; train with --shrinkage firm or soft");
    }
    let data = training_set(&samples, r, args.targets)?;
    let init = UnrolledParams {
        layers: args.layers,
        shrinkage,
        ..UnrolledParams::with_defaults(d1, d2)
    };
    let cfg = TrainConfig {
        epochs: args.epochs,
        lr_beta: args.lr.unwrap_or(args.lr_beta),
        lr_gamma: args.lr.unwrap_or(args.lr_gamma),
        fd_step: args.fd_step,
        r,
        batch: match args.batch {
            BatchArg::Full => BatchMode::Full,
            BatchArg::PerSample => BatchMode::PerSample,
        },
        optimizer: match args.optimizer {
            OptimizerArg::Adam => Optimizer::Adam,
            OptimizerArg::Gd => Optimizer::Gd,
        },
        seed: args.seed,
    };
    let report = trainer::train(&data, &cfg, &init)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_json(
        &args.out,
        &TrainOutput {
            schema_version: 1,
            dataset: &args.dataset,
            samples: data.len(),
            targets: args.targets,
            config: cfg,
            report: &report,
        },
    )?;
    RunManifest::new("train", args)
        .seeds(vec![manifest.case.seed, args.seed])
        .artifact(args.out.clone())
        .finish(start)
        .write(&run_manifest_path(&args.out))?;
    Ok(Outcome::Done)
}

// ---------------------------------------------------------------- eval

/// Mean and standard deviation of one metric for one method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub method: String,
    pub metric: &'static str,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

pub const AGGREGATE_HEADER: &str = "method,metric,mean,std,count";

impl AggregateRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.method, self.metric, self.mean, self.std, self.count
        )
    }
}

fn method_label(method: Method, p: Option<&UnrolledParams>) -> String {
    match (method, p.map(|p| p.shrinkage)) {
        (Method::Accaltproj, _) => "accaltproj".into(),
        (Method::Unrolled, Some(Shrinkage::Firm) | None) => "unrolled".into(),
        (Method::Unrolled, Some(s)) => format!("unrolled-{s}"),
    }
}

/// Per-metric mean and std over reports sharing a method label, in first-seen order.
pub fn aggregate(reports: &[MetricsReport]) -> Vec<AggregateRow> {
    let mut labels: Vec<String> = Vec::new();
    for r in reports {
        let m = r.tags.get("method").cloned().unwrap_or_default();
        if !labels.contains(&m) {
            labels.push(m);
        }
    }
    let mut rows = Vec::new();
    for label in labels {
        let mine: Vec<&MetricsReport> = reports
            .iter()
            .filter(|r| r.tags.get("method").map(String::as_str).unwrap_or("") == label)
            .collect();
        let columns: [(&'static str, Vec<f64>); 4] = [
            ("eps_L", mine.iter().map(|r| r.eps_l).collect()),
            ("eps_S", mine.iter().map(|r| r.eps_s).collect()),
            ("eps_M", mine.iter().map(|r| r.eps_m).collect()),
            ("eps_supp", mine.iter().filter_map(|r| r.eps_supp).collect()),
        ];
        for (metric, values) in columns {
            if values.is_empty() {
                continue;
            }
            let (mean, std) = metrics::mean_std(&values);
            rows.push(AggregateRow {
                method: label.clone(),
                metric,
                mean,
                std,
                count: values.len(),
            });
        }
    }
    rows
}

pub fn evaluate(args: &EvalArgs) -> Result<(Vec<MetricsReport>, Vec<AggregateRow>)> {
    let manifest = synth::load_manifest(&args.dataset)?;
    let samples = synth::load_split(&args.dataset, Split::Test)?;
    if samples.is_empty() {
        bail!("{} has an empty test split", args.dataset.display());
    }
    if args.methods.contains(&Method::Unrolled) && !has_trained_params(&args.network) {
        bail!("missing trained parameters for unrolled: pass --params, or --beta and --gamma");
    }
    let r = manifest.case.r;
    let per_sample = samples
        .par_iter()
        .map(|s| {
            args.methods
                .iter()
                .map(|&method| {
                    let run = run_method(&s.m, r, method, &args.network, &args.solver)
                        .with_context(|| format!("test sample {}", s.index))?;
                    let label = method_label(method, run.params.as_ref());
                    Ok(MetricsReport::compute_with_tol(
                        &s.l,
                        &s.s,
                        &s.m,
                        &run.l,
                        &run.s,
                        args.supp_tol,
                    )?
                    .with_tag("method", label)
                    .with_tag("sample", s.index.to_string())
                    .with_tag("converged", run.converged.to_string()))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<MetricsReport> = per_sample.into_iter().flatten().collect();
    let rows = aggregate(&reports);
    Ok((reports, rows))
}

pub fn eval(args: &EvalArgs) -> Result<Outcome> {
    let start = Instant::now();
    let (reports, rows) = evaluate(args)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let mut csv = String::from(AGGREGATE_HEADER);
    csv.push('\n');
    for row in &rows {
        csv.push_str(&row.csv_row());
        csv.push('\n');
    }
    fs::write(&args.out, csv).with_context(|| format!("writing {}", args.out.display()))?;
    let mut run = RunManifest::new("eval", args).artifact(args.out.clone());
    if let Some(path) = &args.per_sample {
        let mut csv = String::from(metrics::CSV_HEADER);
        csv.push('\n');
        for r in &reports {
            csv.push_str(&r.csv_row());
            csv.push('\n');
        }
        fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
        run = run.artifact(path.clone());
    }
    run.finish(start).write(&run_manifest_path(&args.out))?;
    Ok(Outcome::Done)
}

// ---------------------------------------------------------------- faces

#[derive(Debug, Clone, Serialize)]
pub struct FacesReport {
    pub schema_version: u32,
    pub images: Vec<PathBuf>,
    pub image_size: (usize, usize),
    pub shape: (usize, usize),
    #[serde(flatten)]
    pub run: Decomposition,
    /// Leading singular values of the low-rank output.
    pub low_rank_spectrum: Vec<f64>,
    pub eps_m: f64,
    pub timing_secs: FacesTiming,
}

/// Informational wall-clock breakdown.
#[derive(Debug, Clone, Serialize)]
pub struct FacesTiming {
    pub load: f64,
    pub decompose: f64,
    pub write: f64,
}

pub fn list_pgm(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| {
        p.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
    });
    paths.sort();
    if paths.is_empty() {
        bail!("no .pgm images in {}", dir.display());
    }
    Ok(paths)
}

fn write_columns(
    m: &DenseMatrix,
    (h, w): (usize, usize),
    names: &[PathBuf],
    dir: &Path,
) -> Result<()> {
    create_dir(dir)?;
    for (j, name) in names.iter().enumerate() {
        let column: Vec<f64> = m.column(j).iter().copied().collect();
        let img = GrayImage::from_column(&column, h, w)?;
        let stem = name.file_stem().unwrap_or_default();
        let mut file = stem.to_os_string();
        file.push(".pgm");
        io::write_pgm(&img, dir.join(file))?;
    }
    Ok(())
}

pub fn faces_run(args: &FacesArgs) -> Result<FacesReport> {
    const RANK: usize = 1;
    let t0 = Instant::now();
    let paths = list_pgm(&args.images)?;
    let (m, size) = io::stack_images(&paths)?;
    let load = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let run = run_method(&m, RANK, args.method, &args.network, &args.solver)?;
    let decompose = t1.elapsed().as_secs_f64();
    let t2 = Instant::now();
    create_dir(&args.out)?;
    // matrices keep the raw values; only the PGM previews are clamped
    io::save_matrix(&run.l, args.out.join("L.bin"), MatrixFormat::Binary)?;
    io::save_matrix(&run.s, args.out.join("S.bin"), MatrixFormat::Binary)?;
    write_columns(&run.l, size, &paths, &args.out.join("low_rank"))?;
    write_columns(&run.s, size, &paths, &args.out.join("sparse"))?;
    let write = t2.elapsed().as_secs_f64();
    let upto = run.l.ncols().min(run.l.nrows()).min(2);
    let low_rank_spectrum = linalg::singular_values(&run.l, upto)?;
    let eps_m = if m.norm() == 0.0 {
        0.0
    } else {
        metrics::eps_m(&m, &run.l, &run.s)?
    };
    Ok(FacesReport {
        schema_version: 1,
        images: paths,
        image_size: size,
        shape: m.shape(),
        run,
        low_rank_spectrum,
        eps_m,
        timing_secs: FacesTiming {
            load,
            decompose,
            write,
        },
    })
}

pub fn faces(args: &FacesArgs) -> Result<Outcome> {
    let start = Instant::now();
    let report = faces_run(args)?;
    let report_path = args.out.join("faces.json");
    write_json(&report_path, &report)?;
    RunManifest::new("faces", args)
        .artifact(args.out.join("L.bin"))
        .artifact(args.out.join("S.bin"))
        .artifact(report_path)
        .finish(start)
        .write(&args.out.join("run.json"))?;
    Ok(if report.run.converged {
        Outcome::Done
    } else {
        Outcome::NotConverged
    })
}
