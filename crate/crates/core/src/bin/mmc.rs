//! `mmc`: command-line front end for clustering, grid search, analysis,
//! benchmarks and dataset generation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mmc_core::analysis::{
    check_condition_one, check_condition_two, cohesiveness_curve, correction_curve, scaleup,
};
use mmc_core::clustering::{
    evaluate_grid, fit_kernel, run_with_model, select_best, tau_grid, CellResult, ClusterAssignment, ClusterParams,
    FittedKernel, Grid, KernelKind, DEFAULT_LANDMARKS, DEFAULT_MAX_REFINE_ITERS, DEFAULT_S, DEFAULT_T, PSI_GRID,
};
use mmc_core::data::{load_csv, normalize_minmax, Dataset};
use mmc_core::io::{write_atomic, Record};
use mmc_core::kernels::{IkEmbedding, IkModel, Mechanism};
use mmc_core::kernels::{load_model, save_model, AnyModel, ExactGaussian, KernelModel, NystromModel};
use mmc_core::metrics::{ami_score, f1_score};
use mmc_core::synthetic::{generate_synthetic, Family};
use mmc_core::{Error, ErrorClass};

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "mmc", version, about = "Mass-maximization clustering with the isolation kernel")]
struct Cli {
    /// Worker threads (default: one per core).
    #[arg(long, global = true, env = "MMC_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV with a trailing label column.
    Generate(GenerateArgs),
    /// Cluster a dataset with one parameter setting.
    Cluster(ClusterArgs),
    /// Search kernel parameter and tau over a grid.
    Grid(GridArgs),
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    #[command(subcommand)]
    Benchmark(BenchmarkCommand),
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Component cohesiveness against tau.
    Cohesiveness(CohesivenessArgs),
    /// Peak and bottleneck check for two dense clusters and one sparse cluster.
    ConditionOne(ConditionArgs),
    /// Nearest-neighbour similarity ratio between a dense and a sparse cluster.
    ConditionTwo(ConditionArgs),
    /// Objective and AMI while labels are corrected batch by batch.
    Correction(CorrectionArgs),
}

#[derive(Subcommand)]
enum BenchmarkCommand {
    /// Wall-clock time against dataset size.
    Scaleup(ScaleupArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    family: Family,
    /// Point count (default: the family's reference size).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV file.
    #[arg(long, conflicts_with = "family")]
    data: Option<PathBuf>,
    /// Name of the ground-truth column in --data.
    #[arg(long, requires = "data")]
    label_column: Option<String>,
    /// Keep --data as read instead of min-max normalizing it.
    #[arg(long, requires = "data")]
    no_normalize: bool,
    /// Generate the dataset instead of reading it.
    #[arg(long)]
    family: Option<Family>,
    #[arg(long, requires = "family")]
    n: Option<usize>,
    #[arg(long, requires = "family", default_value_t = 42)]
    data_seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algo {
    Mmc,
    Dmc,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MechanismArg {
    Hypersphere,
    Voronoi,
}

impl From<MechanismArg> for Mechanism {
    fn from(m: MechanismArg) -> Self {
        match m {
            MechanismArg::Hypersphere => Mechanism::Hypersphere,
            MechanismArg::Voronoi => Mechanism::Voronoi,
        }
    }
}

#[derive(Args)]
struct CommonParams {
    /// Number of clusters.
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_S)]
    s: usize,
    #[arg(long, default_value_t = DEFAULT_T)]
    t: usize,
    #[arg(long, default_value_t = DEFAULT_LANDMARKS)]
    landmarks: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_REFINE_ITERS)]
    max_iters: usize,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value_t = Algo::Mmc)]
    algo: Algo,
    #[arg(long, value_enum, default_value_t = MechanismArg::Hypersphere)]
    mechanism: MechanismArg,
    #[arg(long)]
    psi: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[command(flatten)]
    params: CommonParams,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Write the fitted kernel to this file.
    #[arg(long)]
    save_model: Option<PathBuf>,
    /// Use a previously saved kernel instead of fitting one.
    #[arg(long, conflicts_with_all = ["psi", "sigma"])]
    load_model: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GridShape {
    Full,
    SingleCell,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value_t = Algo::Mmc)]
    algo: Algo,
    #[arg(long, value_enum, default_value_t = MechanismArg::Hypersphere)]
    mechanism: MechanismArg,
    /// `full` searches the default grid (or the lists below); `single-cell`
    /// uses --psi or --sigma with --tau.
    #[arg(long, value_enum, default_value_t = GridShape::Full)]
    grid: GridShape,
    #[arg(long)]
    psi: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Comma-separated psi values for a full grid.
    #[arg(long, value_delimiter = ',')]
    psis: Vec<usize>,
    /// Comma-separated sigma values for a full grid.
    #[arg(long, value_delimiter = ',')]
    sigmas: Vec<f64>,
    /// Comma-separated tau values for a full grid.
    #[arg(long, value_delimiter = ',')]
    taus: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[command(flatten)]
    params: CommonParams,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KernelArg {
    Ik,
    Gaussian,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long, value_enum)]
    kernel: KernelArg,
    #[arg(long, value_enum, default_value_t = MechanismArg::Hypersphere)]
    mechanism: MechanismArg,
    #[arg(long)]
    psi: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_T)]
    t: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct CohesivenessArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Comma-separated ascending tau values (default 0.05, 0.10, ..., 0.95).
    #[arg(long, value_delimiter = ',')]
    taus: Vec<f64>,
    /// Classes compared in the paired output.
    #[arg(long, default_value_t = 0)]
    class_a: usize,
    #[arg(long, default_value_t = 1)]
    class_b: usize,
    /// Share of a class a component must hold to stand for that class.
    #[arg(long, default_value_t = 0.5)]
    min_coverage: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConditionArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CorrectionArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, default_value_t = 50)]
    batch: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScaleupArgs {
    #[arg(long, default_value = "scaleup_arc_mix")]
    family: Family,
    /// Comma-separated, strictly increasing sizes.
    #[arg(long, value_delimiter = ',', default_value = "1500,15000,150000,1500000")]
    sizes: Vec<usize>,
    #[arg(long, value_enum, default_value_t = MechanismArg::Hypersphere)]
    mechanism: MechanismArg,
    #[arg(long, default_value_t = 16)]
    psi: usize,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Number of clusters (default: the family's).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_S)]
    s: usize,
    #[arg(long, default_value_t = DEFAULT_T)]
    t: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_REFINE_ITERS)]
    max_iters: usize,
    #[arg(long)]
    out: PathBuf,
}

/// A failure with the class that picks the exit code.
struct Failure {
    class: ErrorClass,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            class: ErrorClass::Config,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            class: e.class(),
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Algorithm => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Cluster(a) => cmd_cluster(&a),
        Command::Grid(a) => cmd_grid(&a),
        Command::Analyze(AnalyzeCommand::Cohesiveness(a)) => cmd_cohesiveness(&a),
        Command::Analyze(AnalyzeCommand::ConditionOne(a)) => cmd_condition(&a, true),
        Command::Analyze(AnalyzeCommand::ConditionTwo(a)) => cmd_condition(&a, false),
        Command::Analyze(AnalyzeCommand::Correction(a)) => cmd_correction(&a),
        Command::Benchmark(BenchmarkCommand::Scaleup(a)) => cmd_scaleup(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(exit_code(f.class))
        }
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| {
        Failure::from(Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })
    })
}

/// The dataset plus a description of where it came from, for manifests.
struct Loaded {
    data: Dataset,
    source: Record,
}

fn load_data(args: &DataArgs) -> CliResult<Loaded> {
    let mut source = Record::new("source", SCHEMA_VERSION);
    let data = match (&args.data, args.family) {
        (Some(path), None) => {
            let raw = load_csv(path, args.label_column.as_deref())?;
            source.push("data", path.display());
            source.push("label_column", args.label_column.as_deref().unwrap_or(""));
            source.push("normalized", !args.no_normalize);
            if args.no_normalize {
                raw
            } else {
                normalize_minmax(&raw)
            }
        }
        (None, Some(family)) => {
            let n = args.n.unwrap_or_else(|| family.reference_size());
            source.push("family", family);
            source.push("n", n);
            source.push("data_seed", args.data_seed);
            generate_synthetic(family, n, args.data_seed)?
        }
        _ => return Err(Failure::config("one of --data or --family is required")),
    };
    source.push("dataset_hash", data.content_hash());
    Ok(Loaded { data, source })
}

fn kernel_kind(algo: Algo, mechanism: MechanismArg, psi: Option<usize>, sigma: Option<f64>) -> CliResult<KernelKind> {
    match algo {
        Algo::Mmc => {
            if sigma.is_some() {
                return Err(Failure::config("--sigma applies only to --algo dmc"));
            }
            let psi = psi.ok_or_else(|| Failure::config("--algo mmc requires --psi"))?;
            Ok(match mechanism {
                MechanismArg::Hypersphere => KernelKind::IkHypersphere { psi },
                MechanismArg::Voronoi => KernelKind::IkVoronoi { psi },
            })
        }
        Algo::Dmc => {
            if psi.is_some() {
                return Err(Failure::config("--psi applies only to --algo mmc"));
            }
            let sigma = sigma.ok_or_else(|| Failure::config("--algo dmc requires --sigma"))?;
            Ok(KernelKind::GaussianNystrom { sigma })
        }
    }
}

fn base_params(kernel: KernelKind, tau: f64, p: &CommonParams) -> ClusterParams {
    ClusterParams::new(p.k, kernel)
        .with_tau(tau)
        .with_s(p.s)
        .with_t(p.t)
        .with_landmarks(p.landmarks)
        .with_seed(p.seed)
        .with_max_refine_iters(p.max_iters)
}

fn labels_csv(labels: &[usize]) -> String {
    let mut s = String::with_capacity(labels.len() * 3 + 8);
    s.push_str("label\n");
    for &l in labels {
        let _ = writeln!(s, "{}", l + 1);
    }
    s
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

fn params_into(rec: &mut Record, p: &ClusterParams) {
    rec.push("kernel", p.kernel.name());
    rec.push(p.kernel.parameter_name(), p.kernel.parameter());
    rec.push("tau", p.tau);
    rec.push("k", p.k);
    rec.push("s", p.s);
    if p.kernel.is_isolation() {
        rec.push("t", p.t);
    } else {
        rec.push("landmarks", p.landmarks);
    }
    rec.push("seed", p.seed);
    rec.push("max_refine_iters", p.max_refine_iters);
}

/// Writes labels.csv, manifest.txt and metrics.txt for one clustering run.
fn write_run(
    out: &Path,
    command: &str,
    loaded: &Loaded,
    params: &ClusterParams,
    result: &ClusterAssignment,
    extra: &[(&str, String)],
) -> CliResult<()> {
    write_atomic(&out.join("labels.csv"), labels_csv(&result.labels).as_bytes())?;

    let mut manifest = Record::new("mmc-manifest", SCHEMA_VERSION);
    manifest.push("command", command);
    for (k, v) in loaded.source.entries().iter().skip(1) {
        manifest.push(k, v);
    }
    manifest.push("points", loaded.data.len());
    manifest.push("dim", loaded.data.dim());
    params_into(&mut manifest, params);
    for (k, v) in extra {
        manifest.push(k, v);
    }
    manifest.push("objective", result.objective.total);
    manifest.push("objective_before_refine", result.objective_before_refine.total);
    manifest.push("refine_iters", result.refine_iters);
    manifest.push("refine_reverted", result.refine_reverted);
    manifest.push("cluster_sizes", join(&result.cluster_sizes));
    manifest.push("seed_component_sizes", join(&result.seed_component_sizes));
    manifest.push("fallback_points", result.assign_stats.fallback_points);
    manifest.push("pinned_clusters", result.assign_stats.pinned_clusters);
    let t = &result.times;
    for (name, d) in [
        ("fit", t.fit),
        ("embed", t.embed),
        ("seed", t.seed),
        ("assign", t.assign),
        ("refine", t.refine),
        ("total", t.total()),
    ] {
        manifest.push(&format!("seconds_{name}"), format!("{:.6}", d.as_secs_f64()));
    }
    manifest.write(&out.join("manifest.txt"))?;

    let mut metrics = Record::new("mmc-metrics", SCHEMA_VERSION);
    metrics.push("objective", result.objective.total);
    metrics.push("objective_normalized", result.objective.normalized);
    if let Some(truth) = loaded.data.labels() {
        metrics.push("f1", f1_score(&result.labels, truth)?);
        metrics.push("ami", ami_score(&result.labels, truth)?);
    }
    metrics.write(&out.join("metrics.txt"))?;
    Ok(())
}

fn cmd_generate(a: &GenerateArgs) -> CliResult<()> {
    let n = a.n.unwrap_or_else(|| a.family.reference_size());
    let data = generate_synthetic(a.family, n, a.seed)?;
    let mut buf = Vec::new();
    data.write_csv(&mut buf).expect("writing to memory");
    if let Some(dir) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_atomic(&a.out, &buf)?;
    Ok(())
}

fn cmd_cluster(a: &ClusterArgs) -> CliResult<()> {
    let loaded = load_data(&a.data)?;
    let data = &loaded.data;
    let start = std::time::Instant::now();
    let (model, params) = match &a.load_model {
        Some(path) => match load_model(path)? {
            AnyModel::Isolation(m) => {
                let kernel = match m.mechanism() {
                    Mechanism::Hypersphere => KernelKind::IkHypersphere { psi: m.psi() },
                    Mechanism::Voronoi => KernelKind::IkVoronoi { psi: m.psi() },
                };
                let p = base_params(kernel, a.tau, &a.params).with_t(m.t());
                (FittedKernel::Isolation(m), p)
            }
            AnyModel::Nystrom(m) => {
                let kernel = KernelKind::GaussianNystrom { sigma: m.sigma() };
                let p = base_params(kernel, a.tau, &a.params).with_landmarks(m.landmark_count());
                (FittedKernel::Nystrom(m), p)
            }
        },
        None => {
            let kernel = kernel_kind(a.algo, a.mechanism, a.psi, a.sigma)?;
            let p = base_params(kernel, a.tau, &a.params);
            p.validate(data.len())?;
            (fit_kernel(data, &p)?, p)
        }
    };
    params.validate(data.len())?;
    let fit_time = start.elapsed();
    let mut result = run_with_model(data, &model, &params)?;
    result.times.fit = fit_time;
    create_dir(&a.out)?;
    if let Some(path) = &a.save_model {
        let any = match model {
            FittedKernel::Isolation(m) => AnyModel::Isolation(m),
            FittedKernel::Nystrom(m) => AnyModel::Nystrom(m),
        };
        save_model(&any, path)?;
    }
    let mut extra = Vec::new();
    if let Some(p) = &a.load_model {
        extra.push(("model_in", p.display().to_string()));
    }
    if let Some(p) = &a.save_model {
        extra.push(("model_out", p.display().to_string()));
    }
    write_run(&a.out, "cluster", &loaded, &params, &result, &extra)?;
    print_summary(&params, &result, data);
    Ok(())
}

fn print_summary(params: &ClusterParams, result: &ClusterAssignment, data: &Dataset) {
    let mut line = format!(
        "{} tau={} k={}: M(D)={:.6} refine_iters={}",
        params.kernel, params.tau, params.k, result.objective.total, result.refine_iters
    );
    if let Some(truth) = data.labels() {
        if let (Ok(f1), Ok(ami)) = (f1_score(&result.labels, truth), ami_score(&result.labels, truth)) {
            let _ = write!(line, " F1={f1:.4} AMI={ami:.4}");
        }
    }
    println!("{line}");
}

fn build_grid(a: &GridArgs) -> CliResult<Grid> {
    match a.grid {
        GridShape::SingleCell => {
            let kernel = kernel_kind(a.algo, a.mechanism, a.psi, a.sigma)?;
            let tau = a.tau.ok_or_else(|| Failure::config("--grid single-cell requires --tau"))?;
            Ok(Grid::single(kernel, tau))
        }
        GridShape::Full => {
            if a.psi.is_some() || a.sigma.is_some() || a.tau.is_some() {
                return Err(Failure::config(
                    "--psi, --sigma and --tau need --grid single-cell; use --psis, --sigmas, --taus for a full grid",
                ));
            }
            let kernels: Vec<KernelKind> = match a.algo {
                Algo::Mmc => {
                    if !a.sigmas.is_empty() {
                        return Err(Failure::config("--sigmas applies only to --algo dmc"));
                    }
                    let psis = if a.psis.is_empty() { PSI_GRID.to_vec() } else { a.psis.clone() };
                    psis.into_iter()
                        .map(|psi| match a.mechanism {
                            MechanismArg::Hypersphere => KernelKind::IkHypersphere { psi },
                            MechanismArg::Voronoi => KernelKind::IkVoronoi { psi },
                        })
                        .collect()
                }
                Algo::Dmc => {
                    if !a.psis.is_empty() {
                        return Err(Failure::config("--psis applies only to --algo mmc"));
                    }
                    if a.sigmas.is_empty() {
                        Grid::dmc().kernels
                    } else {
                        a.sigmas.iter().map(|&sigma| KernelKind::GaussianNystrom { sigma }).collect()
                    }
                }
            };
            let taus = if a.taus.is_empty() { tau_grid() } else { a.taus.clone() };
            Ok(Grid { kernels, taus })
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn grid_table(cells: &[CellResult]) -> String {
    let mut s = String::from("kernel,parameter,tau,trials,failures,mean_f1,mean_ami,mean_objective,first_error\n");
    for c in cells {
        let err = c
            .trials
            .iter()
            .find_map(|t| t.as_ref().err())
            .map(|e| format!("\"{}\"", e.replace('"', "'")))
            .unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            c.kernel.name(),
            c.kernel.parameter(),
            c.tau,
            c.trials.len(),
            c.failures(),
            fmt_opt(c.mean_f1()),
            fmt_opt(c.mean_ami()),
            fmt_opt(c.mean_objective()),
            err
        );
    }
    s
}

fn cmd_grid(a: &GridArgs) -> CliResult<()> {
    let loaded = load_data(&a.data)?;
    let data = &loaded.data;
    let grid = build_grid(a)?;
    let base = base_params(grid.kernels[0], grid.taus[0], &a.params);
    let cells = evaluate_grid(data, &grid, &base, a.trials)?;
    create_dir(&a.out)?;
    write_atomic(&a.out.join("grid_table.csv"), grid_table(&cells).as_bytes())?;

    let mut summary = Record::new("mmc-grid", SCHEMA_VERSION);
    for (k, v) in loaded.source.entries().iter().skip(1) {
        summary.push(k, v);
    }
    summary.push("cells", grid.cells());
    summary.push("trials", a.trials);
    summary.push("base_seed", a.params.seed);
    summary.push(
        "selection",
        if data.labels().is_some() { "mean_f1" } else { "mean_objective_normalized" },
    );
    let failed_cells = cells.iter().filter(|c| c.all_failed()).count();
    summary.push("failed_cells", failed_cells);
    match select_best(data, cells, &base) {
        Ok(best) => {
            let cell = &best.cells[best.best_cell];
            summary.push("status", "ok");
            summary.push("best_kernel", cell.kernel.name());
            summary.push(&format!("best_{}", cell.kernel.parameter_name()), cell.kernel.parameter());
            summary.push("best_tau", cell.tau);
            summary.push("best_score", best.best_score());
            summary.push("best_seed", best.best_params.seed);
            summary.write(&a.out.join("summary.txt"))?;
            let extra = [("grid_trials", a.trials.to_string())];
            write_run(&a.out, "grid", &loaded, &best.best_params, &best.best, &extra)?;
            println!(
                "best {} tau={} score={:.4} ({} of {} cells failed)",
                cell.kernel,
                cell.tau,
                best.best_score(),
                failed_cells,
                grid.cells()
            );
            Ok(())
        }
        Err(e) => {
            summary.push("status", "failed");
            summary.push("error", &e);
            summary.write(&a.out.join("summary.txt"))?;
            Err(e.into())
        }
    }
}

/// Similarity source for the analysis commands.
enum AnalysisKernel<'a> {
    Isolation(IkEmbedding),
    Gaussian(ExactGaussian<'a>),
}

fn analysis_kernel<'a>(data: &'a Dataset, k: &KernelArgs) -> CliResult<AnalysisKernel<'a>> {
    match k.kernel {
        KernelArg::Ik => {
            if k.sigma.is_some() {
                return Err(Failure::config("--sigma applies only to --kernel gaussian"));
            }
            let psi = k.psi.ok_or_else(|| Failure::config("--kernel ik requires --psi"))?;
            let model = IkModel::fit(data, psi, k.t, k.mechanism.into(), k.seed)?;
            Ok(AnalysisKernel::Isolation(model.embed_dataset(data)?))
        }
        KernelArg::Gaussian => {
            if k.psi.is_some() {
                return Err(Failure::config("--psi applies only to --kernel ik"));
            }
            let sigma = k.sigma.ok_or_else(|| Failure::config("--kernel gaussian requires --sigma"))?;
            Ok(AnalysisKernel::Gaussian(ExactGaussian::new(data, sigma)?))
        }
    }
}

fn kernel_record(rec: &mut Record, k: &KernelArgs) {
    match k.kernel {
        KernelArg::Ik => {
            rec.push("kernel", "ik");
            rec.push("mechanism", Mechanism::from(k.mechanism));
            rec.push("psi", k.psi.unwrap_or_default());
            rec.push("t", k.t);
            rec.push("seed", k.seed);
        }
        KernelArg::Gaussian => {
            rec.push("kernel", "gaussian");
            rec.push("sigma", k.sigma.unwrap_or_default());
        }
    }
}

fn source_into(rec: &mut Record, loaded: &Loaded) {
    for (k, v) in loaded.source.entries().iter().skip(1) {
        rec.push(k, v);
    }
}

fn cmd_cohesiveness(a: &CohesivenessArgs) -> CliResult<()> {
    let loaded = load_data(&a.data)?;
    let data = &loaded.data;
    let taus = if a.taus.is_empty() { tau_grid() } else { a.taus.clone() };
    let kernel = analysis_kernel(data, &a.kernel)?;
    let curve = match &kernel {
        AnalysisKernel::Isolation(e) => cohesiveness_curve(e, data.labels(), &taus)?,
        AnalysisKernel::Gaussian(g) => cohesiveness_curve(g, data.labels(), &taus)?,
    };
    create_dir(&a.out)?;
    write_atomic(&a.out.join("cohesiveness.csv"), curve.to_csv().as_bytes())?;
    let mut summary = Record::new("mmc-cohesiveness", SCHEMA_VERSION);
    source_into(&mut summary, &loaded);
    kernel_record(&mut summary, &a.kernel);
    if let Some(labels) = data.labels() {
        let pairs = curve.paired_cohesiveness(labels, a.class_a, a.class_b, a.min_coverage);
        let mut csv = String::from("tau,class_a_mean_similarity,class_b_mean_similarity\n");
        for (tau, sa, sb) in &pairs {
            let _ = writeln!(csv, "{tau},{sa},{sb}");
        }
        write_atomic(&a.out.join("cohesiveness_pairs.csv"), csv.as_bytes())?;
        summary.push("class_a", a.class_a);
        summary.push("class_b", a.class_b);
        summary.push("min_coverage", a.min_coverage);
        summary.push("shared_taus", pairs.len());
        summary.push("a_above_b", pairs.iter().filter(|p| p.1 > p.2).count());
        println!(
            "{} shared tau values; class {} above class {} at {}",
            pairs.len(),
            a.class_a,
            a.class_b,
            pairs.iter().filter(|p| p.1 > p.2).count()
        );
    }
    summary.write(&a.out.join("summary.txt"))?;
    Ok(())
}

fn cmd_condition(a: &ConditionArgs, first: bool) -> CliResult<()> {
    let loaded = load_data(&a.data)?;
    let data = &loaded.data;
    let kernel = analysis_kernel(data, &a.kernel)?;
    let mut rec = Record::new(if first { "mmc-condition-one" } else { "mmc-condition-two" }, SCHEMA_VERSION);
    source_into(&mut rec, &loaded);
    kernel_record(&mut rec, &a.kernel);
    let holds = if first {
        let c = match &kernel {
            AnalysisKernel::Isolation(e) => check_condition_one(data, e)?,
            AnalysisKernel::Gaussian(g) => check_condition_one(data, g)?,
        };
        rec.push("sparse_class", c.sparse);
        rec.push("dense_classes", join(&c.dense));
        rec.push("peaks", join(&c.peaks));
        rec.push("s_hat", c.s_hat);
        rec.push("bottleneck", c.bottleneck);
        rec.push("holds", c.holds);
        c.holds
    } else {
        let c = match &kernel {
            AnalysisKernel::Isolation(e) => check_condition_two(data, e)?,
            AnalysisKernel::Gaussian(g) => check_condition_two(data, g)?,
        };
        rec.push("dense_class", c.dense);
        rec.push("sparse_class", c.sparse);
        rec.push("min_nn_similarity", join(&c.min_nn_similarity));
        rec.push("ratio", c.ratio);
        rec.push("threshold", c.threshold);
        rec.push("holds", c.holds);
        c.holds
    };
    create_dir(&a.out)?;
    let name = if first { "condition_one.txt" } else { "condition_two.txt" };
    rec.write(&a.out.join(name))?;
    println!("holds = {holds}");
    Ok(())
}

fn cmd_correction(a: &CorrectionArgs) -> CliResult<()> {
    let loaded = load_data(&a.data)?;
    let data = &loaded.data;
    let truth = data.labels().ok_or(Error::LabelsRequired("the correction curve"))?;
    let curve = match analysis_kernel(data, &a.kernel)? {
        AnalysisKernel::Isolation(e) => correction_curve(&e, truth, a.batch, a.kernel.seed)?,
        AnalysisKernel::Gaussian(_) => {
            let sigma = a.kernel.sigma.expect("checked by analysis_kernel");
            let model = NystromModel::fit(data, DEFAULT_LANDMARKS.min(data.len()), sigma, a.kernel.seed)?;
            correction_curve(&model.embed_dataset(data)?, truth, a.batch, a.kernel.seed)?
        }
    };
    create_dir(&a.out)?;
    write_atomic(&a.out.join("correction.csv"), curve.to_csv().as_bytes())?;
    let mut rec = Record::new("mmc-correction", SCHEMA_VERSION);
    source_into(&mut rec, &loaded);
    kernel_record(&mut rec, &a.kernel);
    rec.push("batch", a.batch);
    rec.push("spearman", curve.spearman());
    rec.push("nondecreasing_fraction", curve.nondecreasing_fraction());
    rec.push(
        "note",
        "spearman >= 0.95 between M(D) and AMI is a chosen threshold for a visual monotonicity claim",
    );
    rec.write(&a.out.join("summary.txt"))?;
    println!("spearman = {:.4} (chosen threshold 0.95)", curve.spearman());
    Ok(())
}

fn cmd_scaleup(a: &ScaleupArgs) -> CliResult<()> {
    let kernel = match a.mechanism {
        MechanismArg::Hypersphere => KernelKind::IkHypersphere { psi: a.psi },
        MechanismArg::Voronoi => KernelKind::IkVoronoi { psi: a.psi },
    };
    let params = ClusterParams::new(a.k.unwrap_or_else(|| a.family.cluster_count()), kernel)
        .with_tau(a.tau)
        .with_s(a.s)
        .with_t(a.t)
        .with_seed(a.seed)
        .with_max_refine_iters(a.max_iters);
    let report = scaleup(a.family, &a.sizes, &params, a.seed)?;
    create_dir(&a.out)?;
    write_atomic(&a.out.join("scaleup.csv"), report.to_csv().as_bytes())?;
    let mut rec = Record::new("mmc-scaleup", SCHEMA_VERSION);
    rec.push("family", a.family);
    rec.push("sizes", join(&a.sizes));
    params_into(&mut rec, &params);
    rec.push("slope", fmt_opt(report.slope));
    rec.write(&a.out.join("summary.txt"))?;
    match report.slope {
        Some(s) => println!("log-log slope = {s:.3}"),
        None => println!("log-log slope unavailable (too few timings above the clock resolution)"),
    }
    Ok(())
}
