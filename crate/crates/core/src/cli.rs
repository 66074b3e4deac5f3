//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 numerical failure
//! (including solver non-convergence, in which case the model is still
//! written). Diagnostics go to stderr as JSON lines.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use clap::{Args, Parser, Subcommand};
use log::{Level, LevelFilter, Log, Metadata, Record};
use serde_json::{json, Value};

use crate::anomaly::{self, AbnormalityMap};
use crate::error::{Error, Result};
use crate::evaluation::{self, CvReport, RandomGraphReport};
use crate::glasso;
use crate::graphs::{self, LabelVolume};
use crate::model::{check_label_match, Dataset, EvalCurve, GaussianModel, PriorGraph, SolverConfig, FORMAT_VERSION};
use crate::plot::{self, Series};
use crate::stats;
use crate::synth::{self, CohortSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable capping the worker count (0 or unset = automatic).
pub const THREADS_ENV: &str = "GGM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ggm", version, about = "Graph-constrained Gaussian models for region-wise anomaly detection")]
pub struct Cli {
    /// Omit the generation timestamp from JSON reports.
    #[arg(long, global = true)]
    pub no_timestamp: bool,

    /// Also log informational diagnostics.
    #[arg(long, short, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a sparse precision matrix under a prior graph.
    Fit(FitArgs),
    /// Mahalanobis distance of each subject to a fitted model.
    Score(ModelDataArgs),
    /// Greedy region sort and abnormality map for each subject.
    Sort(SortArgs),
    /// Leave-one-out cross-validation over a penalty grid.
    Cv(CvArgs),
    /// Choose the penalty by leave-one-out distance of healthy subjects.
    SelectRho(SelectRhoArgs),
    /// Compare a graph against random graphs with the same edge count.
    RandomGraphs(RandomGraphsArgs),
    /// Univariate z-score baseline.
    Zscore(ZscoreArgs),
    /// Generate a synthetic cohort with a known model.
    Synth(SynthArgs),
    /// Build a prior graph.
    #[command(subcommand)]
    Graph(GraphCommand),
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Relative convergence tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_sweeps: usize,
    /// Leave the diagonal of the precision matrix out of the penalty.
    #[arg(long)]
    pub unpenalized_diagonal: bool,
}

impl SolverArgs {
    fn config(&self) -> Result<SolverConfig> {
        let cfg = SolverConfig {
            tol: self.tol,
            max_sweeps: self.max_sweeps,
            penalize_diagonal: !self.unpenalized_diagonal,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long, default_value_t = 0.01)]
    pub rho_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub rho_max: f64,
    #[arg(long, default_value_t = 20)]
    pub rho_count: usize,
    /// Explicit comma-separated grid; overrides the log-spaced one.
    #[arg(long, value_delimiter = ',')]
    pub rho_grid: Option<Vec<f64>>,
}

impl GridArgs {
    fn grid(&self) -> Result<Vec<f64>> {
        let grid = match &self.rho_grid {
            Some(g) => g.clone(),
            None => {
                if !(self.rho_min > 0.0 && self.rho_min <= self.rho_max && self.rho_max.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "need 0 < --rho-min <= --rho-max, got {} and {}",
                        self.rho_min, self.rho_max
                    )));
                }
                if self.rho_count == 0 {
                    return Err(Error::InvalidArgument("--rho-count must be at least 1".into()));
                }
                evaluation::log_grid(self.rho_min, self.rho_max, self.rho_count)
            }
        };
        if grid.is_empty() || grid.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("penalty grid must be nonnegative, finite and increasing".into()));
        }
        Ok(grid)
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub rho: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct ModelDataArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SortArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Per-subject sort results (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Abnormality map, regions × subjects (CSV).
    #[arg(long)]
    pub map: PathBuf,
    /// Abnormality heat map (SVG).
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CohortArgs {
    /// Healthy training subjects.
    #[arg(long)]
    pub healthy: PathBuf,
    /// Healthy controls (negatives).
    #[arg(long)]
    pub controls: PathBuf,
    /// Patients (positives).
    #[arg(long)]
    pub patients: PathBuf,
    #[arg(long)]
    pub graph: PathBuf,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Also write AUC, BIC and model-order plots.
    #[arg(long)]
    pub svg: bool,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct SelectRhoArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct RandomGraphsArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON report.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for per-replicate AUC/BIC CSVs.
    #[arg(long)]
    pub csv_dir: Option<PathBuf>,
    /// AUC-vs-ρ plot with the random-graph envelopes.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct ZscoreArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// z matrix, regions × subjects (CSV).
    #[arg(long)]
    pub out: PathBuf,
    /// Flag thresholds on |z|; defaults to 2 and the Bonferroni value.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    /// Flags and per-subject mean |z| (JSON).
    #[arg(long)]
    pub flags: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = CohortSpec::default().lattice_rows)]
    pub rows: usize,
    #[arg(long, default_value_t = CohortSpec::default().lattice_cols)]
    pub cols: usize,
    #[arg(long, default_value_t = CohortSpec::default().n_healthy)]
    pub healthy: usize,
    #[arg(long, default_value_t = CohortSpec::default().n_controls)]
    pub controls: usize,
    #[arg(long, default_value_t = CohortSpec::default().n_patients)]
    pub patients: usize,
    /// Regions shifted per patient.
    #[arg(long, default_value_t = CohortSpec::default().injected_regions)]
    pub inject: usize,
    /// Shift size in marginal standard deviations.
    #[arg(long, default_value_t = CohortSpec::default().magnitude_sigmas)]
    pub magnitude: f64,
    #[arg(long, default_value_t = CohortSpec::default().edge_weight_lo)]
    pub weight_lo: f64,
    #[arg(long, default_value_t = CohortSpec::default().edge_weight_hi)]
    pub weight_hi: f64,
    #[arg(long, default_value_t = CohortSpec::default().feature_scale)]
    pub scale: f64,
    #[arg(long, default_value_t = CohortSpec::default().seed)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum GraphCommand {
    /// Regions sharing a face, edge or corner in a label volume.
    Neighborhood {
        /// Label volume: three little-endian i32 dims, then i32 labels (x fastest).
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 1)]
        min_voxels: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write the region label ids, one per line, in graph order.
        #[arg(long)]
        regions_out: Option<PathBuf>,
    },
    /// No edges.
    NodeOnly {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Every pair connected.
    Full {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Four-neighbour grid.
    Lattice {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Uniformly random graph with the edge count of another.
    Random {
        #[arg(long)]
        like: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Outcome of a command that completed but wants a non-zero exit.
struct Finished(i32);

struct JsonLogger;

static LOGGER: JsonLogger = JsonLogger;
static LOGGER_INSTALLED: OnceLock<bool> = OnceLock::new();

impl Log for JsonLogger {
    fn enabled(&self, metadata: &Metadata<'_>) -> bool {
        metadata.level() <= log::max_level()
    }

    fn log(&self, record: &Record<'_>) {
        if !self.enabled(record.metadata()) {
            return;
        }
        let level = match record.level() {
            Level::Error => "error",
            Level::Warn => "warn",
            Level::Info => "info",
            Level::Debug => "debug",
            Level::Trace => "trace",
        };
        diagnostic(level, "diagnostic", &record.args().to_string());
    }

    fn flush(&self) {}
}

fn diagnostic(level: &str, code: &str, message: &str) {
    let line = json!({ "level": level, "code": code, "message": message });
    let stderr = std::io::stderr();
    let mut lock = stderr.lock();
    let _ = writeln!(lock, "{line}");
}

fn install_logger(verbose: bool) {
    LOGGER_INSTALLED.get_or_init(|| log::set_logger(&LOGGER).is_ok());
    log::set_max_level(if verbose { LevelFilter::Info } else { LevelFilter::Warn });
}

fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::InvalidArgument(format!("{THREADS_ENV} must be a nonnegative integer, got '{v}'"))),
        _ => Ok(0),
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return EXIT_OK;
            }
            diagnostic("error", "usage", e.to_string().trim_end());
            return EXIT_INPUT;
        }
    };
    install_logger(cli.verbose);
    let threads = match thread_count() {
        Ok(t) => t,
        Err(e) => return report_error(&e),
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            diagnostic("error", "threads", &e.to_string());
            return EXIT_INPUT;
        }
    };
    let ctx = Context {
        timestamp: !cli.no_timestamp,
    };
    match pool.install(|| dispatch(&ctx, &cli.command)) {
        Ok(Finished(code)) => code,
        Err(e) => report_error(&e),
    }
}

fn report_error(e: &Error) -> i32 {
    diagnostic("error", e.code(), &e.to_string());
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INPUT
    }
}

struct Context {
    timestamp: bool,
}

impl Context {
    /// Wraps a report body with the format version and, unless disabled, a timestamp.
    fn report(&self, kind: &str, body: Value) -> Value {
        let mut obj = serde_json::Map::new();
        obj.insert("format_version".into(), json!(FORMAT_VERSION));
        obj.insert("report".into(), json!(kind));
        if self.timestamp {
            obj.insert(
                "generated_at".into(),
                json!(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
            );
        }
        if let Value::Object(fields) = body {
            obj.extend(fields);
        }
        Value::Object(obj)
    }
}

fn dispatch(ctx: &Context, command: &Command) -> Result<Finished> {
    match command {
        Command::Fit(a) => cmd_fit(a),
        Command::Score(a) => cmd_score(a),
        Command::Sort(a) => cmd_sort(ctx, a),
        Command::Cv(a) => cmd_cv(ctx, a),
        Command::SelectRho(a) => cmd_select_rho(ctx, a),
        Command::RandomGraphs(a) => cmd_random_graphs(ctx, a),
        Command::Zscore(a) => cmd_zscore(ctx, a),
        Command::Synth(a) => cmd_synth(ctx, a),
        Command::Graph(g) => cmd_graph(g),
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> Result<()>,
{
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn check_rho(rho: f64) -> Result<()> {
    if rho >= 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("--rho must be finite and >= 0, got {rho}")))
    }
}

fn cmd_fit(a: &FitArgs) -> Result<Finished> {
    check_rho(a.rho)?;
    let cfg = a.solver.config()?;
    let data = Dataset::load(&a.data)?;
    let graph = PriorGraph::load(&a.graph)?;
    if graph.dim() != data.n_regions() {
        return Err(Error::Dimension(format!(
            "graph has {} nodes, data has {} regions",
            graph.dim(),
            data.n_regions()
        )));
    }
    let model = glasso::fit_model(&data, &graph, a.rho, &cfg)?;
    model.save(&a.out)?;
    let stats = model.fit_stats();
    println!(
        "{}",
        json!({
            "objective": stats.final_objective,
            "iterations": stats.iterations,
            "converged": stats.converged,
            "model_order": evaluation::model_order(&model),
        })
    );
    if stats.converged {
        Ok(Finished(EXIT_OK))
    } else {
        diagnostic(
            "error",
            "not_converged",
            &format!("solver stopped after {} sweeps without converging; model written", stats.iterations),
        );
        Ok(Finished(EXIT_NUMERICAL))
    }
}

fn load_model_and_data(model: &Path, data: &Path) -> Result<(GaussianModel, Dataset)> {
    let model = GaussianModel::load(model)?;
    let data = Dataset::load(data)?;
    check_label_match(model.region_labels(), data.region_labels())?;
    Ok((model, data))
}

fn cmd_score(a: &ModelDataArgs) -> Result<Finished> {
    let (model, data) = load_model_and_data(&a.model, &a.data)?;
    let d = model.dim() as u32;
    let rows = (0..data.n_subjects())
        .map(|i| {
            let dist = anomaly::mahalanobis(&model, data.subject(i))?;
            let sq = dist * dist;
            Ok((data.subject_ids()[i].clone(), dist, sq, stats::chi2_cdf(sq, d)?))
        })
        .collect::<Result<Vec<_>>>()?;
    write_with(&a.out, |w| {
        writeln!(w, "# format_version={FORMAT_VERSION}").map_err(|e| Error::io(&a.out, e))?;
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["subject_id", "mahalanobis", "squared", "chi2_cdf_value"])?;
        for (id, dist, sq, p) in rows {
            wtr.write_record([id, dist.to_string(), sq.to_string(), p.to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io(&a.out, e))?;
        Ok(())
    })?;
    Ok(Finished(EXIT_OK))
}

fn cmd_sort(ctx: &Context, a: &SortArgs) -> Result<Finished> {
    let (model, data) = load_model_and_data(&a.model, &a.data)?;
    let map = AbnormalityMap::compute(&model, &data)?;
    let labels = &map.region_labels;
    let subjects: Vec<Value> = map
        .subject_ids
        .iter()
        .zip(&map.results)
        .map(|(id, r)| {
            json!({
                "subject_id": id,
                "order": r.order.iter().map(|&i| &labels[i]).collect::<Vec<_>>(),
                "order_index": r.order,
                "distances": r.distances,
                "cutoff": r.cutoff,
                "abnormality": r.abnormality,
                "flagged": r.flagged().iter().map(|&i| &labels[i]).collect::<Vec<_>>(),
            })
        })
        .collect();
    let report = ctx.report(
        "sort",
        json!({
            "region_labels": labels,
            "cutoff_level": anomaly::CUTOFF_LEVEL,
            "subjects": subjects,
        }),
    );
    write_json(&a.out, &report)?;
    write_with(&a.map, |w| map.write_csv(w))?;
    if let Some(svg) = &a.svg {
        let text = plot::heatmap_svg("Regional abnormality", &map.matrix(), labels, &map.subject_ids)?;
        write_bytes(svg, text.as_bytes())?;
    }
    Ok(Finished(EXIT_OK))
}

fn load_cohort(c: &CohortArgs) -> Result<(Dataset, Dataset, Dataset, PriorGraph)> {
    Ok((
        Dataset::load(&c.healthy)?,
        Dataset::load(&c.controls)?,
        Dataset::load(&c.patients)?,
        PriorGraph::load(&c.graph)?,
    ))
}

fn mean_band(curve: &EvalCurve, envelope: Option<&stats::Envelope>, label: &str) -> Series {
    let s = Series::line(label, curve.mean());
    match envelope {
        Some(e) => s.with_band(e.lower.clone(), e.upper.clone()),
        None => s,
    }
}

fn cmd_cv(ctx: &Context, a: &CvArgs) -> Result<Finished> {
    let grid = a.grid.grid()?;
    let cfg = a.solver.config()?;
    let (x, y, z, graph) = load_cohort(&a.cohort)?;
    let report = evaluation::loocv(&x, &y, &z, &graph, &grid, &cfg)?;
    ensure_dir(&a.out_dir)?;
    write_cv_outputs(ctx, &a.out_dir, &report)?;
    if a.svg {
        write_cv_plots(&a.out_dir, &report)?;
    }
    Ok(Finished(EXIT_OK))
}

fn write_cv_outputs(ctx: &Context, dir: &Path, report: &CvReport) -> Result<()> {
    write_with(&dir.join("auc.csv"), |w| report.auc.write_csv(w))?;
    write_with(&dir.join("bic.csv"), |w| report.bic.write_csv(w))?;
    write_with(&dir.join("order.csv"), |w| report.model_order.write_csv(w))?;
    write_with(&dir.join("envelope.csv"), |w| report.write_envelope_csv(w))?;
    let body = json!({
        "graph_kind": report.graph_kind,
        "edge_count": report.edge_count,
        "rho_grid": report.rho_grid,
        "mean_auc": report.mean_auc(),
        "mean_bic": report.bic.mean(),
        "mean_model_order": report.model_order.mean(),
        "sensitivity": report.sensitivity,
        "specificity": report.specificity,
        "auc_envelope": report.auc_envelope,
        "bic_envelope": report.bic_envelope,
        "failed_fits": report.failed_fits,
    });
    write_json(&dir.join("cv.json"), &ctx.report("cv", body))
}

fn write_cv_plots(dir: &Path, report: &CvReport) -> Result<()> {
    let auc = plot::curve_svg(
        "LOOCV AUC",
        "AUC",
        &report.rho_grid,
        &[mean_band(&report.auc, report.auc_envelope.as_ref(), "mean AUC")],
    )?;
    write_bytes(&dir.join("auc.svg"), auc.as_bytes())?;
    let bic = plot::curve_svg(
        "LOOCV BIC",
        "BIC",
        &report.rho_grid,
        &[mean_band(&report.bic, report.bic_envelope.as_ref(), "mean BIC")],
    )?;
    write_bytes(&dir.join("bic.svg"), bic.as_bytes())?;
    let order = plot::curve_svg(
        "Model order",
        "non-zero entries",
        &report.rho_grid,
        &[Series::line("mean order", report.model_order.mean())],
    )?;
    write_bytes(&dir.join("order.svg"), order.as_bytes())
}

fn cmd_select_rho(ctx: &Context, a: &SelectRhoArgs) -> Result<Finished> {
    let grid = a.grid.grid()?;
    let cfg = a.solver.config()?;
    let x = Dataset::load(&a.data)?;
    let graph = PriorGraph::load(&a.graph)?;
    let sel = evaluation::select_rho(&x, &graph, &grid, &cfg)?;
    let body = json!({
        "rho": sel.rho,
        "rho_min": grid[0],
        "rho_max": grid[grid.len() - 1],
        "rho_grid": sel.rho_grid,
        "criterion": sel.criterion,
    });
    write_json(&a.out, &ctx.report("select_rho", body))?;
    Ok(Finished(EXIT_OK))
}

fn cmd_random_graphs(ctx: &Context, a: &RandomGraphsArgs) -> Result<Finished> {
    let grid = a.grid.grid()?;
    let cfg = a.solver.config()?;
    if a.count < 2 {
        return Err(Error::InvalidArgument(format!("--count must be at least 2, got {}", a.count)));
    }
    let (x, y, z, graph) = load_cohort(&a.cohort)?;
    let report = evaluation::random_graph_benchmark(&x, &y, &z, &graph, a.count, &grid, &cfg, a.seed)?;
    let mut body = serde_json::to_value(&report)?;
    if let Value::Object(m) = &mut body {
        m.insert("master_seed".into(), json!(a.seed));
        m.insert("count".into(), json!(a.count));
    }
    write_json(&a.out, &ctx.report("random_graphs", body))?;
    if let Some(dir) = &a.csv_dir {
        ensure_dir(dir)?;
        write_with(&dir.join("random_auc.csv"), |w| report.auc.write_csv(w))?;
        write_with(&dir.join("random_bic.csv"), |w| report.bic.write_csv(w))?;
    }
    if let Some(svg) = &a.svg {
        write_bytes(svg, random_graph_plot(&report)?.as_bytes())?;
    }
    Ok(Finished(EXIT_OK))
}

fn random_graph_plot(report: &RandomGraphReport) -> Result<String> {
    let mut series = vec![Series::line("reference graph", report.reference_auc.clone())];
    for (c, e) in evaluation::RANDOM_GRAPH_COVERAGES.iter().zip(&report.auc_envelopes).rev() {
        series.push(
            Series::line(format!("random {:.0}%", c * 100.0), e.median.clone()).with_band(e.lower.clone(), e.upper.clone()),
        );
    }
    plot::curve_svg("AUC against random graphs", "AUC", &report.rho_grid, &series)
}

fn cmd_zscore(ctx: &Context, a: &ZscoreArgs) -> Result<Finished> {
    if let Some(t) = &a.thresholds {
        if t.is_empty() || t.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("--thresholds must be positive and finite".into()));
        }
    }
    let train = Dataset::load(&a.train)?;
    let data = Dataset::load(&a.data)?;
    let thresholds = a
        .thresholds
        .clone()
        .unwrap_or_else(|| anomaly::default_z_thresholds(train.n_regions()));
    let map = anomaly::zscore_map(&train, &data, &thresholds)?;
    write_with(&a.out, |w| map.write_csv(w))?;
    if let Some(path) = &a.flags {
        let per_threshold: Vec<Value> = (0..thresholds.len())
            .map(|t| {
                let flags = map.flags(t);
                let subjects: Vec<Value> = map
                    .subject_ids
                    .iter()
                    .enumerate()
                    .map(|(s, id)| {
                        let regions: Vec<&String> = (0..map.region_labels.len())
                            .filter(|&r| flags[[s, r]])
                            .map(|r| &map.region_labels[r])
                            .collect();
                        json!({ "subject_id": id, "flagged": regions })
                    })
                    .collect();
                json!({ "threshold": thresholds[t], "subjects": subjects })
            })
            .collect();
        let skipped: Vec<&String> = map.skipped_regions.iter().map(|&r| &map.region_labels[r]).collect();
        let body = json!({
            "subject_ids": map.subject_ids,
            "mean_abs_z": map.mean_abs(),
            "skipped_regions": skipped,
            "flags": per_threshold,
        });
        write_json(path, &ctx.report("zscore", body))?;
    }
    if let Some(svg) = &a.svg {
        let text = plot::heatmap_svg("z-scores", &map.z.t().to_owned(), &map.region_labels, &map.subject_ids)?;
        write_bytes(svg, text.as_bytes())?;
    }
    Ok(Finished(EXIT_OK))
}

fn cmd_synth(ctx: &Context, a: &SynthArgs) -> Result<Finished> {
    let spec = CohortSpec {
        lattice_rows: a.rows,
        lattice_cols: a.cols,
        n_healthy: a.healthy,
        n_controls: a.controls,
        n_patients: a.patients,
        injected_regions: a.inject,
        magnitude_sigmas: a.magnitude,
        edge_weight_lo: a.weight_lo,
        edge_weight_hi: a.weight_hi,
        feature_scale: a.scale,
        seed: a.seed,
    };
    let cohort = synth::make_cohort(&spec)?;
    ensure_dir(&a.out_dir)?;
    cohort.healthy.save(a.out_dir.join("healthy.csv"))?;
    cohort.controls.save(a.out_dir.join("controls.csv"))?;
    cohort.patients.save(a.out_dir.join("patients.csv"))?;
    cohort.planted.graph.save(a.out_dir.join("graph.json"))?;
    cohort.planted.truth.save(a.out_dir.join("truth.json"))?;
    let labels = cohort.healthy.region_labels();
    let injected: Vec<Value> = cohort
        .patients
        .subject_ids()
        .iter()
        .zip(&cohort.injected)
        .map(|(id, r)| json!({ "subject_id": id, "regions": r.iter().map(|&i| &labels[i]).collect::<Vec<_>>() }))
        .collect();
    let body = json!({ "spec": spec, "injected": injected });
    write_json(&a.out_dir.join("cohort.json"), &ctx.report("synth", body))?;
    Ok(Finished(EXIT_OK))
}

fn cmd_graph(g: &GraphCommand) -> Result<Finished> {
    match g {
        GraphCommand::Neighborhood {
            labels,
            min_voxels,
            out,
            regions_out,
        } => {
            let vol = LabelVolume::load(labels)?;
            let (graph, ids) = graphs::neighborhood_graph(&vol, *min_voxels)?;
            graph.save(out)?;
            if let Some(path) = regions_out {
                let text: String = ids.iter().map(|i| format!("{i}\n")).collect();
                write_bytes(path, text.as_bytes())?;
            }
        }
        GraphCommand::NodeOnly { dim, out } => graphs::node_only_graph(*dim)?.save(out)?,
        GraphCommand::Full { dim, out } => graphs::full_graph(*dim)?.save(out)?,
        GraphCommand::Lattice { rows, cols, out } => graphs::lattice_graph(*rows, *cols)?.save(out)?,
        GraphCommand::Random { like, seed, out } => {
            let reference = PriorGraph::load(like)?;
            graphs::random_graph_like(&reference, *seed)?.save(out)?
        }
    }
    Ok(Finished(EXIT_OK))
}
