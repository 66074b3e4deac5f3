//! Experiment harness: leave-one-out cross-validation over a penalty grid,
//! BIC and model order, penalty selection, and the random-graph benchmark.
//!
//! Folds, grid points and replicates are independent work items. They run
//! on the rayon pool but every result is collected in index order and every
//! replicate seed is derived from the master seed by counter, so reports do
//! not depend on scheduling.

use std::io::Write;

use log::warn;
use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::anomaly;
use crate::error::{Error, Result};
use crate::glasso;
use crate::graphs;
use crate::model::{
    check_label_match, format_float, Dataset, EvalCurve, GaussianModel, GraphKind, Metric, PriorGraph,
    SolverConfig, FORMAT_VERSION,
};
use crate::rng;
use crate::stats::{self, Envelope};

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// 20 log-spaced penalties from 0.01 to 10.
pub fn default_rho_grid() -> Vec<f64> {
    log_grid(1e-2, 10.0, 20)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("rho grid is empty".into()));
    }
    if grid.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("rho grid must be increasing, finite and nonnegative".into()));
    }
    Ok(())
}

/// Which precision entries count as parameters in the BIC penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterCount {
    /// Every nonzero entry, both triangles and the diagonal.
    #[default]
    FullMatrix,
    /// Nonzero entries on and above the diagonal.
    UpperTriangle,
}

/// Nonzero entries of the precision matrix (both triangles and the diagonal).
pub fn model_order(model: &GaussianModel) -> usize {
    model.nonzero_count()
}

fn parameter_count(model: &GaussianModel, counting: ParameterCount) -> usize {
    match counting {
        ParameterCount::FullMatrix => model.nonzero_count(),
        ParameterCount::UpperTriangle => {
            let p = model.precision();
            let d = model.dim();
            (0..d).map(|i| (i..d).filter(|&j| p[[i, j]] != 0.0).count()).sum()
        }
    }
}

/// Gaussian log-likelihood of `x` under the model, with the scatter taken
/// about the model mean.
pub fn log_likelihood(x: &Dataset, model: &GaussianModel) -> Result<f64> {
    let (n, d) = (x.n_subjects(), x.n_regions());
    if d != model.dim() {
        return Err(Error::Dimension(format!("data has {d} regions, model has {}", model.dim())));
    }
    let centered = &x.values() - &model.mean();
    let s = centered.t().dot(&centered) / n as f64;
    let l = crate::linalg::cholesky(model.precision())?;
    let log_det = crate::linalg::log_det_from_cholesky(l.view());
    let trace: f64 = s.iter().zip(model.precision().iter()).map(|(a, b)| a * b).sum();
    let (nf, df) = (n as f64, d as f64);
    Ok(nf / 2.0 * (log_det - trace) - nf * df / 2.0 * (2.0 * std::f64::consts::PI).ln())
}

/// `BIC = −2 ln p(X | Θ̂) + j ln n`.
pub fn bic(x: &Dataset, model: &GaussianModel) -> Result<f64> {
    bic_with(x, model, ParameterCount::default())
}

pub fn bic_with(x: &Dataset, model: &GaussianModel, counting: ParameterCount) -> Result<f64> {
    let ll = log_likelihood(x, model)?;
    Ok(-2.0 * ll + parameter_count(model, counting) as f64 * (x.n_subjects() as f64).ln())
}

/// Distances of controls (negatives) and patients (positives) under a model.
fn score_groups(model: &GaussianModel, controls: &Dataset, patients: &Dataset) -> Result<(Vec<f64>, Vec<f64>)> {
    let score = |ds: &Dataset| {
        (0..ds.n_subjects())
            .map(|i| anomaly::mahalanobis(model, ds.subject(i)))
            .collect::<Result<Vec<f64>>>()
    };
    Ok((score(patients)?, score(controls)?))
}

fn check_cohort(x: &Dataset, y: &Dataset, z: &Dataset, graph: &PriorGraph) -> Result<()> {
    check_label_match(x.region_labels(), y.region_labels())?;
    check_label_match(x.region_labels(), z.region_labels())?;
    if graph.dim() != x.n_regions() {
        return Err(Error::Dimension(format!(
            "graph has {} nodes, data has {} regions",
            graph.dim(),
            x.n_regions()
        )));
    }
    Ok(())
}

/// Per-fold leave-one-out results across the penalty grid.
#[derive(Debug, Clone, Serialize)]
pub struct CvReport {
    pub graph_kind: GraphKind,
    pub edge_count: usize,
    pub rho_grid: Vec<f64>,
    pub auc: EvalCurve,
    pub bic: EvalCurve,
    pub model_order: EvalCurve,
    /// 90% pointwise envelopes over complete folds; absent with fewer than two.
    pub auc_envelope: Option<Envelope>,
    pub bic_envelope: Option<Envelope>,
    /// Mean over folds of the Youden operating point, per grid value.
    pub sensitivity: Vec<f64>,
    pub specificity: Vec<f64>,
    pub failed_fits: usize,
}

pub const CV_ENVELOPE_COVERAGE: f64 = 0.9;

struct FoldCell {
    auc: f64,
    bic: f64,
    order: f64,
    sens: f64,
    spec: f64,
}

impl FoldCell {
    fn missing() -> Self {
        FoldCell {
            auc: f64::NAN,
            bic: f64::NAN,
            order: f64::NAN,
            sens: f64::NAN,
            spec: f64::NAN,
        }
    }
}

/// Leave-one-out cross-validation of the classification and fit metrics.
///
/// For each held-out healthy subject and penalty, fits on the remaining
/// healthy subjects, scores controls `y` (negatives) and patients `z`
/// (positives) by Mahalanobis distance, and records AUC, the training fold's
/// BIC and the model order. Failed fits are recorded as missing.
pub fn loocv(
    x: &Dataset,
    y: &Dataset,
    z: &Dataset,
    graph: &PriorGraph,
    rho_grid: &[f64],
    cfg: &SolverConfig,
) -> Result<CvReport> {
    check_grid(rho_grid)?;
    cfg.validate()?;
    check_cohort(x, y, z, graph)?;
    let n = x.n_subjects();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("LOOCV needs at least 3 healthy subjects, got {n}")));
    }
    let folds: Vec<Vec<FoldCell>> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<Vec<FoldCell>> {
            let train = x.without_subject(i)?;
            let path = glasso::fit_path(&train, graph, rho_grid, cfg)?;
            Ok(path
                .into_iter()
                .zip(rho_grid)
                .map(|(model, &rho)| match model.and_then(|m| cv_cell(&train, y, z, &m)) {
                    Ok(cell) => cell,
                    Err(e) => {
                        warn!("fold {i}, rho {rho}: fit failed ({e}); recorded as missing");
                        FoldCell::missing()
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let failed_fits = folds.iter().flatten().filter(|c| c.auc.is_nan()).count();
    let table = |f: fn(&FoldCell) -> f64| -> Vec<Vec<f64>> {
        folds.iter().map(|row| row.iter().map(f).collect()).collect()
    };
    let auc = EvalCurve::new(Metric::Auc, rho_grid.to_vec(), table(|c| c.auc))?;
    let bic = EvalCurve::new(Metric::Bic, rho_grid.to_vec(), table(|c| c.bic))?;
    let model_order = EvalCurve::new(Metric::ModelOrder, rho_grid.to_vec(), table(|c| c.order))?;
    let sens = EvalCurve::new(Metric::Auc, rho_grid.to_vec(), table(|c| c.sens))?.mean();
    let spec = EvalCurve::new(Metric::Auc, rho_grid.to_vec(), table(|c| c.spec))?.mean();
    let envelope = |curve: &EvalCurve| {
        let rows = curve.complete_rows();
        if rows.len() < curve.replicates.len() {
            warn!(
                "{} fold(s) with failed fits excluded from the {:?} envelope",
                curve.replicates.len() - rows.len(),
                curve.metric
            );
        }
        stats::quantile_envelope(&rows, CV_ENVELOPE_COVERAGE).ok()
    };
    Ok(CvReport {
        graph_kind: graph.kind(),
        edge_count: graph.edge_count(),
        rho_grid: rho_grid.to_vec(),
        auc_envelope: envelope(&auc),
        bic_envelope: envelope(&bic),
        auc,
        bic,
        model_order,
        sensitivity: sens,
        specificity: spec,
        failed_fits,
    })
}

fn cv_cell(train: &Dataset, y: &Dataset, z: &Dataset, model: &GaussianModel) -> Result<FoldCell> {
    if !model.fit_stats().converged {
        warn!("rho {}: solver stopped at the sweep limit; using the last iterate", model.rho());
    }
    let (pos, neg) = score_groups(model, y, z)?;
    let roc = stats::roc_auc(&pos, &neg)?;
    Ok(FoldCell {
        auc: roc.auc,
        bic: bic(train, model)?,
        order: model_order(model) as f64,
        sens: roc.operating_point.sensitivity,
        spec: roc.operating_point.specificity,
    })
}

impl CvReport {
    /// Mean AUC over folds, per grid value.
    pub fn mean_auc(&self) -> Vec<f64> {
        self.auc.mean()
    }

    pub fn write_envelope_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = writer;
        writeln!(w, "# format_version={FORMAT_VERSION}").map_err(|e| Error::io("<csv>", e))?;
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "rho",
            "auc_mean",
            "auc_lower",
            "auc_median",
            "auc_upper",
            "bic_mean",
            "bic_lower",
            "bic_median",
            "bic_upper",
            "sensitivity",
            "specificity",
        ])?;
        let (am, bm) = (self.auc.mean(), self.bic.mean());
        let get = |e: &Option<Envelope>, c: usize| -> [String; 3] {
            match e {
                Some(e) => [format_float(e.lower[c]), format_float(e.median[c]), format_float(e.upper[c])],
                None => ["NaN".into(), "NaN".into(), "NaN".into()],
            }
        };
        for (c, rho) in self.rho_grid.iter().enumerate() {
            let [al, amed, au] = get(&self.auc_envelope, c);
            let [bl, bmed, bu] = get(&self.bic_envelope, c);
            wtr.write_record([
                format_float(*rho),
                format_float(am[c]),
                al,
                amed,
                au,
                format_float(bm[c]),
                bl,
                bmed,
                bu,
                format_float(self.sensitivity[c]),
                format_float(self.specificity[c]),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Leave-one-out penalty selection.
#[derive(Debug, Clone, Serialize)]
pub struct RhoSelection {
    pub rho: f64,
    pub rho_grid: Vec<f64>,
    /// Σᵢ d_M(xᵢ)² with model fit on the other subjects; NaN where any fit failed.
    pub criterion: Vec<f64>,
}

/// Picks the grid penalty minimizing the leave-one-out sum of squared
/// Mahalanobis distances of each healthy subject to the model fit without it.
/// Ties go to the smaller penalty.
pub fn select_rho(x: &Dataset, graph: &PriorGraph, rho_grid: &[f64], cfg: &SolverConfig) -> Result<RhoSelection> {
    check_grid(rho_grid)?;
    cfg.validate()?;
    let n = x.n_subjects();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("penalty selection needs at least 3 subjects, got {n}")));
    }
    if graph.dim() != x.n_regions() {
        return Err(Error::Dimension("graph and data dimensions differ".into()));
    }
    let per_subject: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let train = x.without_subject(i)?;
            let path = glasso::fit_path(&train, graph, rho_grid, cfg)?;
            Ok(path
                .into_iter()
                .zip(rho_grid)
                .map(|(m, &rho)| match m.and_then(|m| anomaly::mahalanobis(&m, x.subject(i))) {
                    Ok(dist) => dist * dist,
                    Err(e) => {
                        warn!("rho {rho}, subject {i}: {e}; grid point excluded");
                        f64::NAN
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    // A single failed fit excludes the grid point (NaN propagates through the sum).
    let criterion: Vec<f64> = (0..rho_grid.len())
        .map(|k| per_subject.iter().map(|row| row[k]).sum())
        .collect();
    let mut best: Option<usize> = None;
    for (c, v) in criterion.iter().enumerate() {
        if v.is_finite() && best.is_none_or(|b| *v < criterion[b]) {
            best = Some(c);
        }
    }
    let best = best.ok_or_else(|| Error::Numerical("every fit failed at every grid penalty".into()))?;
    Ok(RhoSelection {
        rho: rho_grid[best],
        rho_grid: rho_grid.to_vec(),
        criterion,
    })
}

/// Central-region coverages reported by the random-graph benchmark.
pub const RANDOM_GRAPH_COVERAGES: [f64; 3] = [0.75, 0.85, 0.95];

#[derive(Debug, Clone, Serialize)]
pub struct RandomGraphReport {
    pub rho_grid: Vec<f64>,
    pub edge_count: usize,
    pub seeds: Vec<u64>,
    pub reference_auc: Vec<f64>,
    pub reference_bic: Vec<f64>,
    /// One row per replicate that fit at every grid value.
    pub auc: EvalCurve,
    pub bic: EvalCurve,
    pub auc_envelopes: Vec<Envelope>,
    pub bic_envelopes: Vec<Envelope>,
    /// Midrank percentile (0–100) of the reference AUC among the random graphs.
    pub auc_percentile: Vec<f64>,
    /// Midrank percentile (0–100) of the reference BIC among the random graphs.
    pub bic_percentile: Vec<f64>,
    pub dropped_replicates: usize,
}

/// Percentage of `population` below `value`, counting ties as half.
pub fn midrank_percentile(value: f64, population: &[f64]) -> f64 {
    let below = population.iter().filter(|&&p| p < value).count() as f64;
    let equal = population.iter().filter(|&&p| p == value).count() as f64;
    100.0 * (below + 0.5 * equal) / population.len() as f64
}

/// AUC and BIC of `count` edge-count-matched random graphs against a reference
/// graph, each fit once per penalty on the full healthy set.
#[allow(clippy::too_many_arguments)]
pub fn random_graph_benchmark(
    x: &Dataset,
    y: &Dataset,
    z: &Dataset,
    reference: &PriorGraph,
    count: usize,
    rho_grid: &[f64],
    cfg: &SolverConfig,
    seed: u64,
) -> Result<RandomGraphReport> {
    let seeds: Vec<u64> = (0..count as u64).map(|r| rng::derive_seed(seed, r)).collect();
    random_graph_benchmark_with_seeds(x, y, z, reference, &seeds, rho_grid, cfg)
}

/// As [`random_graph_benchmark`] with explicit per-replicate graph seeds.
pub fn random_graph_benchmark_with_seeds(
    x: &Dataset,
    y: &Dataset,
    z: &Dataset,
    reference: &PriorGraph,
    seeds: &[u64],
    rho_grid: &[f64],
    cfg: &SolverConfig,
) -> Result<RandomGraphReport> {
    if seeds.len() < 2 {
        return Err(Error::InvalidArgument("random-graph benchmark needs at least 2 replicates".into()));
    }
    check_grid(rho_grid)?;
    cfg.validate()?;
    check_cohort(x, y, z, reference)?;
    let evaluate = |graph: &PriorGraph| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut aucs = Vec::with_capacity(rho_grid.len());
        let mut bics = Vec::with_capacity(rho_grid.len());
        for model in glasso::fit_path(x, graph, rho_grid, cfg)? {
            let model = model?;
            let (pos, neg) = score_groups(&model, y, z)?;
            aucs.push(stats::roc_auc(&pos, &neg)?.auc);
            bics.push(bic(x, &model)?);
        }
        Ok((aucs, bics))
    };
    let (reference_auc, reference_bic) = evaluate(reference)?;
    let replicates: Vec<Option<(Vec<f64>, Vec<f64>)>> = seeds
        .par_iter()
        .enumerate()
        .map(|(r, &s)| {
            let out = graphs::random_graph_like(reference, s).and_then(|g| evaluate(&g));
            match out {
                Ok(v) => Some(v),
                Err(e) => {
                    warn!("random graph replicate {r} dropped: {e}");
                    None
                }
            }
        })
        .collect();
    let dropped = replicates.iter().filter(|r| r.is_none()).count();
    let kept: Vec<(Vec<f64>, Vec<f64>)> = replicates.into_iter().flatten().collect();
    if kept.len() < 2 {
        return Err(Error::Numerical(format!("only {} random-graph replicate(s) fit", kept.len())));
    }
    let auc_rows: Vec<Vec<f64>> = kept.iter().map(|r| r.0.clone()).collect();
    let bic_rows: Vec<Vec<f64>> = kept.iter().map(|r| r.1.clone()).collect();
    let envelopes = |rows: &[Vec<f64>]| {
        RANDOM_GRAPH_COVERAGES
            .iter()
            .map(|&c| stats::quantile_envelope(rows, c))
            .collect::<Result<Vec<_>>>()
    };
    let percentile = |reference: &[f64], rows: &[Vec<f64>]| -> Vec<f64> {
        (0..rho_grid.len())
            .map(|c| {
                let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
                midrank_percentile(reference[c], &col)
            })
            .collect()
    };
    Ok(RandomGraphReport {
        rho_grid: rho_grid.to_vec(),
        edge_count: reference.edge_count(),
        seeds: seeds.to_vec(),
        auc_percentile: percentile(&reference_auc, &auc_rows),
        bic_percentile: percentile(&reference_bic, &bic_rows),
        auc_envelopes: envelopes(&auc_rows)?,
        bic_envelopes: envelopes(&bic_rows)?,
        reference_auc,
        reference_bic,
        auc: EvalCurve::new(Metric::Auc, rho_grid.to_vec(), auc_rows)?,
        bic: EvalCurve::new(Metric::Bic, rho_grid.to_vec(), bic_rows)?,
        dropped_replicates: dropped,
    })
}

/// AUC of the univariate baseline: mean absolute z-score over regions.
pub fn zscore_auc(x: &Dataset, y: &Dataset, z: &Dataset) -> Result<stats::RocResult> {
    let zy = anomaly::zscore_map(x, y, &[])?.mean_abs();
    let zz = anomaly::zscore_map(x, z, &[])?.mean_abs();
    stats::roc_auc(&zz, &zy)
}

/// Mahalanobis distances of every subject in `data`.
pub fn distances(model: &GaussianModel, data: &Dataset) -> Result<Vec<f64>> {
    check_label_match(model.region_labels(), data.region_labels())?;
    (0..data.n_subjects())
        .map(|i| anomaly::mahalanobis(model, data.subject(i)))
        .collect()
}

/// Dense boolean support of a precision matrix, handy for comparing fits.
pub fn support(model: &GaussianModel) -> Array2<bool> {
    model.precision().mapv(|v| v != 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::node_only_graph;
    use crate::model::FitStats;
    use ndarray::{array, Array1};

    #[test]
    fn grid_endpoints() {
        let g = default_rho_grid();
        assert_eq!(g.len(), 20);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[19], 10.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn bic_closed_form() {
        let x = Dataset::from_values(array![[-1.0], [1.0]]).unwrap();
        let m = GaussianModel::new(
            Array1::zeros(1),
            Array2::eye(1),
            node_only_graph(1).unwrap(),
            0.0,
            FitStats::default(),
        )
        .unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        assert!((log_likelihood(&x, &m).unwrap() - (-1.0 - two_pi.ln())).abs() < 1e-14);
        let want = 2.0 + 2.0 * two_pi.ln() + 2f64.ln();
        assert!((bic(&x, &m).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn orders() {
        let eye = GaussianModel::new(
            Array1::zeros(5),
            Array2::eye(5),
            node_only_graph(5).unwrap(),
            0.0,
            FitStats::default(),
        )
        .unwrap();
        assert_eq!(model_order(&eye), 5);
        let dense = array![[2.0, 0.1, 0.2], [0.1, 2.0, 0.3], [0.2, 0.3, 2.0]];
        let m = GaussianModel::new(
            Array1::zeros(3),
            dense,
            graphs::full_graph(3).unwrap(),
            0.0,
            FitStats::default(),
        )
        .unwrap();
        assert_eq!(model_order(&m), 9);
        assert_eq!(parameter_count(&m, ParameterCount::UpperTriangle), 6);
    }

    #[test]
    fn percentile_midrank() {
        assert_eq!(midrank_percentile(0.5, &[0.5, 0.5]), 50.0);
        assert_eq!(midrank_percentile(1.0, &[0.0, 0.5, 1.0, 2.0]), 62.5);
    }

    #[test]
    fn single_point_grid_selects_it() {
        let x = Dataset::from_values(array![[0.0, 1.0], [1.0, 0.5], [2.0, 2.0], [0.5, 0.1]]).unwrap();
        let sel = select_rho(&x, &graphs::full_graph(2).unwrap(), &[0.3], &SolverConfig::default()).unwrap();
        assert_eq!(sel.rho, 0.3);
        assert!(select_rho(&x, &graphs::full_graph(2).unwrap(), &[], &SolverConfig::default()).is_err());
    }
}
