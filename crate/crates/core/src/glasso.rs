//! Graphical lasso with structural zeros.
//!
//! Maximizes `log det Θ − tr(SΘ) − ρ‖Θ‖₁` subject to `θ_ij = 0` wherever the
//! prior graph has no edge. The solver sweeps over columns; each column
//! update solves a lasso problem by cyclic coordinate descent with
//! soft-thresholding, with graph-forbidden coordinates never entering the
//! active set. Every update is carried out on the primal variable, keeping
//! `Θ` positive definite and `W = Θ⁻¹` in sync, so the objective is
//! nondecreasing from sweep to sweep.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Dataset, FitStats, GaussianModel, PriorGraph, SolverConfig};

/// A symmetric positive semidefinite sample covariance and its sample count.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCovariance {
    matrix: Array2<f64>,
    n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Divide by `n` (maximum likelihood).
    #[default]
    Mle,
    /// Divide by `n − 1`.
    Unbiased,
}

impl SampleCovariance {
    pub fn new(matrix: Array2<f64>, n: usize) -> Result<Self> {
        let (r, c) = matrix.dim();
        if r != c || r == 0 {
            return Err(Error::Dimension(format!("covariance must be square, got {r}x{c}")));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("covariance has non-finite entries".into()));
        }
        let scale = matrix.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..r {
            if matrix[[i, i]] < 0.0 {
                return Err(Error::InvalidArgument(format!("negative variance at {i}")));
            }
            for j in i + 1..r {
                if (matrix[[i, j]] - matrix[[j, i]]).abs() > 1e-12 * scale.max(1e-300) {
                    return Err(Error::InvalidArgument(format!("covariance asymmetric at ({i}, {j})")));
                }
            }
        }
        let trace: f64 = matrix.diag().sum();
        let mut shifted = matrix.clone();
        let eps = 1e-10 * trace.max(f64::MIN_POSITIVE);
        for i in 0..r {
            shifted[[i, i]] += eps;
        }
        if !linalg::is_positive_definite(shifted.view()) {
            return Err(Error::InvalidArgument("covariance is not positive semidefinite".into()));
        }
        Ok(SampleCovariance { matrix, n })
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Column means and MLE covariance of a dataset.
pub fn sample_covariance(x: &Dataset) -> Result<(Array1<f64>, SampleCovariance)> {
    sample_covariance_with(x, Normalization::Mle)
}

pub fn sample_covariance_with(
    x: &Dataset,
    norm: Normalization,
) -> Result<(Array1<f64>, SampleCovariance)> {
    let n = x.n_subjects();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "sample covariance needs at least 2 subjects, got {n}"
        )));
    }
    let values = x.values();
    let mean = values.mean_axis(ndarray::Axis(0)).expect("n >= 2");
    let centered = &values - &mean;
    let denom = match norm {
        Normalization::Mle => n as f64,
        Normalization::Unbiased => (n - 1) as f64,
    };
    let mut s = centered.t().dot(&centered) / denom;
    linalg::symmetrize(&mut s);
    Ok((mean, SampleCovariance { matrix: s, n }))
}

/// `log det Θ − tr(SΘ) − ρ‖Θ‖₁`; the diagonal enters the norm only when
/// `penalize_diagonal` is set.
pub fn objective(
    s: ArrayView2<'_, f64>,
    theta: ArrayView2<'_, f64>,
    rho: f64,
    penalize_diagonal: bool,
) -> Result<f64> {
    if s.dim() != theta.dim() {
        return Err(Error::Dimension("S and theta differ in shape".into()));
    }
    let l = linalg::cholesky(theta)?;
    Ok(objective_with_logdet(s, theta, rho, penalize_diagonal, linalg::log_det_from_cholesky(l.view())))
}

fn objective_with_logdet(
    s: ArrayView2<'_, f64>,
    theta: ArrayView2<'_, f64>,
    rho: f64,
    penalize_diagonal: bool,
    log_det: f64,
) -> f64 {
    let mut trace = 0.0;
    let mut l1 = 0.0;
    for ((i, j), &t) in theta.indexed_iter() {
        trace += s[[i, j]] * t;
        if i != j || penalize_diagonal {
            l1 += t.abs();
        }
    }
    log_det - trace - rho * l1
}

/// Solver output: the precision estimate plus its inverse and diagnostics.
#[derive(Debug, Clone)]
pub struct GlassoFit {
    pub precision: Array2<f64>,
    pub covariance: Array2<f64>,
    pub stats: FitStats,
    /// Objective after initialization and after every sweep.
    pub objective_trace: Vec<f64>,
}

const INNER_MAX_PASSES: usize = 10_000;
const INNER_REL_TOL: f64 = 1e-12;
const NEWTON_EVERY: usize = 8;

/// Fits the constrained graphical lasso.
///
/// Non-convergence within `cfg.max_sweeps` is not an error: the last iterate
/// (the best, since progress is monotone) comes back with `converged = false`.
pub fn fit_glasso(
    s: &SampleCovariance,
    graph: &PriorGraph,
    rho: f64,
    cfg: &SolverConfig,
) -> Result<GlassoFit> {
    fit_glasso_from(s, graph, rho, cfg, None)
}

/// As [`fit_glasso`], starting from `start` when it is a positive definite
/// precision supported on `graph` (otherwise from the diagonal start).
pub fn fit_glasso_from(
    s: &SampleCovariance,
    graph: &PriorGraph,
    rho: f64,
    cfg: &SolverConfig,
    start: Option<ArrayView2<'_, f64>>,
) -> Result<GlassoFit> {
    cfg.validate()?;
    let d = s.dim();
    if graph.dim() != d {
        return Err(Error::Dimension(format!(
            "graph has {} nodes, covariance is {d}x{d}",
            graph.dim()
        )));
    }
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::InvalidArgument(format!("rho must be finite and >= 0, got {rho}")));
    }
    let sm = s.matrix();
    let diag_penalty = if cfg.penalize_diagonal { rho } else { 0.0 };
    let target_diag: Vec<f64> = (0..d).map(|i| sm[[i, i]] + diag_penalty).collect();
    if let Some(i) = target_diag.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Numerical(format!(
            "region {i} has zero variance and an unpenalized diagonal; the estimate is unbounded"
        )));
    }
    if rho == 0.0 && graph.edge_count() == d * (d - 1) / 2 && !linalg::is_positive_definite(sm) {
        return Err(Error::Numerical(
            "rho = 0 with a full graph needs a positive definite sample covariance".into(),
        ));
    }

    let warm = start.and_then(|t0| warm_start(t0, graph));
    let (mut theta, mut w, log_det0) = match warm {
        Some(init) => init,
        None => {
            let mut theta = Array2::<f64>::zeros((d, d));
            let mut w = Array2::<f64>::zeros((d, d));
            for i in 0..d {
                theta[[i, i]] = 1.0 / target_diag[i];
                w[[i, i]] = target_diag[i];
            }
            (theta, w, -target_diag.iter().map(|v| v.ln()).sum::<f64>())
        }
    };
    let mut trace = vec![objective_with_logdet(sm, theta.view(), rho, cfg.penalize_diagonal, log_det0)];

    let free: Vec<Vec<usize>> = (0..d)
        .map(|j| (0..d).filter(|&k| k != j && graph.allows(k, j)).collect())
        .collect();
    let off_count = d * d - d;
    let threshold = if off_count == 0 {
        0.0
    } else {
        let mean_off = sm.indexed_iter().filter(|((i, j), _)| i != j).map(|(_, v)| v.abs()).sum::<f64>()
            / off_count as f64;
        let scale = if mean_off > 0.0 {
            mean_off
        } else {
            target_diag.iter().sum::<f64>() / d as f64
        };
        cfg.tol * scale
    };

    let mut converged = false;
    let mut sweeps = 0;
    let mut scratch = ColumnScratch::new(d);
    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        let w_before = w.clone();
        for j in 0..d {
            update_column(j, &free[j], sm, rho, target_diag[j], &mut theta, &mut w, &mut scratch);
        }
        linalg::symmetrize(&mut theta);
        // Refresh W from Θ to keep rank-one drift out of the iteration.
        let l = linalg::cholesky(theta.view()).map_err(|_| {
            Error::Numerical(format!("precision lost positive definiteness in sweep {sweeps}"))
        })?;
        w = linalg::inverse_from_cholesky(l.view());
        let log_det = linalg::log_det_from_cholesky(l.view());
        trace.push(objective_with_logdet(sm, theta.view(), rho, cfg.penalize_diagonal, log_det));

        let change = if off_count == 0 {
            0.0
        } else {
            w.indexed_iter()
                .filter(|((i, j), _)| i != j)
                .map(|((i, j), v)| (v - w_before[[i, j]]).abs())
                .sum::<f64>()
                / off_count as f64
        };
        if change <= threshold {
            converged = true;
            break;
        }
    }

    let final_objective = *trace.last().expect("trace starts non-empty");
    Ok(GlassoFit {
        precision: theta,
        covariance: w,
        stats: FitStats {
            iterations: sweeps,
            final_objective,
            converged,
        },
        objective_trace: trace,
    })
}

fn warm_start(t0: ArrayView2<'_, f64>, graph: &PriorGraph) -> Option<(Array2<f64>, Array2<f64>, f64)> {
    let d = graph.dim();
    if t0.dim() != (d, d) || t0.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut theta = Array2::from_shape_fn((d, d), |(i, j)| {
        if i == j || graph.allows(i, j) {
            0.5 * (t0[[i, j]] + t0[[j, i]])
        } else {
            0.0
        }
    });
    linalg::symmetrize(&mut theta);
    let l = linalg::cholesky(theta.view()).ok()?;
    let w = linalg::inverse_from_cholesky(l.view());
    Some((theta, w, linalg::log_det_from_cholesky(l.view())))
}

/// Fits every penalty of `rho_grid`, largest first, each warm-started from
/// the previous successful fit. Results are returned in grid order.
pub fn fit_path(
    x: &Dataset,
    graph: &PriorGraph,
    rho_grid: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<Result<GaussianModel>>> {
    let (mean, s) = sample_covariance(x)?;
    let mut order: Vec<usize> = (0..rho_grid.len()).collect();
    order.sort_by(|&a, &b| rho_grid[b].total_cmp(&rho_grid[a]).then(a.cmp(&b)));
    let mut out: Vec<Option<Result<GaussianModel>>> = (0..rho_grid.len()).map(|_| None).collect();
    let mut previous: Option<Array2<f64>> = None;
    for k in order {
        let rho = rho_grid[k];
        let fit = fit_glasso_from(&s, graph, rho, cfg, previous.as_ref().map(|p| p.view()));
        let model = fit.and_then(|fit| {
            previous = Some(fit.precision.clone());
            GaussianModel::with_labels(
                mean.clone(),
                fit.precision,
                graph.clone(),
                rho,
                fit.stats,
                x.region_labels().to_vec(),
            )
        });
        out[k] = Some(model);
    }
    Ok(out.into_iter().map(|m| m.expect("every grid index visited")).collect())
}

struct ColumnScratch {
    u: Vec<f64>,
    grad: Vec<f64>,
    alpha: Vec<f64>,
}

impl ColumnScratch {
    fn new(d: usize) -> Self {
        ColumnScratch {
            u: vec![0.0; d],
            grad: vec![0.0; d],
            alpha: vec![0.0; d],
        }
    }
}

/// Solves the column lasso restricted to the current sign pattern of `alpha`
/// and keeps the result if it satisfies the optimality conditions of the
/// whole problem. `grad` is kept equal to `Qα` either way.
#[allow(clippy::too_many_arguments)]
fn newton_polish(
    j: usize,
    free: &[usize],
    s: ArrayView2<'_, f64>,
    rho: f64,
    q_scale: f64,
    a: &Array2<f64>,
    alpha: &mut [f64],
    grad: &mut [f64],
) -> bool {
    let active: Vec<usize> = (0..free.len()).filter(|&p| alpha[p] != 0.0).collect();
    let na = active.len();
    let mut q = Array2::<f64>::zeros((na, na));
    let mut rhs = Array1::<f64>::zeros(na);
    for (r, &p) in active.iter().enumerate() {
        for (c, &pp) in active.iter().enumerate() {
            q[[r, c]] = q_scale * a[[free[p], free[pp]]];
        }
        rhs[r] = -(s[[free[p], j]] + rho * alpha[p].signum());
    }
    let sol = match linalg::cholesky(q.view()) {
        Ok(l) => linalg::backward_solve(l.view(), linalg::forward_solve(l.view(), rhs.view()).view()),
        Err(_) => return false,
    };
    if active.iter().zip(sol.iter()).any(|(&p, v)| v.signum() != alpha[p].signum()) {
        return false;
    }
    let mut trial: Vec<f64> = vec![0.0; free.len()];
    for (&p, &v) in active.iter().zip(sol.iter()) {
        trial[p] = v;
    }
    let mut trial_grad = vec![0.0; free.len()];
    for (p, &k) in free.iter().enumerate() {
        trial_grad[p] = q_scale * active.iter().map(|&pp| a[[k, free[pp]]] * trial[pp]).sum::<f64>();
    }
    let s_scale = free.iter().map(|&k| s[[k, j]].abs()).fold(0.0, f64::max);
    let slack = rho * (1.0 + 1e-9) + 1e-12 * s_scale;
    let kkt = (0..free.len())
        .filter(|&p| trial[p] == 0.0)
        .all(|p| (s[[free[p], j]] + trial_grad[p]).abs() <= slack);
    if !kkt {
        return false;
    }
    alpha.copy_from_slice(&trial);
    grad.copy_from_slice(&trial_grad);
    true
}

/// Exact minimization of the objective over row/column `j` of `Θ`.
///
/// With `A = (Θ₋ⱼ₋ⱼ)⁻¹ = W₋ⱼ₋ⱼ − w wᵀ / w_jj`, the optimal diagonal of `W`
/// is `s_jj + ρ_diag` and the off-diagonal column `α` of `Θ` minimizes
/// `½ αᵀ (w_jj A) α + sᵀα + ρ‖α‖₁` over the free coordinates.
#[allow(clippy::too_many_arguments)]
fn update_column(
    j: usize,
    free: &[usize],
    s: ArrayView2<'_, f64>,
    rho: f64,
    w_jj_new: f64,
    theta: &mut Array2<f64>,
    w: &mut Array2<f64>,
    scratch: &mut ColumnScratch,
) {
    let d = theta.nrows();
    let w_jj = w[[j, j]];
    let wcol: Vec<f64> = (0..d).map(|k| w[[k, j]]).collect();
    // W₋ⱼ₋ⱼ ← A.
    for k in 0..d {
        if k == j {
            continue;
        }
        let wk = wcol[k] / w_jj;
        if wk == 0.0 {
            continue;
        }
        for l in 0..d {
            if l != j {
                w[[k, l]] -= wk * wcol[l];
            }
        }
    }

    let m = free.len();
    let alpha = &mut scratch.alpha[..m];
    let grad = &mut scratch.grad[..m];
    for (a, &k) in alpha.iter_mut().zip(free) {
        *a = theta[[k, j]];
    }
    // grad = Q α with Q = w_jj_new · A restricted to the free set.
    for (p, &k) in free.iter().enumerate() {
        let mut g = 0.0;
        for (q, &l) in free.iter().enumerate() {
            g += w[[k, l]] * alpha[q];
        }
        grad[p] = w_jj_new * g;
    }
    let precision_scale = 1.0 / w_jj_new;
    for pass in 0..INNER_MAX_PASSES {
        if pass % NEWTON_EVERY == 1 && newton_polish(j, free, s, rho, w_jj_new, w, alpha, grad) {
            break;
        }
        let mut max_delta = 0.0f64;
        let mut max_alpha = 0.0f64;
        for p in 0..m {
            let k = free[p];
            let q_kk = w_jj_new * w[[k, k]];
            let r = s[[k, j]] + grad[p] - q_kk * alpha[p];
            let new = -soft_threshold(r, rho) / q_kk;
            let delta = new - alpha[p];
            if delta != 0.0 {
                for (q, &l) in free.iter().enumerate() {
                    grad[q] += delta * w_jj_new * w[[l, k]];
                }
                alpha[p] = new;
            }
            max_delta = max_delta.max(delta.abs());
            max_alpha = max_alpha.max(new.abs());
        }
        if max_delta <= INNER_REL_TOL * max_alpha.max(precision_scale) {
            break;
        }
    }

    // u = A[:, free] α over all k ≠ j.
    let u = &mut scratch.u;
    for k in 0..d {
        u[k] = 0.0;
        if k == j {
            continue;
        }
        for (q, &l) in free.iter().enumerate() {
            u[k] += w[[k, l]] * alpha[q];
        }
    }
    let mut quad = 0.0;
    for (p, &k) in free.iter().enumerate() {
        quad += alpha[p] * u[k];
    }

    for k in 0..d {
        if k != j {
            theta[[k, j]] = 0.0;
            theta[[j, k]] = 0.0;
        }
    }
    for (p, &k) in free.iter().enumerate() {
        theta[[k, j]] = alpha[p];
        theta[[j, k]] = alpha[p];
    }
    theta[[j, j]] = 1.0 / w_jj_new + quad;

    // W₋ⱼ₋ⱼ ← A + w_jj_new · u uᵀ, new column −w_jj_new · u.
    for k in 0..d {
        if k == j || u[k] == 0.0 {
            continue;
        }
        let uk = w_jj_new * u[k];
        for l in 0..d {
            if l != j {
                w[[k, l]] += uk * u[l];
            }
        }
    }
    for k in 0..d {
        if k != j {
            let v = -w_jj_new * u[k];
            w[[k, j]] = v;
            w[[j, k]] = v;
        }
    }
    w[[j, j]] = w_jj_new;
}

#[inline]
fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Fits a full model (mean and precision) to a dataset under `graph`.
pub fn fit_model(
    x: &Dataset,
    graph: &PriorGraph,
    rho: f64,
    cfg: &SolverConfig,
) -> Result<GaussianModel> {
    let (mean, s) = sample_covariance(x)?;
    let fit = fit_glasso(&s, graph, rho, cfg)?;
    GaussianModel::with_labels(
        mean,
        fit.precision,
        graph.clone(),
        rho,
        fit.stats,
        x.region_labels().to_vec(),
    )
}
