//! Synthetic cohorts with a known generating model.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs;
use crate::linalg;
use crate::model::{default_region_labels, Dataset, FitStats, GaussianModel, PriorGraph};
use crate::rng;

/// Ground-truth model together with the graph and seed that produced it.
#[derive(Debug, Clone)]
pub struct PlantedModel {
    pub truth: GaussianModel,
    pub graph: PriorGraph,
    pub seed: u64,
    covariance: Array2<f64>,
    cov_factor: Array2<f64>,
}

impl PlantedModel {
    /// `Σ* = (Θ*)⁻¹`.
    pub fn covariance(&self) -> &Array2<f64> {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.truth.dim()
    }

    /// The same model in units multiplied by `factor`: `μ* → cμ*`, `Θ* → Θ*/c²`.
    pub fn rescaled(&self, factor: f64) -> Result<PlantedModel> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::InvalidArgument(format!("scale factor must be positive, got {factor}")));
        }
        if factor == 1.0 {
            return Ok(self.clone());
        }
        let truth = GaussianModel::with_labels(
            self.truth.mean().mapv(|v| v * factor),
            self.truth.precision().mapv(|v| v / (factor * factor)),
            self.graph.clone(),
            0.0,
            FitStats::default(),
            self.truth.region_labels().to_vec(),
        )?;
        Ok(PlantedModel {
            truth,
            graph: self.graph.clone(),
            seed: self.seed,
            covariance: self.covariance.mapv(|v| v * factor * factor),
            cov_factor: self.cov_factor.mapv(|v| v * factor),
        })
    }
}

/// Draws a diagonally dominant precision matrix supported on `graph`.
///
/// Edge weights are uniform on `±[lo, hi]` with a random sign; each diagonal
/// entry is its row's absolute off-diagonal sum plus 0.5. Means are standard normal.
pub fn make_planted_model(graph: &PriorGraph, edge_weight_range: (f64, f64), seed: u64) -> Result<PlantedModel> {
    let (lo, hi) = edge_weight_range;
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("edge weight range must satisfy 0 < lo <= hi, got ({lo}, {hi})")));
    }
    let d = graph.dim();
    let mut rng = rng::stream(seed, 0);
    let mut theta = Array2::<f64>::zeros((d, d));
    for (i, j) in graph.edges() {
        let mag = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let v = if rng.random_bool(0.5) { mag } else { -mag };
        theta[[i, j]] = v;
        theta[[j, i]] = v;
    }
    for i in 0..d {
        let row: f64 = theta.row(i).iter().map(|v| v.abs()).sum();
        theta[[i, i]] = row + 0.5;
    }
    let mean = Array1::from_iter((0..d).map(|_| StandardNormal.sample(&mut rng)));
    let truth = GaussianModel::with_labels(
        mean,
        theta,
        graph.clone(),
        0.0,
        FitStats::default(),
        default_region_labels(d),
    )?;
    let covariance = truth.covariance();
    let cov_factor = linalg::cholesky(covariance.view())?;
    Ok(PlantedModel {
        truth,
        graph: graph.clone(),
        seed,
        covariance,
        cov_factor,
    })
}

/// `n` independent draws from `N(μ*, Σ*)`.
pub fn sample_cohort(pm: &PlantedModel, n: usize, seed: u64) -> Result<Dataset> {
    sample_cohort_named(pm, n, seed, "s")
}

/// As [`sample_cohort`], with subject ids `{prefix}1..{prefix}n`.
pub fn sample_cohort_named(pm: &PlantedModel, n: usize, seed: u64, prefix: &str) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("cohort size must be at least 1".into()));
    }
    let d = pm.dim();
    let mut rng = rng::seeded(seed);
    let mut values = Array2::<f64>::zeros((n, d));
    let mut xi = Array1::<f64>::zeros(d);
    for i in 0..n {
        for v in xi.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let draw = pm.cov_factor.dot(&xi) + &pm.truth.mean();
        values.row_mut(i).assign(&draw);
    }
    let ids = (1..=n).map(|i| format!("{prefix}{i}")).collect();
    Dataset::new(values, pm.truth.region_labels().to_vec(), ids)
}

/// Shifts each chosen region by `magnitude_sigmas` marginal standard
/// deviations with a random sign.
pub fn inject_abnormality(
    subject: ArrayView1<'_, f64>,
    pm: &PlantedModel,
    regions: &[usize],
    magnitude_sigmas: f64,
    seed: u64,
) -> Result<Array1<f64>> {
    if regions.is_empty() {
        return Err(Error::InvalidArgument("at least one region must be injected".into()));
    }
    if !(magnitude_sigmas > 0.0) || !magnitude_sigmas.is_finite() {
        return Err(Error::InvalidArgument(format!("magnitude must be positive, got {magnitude_sigmas}")));
    }
    let d = pm.dim();
    if subject.len() != d {
        return Err(Error::Dimension(format!("subject has {} regions, model has {d}", subject.len())));
    }
    if let Some(&bad) = regions.iter().find(|&&r| r >= d) {
        return Err(Error::InvalidArgument(format!("region {bad} out of range")));
    }
    let mut rng = rng::seeded(seed);
    let mut out = subject.to_owned();
    for &r in regions {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        out[r] += sign * magnitude_sigmas * pm.covariance[[r, r]].sqrt();
    }
    Ok(out)
}

/// Geometry and effect sizes of a synthetic study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub lattice_rows: usize,
    pub lattice_cols: usize,
    pub n_healthy: usize,
    pub n_controls: usize,
    pub n_patients: usize,
    pub injected_regions: usize,
    pub magnitude_sigmas: f64,
    pub edge_weight_lo: f64,
    pub edge_weight_hi: f64,
    /// Multiplies every feature (and so every marginal sd) of the cohort.
    pub feature_scale: f64,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            lattice_rows: 5,
            lattice_cols: 6,
            n_healthy: 40,
            n_controls: 15,
            n_patients: 15,
            injected_regions: 3,
            magnitude_sigmas: 2.0,
            edge_weight_lo: 2.0,
            edge_weight_hi: 4.0,
            feature_scale: 12.0,
            seed: 2016,
        }
    }
}

/// Healthy training set, matched controls and patients drawn from one planted model.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub spec: CohortSpec,
    pub planted: PlantedModel,
    pub healthy: Dataset,
    pub controls: Dataset,
    pub patients: Dataset,
    /// Injected regions per patient.
    pub injected: Vec<Vec<usize>>,
}

pub fn make_cohort(spec: &CohortSpec) -> Result<Cohort> {
    let graph = graphs::lattice_graph(spec.lattice_rows, spec.lattice_cols)?;
    let d = graph.dim();
    if spec.injected_regions == 0 || spec.injected_regions > d {
        return Err(Error::InvalidArgument(format!(
            "injected_regions must be in 1..={d}, got {}",
            spec.injected_regions
        )));
    }
    let seed = |k| rng::derive_seed(spec.seed, k);
    let planted = make_planted_model(&graph, (spec.edge_weight_lo, spec.edge_weight_hi), seed(0))?
        .rescaled(spec.feature_scale)?;
    let healthy = sample_cohort_named(&planted, spec.n_healthy, seed(1), "h")?;
    let controls = sample_cohort_named(&planted, spec.n_controls, seed(2), "c")?;
    let clean = sample_cohort_named(&planted, spec.n_patients, seed(3), "p")?;
    let mut pick = rng::seeded(seed(4));
    let mut values = Array2::<f64>::zeros((spec.n_patients, d));
    let mut injected = Vec::with_capacity(spec.n_patients);
    for i in 0..spec.n_patients {
        let mut regions = index::sample(&mut pick, d, spec.injected_regions).into_vec();
        regions.sort_unstable();
        let row = inject_abnormality(
            clean.subject(i),
            &planted,
            &regions,
            spec.magnitude_sigmas,
            rng::derive_seed(seed(5), i as u64),
        )?;
        values.row_mut(i).assign(&row);
        injected.push(regions);
    }
    let patients = Dataset::new(values, clean.region_labels().to_vec(), clean.subject_ids().to_vec())?;
    Ok(Cohort {
        spec: *spec,
        planted,
        healthy,
        controls,
        patients,
        injected,
    })
}
