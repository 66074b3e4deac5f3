//! Subject- and region-level abnormality scoring against a fitted model.
//!
//! Squared distances are used throughout the region sort: `D_i` is the
//! squared Mahalanobis distance of the first `i` sorted regions under their
//! marginal distribution, which is χ²(i) for a subject drawn from the model.

use std::io::Write;

use log::warn;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{check_label_match, format_float, Dataset, GaussianModel, SortResult, FORMAT_VERSION};
use crate::stats;

/// Percentile of the χ² reference used for the region cutoff.
pub const CUTOFF_LEVEL: f64 = 0.95;

fn check_dim(model: &GaussianModel, z: ArrayView1<'_, f64>) -> Result<()> {
    if z.len() != model.dim() {
        return Err(Error::Dimension(format!(
            "subject has {} regions, model has {}",
            z.len(),
            model.dim()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("subject vector has non-finite entries".into()));
    }
    Ok(())
}

/// `√((z − μ)ᵀ Θ (z − μ))`.
pub fn mahalanobis(model: &GaussianModel, z: ArrayView1<'_, f64>) -> Result<f64> {
    check_dim(model, z)?;
    let diff = &z - &model.mean();
    Ok(linalg::quad_form(model.precision(), diff.view()).max(0.0).sqrt())
}

/// Squared Mahalanobis distance of the sub-vector `z_R` under the marginal
/// of the model on `R` (the `R × R` block of `Σ = Θ⁻¹`).
pub fn subset_distance(model: &GaussianModel, z: ArrayView1<'_, f64>, subset: &[usize]) -> Result<f64> {
    check_dim(model, z)?;
    subset_distance_cov(model.covariance().view(), model.mean(), z, subset)
}

pub(crate) fn subset_distance_cov(
    cov: ArrayView2<'_, f64>,
    mean: ArrayView1<'_, f64>,
    z: ArrayView1<'_, f64>,
    subset: &[usize],
) -> Result<f64> {
    let d = cov.nrows();
    if subset.is_empty() {
        return Err(Error::InvalidArgument("subset must be nonempty".into()));
    }
    if let Some(&bad) = subset.iter().find(|&&r| r >= d) {
        return Err(Error::InvalidArgument(format!("region index {bad} out of range")));
    }
    let k = subset.len();
    let block = Array2::from_shape_fn((k, k), |(a, b)| cov[[subset[a], subset[b]]]);
    let diff = Array1::from_shape_fn(k, |a| z[subset[a]] - mean[subset[a]]);
    let l = linalg::cholesky(block.view()).map_err(|_| Error::SingularSubset)?;
    let v = linalg::forward_solve(l.view(), diff.view());
    Ok(v.dot(&v))
}

/// Precomputes what every region sort against one model needs.
#[derive(Debug, Clone)]
pub struct RegionScorer {
    mean: Array1<f64>,
    cov: Array2<f64>,
    thresholds: Vec<f64>,
}

impl RegionScorer {
    pub fn new(model: &GaussianModel) -> Result<Self> {
        let d = model.dim();
        let thresholds = (1..=d)
            .map(|k| stats::chi2_quantile(CUTOFF_LEVEL, k as u32))
            .collect::<Result<Vec<_>>>()?;
        Ok(RegionScorer {
            mean: model.mean().to_owned(),
            cov: model.covariance(),
            thresholds,
        })
    }

    /// χ² thresholds `D̃_1..D̃_k` at the cutoff level.
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Greedy forward sort of regions from most normal to most abnormal.
    ///
    /// Keeps the Cholesky factor of `Σ_RR` implicitly: for every unsorted
    /// region `j` it tracks `u_j = L⁻¹ Σ_Rj`, the Schur complement
    /// `Σ_jj − |u_j|²` and `u_jᵀ L⁻¹ (z_R − μ_R)`, each extended by one entry
    /// per step. The increment of `D` from adding `j` is then a scalar.
    pub fn greedy_sort(&self, z: ArrayView1<'_, f64>) -> Result<SortResult> {
        let d = self.mean.len();
        if z.len() != d {
            return Err(Error::Dimension(format!("subject has {} regions, model has {d}", z.len())));
        }
        let diff: Vec<f64> = (0..d).map(|j| z[j] - self.mean[j]).collect();
        let cov = &self.cov;
        let mut remaining: Vec<usize> = (0..d).collect();
        let mut u: Vec<Vec<f64>> = vec![Vec::with_capacity(d); d];
        let mut schur: Vec<f64> = (0..d).map(|j| cov[[j, j]]).collect();
        let mut cross = vec![0.0; d];
        let mut order = Vec::with_capacity(d);
        let mut distances = Vec::with_capacity(d);
        let mut total = 0.0;
        while !remaining.is_empty() {
            let mut best: Option<(usize, f64, f64)> = None;
            for (pos, &j) in remaining.iter().enumerate() {
                if !(schur[j] > 1e-12 * cov[[j, j]]) {
                    return Err(Error::SingularSubset);
                }
                let t = (diff[j] - cross[j]) / schur[j].sqrt();
                let inc = t * t;
                if best.is_none_or(|(_, b, _)| inc < b) {
                    best = Some((pos, inc, t));
                }
            }
            let (pos, inc, t) = best.expect("remaining is nonempty");
            let r = remaining.remove(pos);
            total += inc;
            order.push(r);
            distances.push(total);
            let pivot = schur[r].sqrt();
            let ur = std::mem::take(&mut u[r]);
            for &j in &remaining {
                let dot: f64 = ur.iter().zip(&u[j]).map(|(a, b)| a * b).sum();
                let comp = (cov[[r, j]] - dot) / pivot;
                u[j].push(comp);
                schur[j] -= comp * comp;
                cross[j] += comp * t;
            }
        }
        Ok(finish_sort(order, distances, &self.thresholds))
    }
}

/// Cutoff and abnormality differentials for an already sorted subject.
pub fn finish_sort(order: Vec<usize>, distances: Vec<f64>, thresholds: &[f64]) -> SortResult {
    let k = distances.len();
    let mut cutoff = 0;
    for i in (1..=k).rev() {
        let f = stats::chi2_cdf(distances[i - 1].max(0.0), i as u32).unwrap_or(1.0);
        if f < CUTOFF_LEVEL {
            cutoff = i;
            break;
        }
    }
    let mut abnormality = Vec::with_capacity(k);
    let (mut prev_d, mut prev_t) = (0.0, 0.0);
    for i in 0..k {
        abnormality.push((distances[i] - prev_d) / (thresholds[i] - prev_t));
        prev_d = distances[i];
        prev_t = thresholds[i];
    }
    SortResult {
        order,
        distances,
        cutoff,
        abnormality,
    }
}

pub fn greedy_sort(model: &GaussianModel, z: ArrayView1<'_, f64>) -> Result<SortResult> {
    check_dim(model, z)?;
    RegionScorer::new(model)?.greedy_sort(z)
}

/// Regions sorted after the cutoff, i.e. flagged abnormal.
pub fn flag_abnormal(sr: &SortResult) -> Vec<usize> {
    sr.flagged().to_vec()
}

/// Region sorts for a set of subjects.
#[derive(Debug, Clone, Serialize)]
pub struct AbnormalityMap {
    pub region_labels: Vec<String>,
    pub subject_ids: Vec<String>,
    pub results: Vec<SortResult>,
}

impl AbnormalityMap {
    pub fn compute(model: &GaussianModel, subjects: &Dataset) -> Result<Self> {
        check_label_match(model.region_labels(), subjects.region_labels())?;
        let scorer = RegionScorer::new(model)?;
        let results = (0..subjects.n_subjects())
            .map(|i| scorer.greedy_sort(subjects.subject(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(AbnormalityMap {
            region_labels: model.region_labels().to_vec(),
            subject_ids: subjects.subject_ids().to_vec(),
            results,
        })
    }

    /// `a_i` per region (rows) and subject (columns).
    pub fn matrix(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.region_labels.len(), self.results.len()));
        for (s, r) in self.results.iter().enumerate() {
            for (pos, &region) in r.order.iter().enumerate() {
                m[[region, s]] = r.abnormality[pos];
            }
        }
        m
    }

    /// Abnormal flags per region (rows) and subject (columns).
    pub fn flags(&self) -> Array2<bool> {
        let mut m = Array2::from_elem((self.region_labels.len(), self.results.len()), false);
        for (s, r) in self.results.iter().enumerate() {
            for &region in r.flagged() {
                m[[region, s]] = true;
            }
        }
        m
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_region_matrix(writer, &self.region_labels, &self.subject_ids, self.matrix().view())
    }
}

pub(crate) fn write_region_matrix<W: Write>(
    writer: W,
    regions: &[String],
    subjects: &[String],
    m: ArrayView2<'_, f64>,
) -> Result<()> {
    let mut w = writer;
    writeln!(w, "# format_version={FORMAT_VERSION}").map_err(|e| Error::io("<csv>", e))?;
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["region".to_owned()];
    header.extend(subjects.iter().cloned());
    wtr.write_record(&header)?;
    for (r, label) in regions.iter().enumerate() {
        let mut rec = vec![label.clone()];
        rec.extend(m.row(r).iter().map(|v| format_float(*v)));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Univariate z-scores against healthy training statistics.
#[derive(Debug, Clone)]
pub struct ZScoreMap {
    pub region_labels: Vec<String>,
    pub subject_ids: Vec<String>,
    /// Subjects × regions; NaN in regions with zero training spread.
    pub z: Array2<f64>,
    pub thresholds: Vec<f64>,
    pub skipped_regions: Vec<usize>,
}

/// Default thresholds: `|z| > 2` and the two-sided Bonferroni value for `d` regions.
pub fn default_z_thresholds(d: usize) -> Vec<f64> {
    vec![2.0, stats::bonferroni_z(0.05, d)]
}

pub fn zscore_map(train: &Dataset, subjects: &Dataset, thresholds: &[f64]) -> Result<ZScoreMap> {
    check_label_match(train.region_labels(), subjects.region_labels())?;
    let n = train.n_subjects();
    if n < 2 {
        return Err(Error::InvalidArgument("z-scores need at least 2 training subjects".into()));
    }
    let d = train.n_regions();
    let x = train.values();
    let mut skipped = Vec::new();
    let mut z = Array2::from_elem((subjects.n_subjects(), d), f64::NAN);
    for r in 0..d {
        let col = x.column(r);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 0.0) {
            warn!("region '{}' has zero training spread; z-scores skipped", train.region_labels()[r]);
            skipped.push(r);
            continue;
        }
        for s in 0..subjects.n_subjects() {
            z[[s, r]] = (subjects.values()[[s, r]] - mean) / sd;
        }
    }
    Ok(ZScoreMap {
        region_labels: train.region_labels().to_vec(),
        subject_ids: subjects.subject_ids().to_vec(),
        z,
        thresholds: thresholds.to_vec(),
        skipped_regions: skipped,
    })
}

impl ZScoreMap {
    /// Mean `|z|` per subject over the regions with defined z-scores.
    pub fn mean_abs(&self) -> Vec<f64> {
        self.z
            .rows()
            .into_iter()
            .map(|row| {
                let vals: Vec<f64> = row.iter().filter(|v| v.is_finite()).map(|v| v.abs()).collect();
                if vals.is_empty() {
                    f64::NAN
                } else {
                    vals.iter().sum::<f64>() / vals.len() as f64
                }
            })
            .collect()
    }

    /// Subjects × regions flags for `|z| > thresholds[t]`.
    pub fn flags(&self, t: usize) -> Array2<bool> {
        let thr = self.thresholds[t];
        self.z.mapv(|v| v.is_finite() && v.abs() > thr)
    }

    /// Regions × subjects z matrix as CSV.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_region_matrix(writer, &self.region_labels, &self.subject_ids, self.z.t())
    }
}
