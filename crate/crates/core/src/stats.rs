//! Statistical primitives: χ² distribution, ROC analysis, rank tests and
//! pointwise quantile envelopes of curve families.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Lanczos approximation (g = 7, 9 terms) of `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized lower incomplete gamma `P(a, x)`: series below `a + 1`,
/// Lentz continued fraction for the upper tail otherwise.
pub fn regularized_lower_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let log_prefactor = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        (sum * log_prefactor.exp()).min(1.0)
    } else {
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-17 {
                break;
            }
        }
        (1.0 - log_prefactor.exp() * h).max(0.0)
    }
}

/// CDF of the χ² distribution with `k` degrees of freedom.
pub fn chi2_cdf(x: f64, k: u32) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("chi-square needs k >= 1".into()));
    }
    if !(x >= 0.0) {
        return Err(Error::InvalidArgument(format!("chi-square CDF needs x >= 0, got {x}")));
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    Ok(regularized_lower_gamma(k as f64 / 2.0, x / 2.0))
}

/// Inverse χ² CDF by bracketed bisection.
pub fn chi2_quantile(p: f64, k: u32) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("quantile level must be in (0, 1), got {p}")));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("chi-square needs k >= 1".into()));
    }
    let cdf = |x: f64| regularized_lower_gamma(k as f64 / 2.0, x / 2.0);
    let mut lo = 0.0;
    let mut hi = k as f64 + 1.0;
    while cdf(hi) < p {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Sum of `t³ − t` over tie groups.
fn tie_term(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j + 1 < v.len() && v[j + 1] == v[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        total += t * t * t - t;
        i = j + 1;
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocResult {
    pub auc: f64,
    /// Decision thresholds, descending; the first is `+∞` (nothing called positive).
    pub thresholds: Vec<f64>,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    /// Youden's J maximizer (earliest threshold on ties).
    pub operating_point: OperatingPoint,
}

impl RocResult {
    pub fn trapezoid_area(&self) -> f64 {
        self.fpr
            .windows(2)
            .zip(self.tpr.windows(2))
            .map(|(f, t)| (f[1] - f[0]) * (t[1] + t[0]) / 2.0)
            .sum()
    }
}

/// ROC analysis with higher scores meaning "positive". AUC comes from the
/// Mann–Whitney rank statistic with midranks for ties.
pub fn roc_auc(pos: &[f64], neg: &[f64]) -> Result<RocResult> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::InvalidArgument("ROC needs at least one score per class".into()));
    }
    if pos.iter().chain(neg).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("ROC scores must be finite".into()));
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let pooled: Vec<f64> = pos.iter().chain(neg).copied().collect();
    let ranks = midranks(&pooled);
    let rank_sum: f64 = ranks[..pos.len()].iter().sum();
    let auc = (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);

    let mut sorted = pooled.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.dedup();
    let mut thresholds = vec![f64::INFINITY];
    let mut tpr = vec![0.0];
    let mut fpr = vec![0.0];
    for &t in &sorted {
        thresholds.push(t);
        tpr.push(pos.iter().filter(|&&s| s >= t).count() as f64 / np);
        fpr.push(neg.iter().filter(|&&s| s >= t).count() as f64 / nn);
    }
    let mut best = 0;
    for i in 1..thresholds.len() {
        if tpr[i] - fpr[i] > tpr[best] - fpr[best] {
            best = i;
        }
    }
    let operating_point = OperatingPoint {
        threshold: thresholds[best],
        sensitivity: tpr[best],
        specificity: 1.0 - fpr[best],
    };
    Ok(RocResult {
        auc,
        thresholds,
        tpr,
        fpr,
        operating_point,
    })
}

/// Largest sample size handled by exact enumeration in [`wilcoxon_ranksum`].
pub const WILCOXON_EXACT_MAX: usize = 12;

/// Two-sided Wilcoxon rank-sum p-value.
///
/// Exact (enumerating all rank assignments of the pooled midranks) when
/// `|a| + |b| <= 12`; otherwise the normal approximation with tie-corrected
/// variance and continuity correction. When every value is identical the
/// samples are indistinguishable and the p-value is 1.
pub fn wilcoxon_ranksum(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("rank-sum test needs two nonempty samples".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("rank-sum samples must be finite".into()));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    if pooled.iter().all(|v| *v == pooled[0]) {
        return Ok(1.0);
    }
    let ranks = midranks(&pooled);
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let w: f64 = ranks[..na].iter().sum();
    let expected = na as f64 * (n as f64 + 1.0) / 2.0;
    if n <= WILCOXON_EXACT_MAX {
        let observed = (w - expected).abs();
        let mut hits = 0u64;
        let mut total = 0u64;
        for mask in 0u32..(1u32 << n) {
            if mask.count_ones() as usize != na {
                continue;
            }
            let s: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
            total += 1;
            if (s - expected).abs() >= observed - 1e-9 {
                hits += 1;
            }
        }
        return Ok(hits as f64 / total as f64);
    }
    let (naf, nbf, nf) = (na as f64, nb as f64, n as f64);
    let var = naf * nbf / 12.0 * ((nf + 1.0) - tie_term(&pooled) / (nf * (nf - 1.0)));
    let z = ((w - expected).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::standard();
    Ok((2.0 * (1.0 - normal.cdf(z))).min(1.0))
}

/// Spearman rank correlation and its two-sided p-value (t approximation, `n − 2` dof).
pub fn spearman(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("spearman inputs differ in length: {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 3 {
        return Err(Error::InvalidArgument("spearman needs at least 3 pairs".into()));
    }
    let (ra, rb) = (midranks(a), midranks(b));
    let ma = ra.iter().sum::<f64>() / n as f64;
    let mb = rb.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (x, y) = (ra[i] - ma, rb[i] - mb);
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::InvalidArgument("spearman input has zero rank variance".into()));
    }
    let rho = (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0);
    if rho.abs() >= 1.0 {
        return Ok((rho, 0.0));
    }
    let dof = (n - 2) as f64;
    let t = rho * (dof / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok((rho, (2.0 * (1.0 - dist.cdf(t.abs()))).min(1.0)))
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile_linear(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub coverage: f64,
    pub lower: Vec<f64>,
    pub median: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Pointwise central-region envelope of a family of curves (rows).
pub fn quantile_envelope(curves: &[Vec<f64>], coverage: f64) -> Result<Envelope> {
    if curves.len() < 2 {
        return Err(Error::InvalidArgument("envelope needs at least two curves".into()));
    }
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::InvalidArgument(format!("coverage must be in (0, 1], got {coverage}")));
    }
    let m = curves[0].len();
    if curves.iter().any(|c| c.len() != m) {
        return Err(Error::Dimension("curves differ in length".into()));
    }
    let tail = (1.0 - coverage) / 2.0;
    let (mut lower, mut median, mut upper) = (Vec::with_capacity(m), Vec::with_capacity(m), Vec::with_capacity(m));
    for c in 0..m {
        let mut col: Vec<f64> = curves.iter().map(|r| r[c]).collect();
        col.sort_by(f64::total_cmp);
        lower.push(quantile_linear(&col, tail));
        median.push(quantile_linear(&col, 0.5));
        upper.push(quantile_linear(&col, 1.0 - tail));
    }
    Ok(Envelope {
        coverage,
        lower,
        median,
        upper,
    })
}

/// Per-test significance level under a Bonferroni correction.
pub fn bonferroni_threshold(alpha: f64, tests: usize) -> f64 {
    alpha / tests.max(1) as f64
}

/// Two-sided standard-normal critical value at a Bonferroni-corrected level.
pub fn bonferroni_z(alpha: f64, tests: usize) -> f64 {
    let level = bonferroni_threshold(alpha, tests) / 2.0;
    Normal::standard().inverse_cdf(1.0 - level)
}

/// Kolmogorov–Smirnov distance between a sample and a reference CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
