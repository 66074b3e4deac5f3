//! Independent oracles shared by the integration tests. Linear algebra here
//! goes through nalgebra so it never shares code with the crate under test.
#![allow(dead_code)]

use ggm::{Dataset, GraphKind, PriorGraph};
use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

pub fn to_na(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

pub fn dense_inverse(a: ArrayView2<'_, f64>) -> Array2<f64> {
    from_na(&to_na(a).try_inverse().expect("singular matrix"))
}

/// `log det` as the sum of log eigenvalues.
pub fn eig_logdet(a: ArrayView2<'_, f64>) -> f64 {
    to_na(a).symmetric_eigen().eigenvalues.iter().map(|v| v.ln()).sum()
}

pub fn min_eigenvalue(a: ArrayView2<'_, f64>) -> f64 {
    to_na(a).symmetric_eigen().eigenvalues.min()
}

pub fn max_abs_diff(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ggm::rng::seeded(seed);
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(&mut rng))
}

/// `A Aᵀ / d + I` with standard normal `A`.
pub fn random_spd(d: usize, seed: u64) -> Array2<f64> {
    let a = gaussian_matrix(d, d, seed);
    a.dot(&a.t()) / d as f64 + Array2::<f64>::eye(d)
}

pub fn random_dataset(n: usize, d: usize, seed: u64) -> Dataset {
    Dataset::from_values(gaussian_matrix(n, d, seed)).unwrap()
}

/// Erdős–Rényi graph with edge probability `p`.
pub fn random_graph(d: usize, p: f64, seed: u64) -> PriorGraph {
    let mut rng = ggm::rng::seeded(seed);
    let mut edges = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    PriorGraph::from_edges(d, &edges, GraphKind::Custom).unwrap()
}

/// Largest violation of the stationarity conditions of the constrained
/// problem over free entries; also the largest |θ| over constrained entries.
pub fn kkt_violation(
    s: ArrayView2<'_, f64>,
    theta: ArrayView2<'_, f64>,
    graph: &PriorGraph,
    rho: f64,
    penalize_diagonal: bool,
) -> (f64, f64) {
    let w = dense_inverse(theta);
    let d = s.nrows();
    let (mut free, mut constrained) = (0.0f64, 0.0f64);
    for i in 0..d {
        for j in 0..d {
            let g = w[[i, j]] - s[[i, j]];
            let t = theta[[i, j]];
            let pen = if i != j || penalize_diagonal { rho } else { 0.0 };
            if i != j && !graph.allows(i, j) {
                constrained = constrained.max(t.abs());
                continue;
            }
            let v = if t != 0.0 {
                (g - pen * t.signum()).abs()
            } else {
                (g.abs() - pen).max(0.0)
            };
            free = free.max(v);
        }
    }
    (free, constrained)
}

fn smooth_part(s: &DMatrix<f64>, theta: &DMatrix<f64>) -> Option<f64> {
    let chol = theta.clone().cholesky()?;
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Some((s.component_mul(theta)).sum() - logdet)
}

/// Proximal gradient with backtracking on
/// `−log det Θ + tr(SΘ) + ρ‖Θ‖₁` over symmetric Θ supported on `graph`.
pub fn proximal_glasso(s: ArrayView2<'_, f64>, graph: &PriorGraph, rho: f64, penalize_diagonal: bool) -> Array2<f64> {
    let d = s.nrows();
    let sm = to_na(s);
    let mut theta = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 / (s[[i, i]] + rho) } else { 0.0 });
    let prox = |m: &DMatrix<f64>, t: f64| {
        DMatrix::from_fn(d, d, |i, j| {
            let v = m[(i, j)];
            if i != j && !graph.allows(i, j) {
                0.0
            } else if i == j && !penalize_diagonal {
                v
            } else {
                v.signum() * (v.abs() - t * rho).max(0.0)
            }
        })
    };
    let mut step = 1.0;
    for _ in 0..1_000_000 {
        let f = smooth_part(&sm, &theta).unwrap();
        let grad = &sm - theta.clone().try_inverse().unwrap();
        loop {
            let cand = prox(&(&theta - &grad * step), step);
            let delta = &cand - &theta;
            let bound = f + grad.component_mul(&delta).sum() + delta.norm_squared() / (2.0 * step);
            match smooth_part(&sm, &cand) {
                Some(fc) if fc <= bound + 1e-15 => {
                    let moved = delta.amax() / step;
                    theta = cand;
                    if moved < 1e-11 {
                        return from_na(&theta);
                    }
                    step *= 1.5;
                    break;
                }
                _ => step /= 2.0,
            }
            assert!(step > 1e-20, "line search stalled");
        }
    }
    panic!("proximal oracle did not converge");
}

/// AUC by counting concordant (pos, neg) pairs, ties worth one half.
pub fn pair_count_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut c = 0.0;
    for p in pos {
        for n in neg {
            c += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    c / (pos.len() * neg.len()) as f64
}

/// Exact two-sided rank-sum p-value by enumerating every split of the pooled
/// sample into groups of the original sizes, scoring each by Mann–Whitney U.
pub fn enumerated_ranksum(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (na, nb) = (a.len(), b.len());
    let u = |idx: &[usize]| {
        let (x, y): (Vec<f64>, Vec<f64>) = {
            let mut x = Vec::new();
            let mut y = Vec::new();
            for (i, v) in pooled.iter().enumerate() {
                if idx.contains(&i) {
                    x.push(*v);
                } else {
                    y.push(*v);
                }
            }
            (x, y)
        };
        pair_count_auc(&x, &y) * (na * nb) as f64
    };
    let centre = (na * nb) as f64 / 2.0;
    let observed = (u(&(0..na).collect::<Vec<_>>()) - centre).abs();
    let (mut hits, mut total) = (0usize, 0usize);
    let mut chosen = Vec::new();
    fn walk(start: usize, n: usize, k: usize, chosen: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
        if chosen.len() == k {
            visit(chosen);
            return;
        }
        for i in start..n {
            chosen.push(i);
            walk(i + 1, n, k, chosen, visit);
            chosen.pop();
        }
    }
    walk(0, na + nb, na, &mut chosen, &mut |idx| {
        total += 1;
        if (u(idx) - centre).abs() >= observed - 1e-9 {
            hits += 1;
        }
    });
    hits as f64 / total as f64
}
