//! Acceptance gate: one PASS/FAIL line per criterion, then a single assertion.
//!
//! Run with `cargo test -p ggm --test acceptance -- --nocapture` to see the lines.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use ggm::anomaly::{greedy_sort, mahalanobis, RegionScorer};
use ggm::evaluation::{default_rho_grid, loocv, random_graph_benchmark, select_rho};
use ggm::glasso::{fit_glasso, fit_model, SampleCovariance};
use ggm::graphs::{full_graph, lattice_graph, node_only_graph};
use ggm::rng::derive_seed;
use ggm::stats;
use ggm::synth::{make_cohort, make_planted_model, sample_cohort, CohortSpec};
use ggm::{FitStats, GaussianModel, SolverConfig};
use ndarray::{Array1, Array2};
use rand::Rng as _;

const MASTER_SEED: u64 = 2016;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn unpenalized_diagonal() -> SolverConfig {
    SolverConfig {
        penalize_diagonal: false,
        ..Default::default()
    }
}

fn sample_cov(n: usize, d: usize, seed: u64) -> SampleCovariance {
    ggm::glasso::sample_covariance(&random_dataset(n, d, seed)).unwrap().1
}

fn c1_node_only_closed_form() -> Outcome {
    const TOL: f64 = 1e-8;
    let d = 10;
    let s = sample_cov(25, d, 101);
    let mut worst = 0.0f64;
    for rho in [0.01, 0.3, 2.0] {
        let fit = fit_glasso(&s, &node_only_graph(d).unwrap(), rho, &SolverConfig::default()).unwrap();
        let expected = Array2::from_diag(&Array1::from_iter((0..d).map(|i| 1.0 / (s.matrix()[[i, i]] + rho))));
        worst = worst.max(max_abs_diff(fit.precision.view(), expected.view()));
    }
    outcome(worst <= TOL, format!("max |Θ̂ − diag(1/(s_ii+ρ))| = {worst:.2e} (tol {TOL:e})"))
}

fn c2_unpenalized_inverse() -> Outcome {
    const TOL: f64 = 1e-6;
    let s = random_spd(6, 202);
    let sc = SampleCovariance::new(s.clone(), 100).unwrap();
    let fit = fit_glasso(&sc, &full_graph(6).unwrap(), 0.0, &SolverConfig::default()).unwrap();
    let inv = dense_inverse(s.view());
    let scale = inv.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rel = max_abs_diff(fit.precision.view(), inv.view()) / scale;
    outcome(rel <= TOL, format!("relative max-norm error vs S⁻¹ = {rel:.2e} (tol {TOL:e})"))
}

fn c3_kkt() -> Outcome {
    const TOL: f64 = 1e-4;
    let d = 12;
    let mut rng = ggm::rng::seeded(303);
    let (mut worst, mut constrained) = (0.0f64, 0.0f64);
    for t in 0..20u64 {
        let s = sample_cov(rng.random_range(8..40), d, 3000 + t);
        let g = random_graph(d, rng.random_range(0.1..0.7), 3100 + t);
        let rho = rng.random_range(0.02..0.6);
        let pen = t % 2 == 0;
        let cfg = SolverConfig {
            penalize_diagonal: pen,
            ..Default::default()
        };
        let fit = fit_glasso(&s, &g, rho, &cfg).unwrap();
        let (free, con) = kkt_violation(s.matrix(), fit.precision.view(), &g, rho, pen);
        worst = worst.max(free);
        constrained = constrained.max(con);
    }
    outcome(
        worst <= TOL && constrained == 0.0,
        format!("worst KKT residual {worst:.2e} (tol {TOL:e}), max |constrained θ| = {constrained}"),
    )
}

fn c4_oracle_equivalence() -> Outcome {
    const TOL: f64 = 1e-4;
    let mut worst = 0.0f64;
    for t in 0..10u64 {
        let d = 2 + (t % 3) as usize;
        let s = sample_cov(10 + t as usize, d, 4000 + t);
        let g = random_graph(d, 0.6, 4100 + t);
        let rho = 0.05 + 0.04 * t as f64;
        let pen = t % 2 == 0;
        let cfg = SolverConfig {
            penalize_diagonal: pen,
            ..Default::default()
        };
        let fit = fit_glasso(&s, &g, rho, &cfg).unwrap();
        let oracle = proximal_glasso(s.matrix(), &g, rho, pen);
        worst = worst.max(max_abs_diff(fit.precision.view(), oracle.view()));
    }
    outcome(worst <= TOL, format!("max-norm gap to proximal-gradient oracle {worst:.2e} (tol {TOL:e})"))
}

fn c5_chi2_calibration() -> Outcome {
    const KS_MAX: f64 = 0.05;
    let pm = make_planted_model(&lattice_graph(4, 5).unwrap(), (0.2, 0.5), 505).unwrap();
    let x = sample_cohort(&pm, 2000, 506).unwrap();
    let d2: Vec<f64> = (0..2000).map(|i| mahalanobis(&pm.truth, x.subject(i)).unwrap().powi(2)).collect();
    let ks = stats::ks_statistic(&d2, |v| stats::chi2_cdf(v, 20).unwrap());
    outcome(ks < KS_MAX, format!("KS = {ks:.4} against χ²(20) (limit {KS_MAX})"))
}

fn c6_greedy_oracle() -> Outcome {
    let d = 5;
    let mut violations = 0;
    let mut rng = ggm::rng::seeded(606);
    for t in 0..50u64 {
        let g = random_graph(d, 0.5, 6000 + t);
        let pm = make_planted_model(&g, (0.3, 0.9), 6100 + t).unwrap();
        let z = sample_cohort(&pm, 1, 6200 + t).unwrap().subject(0).mapv(|v| v * 1.5);
        let sr = greedy_sort(&pm.truth, z.view()).unwrap();
        let sigma = dense_inverse(pm.truth.precision());
        let subset = |r: &[usize]| {
            let k = r.len();
            let block = Array2::from_shape_fn((k, k), |(a, b)| sigma[[r[a], r[b]]]);
            let diff = Array1::from_shape_fn(k, |a| z[r[a]] - pm.truth.mean()[r[a]]);
            diff.dot(&dense_inverse(block.view()).dot(&diff))
        };
        let mut chosen = Vec::new();
        for step in 0..d {
            let best = (0..d)
                .filter(|j| !chosen.contains(j))
                .map(|j| {
                    let mut c = chosen.clone();
                    c.push(j);
                    (subset(&c), j)
                })
                .fold((f64::INFINITY, usize::MAX), |b, c| if c.0 < b.0 - 1e-9 { c } else { b });
            if sr.order[step] != best.1 {
                violations += 1;
            }
            chosen.push(sr.order[step]);
        }
        if sr.distances.windows(2).any(|w| w[1] < w[0] - 1e-12) {
            violations += 1;
        }

        let var: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..3.0)).collect();
        let theta = Array2::from_diag(&Array1::from_iter(var.iter().map(|v| 1.0 / v)));
        let m = GaussianModel::new(Array1::zeros(d), theta, node_only_graph(d).unwrap(), 0.0, FitStats::default())
            .unwrap();
        let z = Array1::from_iter((0..d).map(|_| rng.random_range(-4.0..4.0)));
        let sq: Vec<f64> = (0..d).map(|i| z[i] * z[i] / var[i]).collect();
        let mut expected: Vec<usize> = (0..d).collect();
        expected.sort_by(|&a, &b| sq[a].total_cmp(&sq[b]).then(a.cmp(&b)));
        if greedy_sort(&m, z.view()).unwrap().order != expected {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("{violations} violations over 50 trials"))
}

/// Oracle run over these 20 seeds: select_rho pipeline recall 0.612 with
/// false-flag rate 0.0054; the generating model 0.709; an overfit ρ = 0.01
/// reaches 0.755 with false-flag rate 0.0128.
fn c7_region_detection() -> Outcome {
    const MIN_RECALL: f64 = 0.7;
    const MAX_FALSE_FLAG: f64 = 0.1;
    const SEEDS: u64 = 20;
    let g = lattice_graph(5, 6).unwrap();
    let cfg = unpenalized_diagonal();
    let (mut recall, mut false_flags, mut truth_recall) = (0.0, 0.0, 0.0);
    for t in 0..SEEDS {
        let spec = CohortSpec {
            injected_regions: 5,
            magnitude_sigmas: 3.0,
            seed: derive_seed(MASTER_SEED, t),
            ..Default::default()
        };
        let c = make_cohort(&spec).unwrap();
        let rho = select_rho(&c.healthy, &g, &default_rho_grid(), &cfg).unwrap().rho;
        let model = fit_model(&c.healthy, &g, rho, &cfg).unwrap();
        let rates = |m: &GaussianModel| {
            let scorer = RegionScorer::new(m).unwrap();
            let mut r = 0.0;
            for (i, inj) in c.injected.iter().enumerate() {
                let sr = scorer.greedy_sort(c.patients.subject(i)).unwrap();
                r += inj.iter().filter(|x| sr.flagged().contains(x)).count() as f64 / inj.len() as f64;
            }
            let mut f = 0.0;
            for i in 0..c.controls.n_subjects() {
                f += scorer.greedy_sort(c.controls.subject(i)).unwrap().flagged().len() as f64 / 30.0;
            }
            (r / c.patients.n_subjects() as f64, f / c.controls.n_subjects() as f64)
        };
        let (r, f) = rates(&model);
        recall += r;
        false_flags += f;
        truth_recall += rates(&c.planted.truth).0;
    }
    let n = SEEDS as f64;
    let (recall, false_flags, truth_recall) = (recall / n, false_flags / n, truth_recall / n);
    outcome(
        recall >= MIN_RECALL && false_flags <= MAX_FALSE_FLAG,
        format!(
            "mean recall {recall:.3} (min {MIN_RECALL}), false-flag rate {false_flags:.4} (max {MAX_FALSE_FLAG}); \
             generating model itself reaches recall {truth_recall:.3}"
        ),
    )
}

/// Oracle run on the default cohort: AUC 0.815 / 0.788 / 0.727 (z-score
/// baseline 0.662); BIC 7083 vs 7425 at the neighborhood ρ̂.
fn c8_experiment_shape() -> Outcome {
    const MIN_MARGIN: f64 = 0.05;
    let c = make_cohort(&CohortSpec::default()).unwrap();
    let cfg = unpenalized_diagonal();
    let grid = default_rho_grid();
    let graphs = [
        lattice_graph(5, 6).unwrap(),
        full_graph(30).unwrap(),
        node_only_graph(30).unwrap(),
    ];
    let mut auc = Vec::new();
    let mut hat = Vec::new();
    let mut reports = Vec::new();
    for g in &graphs {
        let k = {
            let rho = select_rho(&c.healthy, g, &grid, &cfg).unwrap().rho;
            grid.iter().position(|r| *r == rho).unwrap()
        };
        let rep = loocv(&c.healthy, &c.controls, &c.patients, g, &grid, &cfg).unwrap();
        auc.push(rep.mean_auc()[k]);
        hat.push(k);
        reports.push(rep);
    }
    let (lat, full, node) = (auc[0], auc[1], auc[2]);
    let ordering = lat >= full && full > node && lat - node >= MIN_MARGIN;
    let bic_lat = reports[0].bic.mean()[hat[0]];
    let bic_full = reports[1].bic.mean()[hat[0]];
    let orders = (reports[0].model_order.mean(), reports[1].model_order.mean());
    let order_ok = orders.0.iter().zip(&orders.1).all(|(a, b)| a < b);
    outcome(
        ordering && bic_lat < bic_full && order_ok,
        format!(
            "LOOCV AUC at ρ̂: neighborhood {lat:.3}, full {full:.3}, node-only {node:.3} (margin min {MIN_MARGIN}); \
             BIC at ρ̂={:.3}: {bic_lat:.0} vs {bic_full:.0}; order below full at every ρ: {order_ok}",
            grid[hat[0]]
        ),
    )
}

fn c9_random_graphs() -> Outcome {
    const MIN_PERCENTILE: f64 = 90.0;
    let c = make_cohort(&CohortSpec::default()).unwrap();
    let cfg = unpenalized_diagonal();
    let grid = default_rho_grid();
    let g = lattice_graph(5, 6).unwrap();
    let rho = select_rho(&c.healthy, &g, &grid, &cfg).unwrap().rho;
    let k = grid.iter().position(|r| *r == rho).unwrap();
    let rep = random_graph_benchmark(&c.healthy, &c.controls, &c.patients, &g, 100, &grid, &cfg, MASTER_SEED).unwrap();
    let pct = rep.auc_percentile[k];
    outcome(
        pct >= MIN_PERCENTILE && rep.dropped_replicates == 0,
        format!(
            "lattice AUC percentile {pct:.1} at ρ̂ = {rho:.3} among 100 random graphs (min {MIN_PERCENTILE}); dropped {}",
            rep.dropped_replicates
        ),
    )
}

fn c10_statistics() -> Outcome {
    let mut failures = Vec::new();
    let worst_chi2 = (0..=2000)
        .map(|i| {
            let x = i as f64 * 0.01;
            (stats::chi2_cdf(x, 2).unwrap() - (1.0 - (-x / 2.0).exp())).abs()
        })
        .fold(0.0, f64::max);
    if worst_chi2 > 1e-8 {
        failures.push(format!("chi2 k=2 error {worst_chi2:.1e}"));
    }
    let mut rng = ggm::rng::seeded(1010);
    for _ in 0..200 {
        let pos: Vec<f64> = (0..rng.random_range(1..8)).map(|_| rng.random_range(0..5) as f64).collect();
        let neg: Vec<f64> = (0..rng.random_range(1..8)).map(|_| rng.random_range(0..5) as f64).collect();
        if (stats::roc_auc(&pos, &neg).unwrap().auc - pair_count_auc(&pos, &neg)).abs() > 1e-12 {
            failures.push(format!("auc {pos:?} {neg:?}"));
        }
    }
    let (rho, _) = stats::spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 3.0, 2.0, 5.0, 4.0]).unwrap();
    if rho != 0.8 {
        failures.push(format!("spearman {rho}"));
    }
    for _ in 0..100 {
        let na = rng.random_range(1..6);
        let nb = rng.random_range(1..=(10 - na).min(6));
        let a: Vec<f64> = (0..na).map(|_| rng.random_range(0..6) as f64).collect();
        let b: Vec<f64> = (0..nb).map(|_| rng.random_range(0..6) as f64).collect();
        if a.iter().chain(&b).all(|v| *v == a[0]) {
            continue;
        }
        if (stats::wilcoxon_ranksum(&a, &b).unwrap() - enumerated_ranksum(&a, &b)).abs() > 1e-12 {
            failures.push(format!("ranksum {a:?} {b:?}"));
        }
    }
    let detail = if failures.is_empty() {
        format!("chi2 k=2 max error {worst_chi2:.1e}; 200 AUC, spearman and 100 exact rank-sum checks agree")
    } else {
        failures.join("; ")
    };
    outcome(failures.is_empty(), detail)
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if path.is_dir() {
            files.extend(read_tree(&path).into_iter().map(|(n, b)| (format!("{name}/{n}"), b)));
        } else {
            files.push((name, std::fs::read(&path).unwrap()));
        }
    }
    files.sort();
    files
}

fn c11_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let bin = env!("CARGO_BIN_EXE_ggm");
    let run = |args: &[&str]| {
        let out = Command::new(bin).arg("--no-timestamp").args(args).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    let s = |p: &Path| p.to_str().unwrap().to_owned();
    let cohort = root.join("cohort");
    run(&["synth", "--out-dir", &s(&cohort)]);
    let inputs = [
        "--healthy".to_owned(),
        s(&cohort.join("healthy.csv")),
        "--controls".to_owned(),
        s(&cohort.join("controls.csv")),
        "--patients".to_owned(),
        s(&cohort.join("patients.csv")),
        "--graph".to_owned(),
        s(&cohort.join("graph.json")),
    ];
    let inputs: Vec<&str> = inputs.iter().map(String::as_str).collect();
    for tag in ["a", "b"] {
        let cv = root.join(format!("cv_{tag}"));
        let mut args = vec!["cv", "--out-dir"];
        let cv_s = s(&cv);
        args.push(&cv_s);
        args.push("--svg");
        args.extend(&inputs);
        run(&args);
        let rg = root.join(format!("rg_{tag}"));
        std::fs::create_dir_all(&rg).unwrap();
        let (out, csv) = (s(&rg.join("random.json")), s(&rg.join("csv")));
        let mut args = vec!["random-graphs", "--count", "100", "--seed", "7", "--out", &out, "--csv-dir", &csv];
        args.extend(&inputs);
        run(&args);
    }
    let same_cv = read_tree(&root.join("cv_a")) == read_tree(&root.join("cv_b"));
    let same_rg = read_tree(&root.join("rg_a")) == read_tree(&root.join("rg_b"));
    outcome(
        same_cv && same_rg,
        format!("cv outputs identical: {same_cv}; random-graphs outputs identical: {same_rg}"),
    )
}

#[test]
fn acceptance() {
    let criteria: [(u32, &str, Duration, fn() -> Outcome); 11] = [
        (1, "node-only closed form", Duration::from_secs(1), c1_node_only_closed_form),
        (2, "unpenalized inverse", Duration::from_secs(1), c2_unpenalized_inverse),
        (3, "KKT and constraint exactness", Duration::from_secs(10), c3_kkt),
        (4, "small-scale oracle equivalence", Duration::from_secs(30), c4_oracle_equivalence),
        (5, "chi-square calibration", Duration::from_secs(5), c5_chi2_calibration),
        (6, "greedy sort oracle", Duration::from_secs(10), c6_greedy_oracle),
        (7, "region detection", Duration::from_secs(120), c7_region_detection),
        (8, "experiment shape", Duration::from_secs(300), c8_experiment_shape),
        (9, "random-graph percentile", Duration::from_secs(600), c9_random_graphs),
        (10, "statistics oracles", Duration::from_secs(5), c10_statistics),
        (11, "determinism", Duration::from_secs(60), c11_determinism),
    ];
    let mut failed = Vec::new();
    for (id, name, limit, check) in criteria {
        let start = Instant::now();
        let o = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= limit;
        let pass = o.pass && in_time;
        println!(
            "{} [{id:>2}] {name}: {} | {:.2}s (limit {}s{})",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { ", exceeded" },
        );
        if !pass {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "criteria failed: {failed:?}");
}
