mod common;

use ggm::evaluation::*;
use ggm::glasso::fit_model;
use ggm::graphs::{full_graph, lattice_graph, node_only_graph};
use ggm::synth::{make_cohort, make_planted_model, sample_cohort, CohortSpec};
use ggm::{Dataset, FitStats, GaussianModel, SolverConfig};
use ndarray::{array, Array2};

fn unpenalized_diagonal() -> SolverConfig {
    SolverConfig {
        penalize_diagonal: false,
        ..Default::default()
    }
}

fn small_spec() -> CohortSpec {
    CohortSpec {
        lattice_rows: 2,
        lattice_cols: 4,
        n_healthy: 12,
        n_controls: 6,
        n_patients: 6,
        feature_scale: 1.0,
        ..Default::default()
    }
}

#[test]
fn three_folds_one_pair() {
    let x = common::random_dataset(3, 2, 1);
    let y = Dataset::from_values(array![[0.1, 0.0]]).unwrap();
    let z = Dataset::from_values(array![[5.0, -5.0]]).unwrap();
    let rep = loocv(&x, &y, &z, &full_graph(2).unwrap(), &[0.5], &SolverConfig::default()).unwrap();
    assert_eq!(rep.auc.replicates.len(), 3);
    for row in &rep.auc.replicates {
        assert!([0.0, 0.5, 1.0].contains(&row[0]));
    }
}

#[test]
fn fold_aucs_ignore_subject_order() {
    let c = make_cohort(&small_spec()).unwrap();
    let g = lattice_graph(2, 4).unwrap();
    let grid = [0.1, 1.0];
    let a = loocv(&c.healthy, &c.controls, &c.patients, &g, &grid, &SolverConfig::default()).unwrap();
    let rows: Vec<usize> = (0..c.healthy.n_subjects()).rev().collect();
    let shuffled = c.healthy.select_subjects(&rows).unwrap();
    let b = loocv(&shuffled, &c.controls, &c.patients, &g, &grid, &SolverConfig::default()).unwrap();
    let sorted = |rep: &CvReport| {
        let mut v: Vec<Vec<u64>> = rep.auc.replicates.iter().map(|r| r.iter().map(|x| x.to_bits()).collect()).collect();
        v.sort();
        v
    };
    assert_eq!(sorted(&a), sorted(&b));
    for row in a.auc.replicates.iter().flatten() {
        assert!((0.0..=1.0).contains(row));
    }
}

#[test]
fn fold_average_tracks_full_data_fit() {
    let c = make_cohort(&CohortSpec::default()).unwrap();
    let g = lattice_graph(5, 6).unwrap();
    let cfg = SolverConfig::default();
    let rep = loocv(&c.healthy, &c.controls, &c.patients, &g, &[0.3], &cfg).unwrap();
    let m = fit_model(&c.healthy, &g, 0.3, &cfg).unwrap();
    let full = ggm::stats::roc_auc(&distances(&m, &c.patients).unwrap(), &distances(&m, &c.controls).unwrap())
        .unwrap()
        .auc;
    assert!((rep.mean_auc()[0] - full).abs() <= 0.05, "{} vs {full}", rep.mean_auc()[0]);
}

#[test]
fn node_only_auc_is_flat_without_diagonal_penalty() {
    let c = make_cohort(&small_spec()).unwrap();
    let grid = log_grid(0.01, 10.0, 6);
    let rep = loocv(&c.healthy, &c.controls, &c.patients, &node_only_graph(8).unwrap(), &grid, &unpenalized_diagonal())
        .unwrap();
    for row in &rep.auc.replicates {
        assert!(row.iter().all(|v| (v - row[0]).abs() < 1e-12), "{row:?}");
    }
}

#[test]
fn bic_scalar_example_and_linearity() {
    let x = Dataset::from_values(array![[-1.0], [1.0]]).unwrap();
    let m = GaussianModel::new(array![0.0], array![[1.0]], node_only_graph(1).unwrap(), 0.0, FitStats::default())
        .unwrap();
    let tau = 2.0 * std::f64::consts::PI;
    assert!((log_likelihood(&x, &m).unwrap() - (-1.0 - tau.ln())).abs() < 1e-12);
    assert!((bic(&x, &m).unwrap() - (2.0 + 2.0 * tau.ln() + 2f64.ln())).abs() < 1e-12);

    // Same likelihood, more stored nonzeros: the penalty grows by Δj·ln n.
    let pm = make_planted_model(&lattice_graph(2, 3).unwrap(), (0.3, 0.6), 4).unwrap();
    let data = sample_cohort(&pm, 25, 5).unwrap();
    let upper = bic_with(&data, &pm.truth, ParameterCount::UpperTriangle).unwrap();
    let full = bic_with(&data, &pm.truth, ParameterCount::FullMatrix).unwrap();
    let extra = (model_order(&pm.truth) - 6) / 2;
    assert!((full - upper - extra as f64 * 25f64.ln()).abs() < 1e-9);
}

#[test]
fn node_only_wins_bic_on_diagonal_truth() {
    let pm = make_planted_model(&node_only_graph(10).unwrap(), (0.3, 0.6), 6).unwrap();
    let x = sample_cohort(&pm, 60, 7).unwrap();
    let cfg = SolverConfig::default();
    let node = fit_model(&x, &node_only_graph(10).unwrap(), 0.05, &cfg).unwrap();
    let full = fit_model(&x, &full_graph(10).unwrap(), 0.05, &cfg).unwrap();
    assert!(bic(&x, &node).unwrap() < bic(&x, &full).unwrap());
}

#[test]
fn order_bounded_by_graph() {
    let g = lattice_graph(3, 3).unwrap();
    let x = common::random_dataset(20, 9, 3);
    for rho in [0.0, 0.1, 1.0] {
        let m = fit_model(&x, &g, rho, &SolverConfig::default()).unwrap();
        assert!(model_order(&m) <= 9 + 2 * g.edge_count());
    }
    let dense = GaussianModel::new(
        array![0.0, 0.0, 0.0],
        array![[2.0, 0.5, 0.5], [0.5, 2.0, 0.5], [0.5, 0.5, 2.0]],
        full_graph(3).unwrap(),
        0.0,
        FitStats::default(),
    )
    .unwrap();
    assert_eq!(model_order(&dense), 9);
}

#[test]
fn selected_penalty_is_interior() {
    let c = make_cohort(&CohortSpec::default()).unwrap();
    let grid = default_rho_grid();
    let sel = select_rho(&c.healthy, &lattice_graph(5, 6).unwrap(), &grid, &unpenalized_diagonal()).unwrap();
    assert!(sel.rho > grid[0] && sel.rho < grid[grid.len() - 1], "{}", sel.rho);
    assert_eq!(sel.criterion.len(), grid.len());
}

#[test]
fn duplicate_subjects_pick_smallest_penalty() {
    let row = array![1.0, 2.0, 3.0];
    let values = Array2::from_shape_fn((5, 3), |(_, j)| row[j]);
    let x = Dataset::from_values(values).unwrap();
    let grid = [0.1, 1.0, 10.0];
    let sel = select_rho(&x, &full_graph(3).unwrap(), &grid, &SolverConfig::default()).unwrap();
    assert!(sel.criterion.iter().all(|v| v.is_finite()));
    assert_eq!(sel.rho, 0.1);
}

#[test]
fn benchmark_is_reproducible() {
    let c = make_cohort(&small_spec()).unwrap();
    let g = lattice_graph(2, 4).unwrap();
    let grid = [0.1, 1.0];
    let run = || {
        random_graph_benchmark(&c.healthy, &c.controls, &c.patients, &g, 8, &grid, &SolverConfig::default(), 9)
            .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.auc.replicates.len() + a.dropped_replicates, 8);
    assert!(a.auc_percentile.iter().all(|p| (0.0..=100.0).contains(p)));
}
