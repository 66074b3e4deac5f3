mod common;

use ggm::glasso::fit_model;
use ggm::graphs::lattice_graph;
use ggm::{Dataset, Error, GaussianModel, PriorGraph, SolverConfig};
use proptest::prelude::*;

#[test]
fn dataset_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let x = common::random_dataset(7, 4, 3);
    let path = dir.path().join("x.csv");
    x.save(&path).unwrap();
    assert_eq!(Dataset::load(&path).unwrap(), x);
}

#[test]
fn missing_files_name_the_path() {
    let err = Dataset::load("/nonexistent/healthy.csv").unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("/nonexistent/healthy.csv"));
    assert!(matches!(PriorGraph::load("/nonexistent/g.json").unwrap_err(), Error::Io { .. }));
}

#[test]
fn malformed_inputs_are_rejected() {
    let bad_cell = "subject_id,a,b\ns1,1.0,x\n";
    assert!(Dataset::read_csv(bad_cell.as_bytes()).is_err());
    let ragged = "subject_id,a,b\ns1,1.0\n";
    assert!(Dataset::read_csv(ragged.as_bytes()).is_err());
    assert!(GaussianModel::from_json("{\"format_version\": 1").is_err());
    assert!(PriorGraph::from_json("{\"kind\":\"custom\",\"d\":3,\"edges\":[[0,3]]}").is_err());
}

#[test]
fn model_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = lattice_graph(2, 3).unwrap();
    let m = fit_model(&common::random_dataset(15, 6, 8), &g, 0.2, &SolverConfig::default()).unwrap();
    let path = dir.path().join("m.json");
    m.save(&path).unwrap();
    let back = GaussianModel::load(&path).unwrap();
    assert_eq!(back, m);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn fitted_models_survive_serialization(seed in 0u64..10_000, rho in 0.01f64..2.0, p in 0.0f64..1.0) {
        let d = 5;
        let g = common::random_graph(d, p, seed);
        let m = fit_model(&common::random_dataset(12, d, seed + 1), &g, rho, &SolverConfig::default()).unwrap();
        let back = GaussianModel::from_json(&m.to_json().unwrap()).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert!(common::min_eigenvalue(back.precision()) > 0.0);
        for i in 0..d {
            for j in 0..d {
                prop_assert!(g.allows(i, j) || back.precision()[[i, j]] == 0.0);
            }
        }
    }

    #[test]
    fn graphs_survive_serialization(seed in 0u64..10_000, d in 1usize..12, p in 0.0f64..1.0) {
        let g = common::random_graph(d, p, seed);
        prop_assert_eq!(PriorGraph::from_json(&g.to_json().unwrap()).unwrap(), g);
    }
}
