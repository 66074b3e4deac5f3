mod common;

use ggm::anomaly::mahalanobis;
use ggm::glasso::sample_covariance;
use ggm::graphs::{lattice_graph, node_only_graph};
use ggm::synth::*;

#[test]
fn draws_match_the_planted_moments() {
    let pm = make_planted_model(&lattice_graph(1, 5).unwrap(), (0.3, 0.6), 21).unwrap();
    let x = sample_cohort(&pm, 100_000, 22).unwrap();
    let (mean, s) = sample_covariance(&x).unwrap();
    for j in 0..5 {
        assert!((mean[j] - pm.truth.mean()[j]).abs() < 0.05);
    }
    let sigma = common::dense_inverse(pm.truth.precision());
    assert!(common::max_abs_diff(s.matrix(), sigma.view()) < 0.05);
}

#[test]
fn patients_sit_further_out_than_clean_subjects() {
    let pm = make_planted_model(&node_only_graph(20).unwrap(), (0.3, 0.6), 1).unwrap();
    let clean = sample_cohort(&pm, 20, 2).unwrap();
    let patients: Vec<f64> = (0..20)
        .map(|i| {
            let z = inject_abnormality(clean.subject(i), &pm, &[i, (i + 5) % 20, (i + 11) % 20], 3.0, i as u64).unwrap();
            mahalanobis(&pm.truth, z.view()).unwrap()
        })
        .collect();
    let controls: Vec<f64> = (0..20).map(|i| mahalanobis(&pm.truth, clean.subject(i)).unwrap()).collect();
    let median = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        (s[9] + s[10]) / 2.0
    };
    assert!(median(&patients) > median(&controls));
}

#[test]
fn cohorts_are_reproducible() {
    let spec = CohortSpec::default();
    let a = make_cohort(&spec).unwrap();
    let b = make_cohort(&spec).unwrap();
    assert_eq!(a.healthy, b.healthy);
    assert_eq!(a.patients, b.patients);
    assert_eq!(a.injected, b.injected);
    let c = make_cohort(&CohortSpec { seed: 7, ..spec }).unwrap();
    assert_ne!(a.healthy, c.healthy);
}

#[test]
fn rescaling_preserves_distances() {
    let pm = make_planted_model(&lattice_graph(2, 2).unwrap(), (0.3, 0.6), 3).unwrap();
    let big = pm.rescaled(12.0).unwrap();
    let x = sample_cohort(&pm, 10, 4).unwrap();
    let y = sample_cohort(&big, 10, 4).unwrap();
    for i in 0..10 {
        let a = mahalanobis(&pm.truth, x.subject(i)).unwrap();
        let b = mahalanobis(&big.truth, y.subject(i)).unwrap();
        assert!((a - b).abs() < 1e-9 * a.max(1.0));
    }
    assert!(pm.rescaled(0.0).is_err());
}
