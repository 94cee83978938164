use jpji::numerics::stats::{correlation, excess_kurtosis};
use jpji::simgen::{add_noise, generate_dataset, generate_mixing, ClusterScenario, ScenarioSpec};
use jpji::{Error, SourceKind};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[test]
fn maps_obey_kurtosis_and_correlation_bounds() {
    let spec = ScenarioSpec { n_time: 40, seed: 5, ..ScenarioSpec::default() };
    let (_, truth) = generate_dataset(&spec).unwrap();
    let (lo, hi) = spec.blobs.kurtosis;
    for (k, s) in truth.sources.iter().enumerate() {
        let maps = rows(s);
        for (i, m) in maps.iter().enumerate() {
            let kurt = excess_kurtosis(m).unwrap();
            assert!(kurt >= lo && kurt <= hi, "subject {k} source {i}: {kurt}");
            for other in &maps[..i] {
                assert!(correlation(m, other).abs() <= spec.blobs.max_corr + 1e-12);
            }
        }
    }
    // Joint maps are shared verbatim, partially-joint maps within a cluster only.
    assert_eq!(truth.sources[0].row(0), truth.sources[9].row(0));
    assert_eq!(truth.sources[0].row(3), truth.sources[4].row(3));
    assert_ne!(truth.sources[0].row(3), truth.sources[5].row(3));
}

#[test]
fn labels_follow_clusters() {
    let spec = ScenarioSpec { n_subjects: 15, clusters: ClusterScenario::Count(3), n_time: 40, ..ScenarioSpec::default() };
    let (_, truth) = generate_dataset(&spec).unwrap();
    assert_eq!(truth.cluster_of, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2]);
    let pj = &truth.labels[6][3];
    assert_eq!(pj.kind(), SourceKind::PartiallyJoint);
    assert_eq!(pj.peers().iter().copied().collect::<Vec<_>>(), vec![5, 7, 8, 9]);
    assert_eq!(truth.labels[14][5].kind(), SourceKind::Individual);
}

#[test]
fn same_seed_same_study() {
    let spec = ScenarioSpec { n_time: 30, snr_db: Some(3.0), seed: 9, ..ScenarioSpec::default() };
    let (a, ta) = generate_dataset(&spec).unwrap();
    let (b, tb) = generate_dataset(&spec).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta, tb);
    let (c, _) = generate_dataset(&ScenarioSpec { seed: 10, ..spec }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn noise_meets_the_requested_snr() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let o = DMatrix::from_fn(50, 4000, |i, j| ((i * j) as f64 * 0.001).sin());
    let noisy = add_noise(&o, 3.0, &mut rng);
    let signal = o.iter().map(|v| v * v).sum::<f64>();
    let noise = (&noisy - &o).iter().map(|v| v * v).sum::<f64>();
    let snr = 10.0 * (signal / noise).log10();
    assert!((snr - 3.0).abs() < 0.05, "{snr}");
}

#[test]
fn mixing_is_well_conditioned_with_unit_rms_columns() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = generate_mixing(150, 6, &mut rng).unwrap();
    let sv = a.clone().svd(false, false).singular_values;
    assert!(sv.max() / sv.min() <= 1e3);
    for col in a.column_iter() {
        let rms = (col.iter().map(|v| v * v).sum::<f64>() / 150.0).sqrt();
        assert!((rms - 1.0).abs() < 1e-12);
    }
}

#[test]
fn invalid_scenarios_are_rejected() {
    let bad = [
        ScenarioSpec { n_subjects: 0, ..ScenarioSpec::default() },
        ScenarioSpec { n_time: 5, ..ScenarioSpec::default() },
        ScenarioSpec { joint: 0, pjoint: 0, individual: 0, ..ScenarioSpec::default() },
        ScenarioSpec { clusters: ClusterScenario::Explicit(vec![0; 3]), ..ScenarioSpec::default() },
    ];
    for s in bad {
        assert!(matches!(generate_dataset(&s), Err(Error::InvalidScenario(_))), "{s:?}");
    }
}

#[test]
fn random_counts_stay_in_range() {
    for seed in 0..20 {
        let s = ScenarioSpec { seed, ..ScenarioSpec::default() }.with_random_counts(3);
        assert!(s.joint <= 3 && s.pjoint <= 3 && s.joint + s.pjoint > 0);
    }
}
