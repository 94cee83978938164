use jpji::simgen::{generate_spatial_source, BlobParams};
use jpji::typing::{classify_maps_spatial, cluster_subjects, quadratic_r2, select_sigma_opt, sigma_from_classes, spatial_test, SPATIAL_MARGIN};
use jpji::{Error, SourceKind};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn noisy_copies(base: &[f64], n: usize, sd: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| base.iter().map(|x| x + sd * rng.sample::<f64, _>(StandardNormal)).collect()).collect()
}

fn groups(n: usize) -> Vec<Vec<usize>> {
    vec![(0..n / 2).collect(), (n / 2..n).collect()]
}

#[test]
fn identical_maps_are_joint() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let base = generate_spatial_source(4096, &BlobParams::default(), &mut rng);
    let maps = vec![base; 10];
    let v = classify_maps_spatial(&maps, &groups(10), 0.05).unwrap();
    assert_eq!(v.kind, SourceKind::Joint);
    assert!(v.mask.iter().all(|&m| !m));
}

#[test]
fn group_specific_maps_are_partially_joint() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = generate_spatial_source(4096, &BlobParams::default(), &mut rng);
    let b = generate_spatial_source(4096, &BlobParams::default(), &mut rng);
    let mut maps = noisy_copies(&a, 5, 0.05, &mut rng);
    maps.extend(noisy_copies(&b, 5, 0.05, &mut rng));
    let v = classify_maps_spatial(&maps, &groups(10), 0.05).unwrap();
    assert_eq!(v.kind, SourceKind::PartiallyJoint);
}

#[test]
fn unrelated_maps_are_individual() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let maps: Vec<Vec<f64>> = (0..10).map(|_| generate_spatial_source(4096, &BlobParams::default(), &mut rng)).collect();
    assert_eq!(classify_maps_spatial(&maps, &groups(10), 0.05).unwrap().kind, SourceKind::Individual);
}

#[test]
fn planted_difference_is_found_at_strict_level() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base = generate_spatial_source(4096, &BlobParams::default(), &mut rng);
    let sd = 0.5;
    let mut maps = noisy_copies(&base, 20, sd, &mut rng);
    let planted: Vec<usize> = (0..100).map(|i| 40 * i + 7).collect();
    for m in &mut maps[10..] {
        for &v in &planted {
            m[v] += 5.0 * sd;
        }
    }
    let refs: Vec<&[f64]> = maps.iter().map(Vec::as_slice).collect();
    let g = groups(20);
    let mask = spatial_test(&refs, &g[0], &g[1], 0.01, SPATIAL_MARGIN).unwrap();
    let hits = planted.iter().filter(|&&v| mask[v]).count();
    let false_hits = mask.iter().filter(|&&m| m).count() - hits;
    assert!(hits >= 95, "{hits}");
    assert_eq!(false_hits, 0);
}

#[test]
fn small_groups_are_rejected() {
    let maps = vec![vec![0.0, 1.0, 2.0]; 3];
    assert_eq!(classify_maps_spatial(&maps, &[vec![0], vec![1, 2]], 0.05).unwrap_err(), Error::GroupTooSmall);
}

#[test]
fn sigma_lies_between_the_classes() {
    // Joint slot 0 at 1e4, PJ slots near 1e3, individual slots near 1e-1.
    let f = DMatrix::from_row_slice(5, 3, &[1e4, 1.1e4, 0.9e4, 1e3, 1.2e3, 0.8e3, 0.1, 0.12, 0.09, 900.0, 1100.0, 1000.0, 0.2, 0.05, 0.1]);
    let sel = select_sigma_opt(&f, &[0]).unwrap();
    assert_eq!(sel.pj_slots, vec![1, 3]);
    assert_eq!(sel.i_slots, vec![2, 4]);
    assert!(sel.sigma > 0.2 && sel.sigma < 800.0, "{}", sel.sigma);
}

#[test]
fn overlapping_classes_are_unseparable() {
    let f = DMatrix::from_row_slice(2, 2, &[1.0, 10.0, 5.0, 6.0]);
    assert!(matches!(sigma_from_classes(&f, &[0], &[1], &[]), Err(Error::UnseparableFeatures { .. })));
}

#[test]
fn clustering_separates_two_map_families() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = generate_spatial_source(1024, &BlobParams { kurtosis: (0.0, 1e9), ..BlobParams::default() }, &mut rng);
    let b = generate_spatial_source(1024, &BlobParams { kurtosis: (0.0, 1e9), ..BlobParams::default() }, &mut rng);
    let mut maps = noisy_copies(&a, 5, 0.1, &mut rng);
    maps.extend(noisy_copies(&b, 5, 0.1, &mut rng));
    let refs: Vec<&[f64]> = maps.iter().map(Vec::as_slice).collect();
    let g = cluster_subjects(&refs, None, 0).unwrap();
    assert!(g[..5].iter().all(|&x| x == g[0]) && g[5..].iter().all(|&x| x == g[5]) && g[0] != g[5]);
    let one = noisy_copies(&a, 6, 0.1, &mut rng);
    let refs: Vec<&[f64]> = one.iter().map(Vec::as_slice).collect();
    assert!(cluster_subjects(&refs, None, 0).unwrap().iter().all(|&x| x == 0));
}

proptest! {
    #[test]
    fn exact_quadratics_fit_perfectly(a in -5.0..5.0f64, b in -5.0..5.0f64, c in 0.1..5.0f64) {
        let pts: Vec<(f64, f64)> = (0..8).map(|i| { let x = i as f64; (x, a + b * x + c * x * x) }).collect();
        prop_assert!((quadratic_r2(&pts).unwrap() - 1.0).abs() < 1e-9);
    }
}
