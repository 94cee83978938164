//! Cumulants against the moment-partition formula, plus algebraic properties.

use jpji::numerics::{cross_cumulant, cumulant_vector};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// All set partitions of `0..n`.
fn partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in partitions(n - 1) {
        for i in 0..p.len() {
            let mut q = p.clone();
            q[i].push(n - 1);
            out.push(q);
        }
        let mut q = p.clone();
        q.push(vec![n - 1]);
        out.push(q);
    }
    out
}

/// κ(x₁..xₙ) = Σ_π (−1)^{|π|−1} (|π|−1)! Π_{B∈π} E[Π_{i∈B} xᵢ], raw moments only.
fn oracle(series: &[&[f64]]) -> f64 {
    let v = series[0].len();
    let moment = |block: &[usize]| (0..v).map(|t| block.iter().map(|&i| series[i][t]).product::<f64>()).sum::<f64>() / v as f64;
    partitions(series.len())
        .iter()
        .map(|p| {
            let b = p.len();
            let fact: f64 = (1..b).map(|x| x as f64).product();
            let sign = if b % 2 == 1 { 1.0 } else { -1.0 };
            sign * fact * p.iter().map(|blk| moment(blk)).product::<f64>()
        })
        .sum()
}

fn scale(series: &[&[f64]]) -> f64 {
    series.iter().map(|s| (s.iter().map(|x| x * x).sum::<f64>() / s.len() as f64).sqrt()).product()
}

#[test]
fn partition_counts_are_bell_numbers() {
    let bell: Vec<usize> = (1..=4).map(|n| partitions(n).len()).collect();
    assert_eq!(bell, vec![1, 2, 5, 15]);
}

#[test]
fn hand_computed_fourth_order() {
    // x = (1, -1, 2, -2): mean 0, E[x²] = 2.5, E[x⁴] = 8.5, κ₄ = 8.5 - 3·6.25.
    let x = [1.0, -1.0, 2.0, -2.0];
    let k = cross_cumulant(4, &[&x, &x, &x, &x]).unwrap();
    assert!((k - (8.5 - 18.75)).abs() < 1e-12);
    assert!((oracle(&[&x, &x, &x, &x]) - k).abs() < 1e-12);
}

fn series(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn vector_matches_oracle(order in 2usize..=4, c in 1usize..=6, v in 3usize..=50, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let z = DMatrix::from_fn(c, v, |_, _| rng.random_range(-2.0..2.0));
        let partners: Vec<Vec<f64>> = (1..order).map(|_| (0..v).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let refs: Vec<&[f64]> = partners.iter().map(Vec::as_slice).collect();
        let got = cumulant_vector(&z, &refs, order).unwrap();
        for i in 0..c {
            let row: Vec<f64> = z.row(i).iter().copied().collect();
            let mut all: Vec<&[f64]> = vec![&row];
            all.extend(refs.iter().copied());
            let want = oracle(&all);
            prop_assert!((got[i] - want).abs() <= 1e-12 * want.abs().max(scale(&all)));
        }
    }

    #[test]
    fn symmetric_in_its_arguments(a in series(20), b in series(20), c in series(20), d in series(20)) {
        let k = cross_cumulant(4, &[&a, &b, &c, &d]).unwrap();
        for perm in [[&b, &a, &c, &d], [&d, &c, &b, &a], [&c, &a, &d, &b]] {
            let p = cross_cumulant(4, &[perm[0], perm[1], perm[2], perm[3]]).unwrap();
            prop_assert!((k - p).abs() <= 1e-10 * k.abs().max(1.0));
        }
    }

    #[test]
    fn multilinear_and_shift_invariant(a in series(15), b in series(15), c in series(15), s in -4.0..4.0f64, t in -5.0..5.0f64) {
        let k = cross_cumulant(3, &[&a, &b, &c]).unwrap();
        let scaled: Vec<f64> = b.iter().map(|x| s * x + t).collect();
        let k2 = cross_cumulant(3, &[&a, &scaled, &c]).unwrap();
        prop_assert!((k2 - s * k).abs() <= 1e-10 * (s * k).abs().max(1.0));
    }

    #[test]
    fn second_order_is_biased_covariance(a in series(12), b in series(12)) {
        let ma = a.iter().sum::<f64>() / 12.0;
        let mb = b.iter().sum::<f64>() / 12.0;
        let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / 12.0;
        prop_assert!((cross_cumulant(2, &[&a, &b]).unwrap() - cov).abs() < 1e-12);
    }
}
