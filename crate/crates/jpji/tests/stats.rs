use jpji::numerics::stats::{bh_fdr, correlation, excess_kurtosis, one_sample_margin_test, two_sample_t_test, welch_margin_test};
use proptest::prelude::*;

fn ln_gamma(x: f64) -> f64 {
    // Lanczos, g = 7.
    const C: [f64; 9] = [
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
    let x = x - 1.0;
    let t = x + 7.5;
    let s: f64 = C[0] + (1..9).map(|i| C[i] / (x + i as f64)).sum::<f64>();
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + s.ln()
}

/// Continued fraction for the regularized incomplete beta function (Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let (mut c, mut d) = (1.0, 1.0 - (a + b) * x / (a + 1.0));
    if d.abs() < tiny {
        d = tiny;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..500 {
        let m = m as f64;
        for num in [m * (b - m) * x / ((a + 2.0 * m - 1.0) * (a + 2.0 * m)), -(a + m) * (a + b + m) * x / ((a + 2.0 * m) * (a + 2.0 * m + 1.0))] {
            d = 1.0 + num * d;
            if d.abs() < tiny {
                d = tiny;
            }
            c = 1.0 + num / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            h *= d * c;
        }
        if (d * c - 1.0).abs() < 1e-15 {
            break;
        }
    }
    h
}

fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided Student-t p-value: I_{df/(df+t²)}(df/2, 1/2).
fn t_pvalue(t: f64, df: f64) -> f64 {
    inc_beta(df / 2.0, 0.5, df / (df + t * t))
}

fn welch_oracle(a: &[f64], b: &[f64]) -> (f64, f64) {
    let m = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let var = |x: &[f64]| {
        let mu = m(x);
        x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (x.len() as f64 - 1.0)
    };
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (var(a) / na, var(b) / nb);
    let t = (m(a) - m(b)) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    (t, t_pvalue(t, df))
}

#[test]
fn oracle_reproduces_textbook_values() {
    // t = 2.228 at df = 10 is the two-sided 5% point.
    assert!((t_pvalue(2.228_138_851_986_273_5, 10.0) - 0.05).abs() < 1e-9);
    assert!((t_pvalue(0.0, 7.0) - 1.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn welch_matches_incomplete_beta(a in prop::collection::vec(-5.0..5.0f64, 3..12), b in prop::collection::vec(-5.0..5.0f64, 3..12)) {
        let (t, p) = two_sample_t_test(&a, &b).unwrap();
        let (ot, op) = welch_oracle(&a, &b);
        prop_assume!(ot.is_finite());
        prop_assert!((t - ot).abs() <= 1e-9 * ot.abs().max(1.0));
        prop_assert!((p - op).abs() <= 1e-8, "{} vs {}", p, op);
    }

    #[test]
    fn zero_margin_is_the_two_sided_test(a in prop::collection::vec(-5.0..5.0f64, 3..10), b in prop::collection::vec(-5.0..5.0f64, 3..10)) {
        let (_, p) = two_sample_t_test(&a, &b).unwrap();
        prop_assert!((welch_margin_test(&a, &b, 0.0).unwrap() - p).abs() < 1e-12);
    }

    #[test]
    fn margin_p_grows_with_margin(a in prop::collection::vec(-5.0..5.0f64, 3..10), m1 in 0.0..2.0f64, dm in 0.0..2.0f64) {
        let p1 = one_sample_margin_test(&a, m1).unwrap();
        let p2 = one_sample_margin_test(&a, m1 + dm).unwrap();
        prop_assert!(p2 >= p1 - 1e-12);
        prop_assert!((0.0..=1.0).contains(&p1));
    }

    #[test]
    fn bh_matches_definition(p in prop::collection::vec(0.0..1.0f64, 1..40), q in 0.01..0.5f64) {
        let mask = bh_fdr(&p, q).unwrap();
        let m = p.len() as f64;
        // Largest r with p_(r) ≤ r q / m, counted directly.
        let mut sorted = p.clone();
        sorted.sort_by(f64::total_cmp);
        let r = (1..=p.len()).rev().find(|&r| sorted[r - 1] <= r as f64 * q / m).unwrap_or(0);
        prop_assert_eq!(mask.iter().filter(|&&x| x).count(), r);
        if r > 0 {
            prop_assert!(p.iter().zip(&mask).all(|(&pi, &k)| k == (pi <= sorted[r - 1])));
        }
    }

    #[test]
    fn correlation_is_bounded_and_scale_free(a in prop::collection::vec(-5.0..5.0f64, 5), b in prop::collection::vec(-5.0..5.0f64, 5), s in 0.1..10.0f64) {
        let r = correlation(&a, &b);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        let sb: Vec<f64> = b.iter().map(|x| s * x - 3.0).collect();
        prop_assert!((correlation(&a, &sb) - r).abs() < 1e-9);
    }
}

#[test]
fn kurtosis_of_a_two_point_law() {
    // Symmetric ±1: κ₄/σ⁴ = 1 - 3.
    let x: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    assert!((excess_kurtosis(&x).unwrap() + 2.0).abs() < 1e-12);
    assert_eq!(excess_kurtosis(&[2.0; 5]), None);
}
