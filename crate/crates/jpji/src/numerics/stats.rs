//! Voxelwise statistics.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Pearson correlation; 0 when either side is constant.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Population excess kurtosis `E[x⁴]/E[x²]² - 3`; `None` for a constant series.
pub fn excess_kurtosis(x: &[f64]) -> Option<f64> {
    let m = mean(x);
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in x {
        let d = (v - m) * (v - m);
        m2 += d;
        m4 += d * d;
    }
    let n = x.len() as f64;
    let (m2, m4) = (m2 / n, m4 / n);
    if m2 <= 0.0 {
        return None;
    }
    Some(m4 / (m2 * m2) - 3.0)
}

/// Welch's two-sample t-test, two-sided.
pub fn two_sample_t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientSamples);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let diff = mean(a) - mean(b);
    let se2 = va + vb;
    if se2 == 0.0 {
        return Ok(if diff == 0.0 { (0.0, 1.0) } else { (diff.signum() * f64::INFINITY, 0.0) });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|_| Error::InsufficientSamples)?;
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok((t, p))
}

fn student_sf(t: f64, df: f64) -> Result<f64> {
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|_| Error::InsufficientSamples)?;
    Ok(dist.sf(t))
}

/// p-value of `H0: |μ| ≤ margin` given an estimate `d` with standard error `se`.
/// With `margin = 0` this is the usual two-sided p-value.
fn margin_p(d: f64, se: f64, df: f64, margin: f64) -> Result<f64> {
    if se == 0.0 {
        return Ok(if d.abs() > margin { 0.0 } else { 1.0 });
    }
    let p = student_sf((d.abs() - margin) / se, df)? + student_sf((d.abs() + margin) / se, df)?;
    Ok(p.min(1.0))
}

/// Welch test of `H0: |mean(a) - mean(b)| ≤ margin`.
pub fn welch_margin_test(a: &[f64], b: &[f64], margin: f64) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientSamples);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let se2 = va + vb;
    let df = if se2 == 0.0 { 1.0 } else { se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0)) };
    margin_p(mean(a) - mean(b), se2.sqrt(), df, margin)
}

/// One-sample t test of `H0: |mean(a)| ≤ margin`.
pub fn one_sample_margin_test(a: &[f64], margin: f64) -> Result<f64> {
    if a.len() < 2 {
        return Err(Error::InsufficientSamples);
    }
    let n = a.len() as f64;
    margin_p(mean(a), (sample_variance(a) / n).sqrt(), n - 1.0, margin)
}

/// Benjamini–Hochberg step-up procedure.
pub fn bh_fdr(p: &[f64], q: f64) -> Result<Vec<bool>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidQ(q));
    }
    if p.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::InvalidConfig("p-values must lie in [0, 1]".into()));
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p[i].total_cmp(&p[j]).then(i.cmp(&j)));
    let cut = (0..m).rev().find(|&r| p[order[r]] <= (r + 1) as f64 / m as f64 * q);
    let mut mask = vec![false; m];
    if let Some(r) = cut {
        for &i in &order[..=r] {
            mask[i] = true;
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples() {
        let a = [1.0, 2.0, 4.0, 3.5];
        let (t, p) = two_sample_t_test(&a, &a).unwrap();
        assert_eq!(t, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forced_separation() {
        let a = [0.0, 0.1, -0.1, 0.05];
        let b: Vec<f64> = a.iter().map(|x| x + 10.0 * 0.0866).collect();
        let (_, p) = two_sample_t_test(&a, &b).unwrap();
        assert!(p < 1e-4, "{p}");
        assert_eq!(two_sample_t_test(&[1.0], &a), Err(Error::InsufficientSamples));
    }

    #[test]
    fn bh_examples() {
        assert_eq!(bh_fdr(&[1.0, 1.0, 1.0], 0.05).unwrap(), vec![false; 3]);
        assert_eq!(bh_fdr(&[0.001, 0.002, 0.9], 0.05).unwrap(), vec![true, true, false]);
        assert_eq!(bh_fdr(&[0.04], 0.05).unwrap(), vec![true]);
        assert_eq!(bh_fdr(&[0.04], 1.0), Err(Error::InvalidQ(1.0)));
    }

    #[test]
    fn kurtosis_of_constant_is_undefined() {
        assert_eq!(excess_kurtosis(&[2.0; 10]), None);
        let r: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!((excess_kurtosis(&r).unwrap() + 2.0).abs() < 1e-15);
    }
}
