//! Sample joint cumulants of orders 2 to 4.
//!
//! Every series is re-centred before use. For a row `z` of `Z` and partner
//! series `a, b, c`, the cumulant against `z` is `E[z q] - E[z] E[q]` where the
//! voxel weight `q` is `a`, `ab` or `abc - a E[bc] - b E[ac] - c E[ab]`.
//! [`partner_weights`] builds `q`, which lets a whole cumulant vector be a
//! single matrix-vector product.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn centered(x: &[f64]) -> Vec<f64> {
    let m = mean(x);
    x.iter().map(|v| v - m).collect()
}

fn dot_mean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}

fn check_lengths(series: &[&[f64]]) -> Result<usize> {
    let v = series.first().map_or(0, |s| s.len());
    for s in series {
        if s.len() != v {
            return Err(Error::LengthMismatch(v, s.len()));
        }
    }
    if v == 0 {
        return Err(Error::DegenerateSampleCount(0));
    }
    Ok(v)
}

/// Voxel weights `q` such that the order-`partners.len() + 1` cumulant of a centred row `z`
/// with the partners equals `mean(z * q)`. Partners are centred here.
pub fn partner_weights(partners: &[&[f64]]) -> Result<Vec<f64>> {
    if partners.is_empty() || partners.len() > 3 {
        return Err(Error::OrderOutOfRange(partners.len() + 1));
    }
    check_lengths(partners)?;
    let p: Vec<Vec<f64>> = partners.iter().map(|s| centered(s)).collect();
    Ok(match p.len() {
        1 => p[0].clone(),
        2 => p[0].iter().zip(&p[1]).map(|(a, b)| a * b).collect(),
        _ => {
            let (a, b, c) = (&p[0], &p[1], &p[2]);
            let (bc, ac, ab) = (dot_mean(b, c), dot_mean(a, c), dot_mean(a, b));
            (0..a.len()).map(|v| a[v] * b[v] * c[v] - a[v] * bc - b[v] * ac - c[v] * ab).collect()
        }
    })
}

/// Sample joint cumulant of `order` series.
pub fn cross_cumulant(order: usize, series: &[&[f64]]) -> Result<f64> {
    if !(2..=4).contains(&order) {
        return Err(Error::OrderOutOfRange(order));
    }
    if series.len() != order {
        return Err(Error::OrderOutOfRange(series.len()));
    }
    check_lengths(series)?;
    let z = centered(series[0]);
    let q = partner_weights(&series[1..])?;
    Ok(dot_mean(&z, &q))
}

/// Cumulant of every row of `z` with the same partners: element `i` is
/// `cross_cumulant(order, [row_i(z), partners...])`.
pub fn cumulant_vector(z: &DMatrix<f64>, partners: &[&[f64]], order: usize) -> Result<DVector<f64>> {
    if !(2..=4).contains(&order) || partners.len() + 1 != order {
        return Err(Error::OrderOutOfRange(order));
    }
    if let Some(p) = partners.iter().find(|p| p.len() != z.ncols()) {
        return Err(Error::LengthMismatch(z.ncols(), p.len()));
    }
    let q = partner_weights(partners)?;
    Ok(weighted_row_cumulants(z, &q))
}

/// `mean_v (z_i(v) - mean z_i) q(v)` for every row, in one pass over the columns.
pub(crate) fn weighted_row_cumulants(z: &DMatrix<f64>, q: &[f64]) -> DVector<f64> {
    let v = z.ncols() as f64;
    let qm = mean(q);
    let mut out = DVector::zeros(z.nrows());
    for (col, &w) in z.column_iter().zip(q) {
        out.axpy(w - qm, &col, 1.0);
    }
    out / v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn variance_of_normalised_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut x = normal(&mut rng, 500);
        let m = mean(&x);
        x.iter_mut().for_each(|v| *v -= m);
        let s = (dot_mean(&x, &x)).sqrt();
        x.iter_mut().for_each(|v| *v /= s);
        assert!((cross_cumulant(2, &[&x, &x]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rademacher_fourth_cumulant_is_minus_two() {
        let x: Vec<f64> = (0..64).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(cross_cumulant(4, &[&x, &x, &x, &x]).unwrap(), -2.0);
    }

    #[test]
    fn gaussian_fourth_cumulant_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = normal(&mut rng, 1_000_000);
        assert!(cross_cumulant(4, &[&x, &x, &x, &x]).unwrap().abs() < 0.02);
    }

    #[test]
    fn third_order_matches_hand_formula() {
        let a = [1.0, 2.0, -0.5, 3.0, 0.25];
        let b = [0.5, -1.0, 2.0, 0.0, 1.5];
        let c = [2.0, 0.0, -1.0, 1.0, -3.0];
        let ca: Vec<f64> = a.iter().map(|x| x - 1.15).collect();
        let cb: Vec<f64> = b.iter().map(|x| x - 0.6).collect();
        let cc: Vec<f64> = c.iter().map(|x| x + 0.2).collect();
        let expect = (0..5).map(|i| ca[i] * cb[i] * cc[i]).sum::<f64>() / 5.0;
        assert!((cross_cumulant(3, &[&a, &b, &c]).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn vector_matches_matvec_for_order_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = DMatrix::from_fn(3, 50, |_, _| rng.sample::<f64, _>(StandardNormal));
        let p = normal(&mut rng, 50);
        let got = cumulant_vector(&z, &[&p], 2).unwrap();
        let pm = mean(&p);
        for i in 0..3 {
            let zm = z.row(i).mean();
            let expect: f64 = (0..50).map(|v| (z[(i, v)] - zm) * (p[v] - pm)).sum::<f64>() / 50.0;
            assert!((got[i] - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn independent_partner_gives_small_fourth_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = 100_000;
        let z = DMatrix::from_fn(3, v, |_, _| rng.sample::<f64, _>(StandardNormal));
        let p = normal(&mut rng, v);
        let c = cumulant_vector(&z, &[&p, &p, &p], 4).unwrap();
        assert!(c.iter().all(|x| x.abs() < 0.05), "{c}");
    }

    #[test]
    fn errors() {
        let a: &[f64] = &[1.0, 2.0];
        let b: &[f64] = &[1.0];
        assert_eq!(cross_cumulant(5, &[a; 5]), Err(Error::OrderOutOfRange(5)));
        assert_eq!(cross_cumulant(2, &[a, b]), Err(Error::LengthMismatch(2, 1)));
    }
}
