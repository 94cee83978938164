//! Per-subject PCA reduction, BIC order selection and whitening.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::linalg::{center_rows, covariance, inverse_sqrt_psd, symmetric_eigen, RANK_TOL};
use crate::types::{ComponentPolicy, SubjectDataset};

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedSubject {
    /// Whitened reduced data, `C × V`.
    pub z: DMatrix<f64>,
    /// Combined map with `z = w_total (O - rowmeans(O))`, `C × N`.
    pub w_total: DMatrix<f64>,
    pub order: usize,
    /// Fraction of total variance kept by the PCA step.
    pub retained: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaReduction {
    /// Principal-component scores, `C × V`.
    pub scores: DMatrix<f64>,
    /// Loading vectors as rows, `C × N`.
    pub projection: DMatrix<f64>,
    pub retained: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Whitened {
    pub z: DMatrix<f64>,
    pub whitener: DMatrix<f64>,
}

pub fn default_c_max(n_time: usize, n_voxels: usize) -> usize {
    n_time.saturating_sub(1).min(64).min(n_voxels.saturating_sub(1)).max(1)
}

fn time_covariance_spectrum(o: &SubjectDataset) -> Result<Vec<f64>> {
    let r = covariance(&o.observations)?;
    let (values, _) = symmetric_eigen(&r)?;
    Ok(values.iter().map(|&l| l.max(0.0)).collect())
}

/// Probabilistic-PCA BIC over the eigenvalues of the `N × N` covariance, V samples.
pub fn bic_curve(eigenvalues: &[f64], n_samples: usize, c_max: usize) -> Vec<f64> {
    let n = eigenvalues.len();
    let v = n_samples as f64;
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    (1..=c_max.min(n - 1))
        .map(|c| {
            let signal: f64 = eigenvalues[..c].iter().map(|l| l.ln()).sum();
            let sigma2 = eigenvalues[c..].iter().sum::<f64>() / (n - c) as f64;
            let log_l = -0.5 * v * (signal + (n - c) as f64 * sigma2.ln() + n as f64 * ln2pi + n as f64);
            let params = (n * c) as f64 - (c * (c - 1)) as f64 / 2.0 + 1.0 + n as f64;
            -2.0 * log_l + params * v.ln()
        })
        .collect()
}

/// Model order by minimum BIC over `1..=c_max`.
///
/// A rank-deficient covariance returns its positive rank when that is within range,
/// since the isotropic-noise likelihood is unbounded there.
pub fn estimate_order_bic(o: &SubjectDataset, c_max: usize) -> Result<usize> {
    let limit = o.n_time().min(o.n_voxels()).saturating_sub(1);
    if c_max < 1 || c_max > limit {
        return Err(Error::InvalidConfig(format!("c_max {c_max} outside 1..={limit}")));
    }
    let ev = time_covariance_spectrum(o)?;
    let lmax = ev[0];
    if !(lmax > 0.0) {
        return Err(Error::SingularCovariance);
    }
    let rank = ev.iter().take_while(|&&l| l > RANK_TOL * lmax).count();
    if rank < ev.len() && rank <= c_max {
        return Ok(rank);
    }
    let bic = bic_curve(&ev, o.n_voxels(), c_max);
    let best = bic
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i + 1)
        .unwrap_or(1);
    Ok(best)
}

/// Top-`c` principal components along the time direction.
pub fn pca_reduce(o: &SubjectDataset, c: usize) -> Result<PcaReduction> {
    let mut x = o.observations.clone();
    center_rows(&mut x);
    let r = covariance(&x)?;
    let (values, vectors) = symmetric_eigen(&r)?;
    let lmax = values[0].max(0.0);
    let rank = values.iter().take_while(|&&l| l > RANK_TOL * lmax).count();
    if c == 0 || c > rank {
        return Err(Error::OrderExceedsRank { requested: c, rank });
    }
    let projection = vectors.columns(0, c).transpose();
    let scores = &projection * &x;
    let total: f64 = values.iter().map(|l| l.max(0.0)).sum();
    let kept: f64 = values.iter().take(c).sum();
    Ok(PcaReduction { scores, projection, retained: if total > 0.0 { kept / total } else { 1.0 } })
}

/// `Z = R^(-1/2) (X - rowmeans)`.
pub fn whiten(x: &DMatrix<f64>) -> Result<Whitened> {
    let r = covariance(x)?;
    let whitener = inverse_sqrt_psd(&r)?;
    let mut xc = x.clone();
    center_rows(&mut xc);
    let z = &whitener * xc;
    Ok(Whitened { z, whitener })
}

pub fn preprocess_subject(o: &SubjectDataset, c: usize) -> Result<PreprocessedSubject> {
    let pca = pca_reduce(o, c)?;
    let w = whiten(&pca.scores)?;
    Ok(PreprocessedSubject { w_total: &w.whitener * &pca.projection, z: w.z, order: c, retained: pca.retained })
}

/// Resolve the component-count policy to one order per subject.
pub fn select_orders(datasets: &[SubjectDataset], policy: &ComponentPolicy, c_max: Option<usize>) -> Result<Vec<usize>> {
    let bic = || -> Result<Vec<usize>> {
        datasets
            .par_iter()
            .map(|d| estimate_order_bic(d, c_max.unwrap_or_else(|| default_c_max(d.n_time(), d.n_voxels()))))
            .collect()
    };
    Ok(match policy {
        ComponentPolicy::AutoBic => bic()?,
        ComponentPolicy::GlobalMin => {
            let orders = bic()?;
            let m = orders.iter().copied().min().unwrap_or(1);
            vec![m; datasets.len()]
        }
        ComponentPolicy::Fixed(c) => vec![*c; datasets.len()],
        ComponentPolicy::PerSubject(cs) => {
            if cs.len() != datasets.len() {
                return Err(Error::InvalidConfig(format!("{} orders for {} subjects", cs.len(), datasets.len())));
            }
            cs.clone()
        }
    })
}

pub fn preprocess_all(datasets: &[SubjectDataset], orders: &[usize]) -> Result<Vec<PreprocessedSubject>> {
    datasets.par_iter().zip(orders).map(|(d, &c)| preprocess_subject(d, c)).collect()
}
