//! JI-ThICA: the joint/individual-only comparison algorithm.
//!
//! Each extraction scores one random tuple of peers instead of summing over
//! all peer positions. If the best achievable score clears `σ₀` the source is
//! extracted jointly against that tuple, otherwise individually. It has no
//! notion of a source shared by only part of the subjects.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use crate::engine::{build_cost_matrix, first_position, inner_extract, slot_subspace, CostMatrix, Partners};
use crate::error::{Error, Result};
use crate::numerics::linalg::dominant_eigenvector;
use crate::preprocess::{preprocess_all, select_orders};
use crate::rng;
use crate::types::{
    validate_analysis_input, AlgoConfig, ComponentPolicy, Decomposition, Estimator, SourceKind, SourceLabel, SubjectDataset, TraceEntry, Weights,
};

#[derive(Debug, Clone, PartialEq)]
pub struct JiThicaConfig {
    pub sigma0: f64,
    pub weights: Weights,
    pub eps0: f64,
    pub max_outer: usize,
    pub inner_max_iter: usize,
    pub n_components: ComponentPolicy,
    pub c_max: Option<usize>,
    pub seed: u64,
}

impl JiThicaConfig {
    pub fn new(sigma0: f64, seed: u64) -> Self {
        let base = AlgoConfig::default();
        Self {
            sigma0,
            weights: base.weights,
            eps0: base.eps0,
            max_outer: base.max_outer,
            inner_max_iter: base.inner_max_iter,
            n_components: base.n_components,
            c_max: None,
            seed,
        }
    }

    fn as_algo(&self) -> AlgoConfig {
        AlgoConfig {
            weights: self.weights,
            eps0: self.eps0,
            max_outer: self.max_outer,
            inner_max_iter: self.inner_max_iter,
            n_components: self.n_components.clone(),
            c_max: self.c_max,
            seed: self.seed,
            ..AlgoConfig::default()
        }
    }
}

/// Threshold on the single-tuple scale derived from a JpJI-ICA run on the same data:
/// its σ_opt divided by the `K - 1` peer positions it sums over.
pub fn sigma0_from_jpji(dec: &Decomposition) -> Option<f64> {
    let k = dec.n_subjects();
    dec.sigma_opt.filter(|_| k > 1).map(|s| s / (k - 1) as f64)
}

/// Up to three distinct random peers of `subject`, repeated cyclically if fewer exist.
pub fn random_tuple(subject: usize, n_subjects: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let others: Vec<usize> = (0..n_subjects).filter(|&j| j != subject).collect();
    let take = others.len().min(3);
    let picked: Vec<usize> = sample(rng, others.len(), take).into_iter().map(|i| others[i]).collect();
    (0..3).map(|j| picked[j % picked.len()]).collect()
}

/// Cost matrix for one peer tuple (no sum over positions).
pub fn build_m_joint(z: &DMatrix<f64>, tuple: &[&[f64]], weights: &Weights) -> Result<CostMatrix> {
    Ok(first_position(build_cost_matrix(z, tuple, weights, Estimator::SampleCumulant)?))
}

/// Self-cumulant cost matrix: every partner is `y_self`.
pub fn build_m_individual(z: &DMatrix<f64>, y_self: &[f64], weights: &Weights) -> Result<CostMatrix> {
    if y_self.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroSource);
    }
    build_cost_matrix(z, &[y_self], weights, Estimator::SampleCumulant)
}

pub fn run_ji_thica(datasets: &[SubjectDataset], config: &JiThicaConfig) -> Result<Decomposition> {
    if !(config.sigma0 > 0.0) {
        return Err(Error::InvalidConfig("sigma0 must be positive".into()));
    }
    let algo = config.as_algo();
    let mut warnings = validate_analysis_input(datasets, &algo)?;
    let orders = select_orders(datasets, &config.n_components, config.c_max)?;
    let prep = preprocess_all(datasets, &orders)?;
    let z: Vec<DMatrix<f64>> = prep.iter().map(|p| p.z.clone()).collect();
    let n_subjects = z.len();
    let slots = z.iter().map(|m| m.nrows()).min().unwrap_or(0);
    let mut u: Vec<DMatrix<f64>> = z.iter().map(|m| DMatrix::identity(slots, m.nrows())).collect();
    let mut y: Vec<Vec<Vec<f64>>> =
        z.iter().map(|m| (0..slots).map(|c| m.row(c).iter().copied().collect()).collect()).collect();
    let mut rng = rng::stream(config.seed, "jithica", &[]);
    let mut trace = Vec::new();
    for sweep in 1..=config.max_outer {
        for c in 0..slots {
            for k in 0..n_subjects {
                let (basis, zr, u0) = slot_subspace(&z[k], &u[k], c);
                let mut joint = false;
                let tuple_rows: Vec<Vec<f64>>;
                let mut result = None;
                if n_subjects > 1 {
                    let tuple = random_tuple(k, n_subjects, &mut rng);
                    tuple_rows = tuple.iter().map(|&j| y[j][c].clone()).collect();
                    let rows: Vec<&[f64]> = tuple_rows.iter().map(Vec::as_slice).collect();
                    let cm = build_m_joint(&zr, &rows, &config.weights)?;
                    let (_, lambda) = dominant_eigenvector(&cm.m)?;
                    joint = lambda > config.sigma0;
                    if joint {
                        result = Some(inner_extract(
                            &zr,
                            &u0,
                            Partners::Tuple(&rows),
                            &config.weights,
                            Estimator::SampleCumulant,
                            config.eps0,
                            config.inner_max_iter,
                        )?);
                    }
                }
                let result = match result {
                    Some(r) => r,
                    None => inner_extract(&zr, &u0, Partners::Own, &config.weights, Estimator::SampleCumulant, config.eps0, config.inner_max_iter)?,
                };
                if !result.converged {
                    warnings.push(format!("sweep {sweep}, slot {c}, subject {k}: inner iteration hit the cap"));
                }
                let full = &basis * &result.u;
                u[k].set_row(c, &full.transpose());
                y[k][c] = z[k].tr_mul(&full).iter().copied().collect();
                trace.push(TraceEntry { sweep, slot: c, subject: k, individual: !joint, converged: result.converged, costs: result.costs });
            }
        }
    }
    // Final two-way decision with a fresh tuple.
    let mut frng = rng::stream(config.seed, "jithica-features", &[]);
    let mut features = DMatrix::zeros(slots, n_subjects);
    let mut contributions = vec![vec![Vec::new(); n_subjects]; slots];
    let mut labels = vec![vec![SourceLabel::individual(); n_subjects]; slots];
    for c in 0..slots {
        for k in 0..n_subjects {
            if n_subjects < 2 {
                continue;
            }
            let tuple = random_tuple(k, n_subjects, &mut frng);
            let rows: Vec<&[f64]> = tuple.iter().map(|&j| y[j][c].as_slice()).collect();
            let d = crate::engine::contributions(&y[k][c], &rows, &config.weights, Estimator::SampleCumulant)[0];
            features[(c, k)] = d;
            contributions[c][k] = vec![d];
            if d > config.sigma0 {
                labels[c][k] = SourceLabel::joint(k, n_subjects);
            }
        }
    }
    Ok(Decomposition {
        subject_ids: datasets.iter().map(|d| d.id.clone()).collect(),
        whiteners: prep.iter().map(|p| p.w_total.clone()).collect(),
        z,
        u,
        y: y.iter().map(|s| DMatrix::from_fn(slots, s.first().map_or(0, Vec::len), |i, j| s[i][j])).collect(),
        features,
        contributions,
        labels,
        sigma_opt: Some(config.sigma0),
        trace,
        warnings,
        sweeps: config.max_outer,
    })
}

/// True when no label is partially joint.
pub fn is_two_way(labels: &[Vec<SourceLabel>]) -> bool {
    labels.iter().flatten().all(|l| l.kind() != SourceKind::PartiallyJoint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    #[test]
    fn tuple_is_distinct_when_possible() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let t = random_tuple(2, 10, &mut rng);
            assert!(!t.contains(&2));
            assert!(t[0] != t[1] && t[1] != t[2] && t[0] != t[2]);
        }
        assert_eq!(random_tuple(0, 2, &mut rng), vec![1, 1, 1]);
    }

    #[test]
    fn gaussian_self_partner_gives_small_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = 100_000;
        let z = DMatrix::from_fn(3, v, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y: Vec<f64> = z.row(0).iter().copied().collect();
        let w = Weights { w2: 1e-12, ..Weights::default() };
        let cm = build_m_individual(&z, &y, &w).unwrap();
        assert!(cm.m.norm() < 0.05, "{}", cm.m.norm());
    }

    #[test]
    fn joint_matrix_is_first_position_of_full_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = DMatrix::from_fn(3, 200, |_, _| rng.sample::<f64, _>(StandardNormal));
        let rows: Vec<Vec<f64>> = (0..3).map(|_| (0..200).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let full = build_cost_matrix(&z, &refs, &Weights::default(), Estimator::SampleCumulant).unwrap();
        let one = build_m_joint(&z, &refs, &Weights::default()).unwrap();
        assert_eq!(one.m, full.per_alpha[0]);
    }
}
