//! The deflation engine.
//!
//! For subject `k` and slot `c` the cost is `Υ(u) = uᵀ M u` with
//! `M = Σ_α Σ_η w_η C_(α,η) C_(α,η)ᵀ`, where `C_(α,η)` is the cumulant vector of
//! `Z_k` against the slot-`c` estimates of the peers at positions
//! `α, α+1, …, α+η-2` (cyclically) of a random peer order. When no peer shares
//! the source the peer cost collapses to noise and the subject switches to its
//! own estimate as the partner, which is plain single-subject cumulant ICA.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::cumulant::{mean, weighted_row_cumulants};
use crate::numerics::linalg::{dominant_eigenvector, orthonormal_complement, quadratic_form};
use crate::numerics::stats::excess_kurtosis;
use crate::preprocess::{preprocess_all, select_orders, PreprocessedSubject};
use crate::rng;
use crate::types::{validate_analysis_input, AlgoConfig, Decomposition, Estimator, SubjectDataset, TraceEntry, Weights};
use crate::typing;

/// Random order of the other subjects, or the subject itself in individual mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerOrder {
    order: Vec<usize>,
}

impl PeerOrder {
    pub fn random(subject: usize, n_subjects: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..n_subjects).filter(|&j| j != subject).collect();
        order.shuffle(rng);
        Self { order }
    }

    pub fn own(subject: usize) -> Self {
        Self { order: vec![subject] }
    }

    pub fn from_order(order: Vec<usize>) -> Self {
        Self { order }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub m: DMatrix<f64>,
    /// `M_α`, one block per peer position; they sum to `m`.
    pub per_alpha: Vec<DMatrix<f64>>,
    /// `w_η ‖C_(α,η)‖²` for η = 2, 3, 4.
    pub norms: Vec<[f64; 3]>,
}

fn centered(x: &[f64]) -> Vec<f64> {
    let m = mean(x);
    x.iter().map(|v| v - m).collect()
}

/// Voxel weights for one (α, η) tuple of centred partners.
fn tuple_weights(p: &[Vec<f64>], alpha: usize, order: usize) -> Vec<f64> {
    let n = p.len();
    let at = |j: usize| &p[(alpha + j) % n];
    match order {
        2 => at(0).clone(),
        3 => at(0).iter().zip(at(1)).map(|(a, b)| a * b).collect(),
        _ => {
            let (a, b, c) = (at(0), at(1), at(2));
            let m = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| u * v).sum::<f64>() / x.len() as f64;
            let (bc, ac, ab) = (m(b, c), m(a, c), m(a, b));
            (0..a.len()).map(|v| a[v] * b[v] * c[v] - a[v] * bc - b[v] * ac - c[v] * ab).collect()
        }
    }
}

fn per_voxel_block(z: &DMatrix<f64>, q: &[f64]) -> DMatrix<f64> {
    let mut scaled = z.clone();
    for (mut col, w) in scaled.column_iter_mut().zip(q) {
        col *= w * w;
    }
    (&scaled * z.transpose()) / z.ncols() as f64
}

/// Cost matrix of `z` against partner rows given in peer order.
pub fn build_cost_matrix(z: &DMatrix<f64>, partners: &[&[f64]], weights: &Weights, estimator: Estimator) -> Result<CostMatrix> {
    if partners.is_empty() {
        return Err(Error::InvalidConfig("cost matrix needs at least one partner".into()));
    }
    if let Some(p) = partners.iter().find(|p| p.len() != z.ncols()) {
        return Err(Error::LengthMismatch(z.ncols(), p.len()));
    }
    let p: Vec<Vec<f64>> = partners.iter().map(|s| centered(s)).collect();
    let dim = z.nrows();
    let blocks: Vec<(DMatrix<f64>, [f64; 3])> = (0..p.len())
        .into_par_iter()
        .map(|alpha| {
            let mut m = DMatrix::zeros(dim, dim);
            let mut norms = [0.0; 3];
            for order in 2..=4 {
                let w = weights.get(order);
                let q = tuple_weights(&p, alpha, order);
                match estimator {
                    Estimator::SampleCumulant => {
                        let c = weighted_row_cumulants(z, &q);
                        norms[order - 2] = w * c.norm_squared();
                        m.ger(w, &c, &c, 1.0);
                    }
                    Estimator::PerVoxel => {
                        let b = per_voxel_block(z, &q);
                        norms[order - 2] = w * b.trace();
                        m += b * w;
                    }
                }
            }
            (m, norms)
        })
        .collect();
    let mut m = DMatrix::zeros(dim, dim);
    let mut per_alpha = Vec::with_capacity(blocks.len());
    let mut norms = Vec::with_capacity(blocks.len());
    for (b, n) in blocks {
        m += &b;
        per_alpha.push(b);
        norms.push(n);
    }
    Ok(CostMatrix { m, per_alpha, norms })
}

/// Keeps only the α = 1 block of a cost matrix.
pub(crate) fn first_position(cm: CostMatrix) -> CostMatrix {
    let m = cm.per_alpha[0].clone();
    CostMatrix { m: m.clone(), per_alpha: vec![m], norms: vec![cm.norms[0]] }
}

/// `Υ = uᵀ M u`.
pub fn cost(u: &DVector<f64>, m: &CostMatrix) -> f64 {
    quadratic_form(u, &m.m)
}

/// Per-position contributions `D_α = uᵀ M_α u`, evaluated through `y = uᵀ Z` directly.
pub fn contributions(y: &[f64], partners: &[&[f64]], weights: &Weights, estimator: Estimator) -> Vec<f64> {
    let p: Vec<Vec<f64>> = partners.iter().map(|s| centered(s)).collect();
    let yc = centered(y);
    let v = y.len() as f64;
    (0..p.len())
        .map(|alpha| {
            (2..=4)
                .map(|order| {
                    let q = tuple_weights(&p, alpha, order);
                    let w = weights.get(order);
                    match estimator {
                        Estimator::SampleCumulant => {
                            let qm = q.iter().sum::<f64>() / v;
                            let c = yc.iter().zip(&q).map(|(a, b)| a * (b - qm)).sum::<f64>() / v;
                            w * c * c
                        }
                        Estimator::PerVoxel => w * y.iter().zip(&q).map(|(a, b)| a * a * b * b).sum::<f64>() / v,
                    }
                })
                .sum()
        })
        .collect()
}

/// Partners of one inner extraction.
#[derive(Debug, Clone, Copy)]
pub enum Partners<'a> {
    /// Fixed rows of other subjects, in peer order.
    Peers(&'a [&'a [f64]]),
    /// One fixed tuple of rows; only the first peer position is used.
    Tuple(&'a [&'a [f64]]),
    /// The subject's own current estimate.
    Own,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerResult {
    pub u: DVector<f64>,
    pub costs: Vec<f64>,
    pub converged: bool,
}

/// Fixed-point iteration `u ← top eigenvector of M(u)`.
///
/// With peer partners `M` does not depend on `u` and one step reaches the
/// maximum. With [`Partners::Own`] the matrix is rebuilt from `y = uᵀZ` every
/// step; a step that would lower the cost is pulled back towards the current
/// `u` by repeated bisection so the recorded cost never decreases.
pub fn inner_extract(
    z: &DMatrix<f64>,
    u0: &DVector<f64>,
    partners: Partners<'_>,
    weights: &Weights,
    estimator: Estimator,
    eps0: f64,
    max_iter: usize,
) -> Result<InnerResult> {
    let n0 = u0.norm();
    if !(n0 > 0.0) || !n0.is_finite() {
        return Err(Error::ZeroSource);
    }
    let eval = |u: &DVector<f64>| -> Result<(CostMatrix, f64)> {
        let cm = match partners {
            Partners::Peers(p) => build_cost_matrix(z, p, weights, estimator)?,
            Partners::Tuple(p) => first_position(build_cost_matrix(z, p, weights, estimator)?),
            Partners::Own => {
                let y: Vec<f64> = z.tr_mul(u).iter().copied().collect();
                build_cost_matrix(z, &[&y], weights, estimator)?
            }
        };
        let c = cost(u, &cm);
        if !c.is_finite() {
            return Err(Error::NonFiniteData("cost".into()));
        }
        Ok((cm, c))
    };
    let fixed = !matches!(partners, Partners::Own);
    let mut u = u0 / n0;
    let (mut cm, mut c0) = eval(&u)?;
    let mut costs = vec![c0];
    let mut converged = false;
    for _ in 0..max_iter {
        let (mut next, _) = dominant_eigenvector(&cm.m)?;
        if next.dot(&u) < 0.0 {
            next.neg_mut();
        }
        let (mut cm_next, mut c_next) = if fixed {
            let c = cost(&next, &cm);
            (cm.clone(), c)
        } else {
            eval(&next)?
        };
        let mut stalled = false;
        while c_next < c0 {
            next = (&u + &next).normalize();
            if 1.0 - next.dot(&u).powi(2) < eps0 {
                stalled = true;
                break;
            }
            (cm_next, c_next) = eval(&next)?;
        }
        if stalled {
            converged = true;
            break;
        }
        let done = 1.0 - next.dot(&u).powi(2) < eps0;
        u = next;
        cm = cm_next;
        c0 = c_next;
        costs.push(c0);
        if done {
            converged = true;
            break;
        }
    }
    Ok(InnerResult { u, costs, converged })
}

/// Removes the component along `y` from every row: `z_i - (⟨z_i,y⟩/⟨y,y⟩) y`.
pub fn deflate(z: &DMatrix<f64>, y: &[f64]) -> Result<DMatrix<f64>> {
    if y.len() != z.ncols() {
        return Err(Error::LengthMismatch(z.ncols(), y.len()));
    }
    let yy: f64 = y.iter().map(|v| v * v).sum();
    if !(yy > 0.0) {
        return Err(Error::ZeroSource);
    }
    let yv = DVector::from_column_slice(y);
    let coef = z * &yv / yy;
    Ok(z - coef * yv.transpose())
}

/// Expected top eigenvalue scale of the cost matrix when no partner shares a source.
pub fn null_level(n_partners: usize, dim: usize, n_voxels: usize, weights: &Weights, estimator: Estimator) -> f64 {
    let base = n_partners as f64 * weights.sum() * dim as f64;
    match estimator {
        Estimator::SampleCumulant => base / n_voxels as f64,
        Estimator::PerVoxel => base,
    }
}

/// Complement basis of the subject's earlier slots, the data expressed in it,
/// and the warm start for slot `c` (previous estimate, else `e_c`, else `e_0`).
pub(crate) fn slot_subspace(z: &DMatrix<f64>, u: &DMatrix<f64>, c: usize) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let dim = z.nrows();
    let done: Vec<DVector<f64>> = (0..c).map(|j| u.row(j).transpose()).collect();
    let basis = orthonormal_complement(&done, dim);
    let zr = basis.tr_mul(z);
    let mut u0 = basis.tr_mul(&u.row(c).transpose());
    if u0.norm() < 1e-6 {
        let mut e = DVector::zeros(dim);
        e[c.min(dim - 1)] = 1.0;
        u0 = basis.tr_mul(&e);
    }
    if u0.norm() < 1e-6 {
        u0 = DVector::zeros(zr.nrows());
        u0[0] = 1.0;
    }
    (basis, zr, u0)
}

/// Engine state handed to sweep observers.
pub struct SweepState<'a> {
    pub sweep: usize,
    /// `u[k]` is `slots × C_k`.
    pub u: &'a [DMatrix<f64>],
    /// `y[k][c]`, length V.
    pub y: &'a [Vec<Vec<f64>>],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineOutput {
    pub u: Vec<DMatrix<f64>>,
    pub y: Vec<Vec<Vec<f64>>>,
    pub trace: Vec<TraceEntry>,
    pub warnings: Vec<String>,
}

/// Outer sweeps over slots and subjects on preprocessed data.
///
/// Slot `c` of subject `k` is extracted inside the orthogonal complement of the
/// subject's slots `0..c` from the same sweep, which is regression deflation of
/// `Z_k` expressed in its whitened coordinates. Subjects are visited in order
/// and always see the latest estimates of the others.
pub fn run_engine(z: &[DMatrix<f64>], config: &AlgoConfig, mut observer: Option<&mut dyn FnMut(&SweepState<'_>)>) -> Result<EngineOutput> {
    config.validate()?;
    let n_subjects = z.len();
    if n_subjects == 0 {
        return Err(Error::EmptyInput);
    }
    let v = z[0].ncols();
    let slots = z.iter().map(|m| m.nrows()).min().unwrap_or(0);
    let mut u: Vec<DMatrix<f64>> = z.iter().map(|m| DMatrix::identity(slots, m.nrows())).collect();
    let mut y: Vec<Vec<Vec<f64>>> =
        z.iter().map(|m| (0..slots).map(|c| m.row(c).iter().copied().collect()).collect()).collect();
    let mut rng = rng::stream(config.seed, "engine", &[]);
    let mut trace = Vec::new();
    let mut warnings = Vec::new();
    for sweep in 1..=config.max_outer {
        for c in 0..slots {
            for k in 0..n_subjects {
                let (basis, zr, u0) = slot_subspace(&z[k], &u[k], c);
                let mut individual = n_subjects == 1;
                let mut result = None;
                if !individual {
                    let peers = PeerOrder::random(k, n_subjects, &mut rng);
                    let rows: Vec<&[f64]> = peers.order().iter().map(|&j| y[j][c].as_slice()).collect();
                    let cm = build_cost_matrix(&zr, &rows, &config.weights, config.estimator)?;
                    let (_, lambda) = dominant_eigenvector(&cm.m)?;
                    let floor = null_level(rows.len(), zr.nrows(), v, &config.weights, config.estimator);
                    individual = lambda < config.individual_gamma * floor;
                    if !individual {
                        result = Some(inner_extract(
                            &zr,
                            &u0,
                            Partners::Peers(&rows),
                            &config.weights,
                            config.estimator,
                            config.eps0,
                            config.inner_max_iter,
                        )?);
                    }
                }
                let result = match result {
                    Some(r) => r,
                    None => inner_extract(&zr, &u0, Partners::Own, &config.weights, config.estimator, config.eps0, config.inner_max_iter)?,
                };
                if !result.converged {
                    warnings.push(format!(
                        "sweep {sweep}, slot {c}, subject {k}: inner iteration hit the cap of {}",
                        config.inner_max_iter
                    ));
                }
                let full = &basis * &result.u;
                u[k].set_row(c, &full.transpose());
                y[k][c] = z[k].tr_mul(&full).iter().copied().collect();
                trace.push(TraceEntry { sweep, slot: c, subject: k, individual, converged: result.converged, costs: result.costs });
            }
        }
        if let Some(obs) = observer.as_deref_mut() {
            obs(&SweepState { sweep, u: &u, y: &y });
        }
    }
    Ok(EngineOutput { u, y, trace, warnings })
}

/// JpJI-features: `Υ` at the final estimate with a fresh full peer order per (slot, subject).
/// Returns the feature matrix (`slots × K`) and the per-position contributions.
pub fn compute_features(y: &[Vec<Vec<f64>>], config: &AlgoConfig) -> (DMatrix<f64>, Vec<Vec<Vec<f64>>>) {
    let n_subjects = y.len();
    let slots = y.first().map_or(0, |s| s.len());
    let mut rng = rng::stream(config.seed, "features", &[]);
    let mut f = DMatrix::zeros(slots, n_subjects);
    let mut contrib = vec![vec![Vec::new(); n_subjects]; slots];
    if n_subjects < 2 {
        return (f, contrib);
    }
    for c in 0..slots {
        for k in 0..n_subjects {
            let peers = PeerOrder::random(k, n_subjects, &mut rng);
            let rows: Vec<&[f64]> = peers.order().iter().map(|&j| y[j][c].as_slice()).collect();
            let d = contributions(&y[k][c], &rows, &config.weights, config.estimator);
            f[(c, k)] = d.iter().sum();
            contrib[c][k] = d;
        }
    }
    (f, contrib)
}

/// Slot order by descending mean feature, ties broken by subject-0 kurtosis.
fn slot_order(features: &DMatrix<f64>, y: &[Vec<Vec<f64>>]) -> Vec<usize> {
    let slots = features.nrows();
    let key: Vec<(f64, f64)> = (0..slots)
        .map(|c| {
            let m = features.row(c).mean();
            let kurt = y.first().and_then(|s| excess_kurtosis(&s[c])).unwrap_or(f64::NEG_INFINITY);
            (m, kurt)
        })
        .collect();
    let mut order: Vec<usize> = (0..slots).collect();
    order.sort_by(|&a, &b| key[b].0.total_cmp(&key[a].0).then(key[b].1.total_cmp(&key[a].1)).then(a.cmp(&b)));
    order
}

/// Features, slot ordering and labels for a finished engine state.
#[allow(clippy::too_many_arguments)]
pub fn finalize(
    prep: &[PreprocessedSubject],
    ids: &[String],
    u: &[DMatrix<f64>],
    y: &[Vec<Vec<f64>>],
    config: &AlgoConfig,
    trace: Vec<TraceEntry>,
    mut warnings: Vec<String>,
    sweeps: usize,
) -> Result<Decomposition> {
    let (features, contrib) = compute_features(y, config);
    let order = slot_order(&features, y);
    let n_subjects = y.len();
    let slots = order.len();
    let v = prep.first().map_or(0, |p| p.z.ncols());
    let u_sorted: Vec<DMatrix<f64>> =
        u.iter().map(|m| DMatrix::from_fn(slots, m.ncols(), |i, j| m[(order[i], j)])).collect();
    let y_sorted: Vec<DMatrix<f64>> = y.iter().map(|s| DMatrix::from_fn(slots, v, |i, j| s[order[i]][j])).collect();
    let f_sorted = DMatrix::from_fn(slots, n_subjects, |i, k| features[(order[i], k)]);
    let c_sorted: Vec<Vec<Vec<f64>>> = order.iter().map(|&c| contrib[c].clone()).collect();
    let mut dec = Decomposition {
        subject_ids: ids.to_vec(),
        whiteners: prep.iter().map(|p| p.w_total.clone()).collect(),
        z: prep.iter().map(|p| p.z.clone()).collect(),
        u: u_sorted,
        y: y_sorted,
        features: f_sorted,
        contributions: c_sorted,
        labels: Vec::new(),
        sigma_opt: None,
        trace,
        warnings: Vec::new(),
        sweeps,
    };
    let typed = typing::classify(&dec, config)?;
    warnings.extend(typed.warnings);
    dec.labels = typed.labels;
    dec.sigma_opt = typed.sigma;
    dec.warnings = warnings;
    Ok(dec)
}

fn prepare(datasets: &[SubjectDataset], config: &AlgoConfig) -> Result<(Vec<PreprocessedSubject>, Vec<String>)> {
    let warnings = validate_analysis_input(datasets, config)?;
    let orders = select_orders(datasets, &config.n_components, config.c_max)?;
    Ok((preprocess_all(datasets, &orders)?, warnings))
}

/// Sweep number, demixing rows and sources captured by the snapshot observer.
type Snapshot = (usize, Vec<DMatrix<f64>>, Vec<Vec<Vec<f64>>>);

/// Full pipeline: validation, preprocessing, engine, features and labels.
pub fn run_jpji_ica(datasets: &[SubjectDataset], config: &AlgoConfig) -> Result<Decomposition> {
    Ok(run_jpji_ica_with_snapshots(datasets, config, &[])?.0)
}

/// As [`run_jpji_ica`], additionally finalizing the state after each listed sweep.
/// A snapshot at sweep `s` equals the result of a run with `max_outer = s`.
pub fn run_jpji_ica_with_snapshots(
    datasets: &[SubjectDataset],
    config: &AlgoConfig,
    snapshot_sweeps: &[usize],
) -> Result<(Decomposition, Vec<Decomposition>)> {
    let (prep, warnings) = prepare(datasets, config)?;
    let ids: Vec<String> = datasets.iter().map(|d| d.id.clone()).collect();
    let z: Vec<DMatrix<f64>> = prep.iter().map(|p| p.z.clone()).collect();
    let mut states: Vec<Snapshot> = Vec::new();
    let mut obs = |s: &SweepState<'_>| {
        if snapshot_sweeps.contains(&s.sweep) && s.sweep < config.max_outer {
            states.push((s.sweep, s.u.to_vec(), s.y.to_vec()));
        }
    };
    let out = run_engine(&z, config, Some(&mut obs))?;
    let mut snaps = Vec::new();
    for (sweep, u, y) in states {
        let n_entries = out.trace.iter().take_while(|t| t.sweep <= sweep).count();
        snaps.push(finalize(&prep, &ids, &u, &y, config, out.trace[..n_entries].to_vec(), warnings.clone(), sweep)?);
    }
    let dec = finalize(&prep, &ids, &out.u, &out.y, config, out.trace, [warnings, out.warnings].concat(), config.max_outer)?;
    if snapshot_sweeps.contains(&config.max_outer) {
        snaps.push(dec.clone());
    }
    Ok((dec, snaps))
}
