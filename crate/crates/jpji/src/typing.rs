//! Source-type determination.
//!
//! A source shared by every subject contributes about equally at every peer
//! position, so its per-position contributions `D_α` are flat. A partially
//! joint source only scores at positions whose peers belong to its cluster, and
//! an individual source scores nowhere. The feature route uses this together with a
//! threshold `σ` on the total feature `JpJIF = Σ_α D_α`; the spatial route
//! compares voxel values between subject groups instead.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::engine::null_level;
use crate::error::{Error, Result};
use crate::numerics::kmeans::{kmeans, silhouette};
use crate::numerics::stats::{bh_fdr, correlation, excess_kurtosis, mean, one_sample_margin_test, sample_variance, welch_margin_test};
use crate::types::{AlgoConfig, Decomposition, Sigma0, SourceKind, SourceLabel};

/// Ratio spread (in decades) required before slots are split into two feature classes.
const MIN_LOG_SPREAD: f64 = 2.0;
/// A lone non-joint class is individual when its features sit this many decades under the joint level.
const SINGLE_CLASS_DECADES: f64 = 4.0;
/// Pairwise |corr| above which partially-joint subjects are treated as one group.
const SAME_SOURCE_CORR: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub jpjif: DMatrix<f64>,
    /// `(slot, Ratio(slot))` for every non-joint slot.
    pub ratio: Vec<(usize, f64)>,
    pub sigma_opt: Option<f64>,
    pub jpjif_joint_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSelection {
    pub sigma: f64,
    pub pj_slots: Vec<usize>,
    pub i_slots: Vec<usize>,
    pub ratio: Vec<(usize, f64)>,
    pub joint_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Typed {
    pub labels: Vec<Vec<SourceLabel>>,
    pub sigma: Option<f64>,
    pub joint_slots: Vec<usize>,
    pub warnings: Vec<String>,
}

/// `mean(D) / max(D)`; 1 for perfectly flat contributions.
pub fn uniformity(contrib: &[f64]) -> f64 {
    let max = contrib.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return 0.0;
    }
    contrib.iter().sum::<f64>() / contrib.len() as f64 / max
}

/// Joint test: `(K-1)·max_α D_α` exceeds `JpJIF = Σ_α D_α` by at most `tau` relative.
pub fn is_joint_like(contrib: &[f64], tau: f64) -> bool {
    !contrib.is_empty() && uniformity(contrib) >= 1.0 / (1.0 + tau)
}

pub fn jpji_feature(dec: &Decomposition, slot: usize, subject: usize) -> f64 {
    dec.features[(slot, subject)]
}

/// Feature level below which a source shares nothing with its peers.
pub fn feature_floor(dec: &Decomposition, config: &AlgoConfig) -> f64 {
    let k = dec.n_subjects();
    let dim = dec.z.iter().map(|z| z.nrows()).max().unwrap_or(1);
    let v = dec.y.first().map_or(1, |y| y.ncols());
    config.individual_gamma * null_level(k.saturating_sub(1), dim, v, &config.weights, config.estimator)
}

/// Slots where a majority of subjects carry a flat, above-floor contribution profile.
pub fn detect_joint_slots(dec: &Decomposition, tau: f64, floor: f64) -> Vec<usize> {
    let k = dec.n_subjects();
    (0..dec.n_slots())
        .filter(|&c| {
            let flat = (0..k).filter(|&j| dec.features[(c, j)] > floor && is_joint_like(&dec.contributions[c][j], tau)).count();
            2 * flat > k
        })
        .collect()
}

fn slot_mean(f: &DMatrix<f64>, c: usize) -> f64 {
    f.row(c).mean()
}

fn slot_min(f: &DMatrix<f64>, c: usize) -> f64 {
    f.row(c).min()
}

fn slot_max(f: &DMatrix<f64>, c: usize) -> f64 {
    f.row(c).max()
}

/// Splits `values` (already in log10) into a low and a high group, or `None` when
/// the spread is under [`MIN_LOG_SPREAD`].
fn log_split(values: &[f64]) -> Option<Vec<bool>> {
    if values.len() < 2 {
        return None;
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < MIN_LOG_SPREAD {
        return None;
    }
    let pts: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
    let km = kmeans(&pts, 2, 0).ok()?;
    let high_cluster = if km.centroids[0][0] > km.centroids[1][0] { 0 } else { 1 };
    Some(km.assignments.iter().map(|&a| a == high_cluster).collect())
}

/// σ_opt from the joint level: ratios, two-cluster split, bounds, midpoint.
///
/// Clustering runs on `log10 Ratio` because the two groups sit decades apart.
/// When only one class of non-joint slot exists, the missing bound is replaced
/// (no partially-joint slots: geometric mean of the individual maximum and joint
/// minimum; no individual slots: lower bound 0).
pub fn select_sigma_opt(features: &DMatrix<f64>, joint_slots: &[usize]) -> Result<SigmaSelection> {
    let slots = features.nrows();
    let non_joint: Vec<usize> = (0..slots).filter(|c| !joint_slots.contains(c)).collect();
    let (pj, ind, ratio, joint_mean) = if joint_slots.is_empty() {
        // No joint reference: split on the raw feature gap.
        let logs: Vec<f64> = non_joint.iter().map(|&c| slot_mean(features, c).max(1e-300).log10()).collect();
        let (pj, ind) = match log_split(&logs) {
            Some(high) => partition(&non_joint, &high),
            None => (Vec::new(), non_joint.clone()),
        };
        (pj, ind, Vec::new(), None)
    } else {
        let fj = joint_slots.iter().map(|&c| slot_mean(features, c)).sum::<f64>() / joint_slots.len() as f64;
        let ratio: Vec<(usize, f64)> = non_joint.iter().map(|&c| (c, fj / slot_mean(features, c).max(1e-300))).collect();
        let logs: Vec<f64> = ratio.iter().map(|r| r.1.log10()).collect();
        let (pj, ind) = match log_split(&logs) {
            // High ratio means far below the joint level.
            Some(high) => {
                let (i, p) = partition(&non_joint, &high);
                (p, i)
            }
            None if logs.is_empty() => (Vec::new(), Vec::new()),
            None => {
                let m = logs.iter().sum::<f64>() / logs.len() as f64;
                if m > SINGLE_CLASS_DECADES {
                    (Vec::new(), non_joint.clone())
                } else {
                    (non_joint.clone(), Vec::new())
                }
            }
        };
        (pj, ind, ratio, Some(fj))
    };
    let sigma = sigma_from_classes(features, &pj, &ind, joint_slots)?;
    Ok(SigmaSelection { sigma, pj_slots: pj, i_slots: ind, ratio, joint_mean })
}

/// Midpoint between the largest individual and smallest partially-joint feature.
pub fn sigma_from_classes(features: &DMatrix<f64>, pj: &[usize], ind: &[usize], joint_slots: &[usize]) -> Result<f64> {
    let lower = ind.iter().map(|&c| slot_max(features, c)).fold(0.0, f64::max);
    let upper = pj.iter().map(|&c| slot_min(features, c)).fold(f64::INFINITY, f64::min);
    if upper.is_finite() {
        if lower >= upper {
            return Err(Error::UnseparableFeatures { lower, upper });
        }
        return Ok(0.5 * (lower + upper));
    }
    let joint_min = joint_slots.iter().map(|&c| slot_min(features, c)).fold(f64::INFINITY, f64::min);
    Ok(if joint_min.is_finite() && lower > 0.0 {
        (lower * joint_min).sqrt()
    } else if joint_min.is_finite() {
        0.5 * joint_min
    } else {
        // Everything is individual.
        lower * 2.0 + f64::MIN_POSITIVE
    })
}

fn partition(slots: &[usize], flags: &[bool]) -> (Vec<usize>, Vec<usize>) {
    let a = slots.iter().zip(flags).filter(|(_, &f)| f).map(|(&c, _)| c).collect();
    let b = slots.iter().zip(flags).filter(|(_, &f)| !f).map(|(&c, _)| c).collect();
    (a, b)
}

/// Three-way rule: individual at or under σ, joint when flat, otherwise partially joint.
pub fn classify_by_feature(features: &DMatrix<f64>, contributions: &[Vec<Vec<f64>>], sigma: f64, tau: f64) -> Vec<Vec<SourceKind>> {
    (0..features.nrows())
        .map(|c| {
            (0..features.ncols())
                .map(|k| {
                    let f = features[(c, k)];
                    if f <= sigma {
                        SourceKind::Individual
                    } else if is_joint_like(&contributions[c][k], tau) {
                        SourceKind::Joint
                    } else {
                        SourceKind::PartiallyJoint
                    }
                })
                .collect()
        })
        .collect()
}

/// Groups the given subjects of one slot by the similarity of their estimated maps.
///
/// Each subject is described by its row of pairwise |corr|. If all pairs are
/// strongly correlated the subjects form one group, otherwise k-means splits
/// them into `clusters` groups, or 2 or 3 chosen by silhouette.
pub fn cluster_subjects(maps: &[&[f64]], clusters: Option<usize>, seed: u64) -> Result<Vec<usize>> {
    let n = maps.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![0]);
    }
    let mut r = DMatrix::from_element(n, n, 1.0);
    for i in 0..n {
        for j in 0..i {
            let c = correlation(maps[i], maps[j]).abs();
            if !c.is_finite() {
                return Err(Error::NonFiniteData("map correlation".into()));
            }
            r[(i, j)] = c;
            r[(j, i)] = c;
        }
    }
    let min_off = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| r[(i, j)]).fold(1.0, f64::min);
    if clusters.is_none() && min_off >= SAME_SOURCE_CORR {
        return Ok(vec![0; n]);
    }
    let points: Vec<Vec<f64>> = (0..n).map(|i| r.row(i).iter().copied().collect()).collect();
    let distinct = {
        let mut d: Vec<&Vec<f64>> = Vec::new();
        for p in &points {
            if !d.contains(&p) {
                d.push(p);
            }
        }
        d.len()
    };
    if let Some(m) = clusters {
        let m = m.min(distinct).max(1);
        return Ok(kmeans(&points, m, seed)?.assignments);
    }
    if n == 2 {
        return Ok(vec![0, 1]);
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for k in 2..=3usize {
        if k >= n || k > distinct {
            continue;
        }
        let km = kmeans(&points, k, seed)?;
        let s = silhouette(&points, &km.assignments);
        if best.as_ref().is_none_or(|b| s > b.0) {
            best = Some((s, km.assignments));
        }
    }
    Ok(best.map(|b| b.1).unwrap_or_else(|| (0..n).collect()))
}

/// Labels every (slot, subject) of a finalized decomposition.
pub fn classify(dec: &Decomposition, config: &AlgoConfig) -> Result<Typed> {
    let k = dec.n_subjects();
    let slots = dec.n_slots();
    let mut warnings = Vec::new();
    if k < 2 {
        return Ok(Typed {
            labels: vec![vec![SourceLabel::individual(); k]; slots],
            sigma: None,
            joint_slots: Vec::new(),
            warnings,
        });
    }
    let floor = feature_floor(dec, config);
    let joint_slots = detect_joint_slots(dec, config.tau_joint, floor);
    let sigma = match config.sigma0 {
        Sigma0::Fixed(s) => s,
        Sigma0::Auto => match select_sigma_opt(&dec.features, &joint_slots) {
            Ok(sel) => sel.sigma.max(floor),
            Err(Error::UnseparableFeatures { lower, upper }) => {
                warnings.push(format!("feature classes overlap (individual max {lower:.4e} >= partially-joint min {upper:.4e})"));
                floor
            }
            Err(e) => return Err(e),
        },
    };
    let kinds = classify_by_feature(&dec.features, &dec.contributions, sigma, config.tau_joint);
    let mut labels = vec![vec![SourceLabel::individual(); k]; slots];
    for c in 0..slots {
        let pj: Vec<usize> = (0..k).filter(|&j| kinds[c][j] == SourceKind::PartiallyJoint).collect();
        for j in 0..k {
            if kinds[c][j] == SourceKind::Joint {
                labels[c][j] = SourceLabel::joint(j, k);
            }
        }
        if pj.is_empty() {
            continue;
        }
        let maps: Vec<Vec<f64>> = pj.iter().map(|&j| dec.source(c, j)).collect();
        let refs: Vec<&[f64]> = maps.iter().map(Vec::as_slice).collect();
        let groups = cluster_subjects(&refs, config.clusters, crate::rng::derive(config.seed, &[crate::rng::tag("clusters"), c as u64]))?;
        for (i, &j) in pj.iter().enumerate() {
            let mates: BTreeSet<usize> = pj.iter().zip(&groups).filter(|&(&o, &g)| g == groups[i] && o != j).map(|(&o, _)| o).collect();
            labels[c][j] = SourceLabel::from_peers(mates, j, k)?;
        }
    }
    Ok(Typed { labels, sigma: Some(sigma), joint_slots, warnings })
}

/// Builds the [`FeatureTable`] view of a decomposition.
pub fn feature_table(dec: &Decomposition, config: &AlgoConfig) -> FeatureTable {
    let floor = feature_floor(dec, config);
    let joint = detect_joint_slots(dec, config.tau_joint, floor);
    let sel = select_sigma_opt(&dec.features, &joint).ok();
    FeatureTable {
        jpjif: dec.features.clone(),
        ratio: sel.as_ref().map(|s| s.ratio.clone()).unwrap_or_default(),
        sigma_opt: sel.as_ref().map(|s| s.sigma),
        jpjif_joint_mean: sel.and_then(|s| s.joint_mean),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialVerdict {
    pub kind: SourceKind,
    /// Voxels that differ between the two groups after FDR control.
    pub mask: Vec<bool>,
}

/// Smallest between-group difference, in units of the map's standard deviation,
/// that the spatial route treats as real. Estimates of one joint source can
/// differ systematically by about half a unit between groups of a noiseless
/// study, while maps that actually differ do so by several units.
pub const SPATIAL_MARGIN: f64 = 1.0;

fn voxel_values(maps: &[&[f64]], group: &[usize], vox: usize, buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend(group.iter().map(|&k| maps[k][vox]));
}

/// Voxelwise Welch tests of `|mean_a - mean_b| ≤ margin` between two groups of maps, FDR controlled at `q`.
pub fn spatial_test(maps: &[&[f64]], group_a: &[usize], group_b: &[usize], q: f64, margin: f64) -> Result<Vec<bool>> {
    if group_a.len() < 2 || group_b.len() < 2 {
        return Err(Error::GroupTooSmall);
    }
    let v = maps[0].len();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let mut p = Vec::with_capacity(v);
    for vox in 0..v {
        voxel_values(maps, group_a, vox, &mut a);
        voxel_values(maps, group_b, vox, &mut b);
        p.push(welch_margin_test(&a, &b, margin)?);
    }
    bh_fdr(&p, q)
}

/// Voxels where a group's maps agree on an activation larger than `margin`, FDR controlled at `q`.
pub fn common_activation(maps: &[&[f64]], group: &[usize], q: f64, margin: f64) -> Result<Vec<bool>> {
    if group.len() < 2 {
        return Err(Error::GroupTooSmall);
    }
    let mut a = Vec::new();
    let p = (0..maps[0].len())
        .map(|vox| {
            voxel_values(maps, group, vox, &mut a);
            one_sample_margin_test(&a, margin)
        })
        .collect::<Result<Vec<f64>>>()?;
    bh_fdr(&p, q)
}

/// Sign-aligns each map to the first map of `reference`, in place.
pub fn align_signs(maps: &mut [Vec<f64>], reference: usize) {
    let r = maps[reference].clone();
    for m in maps.iter_mut() {
        if correlation(m, &r) < 0.0 {
            m.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Centres and scales `m` with the mean and SD of the voxels outside `exclude`.
fn standardize(m: &[f64], exclude: &[bool]) -> Vec<f64> {
    let kept: Vec<f64> = m.iter().zip(exclude).filter(|(_, &e)| !e).map(|(&x, _)| x).collect();
    let kept = if kept.len() >= 2 { kept } else { m.to_vec() };
    let mu = mean(&kept);
    let sd = sample_variance(&kept).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    m.iter().map(|x| (x - mu) / sd).collect()
}

/// Passes of re-standardization with the differing voxels left out of the scale.
const RESCALE_PASSES: usize = 4;

/// Spatial route for one set of maps, standardized and sign-aligned first.
///
/// A group whose maps share no activation, or whose two median halves differ,
/// holds individual maps. Otherwise no surviving voxel between the groups
/// means joint, and surviving voxels mean partially joint.
pub fn classify_maps_spatial(maps: &[Vec<f64>], groups: &[Vec<usize>], q: f64) -> Result<SpatialVerdict> {
    if groups.len() != 2 || groups.iter().any(|g| g.len() < 2) {
        return Err(Error::GroupTooSmall);
    }
    let scaled = |exclude: &[bool]| {
        let mut out: Vec<Vec<f64>> = maps.iter().map(|m| standardize(m, exclude)).collect();
        align_signs(&mut out, groups[0][0]);
        out
    };
    let first = scaled(&vec![false; maps.first().map_or(0, Vec::len)]);
    let refs: Vec<&[f64]> = first.iter().map(Vec::as_slice).collect();
    let mut mask = spatial_test(&refs, &groups[0], &groups[1], q, SPATIAL_MARGIN)?;
    // Group-specific activation inflates one group's SD and shrinks its maps, so
    // the between-group mask is refined with scales from the voxels not found to differ.
    for _ in 1..RESCALE_PASSES {
        if !mask.iter().any(|&m| m) {
            break;
        }
        let again = scaled(&mask);
        let r: Vec<&[f64]> = again.iter().map(Vec::as_slice).collect();
        let next = spatial_test(&r, &groups[0], &groups[1], q, SPATIAL_MARGIN)?;
        if next == mask {
            break;
        }
        mask = next;
    }
    let mut individual = false;
    for g in groups {
        if !common_activation(&refs, g, q, SPATIAL_MARGIN)?.iter().any(|&m| m) {
            individual = true;
        } else if g.len() >= 4 {
            let (lo, hi) = g.split_at(g.len() / 2);
            individual |= spatial_test(&refs, lo, hi, q, SPATIAL_MARGIN)?.iter().any(|&m| m);
        }
    }
    let kind = if individual {
        SourceKind::Individual
    } else if mask.iter().any(|&m| m) {
        SourceKind::PartiallyJoint
    } else {
        SourceKind::Joint
    };
    Ok(SpatialVerdict { kind, mask })
}

/// Spatial route for every slot of a decomposition.
pub fn classify_by_spatial(dec: &Decomposition, groups: &[Vec<usize>], q: f64) -> Result<Vec<SpatialVerdict>> {
    (0..dec.n_slots())
        .map(|c| {
            let maps: Vec<Vec<f64>> = (0..dec.n_subjects()).map(|k| dec.source(c, k)).collect();
            classify_maps_spatial(&maps, groups, q)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KurtosisDiagnostic {
    /// `(slot, subject, excess kurtosis, JpJIF)`.
    pub pairs: Vec<(usize, usize, f64, f64)>,
    /// R² of a quadratic fit of JpJIF on kurtosis over joint-labelled sources.
    pub joint_r2: Option<f64>,
    pub warnings: Vec<String>,
}

pub fn kurtosis_feature_diagnostic(dec: &Decomposition) -> KurtosisDiagnostic {
    let mut pairs = Vec::new();
    let mut warnings = Vec::new();
    for c in 0..dec.n_slots() {
        for k in 0..dec.n_subjects() {
            match excess_kurtosis(&dec.source(c, k)) {
                Some(kurt) => pairs.push((c, k, kurt, dec.features[(c, k)])),
                None => warnings.push(format!("slot {c}, subject {k}: constant source, kurtosis undefined")),
            }
        }
    }
    let joint: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|p| dec.labels.get(p.0).is_some_and(|row| row[p.1].kind() == SourceKind::Joint))
        .map(|p| (p.2, p.3))
        .collect();
    KurtosisDiagnostic { joint_r2: quadratic_r2(&joint), pairs, warnings }
}

/// R² of the least-squares fit `y ≈ a + b x + c x²`.
pub fn quadratic_r2(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 4 {
        return None;
    }
    let n = points.len();
    let x = DMatrix::from_fn(n, 3, |i, j| points[i].0.powi(j as i32));
    let y = DVector::from_iterator(n, points.iter().map(|p| p.1));
    let coef = x.clone().svd(true, true).solve(&y, 1e-12).ok()?;
    let fit = &x * coef;
    let mean = y.mean();
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = (&y - fit).norm_squared();
    (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot)
}
