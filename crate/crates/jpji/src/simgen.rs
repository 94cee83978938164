//! Synthetic multi-subject studies with ground truth.
//!
//! Spatial maps are sums of one to three Gaussian blobs on a `√V × √V` grid,
//! normalised to zero mean and unit variance. Maps are drawn by rejection so
//! their excess kurtosis lies in a fixed band and overlapping maps stay
//! nearly uncorrelated. Every subject carries the joint maps, the maps of its
//! cluster and its own individual maps. Time courses are smoothed Gaussian noise.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::stats::{correlation, excess_kurtosis};
use crate::rng;
use crate::types::{GroundTruth, SourceLabel, SubjectDataset};

/// Smallest cluster that can carry a partially-joint source: the subject plus
/// enough peers for a fourth-order cross-cumulant.
pub const MIN_CLUSTER_SIZE: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobParams {
    pub min_blobs: usize,
    pub max_blobs: usize,
    pub width: (f64, f64),
    pub amplitude: (f64, f64),
    /// Accepted excess-kurtosis band.
    pub kurtosis: (f64, f64),
    /// |corr| bound against shared maps and the subject's own maps.
    pub max_corr: f64,
    /// |corr| bound between individual maps of different subjects.
    pub max_corr_individual: f64,
    pub attempts: usize,
}

impl Default for BlobParams {
    fn default() -> Self {
        Self {
            min_blobs: 1,
            max_blobs: 3,
            width: (2.0, 4.0),
            amplitude: (0.6, 1.0),
            kurtosis: (15.0, 60.0),
            max_corr: 0.1,
            max_corr_individual: 0.3,
            attempts: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterScenario {
    /// `n` contiguous, near-equal clusters.
    Count(usize),
    /// Cluster index of every subject.
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n_subjects: usize,
    pub joint: usize,
    /// Partially-joint sources per subject (all subjects).
    pub pjoint: usize,
    /// Individual sources per subject (all subjects).
    pub individual: usize,
    /// Per-subject overrides of `pjoint` / `individual`.
    pub pjoint_per_subject: Option<Vec<usize>>,
    pub individual_per_subject: Option<Vec<usize>>,
    pub clusters: ClusterScenario,
    pub n_voxels: usize,
    pub n_time: usize,
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub blobs: BlobParams,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n_subjects: 10,
            joint: 3,
            pjoint: 2,
            individual: 1,
            pjoint_per_subject: None,
            individual_per_subject: None,
            clusters: ClusterScenario::Count(2),
            n_voxels: 4096,
            n_time: 150,
            snr_db: None,
            seed: 0,
            blobs: BlobParams::default(),
        }
    }
}

impl ScenarioSpec {
    /// Draws `joint` and `pjoint` uniformly from `0..=max` with `joint + pjoint > 0`.
    pub fn with_random_counts(mut self, max: usize) -> Self {
        let mut r = rng::stream(self.seed, "counts", &[]);
        loop {
            self.joint = r.random_range(0..=max);
            self.pjoint = r.random_range(0..=max);
            if self.joint + self.pjoint > 0 {
                return self;
            }
        }
    }

    pub fn cluster_of(&self) -> Vec<usize> {
        match &self.clusters {
            ClusterScenario::Explicit(v) => v.clone(),
            ClusterScenario::Count(n) => {
                let n = (*n).max(1);
                let k = self.n_subjects;
                let mut out = Vec::with_capacity(k);
                for c in 0..n {
                    let size = k / n + usize::from(c < k % n);
                    out.extend(std::iter::repeat_n(c, size));
                }
                out
            }
        }
    }

    fn pjoint_of(&self, k: usize) -> usize {
        self.pjoint_per_subject.as_ref().map_or(self.pjoint, |v| v[k])
    }

    fn individual_of(&self, k: usize) -> usize {
        self.individual_per_subject.as_ref().map_or(self.individual, |v| v[k])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        let k = self.n_subjects;
        if k == 0 {
            return bad("at least one subject is required".into());
        }
        if self.n_voxels < 16 {
            return bad("at least 16 voxels are required".into());
        }
        for (name, v) in [("pjoint", &self.pjoint_per_subject), ("individual", &self.individual_per_subject)] {
            if v.as_ref().is_some_and(|v| v.len() != k) {
                return bad(format!("{name} list needs one entry per subject"));
            }
        }
        let clusters = self.cluster_of();
        if clusters.len() != k {
            return bad("cluster assignment needs one entry per subject".into());
        }
        for j in 0..k {
            let c = self.joint + self.pjoint_of(j) + self.individual_of(j);
            if c == 0 {
                return bad(format!("subject {j} has no sources"));
            }
            if c >= self.n_time {
                return bad(format!("subject {j}: {c} sources need more than {} time points", self.n_time));
            }
            if self.pjoint_of(j) > 0 {
                let size = clusters.iter().filter(|&&x| x == clusters[j]).count();
                if size < MIN_CLUSTER_SIZE {
                    return bad(format!("cluster {} has {size} subjects, partially-joint sources need {MIN_CLUSTER_SIZE}", clusters[j]));
                }
            }
        }
        let b = &self.blobs;
        if b.min_blobs == 0 || b.min_blobs > b.max_blobs || !(b.width.0 > 0.0 && b.width.0 <= b.width.1) || b.attempts == 0 {
            return bad("invalid blob parameters".into());
        }
        if let Some(s) = self.snr_db {
            if s.is_nan() {
                return bad("snr must be a number".into());
            }
        }
        Ok(())
    }
}

fn grid(v: usize) -> (usize, usize) {
    let side = (v as f64).sqrt().round() as usize;
    if side * side == v {
        (side, side)
    } else {
        (1, v)
    }
}

fn normalize(mut x: Vec<f64>) -> Vec<f64> {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter_mut().for_each(|v| *v -= m);
    let s = (x.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    if s > 0.0 {
        x.iter_mut().for_each(|v| *v /= s);
    }
    x
}

/// One blob map, zero mean and unit variance. Non-square `V` uses 1-D blobs.
pub fn generate_spatial_source(v: usize, params: &BlobParams, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (rows, cols) = grid(v);
    let n = rng.random_range(params.min_blobs..=params.max_blobs);
    let mut map = vec![0.0; v];
    for _ in 0..n {
        let w = rng.random_range(params.width.0..=params.width.1);
        let a = rng.random_range(params.amplitude.0..=params.amplitude.1);
        let margin = |len: usize| if len > 6 { (3.0, len as f64 - 3.0) } else { (0.0, len as f64) };
        let (cx_lo, cx_hi) = margin(cols);
        let cx = rng.random_range(cx_lo..cx_hi);
        let cy = if rows > 1 {
            let (lo, hi) = margin(rows);
            rng.random_range(lo..hi)
        } else {
            0.0
        };
        let inv = 1.0 / (2.0 * w * w);
        for r in 0..rows {
            let dy = r as f64 - cy;
            for c in 0..cols {
                let dx = c as f64 - cx;
                map[r * cols + c] += a * (-(dx * dx + dy * dy) * inv).exp();
            }
        }
    }
    normalize(map)
}

/// Rejection sampling against the kurtosis band and correlation bounds.
fn place(v: usize, params: &BlobParams, strict: &[&[f64]], loose: &[&[f64]], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    for _ in 0..params.attempts {
        let s = generate_spatial_source(v, params, rng);
        let Some(k) = excess_kurtosis(&s) else { continue };
        if k < params.kurtosis.0 || k > params.kurtosis.1 {
            continue;
        }
        if strict.iter().all(|e| correlation(&s, e).abs() <= params.max_corr)
            && loose.iter().all(|e| correlation(&s, e).abs() <= params.max_corr_individual)
        {
            return Ok(s);
        }
    }
    Err(Error::SourcePlacement)
}

fn smooth_columns(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for mut col in a.column_iter_mut() {
        let x: Vec<f64> = col.iter().copied().collect();
        for i in 0..n {
            let lo = i.saturating_sub(2);
            let hi = (i + 2).min(n - 1);
            col[i] = x[lo..=hi].iter().sum::<f64>() / 5.0;
        }
        let rms = (col.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        if rms > 0.0 {
            col /= rms;
        }
    }
}

fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Band-limited random time courses, `N × C`, unit RMS per column, condition number ≤ 1e3.
pub fn generate_mixing(n_time: usize, n_sources: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    for _ in 0..2 {
        let mut a = DMatrix::from_fn(n_time, n_sources, |_, _| rng.sample::<f64, _>(StandardNormal));
        smooth_columns(&mut a);
        if condition_number(&a) <= 1e3 {
            return Ok(a);
        }
    }
    Err(Error::RankDeficientMixing)
}

/// Adds white Gaussian noise at `snr_db` relative to the mean square of `o`.
pub fn add_noise(o: &DMatrix<f64>, snr_db: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    if snr_db == f64::INFINITY {
        return o.clone();
    }
    let power = o.iter().map(|v| v * v).sum::<f64>() / o.len() as f64;
    let sd = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    o.map(|v| v + sd * rng.sample::<f64, _>(StandardNormal))
}

pub fn subject_id(k: usize, n_subjects: usize) -> String {
    let width = n_subjects.to_string().len().max(2);
    format!("s{:0width$}", k + 1)
}

pub fn generate_dataset(spec: &ScenarioSpec) -> Result<(Vec<SubjectDataset>, GroundTruth)> {
    spec.validate()?;
    let k_total = spec.n_subjects;
    let v = spec.n_voxels;
    let clusters = spec.cluster_of();
    let n_clusters = clusters.iter().max().map_or(0, |m| m + 1);
    let mut maps_rng = rng::stream(spec.seed, "maps", &[]);
    let b = &spec.blobs;

    let mut shared: Vec<Vec<f64>> = Vec::new();
    for _ in 0..spec.joint {
        let refs: Vec<&[f64]> = shared.iter().map(Vec::as_slice).collect();
        let s = place(v, b, &refs, &[], &mut maps_rng)?;
        shared.push(s);
    }
    let joint_maps = shared.clone();
    let mut cluster_maps: Vec<Vec<Vec<f64>>> = Vec::new();
    for c in 0..n_clusters {
        let need = (0..k_total).filter(|&j| clusters[j] == c).map(|j| spec.pjoint_of(j)).max().unwrap_or(0);
        let mut maps = Vec::new();
        for _ in 0..need {
            let refs: Vec<&[f64]> = shared.iter().map(Vec::as_slice).collect();
            let s = place(v, b, &refs, &[], &mut maps_rng)?;
            shared.push(s.clone());
            maps.push(s);
        }
        cluster_maps.push(maps);
    }

    let mut individual_all: Vec<Vec<f64>> = Vec::new();
    let mut datasets = Vec::with_capacity(k_total);
    let mut truth = GroundTruth {
        sources: Vec::new(),
        mixing: Vec::new(),
        labels: Vec::new(),
        joint_count: spec.joint,
        pjoint_counts: Vec::new(),
        individual_counts: Vec::new(),
        cluster_of: clusters.clone(),
    };
    for k in 0..k_total {
        let mut own: Vec<Vec<f64>> = Vec::new();
        for _ in 0..spec.individual_of(k) {
            let strict: Vec<&[f64]> = shared.iter().chain(&own).map(Vec::as_slice).collect();
            let loose: Vec<&[f64]> = individual_all.iter().map(Vec::as_slice).collect();
            let s = place(v, b, &strict, &loose, &mut maps_rng)?;
            own.push(s);
        }
        individual_all.extend(own.iter().cloned());

        let pj = spec.pjoint_of(k);
        let mut rows: Vec<&Vec<f64>> = joint_maps.iter().collect();
        rows.extend(cluster_maps[clusters[k]].iter().take(pj));
        rows.extend(own.iter());
        let c = rows.len();
        let s = DMatrix::from_fn(c, v, |i, j| rows[i][j]);

        let mut labels = Vec::with_capacity(c);
        labels.extend((0..spec.joint).map(|_| SourceLabel::joint(k, k_total)));
        for p in 0..pj {
            let mates = (0..k_total).filter(|&j| j != k && clusters[j] == clusters[k] && spec.pjoint_of(j) > p).collect();
            labels.push(SourceLabel::from_peers(mates, k, k_total)?);
        }
        labels.extend((0..own.len()).map(|_| SourceLabel::individual()));

        let a = generate_mixing(spec.n_time, c, &mut rng::stream(spec.seed, "mixing", &[k as u64]))?;
        let mut o = &a * &s;
        if let Some(snr) = spec.snr_db {
            o = add_noise(&o, snr, &mut rng::stream(spec.seed, "noise", &[k as u64]));
        }
        datasets.push(SubjectDataset::new(subject_id(k, k_total), o)?);
        truth.sources.push(s);
        truth.mixing.push(a);
        truth.labels.push(labels);
        truth.pjoint_counts.push(pj);
        truth.individual_counts.push(own.len());
    }
    Ok((datasets, truth))
}
