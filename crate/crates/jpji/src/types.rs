//! Shared data model.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One subject's observations, `N × V` (rows are time samples).
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectDataset {
    /// Stable identifier written to files; the position in the analysis list is the index `k`.
    pub id: String,
    pub observations: DMatrix<f64>,
}

impl SubjectDataset {
    pub fn new(id: impl Into<String>, observations: DMatrix<f64>) -> Result<Self> {
        let id = id.into();
        if observations.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteData(format!("subject {id}")));
        }
        Ok(Self { id, observations })
    }

    pub fn n_time(&self) -> usize {
        self.observations.nrows()
    }

    pub fn n_voxels(&self) -> usize {
        self.observations.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceKind {
    Joint,
    PartiallyJoint,
    Individual,
}

impl SourceKind {
    pub const ALL: [SourceKind; 3] = [SourceKind::Joint, SourceKind::PartiallyJoint, SourceKind::Individual];

    pub fn short(self) -> &'static str {
        match self {
            SourceKind::Joint => "J",
            SourceKind::PartiallyJoint => "PJ",
            SourceKind::Individual => "I",
        }
    }

    pub fn from_short(s: &str) -> Option<Self> {
        match s {
            "J" => Some(SourceKind::Joint),
            "PJ" => Some(SourceKind::PartiallyJoint),
            "I" => Some(SourceKind::Individual),
            _ => None,
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

/// Type of one source plus the subjects it is shared with (never including its own subject).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceLabel {
    kind: SourceKind,
    peers: BTreeSet<usize>,
}

impl SourceLabel {
    /// Checked constructor; the kind must agree with the peer-set size.
    pub fn new(kind: SourceKind, peers: BTreeSet<usize>, subject: usize, n_subjects: usize) -> Result<Self> {
        if peers.contains(&subject) {
            return Err(Error::InvalidLabel(format!("subject {subject} listed as its own peer")));
        }
        if peers.iter().any(|&p| p >= n_subjects) {
            return Err(Error::InvalidLabel("peer index out of range".into()));
        }
        let n = peers.len();
        let expected = if n_subjects > 1 && n == n_subjects - 1 {
            SourceKind::Joint
        } else if n == 0 {
            SourceKind::Individual
        } else {
            SourceKind::PartiallyJoint
        };
        if expected != kind {
            return Err(Error::InvalidLabel(format!("{kind} with {n} peers out of {}", n_subjects.saturating_sub(1))));
        }
        Ok(Self { kind, peers })
    }

    /// Label whose kind follows from the peer-set cardinality.
    pub fn from_peers(peers: BTreeSet<usize>, subject: usize, n_subjects: usize) -> Result<Self> {
        let n = peers.len();
        let kind = if n == 0 {
            SourceKind::Individual
        } else if n + 1 == n_subjects {
            SourceKind::Joint
        } else {
            SourceKind::PartiallyJoint
        };
        Self::new(kind, peers, subject, n_subjects)
    }

    pub fn joint(subject: usize, n_subjects: usize) -> Self {
        let peers = (0..n_subjects).filter(|&j| j != subject).collect();
        if n_subjects == 1 {
            // With a single subject nothing can be shared.
            return Self::individual();
        }
        Self { kind: SourceKind::Joint, peers }
    }

    pub fn individual() -> Self {
        Self { kind: SourceKind::Individual, peers: BTreeSet::new() }
    }

    pub fn kind(&self) -> SourceKind {
        self.kind
    }

    pub fn peers(&self) -> &BTreeSet<usize> {
        &self.peers
    }
}

/// Simulation ground truth. Row `c` of `sources[k]` is labelled by `labels[k][c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub sources: Vec<DMatrix<f64>>,
    pub mixing: Vec<DMatrix<f64>>,
    pub labels: Vec<Vec<SourceLabel>>,
    pub joint_count: usize,
    pub pjoint_counts: Vec<usize>,
    pub individual_counts: Vec<usize>,
    /// Cluster index of every subject.
    pub cluster_of: Vec<usize>,
}

impl GroundTruth {
    pub fn n_subjects(&self) -> usize {
        self.sources.len()
    }

    pub fn count(&self, k: usize, kind: SourceKind) -> usize {
        self.labels[k].iter().filter(|l| l.kind() == kind).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self { w2: 0.5, w3: 0.75, w4: 1.0 }
    }
}

impl Weights {
    pub fn get(&self, order: usize) -> f64 {
        match order {
            2 => self.w2,
            3 => self.w3,
            4 => self.w4,
            _ => 0.0,
        }
    }

    pub fn sum(&self) -> f64 {
        self.w2 + self.w3 + self.w4
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentPolicy {
    /// BIC per subject, each subject keeps its own order.
    AutoBic,
    /// BIC per subject, then every subject uses the smallest order.
    GlobalMin,
    /// Same order for everyone.
    Fixed(usize),
    PerSubject(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sigma0 {
    Auto,
    Fixed(f64),
}

/// How a cumulant vector is estimated from V voxels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// One sample cumulant per order, averaged over voxels, then outer products.
    SampleCumulant,
    /// Experimental: per-voxel outer products averaged afterwards.
    PerVoxel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    pub weights: Weights,
    pub max_outer: usize,
    pub eps0: f64,
    pub inner_max_iter: usize,
    pub n_components: ComponentPolicy,
    /// Upper bound for the BIC search; `None` means `min(N - 1, 64)`.
    pub c_max: Option<usize>,
    pub seed: u64,
    pub sigma0: Sigma0,
    pub noise_snr_db: Option<f64>,
    /// Relative tolerance separating joint from partially-joint contributions.
    pub tau_joint: f64,
    /// Individual mode starts when the top peer eigenvalue is below this multiple of the null level.
    pub individual_gamma: f64,
    /// Fixed number of subject clusters for partially-joint slots; `None` selects 2 or 3 by silhouette.
    pub clusters: Option<usize>,
    pub estimator: Estimator,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        Self {
            weights: Weights::default(),
            max_outer: 5,
            eps0: 1e-6,
            inner_max_iter: 200,
            n_components: ComponentPolicy::GlobalMin,
            c_max: None,
            seed: 0,
            sigma0: Sigma0::Auto,
            noise_snr_db: None,
            tau_joint: 0.15,
            individual_gamma: 10.0,
            clusters: None,
            estimator: Estimator::SampleCumulant,
        }
    }
}

impl AlgoConfig {
    pub fn validate(&self) -> Result<()> {
        let w = self.weights;
        if !(w.w2 > 0.0 && w.w3 > 0.0 && w.w4 > 0.0) || !(w.w2.is_finite() && w.w3.is_finite() && w.w4.is_finite()) {
            return Err(Error::InvalidConfig("weights must be positive and finite".into()));
        }
        if !(self.eps0 > 0.0) {
            return Err(Error::InvalidConfig("eps0 must be positive".into()));
        }
        if self.max_outer < 1 {
            return Err(Error::InvalidConfig("max_outer must be at least 1".into()));
        }
        if self.inner_max_iter < 1 {
            return Err(Error::InvalidConfig("inner_max_iter must be at least 1".into()));
        }
        if !(self.tau_joint > 0.0) || !(self.individual_gamma > 0.0) {
            return Err(Error::InvalidConfig("tau_joint and individual_gamma must be positive".into()));
        }
        if let Sigma0::Fixed(s) = self.sigma0 {
            if !(s > 0.0) {
                return Err(Error::InvalidConfig("sigma0 must be positive".into()));
            }
        }
        if let Some(c) = self.clusters {
            if c < 1 {
                return Err(Error::InvalidConfig("clusters must be at least 1".into()));
            }
        }
        Ok(())
    }
}

/// Cost values of one inner extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub sweep: usize,
    pub slot: usize,
    pub subject: usize,
    pub individual: bool,
    pub converged: bool,
    pub costs: Vec<f64>,
}

/// Result of a decomposition. Slot-indexed data is `[slot][subject]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub subject_ids: Vec<String>,
    /// Combined reduction and whitening map, `C_k × N_k`; `Z = W (O - rowmeans)`.
    pub whiteners: Vec<DMatrix<f64>>,
    pub z: Vec<DMatrix<f64>>,
    /// Demixing rows, `slots × C_k`, unit norm.
    pub u: Vec<DMatrix<f64>>,
    /// Estimated sources `U Z`, `slots × V`.
    pub y: Vec<DMatrix<f64>>,
    /// JpJI-feature of every source, `slots × K`.
    pub features: DMatrix<f64>,
    /// Per-peer-position contributions `D_α` behind each feature.
    pub contributions: Vec<Vec<Vec<f64>>>,
    pub labels: Vec<Vec<SourceLabel>>,
    pub sigma_opt: Option<f64>,
    pub trace: Vec<TraceEntry>,
    pub warnings: Vec<String>,
    pub sweeps: usize,
}

impl Decomposition {
    pub fn n_subjects(&self) -> usize {
        self.u.len()
    }

    pub fn n_slots(&self) -> usize {
        self.u.first().map_or(0, |u| u.nrows())
    }

    pub fn source(&self, slot: usize, subject: usize) -> Vec<f64> {
        self.y[subject].row(slot).iter().copied().collect()
    }

    pub fn count(&self, subject: usize, kind: SourceKind) -> usize {
        self.labels.iter().filter(|row| row[subject].kind() == kind).count()
    }
}

/// Checks shared V, finite data and a non-empty list; a single subject is allowed with a warning.
pub fn validate_analysis_input(datasets: &[SubjectDataset], config: &AlgoConfig) -> Result<Vec<String>> {
    config.validate()?;
    let first = datasets.first().ok_or(Error::EmptyInput)?;
    let v = first.n_voxels();
    for (k, d) in datasets.iter().enumerate() {
        if d.n_voxels() != v {
            return Err(Error::MismatchedVoxelCount { subject: k, expected: v, found: d.n_voxels() });
        }
        if d.observations.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteData(format!("subject {}", d.id)));
        }
        if d.n_time() < 2 {
            return Err(Error::DegenerateSampleCount(d.n_time()));
        }
    }
    if v < 2 {
        return Err(Error::DegenerateSampleCount(v));
    }
    let mut warnings = Vec::new();
    if datasets.len() == 1 {
        warnings.push("single subject: analysis reduces to single-dataset ICA".to_string());
    } else if datasets.len() < 5 {
        warnings.push(format!("{} subjects: partially-joint detection needs at least 5", datasets.len()));
    }
    Ok(warnings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(id: &str, n: usize, v: usize) -> SubjectDataset {
        SubjectDataset::new(id, DMatrix::from_fn(n, v, |i, j| (i * v + j) as f64)).unwrap()
    }

    #[test]
    fn ten_subjects_validate() {
        let d: Vec<_> = (0..10).map(|k| ds(&format!("s{k}"), 20, 4096)).collect();
        assert!(validate_analysis_input(&d, &AlgoConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn mismatched_voxels() {
        let d = vec![ds("a", 5, 100), ds("b", 5, 101)];
        assert!(matches!(
            validate_analysis_input(&d, &AlgoConfig::default()),
            Err(Error::MismatchedVoxelCount { subject: 1, expected: 100, found: 101 })
        ));
    }

    #[test]
    fn single_subject_warns() {
        let w = validate_analysis_input(&[ds("a", 5, 10)], &AlgoConfig::default()).unwrap();
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn empty_and_nonfinite() {
        assert_eq!(validate_analysis_input(&[], &AlgoConfig::default()), Err(Error::EmptyInput));
        let mut m = DMatrix::zeros(3, 3);
        m[(1, 1)] = f64::NAN;
        assert!(SubjectDataset::new("x", m).is_err());
    }

    #[test]
    fn label_kinds_follow_peer_sets() {
        let all: BTreeSet<usize> = [0, 2, 3].into();
        assert_eq!(SourceLabel::from_peers(all.clone(), 1, 4).unwrap().kind(), SourceKind::Joint);
        assert_eq!(SourceLabel::from_peers([2].into(), 1, 4).unwrap().kind(), SourceKind::PartiallyJoint);
        assert_eq!(SourceLabel::from_peers(BTreeSet::new(), 1, 4).unwrap().kind(), SourceKind::Individual);
        assert!(SourceLabel::new(SourceKind::Joint, [2].into(), 1, 4).is_err());
        assert!(SourceLabel::new(SourceKind::PartiallyJoint, all, 1, 4).is_err());
        assert!(SourceLabel::new(SourceKind::Individual, [1].into(), 1, 4).is_err());
        assert_eq!(SourceLabel::joint(1, 4).peers().len(), 3);
    }

    #[test]
    fn config_rejects_bad_values() {
        let mut c = AlgoConfig::default();
        assert!(c.validate().is_ok());
        c.weights.w3 = 0.0;
        assert!(c.validate().is_err());
        let c = AlgoConfig { eps0: 0.0, ..AlgoConfig::default() };
        assert!(c.validate().is_err());
        let c = AlgoConfig { max_outer: 0, ..AlgoConfig::default() };
        assert!(c.validate().is_err());
    }
}
