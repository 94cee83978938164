//! Evaluation against ground truth: matching, jSIR, Acc(C) and Acc(K̃_all).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::numerics::stats::correlation;
use crate::types::{Decomposition, GroundTruth, SourceKind, SourceLabel};

/// jSIR of a single pair is clamped to this magnitude.
pub const JSIR_CLAMP_DB: f64 = 120.0;

/// Minimum-cost assignment of rows to columns (`rows ≤ cols`), shortest augmenting paths with potentials.
pub fn hungarian(cost: &DMatrix<f64>) -> Vec<usize> {
    let (n, m) = cost.shape();
    assert!(n <= m, "hungarian needs rows <= cols");
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Pairing of true sources with estimated rows for one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// `estimate[i]` is the estimated row matched to true source `i`, if any.
    pub estimate: Vec<Option<usize>>,
    /// +1 or -1 so that the signed correlation is non-negative.
    pub signs: Vec<f64>,
    /// |corr| of each matched pair (0 when unmatched).
    pub corr: Vec<f64>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Maximises the total |corr| between true rows and estimated rows.
pub fn match_sources(truth: &DMatrix<f64>, est: &DMatrix<f64>) -> Matching {
    let t = rows(truth);
    let e = rows(est);
    let corr = DMatrix::from_fn(t.len(), e.len(), |i, j| correlation(&t[i], &e[j]));
    let mut estimate = vec![None; t.len()];
    if t.len() <= e.len() {
        for (i, j) in hungarian(&corr.map(|c| -c.abs())).into_iter().enumerate() {
            estimate[i] = Some(j);
        }
    } else {
        for (j, i) in hungarian(&corr.transpose().map(|c| -c.abs())).into_iter().enumerate() {
            estimate[i] = Some(j);
        }
    }
    let signs = estimate.iter().enumerate().map(|(i, e)| e.map_or(1.0, |j| if corr[(i, j)] < 0.0 { -1.0 } else { 1.0 })).collect();
    let abs = estimate.iter().enumerate().map(|(i, e)| e.map_or(0.0, |j| corr[(i, j)].abs())).collect();
    Matching { estimate, signs, corr: abs }
}

/// `10 log10(ρ / (2(1 - ρ)))` for unit-variance vectors with correlation ρ, clamped.
pub fn jsir_from_corr(rho: f64) -> f64 {
    if rho <= 0.0 {
        return -JSIR_CLAMP_DB;
    }
    if rho >= 1.0 {
        return JSIR_CLAMP_DB;
    }
    (10.0 * (rho / (2.0 * (1.0 - rho))).log10()).clamp(-JSIR_CLAMP_DB, JSIR_CLAMP_DB)
}

/// Direct form `10 log10(s·y / |s - y|²)` on normalised, sign-aligned vectors.
pub fn jsir_vectors(s: &[f64], y: &[f64]) -> f64 {
    let norm = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let sd = (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
        x.iter().map(|v| (v - m) / sd).collect::<Vec<f64>>()
    };
    let (s, mut y) = (norm(s), norm(y));
    if correlation(&s, &y) < 0.0 {
        y.iter_mut().for_each(|v| *v = -*v);
    }
    let num: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
    let den: f64 = s.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
    if den == 0.0 {
        return JSIR_CLAMP_DB;
    }
    if num <= 0.0 {
        return -JSIR_CLAMP_DB;
    }
    (10.0 * (num / den).log10()).clamp(-JSIR_CLAMP_DB, JSIR_CLAMP_DB)
}

/// Evaluation of one decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEvaluation {
    pub jsir_db: f64,
    pub jsir_per_subject: Vec<f64>,
    /// Whether every subject's estimated count of each kind is exact, in J, PJ, I order.
    pub counts_ok: [bool; 3],
    /// Exact peer-set matches and the number of (subject, true source) pairs.
    pub peer_hits: usize,
    pub peer_total: usize,
    pub matchings: Vec<Matching>,
    pub warnings: Vec<String>,
}

impl RunEvaluation {
    pub fn acc_k(&self) -> f64 {
        if self.peer_total == 0 {
            100.0
        } else {
            100.0 * self.peer_hits as f64 / self.peer_total as f64
        }
    }
}

fn kind_index(kind: SourceKind) -> usize {
    match kind {
        SourceKind::Joint => 0,
        SourceKind::PartiallyJoint => 1,
        SourceKind::Individual => 2,
    }
}

pub fn evaluate_run(truth: &GroundTruth, dec: &Decomposition) -> RunEvaluation {
    evaluate_estimates(truth, &dec.y, &dec.labels)
}

/// As [`evaluate_run`] from the estimated maps `y[k]` and labels `[slot][subject]` alone.
pub fn evaluate_estimates(truth: &GroundTruth, y: &[DMatrix<f64>], labels: &[Vec<SourceLabel>]) -> RunEvaluation {
    let n_est = y.len();
    let slots = labels.len();
    let k_total = truth.n_subjects().min(n_est);
    let mut warnings = Vec::new();
    if truth.n_subjects() != n_est {
        warnings.push(format!("truth has {} subjects, decomposition {n_est}", truth.n_subjects()));
    }
    let mut counts_ok = [true; 3];
    let mut peer_hits = 0;
    let mut peer_total = 0;
    let mut per_subject = Vec::with_capacity(k_total);
    let mut matchings = Vec::with_capacity(k_total);
    for k in 0..k_total {
        let s = &truth.sources[k];
        if s.nrows() != slots {
            warnings.push(format!("subject {k}: {} true sources, {slots} estimated", s.nrows()));
        }
        let m = match_sources(s, &y[k]);
        let js: Vec<f64> = m.estimate.iter().zip(&m.corr).filter(|(e, _)| e.is_some()).map(|(_, &r)| jsir_from_corr(r)).collect();
        per_subject.push(if js.is_empty() { -JSIR_CLAMP_DB } else { js.iter().sum::<f64>() / js.len() as f64 });
        let mut est_counts = [0usize; 3];
        for row in labels {
            est_counts[kind_index(row[k].kind())] += 1;
        }
        let mut true_counts = [0usize; 3];
        for l in &truth.labels[k] {
            true_counts[kind_index(l.kind())] += 1;
        }
        for i in 0..3 {
            if est_counts[i] != true_counts[i] {
                counts_ok[i] = false;
            }
        }
        for (i, e) in m.estimate.iter().enumerate() {
            peer_total += 1;
            if let Some(c) = *e {
                if labels[c][k].peers() == truth.labels[k][i].peers() {
                    peer_hits += 1;
                }
            }
        }
        matchings.push(m);
    }
    let jsir_db = if per_subject.is_empty() { -JSIR_CLAMP_DB } else { per_subject.iter().sum::<f64>() / per_subject.len() as f64 };
    RunEvaluation { jsir_db, jsir_per_subject: per_subject, counts_ok, peer_hits, peer_total, matchings, warnings }
}

/// Percentage of runs with exact counts, per kind (J, PJ, I).
pub fn acc_c(runs: &[RunEvaluation]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (i, o) in out.iter_mut().enumerate() {
        let ok = runs.iter().filter(|r| r.counts_ok[i]).count();
        *o = if runs.is_empty() { 0.0 } else { 100.0 * ok as f64 / runs.len() as f64 };
    }
    out
}

/// Exact peer-set matches averaged over runs, subjects and sources.
pub fn acc_k(runs: &[RunEvaluation]) -> f64 {
    let hits: usize = runs.iter().map(|r| r.peer_hits).sum();
    let total: usize = runs.iter().map(|r| r.peer_total).sum();
    if total == 0 {
        100.0
    } else {
        100.0 * hits as f64 / total as f64
    }
}

pub fn mean_jsir(runs: &[RunEvaluation]) -> f64 {
    runs.iter().map(|r| r.jsir_db).sum::<f64>() / runs.len().max(1) as f64
}

/// Aggregate over runs, as written by `jpji evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub jsir_db: f64,
    pub jsir_per_subject: Vec<f64>,
    pub acc_c_joint: f64,
    pub acc_c_pjoint: f64,
    pub acc_c_individual: f64,
    pub acc_k: f64,
    pub matchings: Vec<Matching>,
}

impl EvaluationReport {
    pub fn from_runs(runs: &[RunEvaluation]) -> Self {
        let c = acc_c(runs);
        let k_total = runs.first().map_or(0, |r| r.jsir_per_subject.len());
        let jsir_per_subject = (0..k_total)
            .map(|k| runs.iter().map(|r| r.jsir_per_subject[k]).sum::<f64>() / runs.len() as f64)
            .collect();
        Self {
            jsir_db: mean_jsir(runs),
            jsir_per_subject,
            acc_c_joint: c[0],
            acc_c_pjoint: c[1],
            acc_c_individual: c[2],
            acc_k: acc_k(runs),
            matchings: runs.last().map(|r| r.matchings.clone()).unwrap_or_default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_example() {
        assert!((jsir_from_corr(0.9) - 6.532125137753437).abs() < 1e-12);
        assert_eq!(jsir_from_corr(1.0), 120.0);
        assert_eq!(jsir_from_corr(-0.2), -120.0);
    }

    #[test]
    fn hungarian_small() {
        let c = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0]);
        assert_eq!(hungarian(&c), vec![1, 0, 2]);
    }

    #[test]
    fn swapped_and_negated_rows() {
        let s = DMatrix::from_row_slice(3, 5, &[1.0, 2.0, 0.0, -1.0, 3.0, 0.0, 1.0, 4.0, 1.0, -2.0, 2.0, -1.0, 1.0, 0.0, 5.0]);
        let mut e = s.clone();
        e.swap_rows(0, 1);
        e.row_mut(2).neg_mut();
        let m = match_sources(&s, &e);
        assert_eq!(m.estimate, vec![Some(1), Some(0), Some(2)]);
        assert_eq!(m.signs, vec![1.0, 1.0, -1.0]);
    }
}
