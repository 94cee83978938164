use std::path::Path;

use jpji::metrics::{evaluate_estimates, EvaluationReport, RunEvaluation};
use jpji::numerics::stats::excess_kurtosis;
use jpji::GroundTruth;
use serde::{Deserialize, Serialize};

use crate::decompose::{load_results, read_labels, snapshot_dir, RunInfo};
use crate::io::{self};
use crate::{CliError, EvaluateArgs, EXIT_NO_TRUTH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMetrics {
    pub sweep: usize,
    pub jsir_db: f64,
    pub acc_c_joint: f64,
    pub acc_c_pjoint: f64,
    pub acc_c_individual: f64,
    pub acc_k: f64,
}

impl SweepMetrics {
    fn new(sweep: usize, r: &EvaluationReport) -> Self {
        Self {
            sweep,
            jsir_db: r.jsir_db,
            acc_c_joint: r.acc_c_joint,
            acc_c_pjoint: r.acc_c_pjoint,
            acc_c_individual: r.acc_c_individual,
            acc_k: r.acc_k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePoint {
    pub slot: usize,
    pub subject: usize,
    pub kind: String,
    pub kurtosis: f64,
    pub jpjif: f64,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationFile {
    pub algorithm: String,
    pub n_subjects: usize,
    /// `None` for noiseless data.
    pub snr_db: Option<f64>,
    pub sweeps: usize,
    pub data_seed: u64,
    pub summary: EvaluationReport,
    /// One entry per stored snapshot plus the final sweep.
    pub per_sweep: Vec<SweepMetrics>,
    pub feature_kurtosis: Vec<FeaturePoint>,
}

fn score(truth: &GroundTruth, dir: &Path, info: &RunInfo) -> Result<RunEvaluation, CliError> {
    let (_, dec) = if dir.join("labels.csv").exists() {
        load_results(dir)?
    } else {
        return Err(CliError::general(format!("{}: not a results directory", dir.display())));
    };
    let labels = read_labels(&dir.join("labels.csv"), info.n_slots, info.subject_ids.len())?;
    Ok(evaluate_estimates(truth, &dec.y, &labels))
}

pub fn run(a: &EvaluateArgs) -> Result<(), CliError> {
    let manifest = io::read_manifest(&a.data)?;
    let truth = io::load_truth(&a.data, &manifest)?
        .ok_or_else(|| CliError::new(EXIT_NO_TRUTH, format!("{}: dataset has no ground truth", a.data.display())))?;
    let (info, dec) = load_results(&a.results)?;
    let final_eval = score(&truth, &a.results, &info)?;
    for w in &final_eval.warnings {
        eprintln!("warning: {w}");
    }
    let summary = EvaluationReport::from_runs(std::slice::from_ref(&final_eval));
    let mut per_sweep = Vec::new();
    for &s in info.snapshots.iter().filter(|&&s| s != info.sweeps) {
        let dir = a.results.join(snapshot_dir(s));
        let (snap_info, _) = load_results(&dir)?;
        let ev = score(&truth, &dir, &snap_info)?;
        per_sweep.push(SweepMetrics::new(s, &EvaluationReport::from_runs(&[ev])));
    }
    per_sweep.push(SweepMetrics::new(info.sweeps, &summary));
    let mut feature_kurtosis = Vec::new();
    for c in 0..dec.n_slots() {
        for k in 0..dec.n_subjects() {
            if let Some(kurtosis) = excess_kurtosis(&dec.source(c, k)) {
                feature_kurtosis.push(FeaturePoint {
                    slot: c,
                    subject: k,
                    kind: dec.labels[c][k].kind().short().to_string(),
                    kurtosis,
                    jpjif: dec.features[(c, k)],
                });
            }
        }
    }
    let file = EvaluationFile {
        algorithm: info.algorithm.clone(),
        n_subjects: truth.n_subjects(),
        snr_db: manifest.spec.as_ref().and_then(|s| s.snr_db),
        sweeps: info.sweeps,
        data_seed: manifest.seed,
        summary,
        per_sweep,
        feature_kurtosis,
    };
    let out = a.out.clone().unwrap_or_else(|| a.results.join("report.json"));
    io::write_json(&out, &file)
}
