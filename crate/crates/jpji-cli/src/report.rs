//! Plot-ready tables from a set of evaluation reports.
//!
//! Reports that share a configuration are averaged; each table is sorted by
//! its key columns.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use crate::evaluate::{EvaluationFile, SweepMetrics};
use crate::io::{self, fmt_f64};
use crate::{CliError, ReportArgs, EXIT_EMPTY_REPORT};

const METRICS: [&str; 5] = ["jsir_db", "acc_c_joint", "acc_c_pjoint", "acc_c_individual", "acc_k"];

fn snr_key(s: Option<f64>) -> String {
    s.map_or_else(|| "inf".to_string(), |v| v.to_string())
}

/// Sort key that orders SNRs numerically, the noiseless entry last.
fn snr_order(s: &str) -> u64 {
    let b = s.parse().unwrap_or(f64::INFINITY).to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | 1 << 63
    }
}

#[derive(Default)]
struct Mean {
    runs: usize,
    sums: [f64; 5],
}

impl Mean {
    fn add(&mut self, m: &SweepMetrics) {
        self.runs += 1;
        for (s, v) in self.sums.iter_mut().zip([m.jsir_db, m.acc_c_joint, m.acc_c_pjoint, m.acc_c_individual, m.acc_k]) {
            *s += v;
        }
    }

    fn fields(&self) -> Vec<String> {
        let mut out = vec![self.runs.to_string()];
        out.extend(self.sums.iter().map(|s| fmt_f64(s / self.runs as f64)));
        out
    }
}

fn header(keys: &[&'static str]) -> Vec<&'static str> {
    let mut h = keys.to_vec();
    h.push("runs");
    h.extend(METRICS);
    h
}

/// Expands directories into the `*.json` files they contain, in name order.
pub fn collect_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| CliError::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|e| e == "json"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

pub fn run(a: &ReportArgs) -> Result<(), CliError> {
    let files = collect_inputs(&a.inputs)?;
    if files.is_empty() {
        return Err(CliError::new(EXIT_EMPTY_REPORT, "no evaluation reports given".to_string()));
    }
    let reports = files.iter().map(|f| io::read_json::<EvaluationFile>(f)).collect::<Result<Vec<_>, _>>()?;
    io::create_dir(&a.out)?;

    // (algorithm, K, snr, sweep)
    let mut convergence: BTreeMap<(String, usize, String, usize), Mean> = BTreeMap::new();
    let mut by_k: BTreeMap<(String, String, usize), Mean> = BTreeMap::new();
    let mut by_snr: BTreeMap<(String, usize, u64, String), Mean> = BTreeMap::new();
    let mut by_algo: BTreeMap<String, Mean> = BTreeMap::new();
    let mut scatter = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        let snr = snr_key(r.snr_db);
        for s in &r.per_sweep {
            convergence.entry((r.algorithm.clone(), r.n_subjects, snr.clone(), s.sweep)).or_default().add(s);
        }
        let last = r.per_sweep.iter().find(|s| s.sweep == r.sweeps).cloned().unwrap_or(SweepMetrics {
            sweep: r.sweeps,
            jsir_db: r.summary.jsir_db,
            acc_c_joint: r.summary.acc_c_joint,
            acc_c_pjoint: r.summary.acc_c_pjoint,
            acc_c_individual: r.summary.acc_c_individual,
            acc_k: r.summary.acc_k,
        });
        by_k.entry((r.algorithm.clone(), snr.clone(), r.n_subjects)).or_default().add(&last);
        by_snr.entry((r.algorithm.clone(), r.n_subjects, snr_order(&snr), snr.clone())).or_default().add(&last);
        by_algo.entry(r.algorithm.clone()).or_default().add(&last);
        for p in &r.feature_kurtosis {
            scatter.push(vec![
                i.to_string(),
                r.algorithm.clone(),
                p.slot.to_string(),
                p.subject.to_string(),
                p.kind.clone(),
                fmt_f64(p.kurtosis),
                fmt_f64(p.jpjif),
            ]);
        }
    }
    let table = |keys: Vec<String>, m: &Mean| [keys, m.fields()].concat();
    let rows: Vec<Vec<String>> = convergence
        .iter()
        .map(|((a, k, s, w), m)| table(vec![a.clone(), k.to_string(), s.clone(), w.to_string()], m))
        .collect();
    io::write_table(&a.out.join("convergence.csv"), &header(&["algorithm", "n_subjects", "snr_db", "sweep"]), &rows)?;
    let rows: Vec<Vec<String>> = by_k.iter().map(|((a, s, k), m)| table(vec![a.clone(), s.clone(), k.to_string()], m)).collect();
    io::write_table(&a.out.join("metric_vs_subjects.csv"), &header(&["algorithm", "snr_db", "n_subjects"]), &rows)?;
    let rows: Vec<Vec<String>> = by_snr.iter().map(|((a, k, _, s), m)| table(vec![a.clone(), k.to_string(), s.clone()], m)).collect();
    io::write_table(&a.out.join("metric_vs_snr.csv"), &header(&["algorithm", "n_subjects", "snr_db"]), &rows)?;
    let rows: Vec<Vec<String>> = by_algo.iter().map(|(a, m)| table(vec![a.clone()], m)).collect();
    io::write_table(&a.out.join("algorithms.csv"), &header(&["algorithm"]), &rows)?;
    io::write_table(
        &a.out.join("feature_kurtosis.csv"),
        &["report", "algorithm", "slot", "subject", "kind", "kurtosis", "jpjif"],
        &scatter,
    )
}
