//! `decompose` and `classify`, plus the results-directory layout they share.

use std::path::Path;

use jpji::baseline::{run_ji_thica, sigma0_from_jpji, JiThicaConfig};
use jpji::engine::run_jpji_ica_with_snapshots;
use jpji::typing::{classify as classify_labels, classify_by_spatial};
use jpji::{AlgoConfig, ComponentPolicy, Decomposition, Estimator, Sigma0, SourceLabel, Weights};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::io::{self, fmt_f64, MatrixFormat};
use crate::{Algorithm, ClassifyArgs, CliError, DecomposeArgs, EstimatorArg, EXIT_INVALID_SPEC, EXIT_VALIDATION};

pub const RUN_INFO: &str = "run.json";
pub const FEATURES_HEADER: &[&str] = &["slot", "subject", "jpjif"];
pub const CONTRIB_HEADER: &[&str] = &["slot", "subject", "alpha", "value"];
pub const LABELS_HEADER: &[&str] = &["slot", "subject", "kind", "peers"];
pub const TRACE_HEADER: &[&str] = &["sweep", "slot", "subject", "mode", "converged", "step", "cost"];
pub const SPATIAL_HEADER: &[&str] = &["slot", "kind", "discoveries"];

/// Echo of a run, written as `run.json` next to its matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub algorithm: String,
    pub config: AlgoConfig,
    /// JI-ThICA threshold.
    pub sigma0: Option<f64>,
    pub sigma_opt: Option<f64>,
    pub sweeps: usize,
    pub subject_ids: Vec<String>,
    /// Reduced dimension of every subject.
    pub orders: Vec<usize>,
    pub n_slots: usize,
    pub n_voxels: usize,
    /// Sweeps written to `sweep_NN/` subdirectories.
    pub snapshots: Vec<usize>,
    pub warnings: Vec<String>,
}

pub fn snapshot_dir(sweep: usize) -> String {
    format!("sweep_{sweep:02}")
}

fn lib_err(e: jpji::Error) -> CliError {
    CliError::new(EXIT_VALIDATION, e.to_string())
}

fn parse_components(s: &str) -> Result<ComponentPolicy, CliError> {
    match s {
        "auto" => Ok(ComponentPolicy::AutoBic),
        "min" => Ok(ComponentPolicy::GlobalMin),
        n => n
            .parse()
            .map(ComponentPolicy::Fixed)
            .map_err(|_| CliError::new(EXIT_INVALID_SPEC, format!("--components expects auto, min or a count, got {n:?}"))),
    }
}

fn parse_sigma0(s: &str) -> Result<Option<f64>, CliError> {
    if s == "auto" {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(Some(v)),
        _ => Err(CliError::new(EXIT_INVALID_SPEC, format!("--sigma0 expects auto or a positive number, got {s:?}"))),
    }
}

pub fn config_from_args(a: &DecomposeArgs) -> Result<AlgoConfig, CliError> {
    let base = AlgoConfig::default();
    let weights = match &a.weights {
        Some(w) => Weights { w2: w[0], w3: w[1], w4: w[2] },
        None => base.weights,
    };
    let sigma0 = match (a.algorithm, parse_sigma0(&a.sigma0)?) {
        (Algorithm::Jpji, Some(s)) => Sigma0::Fixed(s),
        _ => Sigma0::Auto,
    };
    let cfg = AlgoConfig {
        weights,
        max_outer: a.max_iter,
        eps0: a.eps0,
        n_components: parse_components(&a.components)?,
        c_max: a.c_max,
        seed: a.seed,
        sigma0,
        tau_joint: a.tau.unwrap_or(base.tau_joint),
        individual_gamma: a.gamma.unwrap_or(base.individual_gamma),
        clusters: a.clusters,
        estimator: match a.estimator {
            EstimatorArg::Sample => Estimator::SampleCumulant,
            EstimatorArg::PerVoxel => Estimator::PerVoxel,
        },
        ..base
    };
    cfg.validate().map_err(|e| CliError::new(EXIT_INVALID_SPEC, e.to_string()))?;
    Ok(cfg)
}

fn jithica_config(cfg: &AlgoConfig, sigma0: f64) -> JiThicaConfig {
    JiThicaConfig {
        weights: cfg.weights,
        eps0: cfg.eps0,
        max_outer: cfg.max_outer,
        inner_max_iter: cfg.inner_max_iter,
        n_components: cfg.n_components.clone(),
        c_max: cfg.c_max,
        ..JiThicaConfig::new(sigma0, cfg.seed)
    }
}

pub fn run(a: &DecomposeArgs) -> Result<(), CliError> {
    let cfg = config_from_args(a)?;
    let data = io::load_dataset(&a.data)?;
    let format = MatrixFormat::from_flag(a.binary);
    let mut snapshots: Vec<usize> = a.snapshots.clone();
    snapshots.sort_unstable();
    snapshots.dedup();
    if snapshots.iter().any(|&s| s == 0 || s > cfg.max_outer) {
        return Err(CliError::new(EXIT_INVALID_SPEC, format!("--snapshots must lie in 1..={}", cfg.max_outer)));
    }
    let (dec, snaps, sigma0) = match a.algorithm {
        Algorithm::Jpji => {
            let (dec, snaps) = run_jpji_ica_with_snapshots(&data.datasets, &cfg, &snapshots).map_err(lib_err)?;
            (dec, snaps, None)
        }
        Algorithm::Jithica => {
            if !snapshots.is_empty() {
                return Err(CliError::new(EXIT_INVALID_SPEC, "--snapshots is only supported for --algorithm jpji".to_string()));
            }
            let sigma0 = match parse_sigma0(&a.sigma0)? {
                Some(s) => s,
                None => {
                    let reference = jpji::run_jpji_ica(&data.datasets, &cfg).map_err(lib_err)?;
                    sigma0_from_jpji(&reference)
                        .ok_or_else(|| CliError::new(EXIT_VALIDATION, "cannot derive sigma0: no feature threshold from JpJI-ICA".to_string()))?
                }
            };
            (run_ji_thica(&data.datasets, &jithica_config(&cfg, sigma0)).map_err(lib_err)?, Vec::new(), Some(sigma0))
        }
    };
    for w in &dec.warnings {
        eprintln!("warning: {w}");
    }
    let name = match a.algorithm {
        Algorithm::Jpji => "jpji",
        Algorithm::Jithica => "jithica",
    };
    let info = |d: &Decomposition, snaps: Vec<usize>| RunInfo {
        algorithm: name.into(),
        config: cfg.clone(),
        sigma0,
        sigma_opt: d.sigma_opt,
        sweeps: d.sweeps,
        subject_ids: d.subject_ids.clone(),
        orders: d.u.iter().map(|u| u.ncols()).collect(),
        n_slots: d.n_slots(),
        n_voxels: d.y.first().map_or(0, |y| y.ncols()),
        snapshots: snaps,
        warnings: d.warnings.clone(),
    };
    write_results(&a.out, &dec, &info(&dec, snapshots.clone()), format)?;
    for s in &snaps {
        write_results(&a.out.join(snapshot_dir(s.sweeps)), s, &info(s, Vec::new()), format)?;
    }
    Ok(())
}

pub fn labels_rows(labels: &[Vec<SourceLabel>]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (c, row) in labels.iter().enumerate() {
        for (k, l) in row.iter().enumerate() {
            rows.push(vec![c.to_string(), k.to_string(), l.kind().short().to_string(), io::peers_to_string(l)]);
        }
    }
    rows
}

pub fn write_results(dir: &Path, dec: &Decomposition, info: &RunInfo, format: MatrixFormat) -> Result<(), CliError> {
    io::create_dir(dir)?;
    for (k, id) in dec.subject_ids.iter().enumerate() {
        io::write_matrix(&dir.join(io::file_name("u", id, format)), &dec.u[k])?;
        io::write_matrix(&dir.join(io::file_name("y", id, format)), &dec.y[k])?;
    }
    let mut features = Vec::new();
    let mut contrib = Vec::new();
    for c in 0..dec.n_slots() {
        for k in 0..dec.n_subjects() {
            features.push(vec![c.to_string(), k.to_string(), fmt_f64(dec.features[(c, k)])]);
            for (alpha, v) in dec.contributions[c][k].iter().enumerate() {
                contrib.push(vec![c.to_string(), k.to_string(), alpha.to_string(), fmt_f64(*v)]);
            }
        }
    }
    io::write_table(&dir.join("features.csv"), FEATURES_HEADER, &features)?;
    io::write_table(&dir.join("contributions.csv"), CONTRIB_HEADER, &contrib)?;
    io::write_table(&dir.join("labels.csv"), LABELS_HEADER, &labels_rows(&dec.labels))?;
    let mut trace = Vec::new();
    for t in &dec.trace {
        let mode = if t.individual { "individual" } else { "joint" };
        for (i, c) in t.costs.iter().enumerate() {
            trace.push(vec![
                t.sweep.to_string(),
                t.slot.to_string(),
                t.subject.to_string(),
                mode.to_string(),
                t.converged.to_string(),
                i.to_string(),
                fmt_f64(*c),
            ]);
        }
    }
    io::write_table(&dir.join("cost_trace.csv"), TRACE_HEADER, &trace)?;
    io::write_json(&dir.join(RUN_INFO), info)
}

fn field<T: std::str::FromStr>(row: &[String], i: usize, path: &Path) -> Result<T, CliError> {
    row.get(i)
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| CliError::general(format!("{}: malformed row {row:?}", path.display())))
}

/// Reads a results directory back into a [`Decomposition`] (without the whitening data or cost trace).
pub fn load_results(dir: &Path) -> Result<(RunInfo, Decomposition), CliError> {
    let info: RunInfo = io::read_json(&dir.join(RUN_INFO))?;
    let k_total = info.subject_ids.len();
    let slots = info.n_slots;
    let mut u = Vec::with_capacity(k_total);
    let mut y = Vec::with_capacity(k_total);
    for (k, id) in info.subject_ids.iter().enumerate() {
        let uk = io::read_matrix(&io::find_matrix(dir, "u", id)?)?;
        let yk = io::read_matrix(&io::find_matrix(dir, "y", id)?)?;
        if uk.shape() != (slots, info.orders[k]) || yk.shape() != (slots, info.n_voxels) {
            return Err(CliError::general(format!("{}: matrices of subject {id} do not match run.json", dir.display())));
        }
        u.push(uk);
        y.push(yk);
    }
    let in_range = |c: usize, k: usize, path: &Path| {
        if c < slots && k < k_total {
            Ok(())
        } else {
            Err(CliError::general(format!("{}: index ({c}, {k}) out of range", path.display())))
        }
    };
    let fpath = dir.join("features.csv");
    let mut features = DMatrix::zeros(slots, k_total);
    for row in io::read_table(&fpath, FEATURES_HEADER)? {
        let (c, k) = (field(&row, 0, &fpath)?, field(&row, 1, &fpath)?);
        in_range(c, k, &fpath)?;
        features[(c, k)] = field(&row, 2, &fpath)?;
    }
    let cpath = dir.join("contributions.csv");
    let mut contributions = vec![vec![Vec::new(); k_total]; slots];
    for row in io::read_table(&cpath, CONTRIB_HEADER)? {
        let (c, k): (usize, usize) = (field(&row, 0, &cpath)?, field(&row, 1, &cpath)?);
        in_range(c, k, &cpath)?;
        contributions[c][k].push(field(&row, 3, &cpath)?);
    }
    let lpath = dir.join("labels.csv");
    let labels = read_labels(&lpath, slots, k_total)?;
    let dec = Decomposition {
        subject_ids: info.subject_ids.clone(),
        whiteners: Vec::new(),
        // Only the reduced dimension of `z` is needed downstream.
        z: info.orders.iter().map(|&c| DMatrix::zeros(c, 0)).collect(),
        u,
        y,
        features,
        contributions,
        labels,
        sigma_opt: info.sigma_opt,
        trace: Vec::new(),
        warnings: info.warnings.clone(),
        sweeps: info.sweeps,
    };
    Ok((info, dec))
}

pub fn read_labels(path: &Path, slots: usize, k_total: usize) -> Result<Vec<Vec<SourceLabel>>, CliError> {
    let mut labels = vec![vec![SourceLabel::individual(); k_total]; slots];
    let mut seen = 0;
    for row in io::read_table(path, LABELS_HEADER)? {
        let (c, k): (usize, usize) = (field(&row, 0, path)?, field(&row, 1, path)?);
        if c >= slots || k >= k_total || row.len() != 4 {
            return Err(CliError::general(format!("{}: malformed row {row:?}", path.display())));
        }
        labels[c][k] =
            io::label_from_fields(&row[2], &row[3], k, k_total).map_err(|e| CliError::general(format!("{}: {e}", path.display())))?;
        seen += 1;
    }
    if seen != slots * k_total {
        return Err(CliError::general(format!("{}: expected {} labels, found {seen}", path.display(), slots * k_total)));
    }
    Ok(labels)
}

fn parse_groups(s: &str) -> Result<Vec<Vec<usize>>, CliError> {
    s.split('/')
        .map(|g| g.split(',').map(|x| x.trim().parse::<usize>()).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CliError::new(EXIT_INVALID_SPEC, format!("--groups expects `a,b,c/d,e,f`, got {s:?}")))
}

pub fn classify(a: &ClassifyArgs) -> Result<(), CliError> {
    let (info, dec) = load_results(&a.results)?;
    let out = a.out.clone().unwrap_or_else(|| a.results.join("classify.csv"));
    if let Some(g) = &a.groups {
        let groups = parse_groups(g)?;
        if groups.iter().flatten().any(|&k| k >= dec.n_subjects()) {
            return Err(CliError::new(EXIT_INVALID_SPEC, "--groups names a subject that does not exist".to_string()));
        }
        let verdicts = classify_by_spatial(&dec, &groups, a.q).map_err(lib_err)?;
        let rows: Vec<Vec<String>> = verdicts
            .iter()
            .enumerate()
            .map(|(c, v)| vec![c.to_string(), v.kind.short().to_string(), v.mask.iter().filter(|&&m| m).count().to_string()])
            .collect();
        return io::write_table(&out, SPATIAL_HEADER, &rows);
    }
    if info.algorithm != "jpji" {
        return Err(CliError::new(EXIT_VALIDATION, "the feature route needs a JpJI-ICA run; use --groups for the spatial route".to_string()));
    }
    let mut cfg = info.config.clone();
    if let Some(s) = a.sigma {
        cfg.sigma0 = Sigma0::Fixed(s);
    }
    let typed = classify_labels(&dec, &cfg).map_err(lib_err)?;
    for w in &typed.warnings {
        eprintln!("warning: {w}");
    }
    io::write_table(&out, LABELS_HEADER, &labels_rows(&typed.labels))
}
