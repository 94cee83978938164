//! On-disk formats: matrices, the dataset manifest and plain CSV tables.
//!
//! Matrices are row-major. Text files hold one row per line, comma separated,
//! every value written with 17 significant digits so it parses back exactly.
//! Binary files start with a 16-byte header (`JPJI`, rows, cols, a reserved
//! word, all little-endian `u32`) followed by the values as little-endian `f64`.

use std::fs;
use std::path::{Path, PathBuf};

use jpji::simgen::ScenarioSpec;
use jpji::types::{GroundTruth, SourceKind, SourceLabel, SubjectDataset};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const FORMAT_VERSION: &str = "1";
pub const MANIFEST: &str = "manifest.json";
const MAGIC: &[u8; 4] = b"JPJI";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Binary,
}

impl MatrixFormat {
    pub fn from_flag(binary: bool) -> Self {
        if binary {
            Self::Binary
        } else {
            Self::Csv
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Binary => "bin",
        }
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::with_capacity(m.len() * 24);
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>, String> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>().map_err(|e| format!("line {}: {e}", i + 1)))
            .collect::<Result<Vec<f64>, String>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(format!("line {}: {} values, expected {}", i + 1, row.len(), first.len()));
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_bytes(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for row in m.row_iter() {
        for v in row.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn matrix_from_bytes(bytes: &[u8]) -> Result<DMatrix<f64>, String> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err("missing JPJI header".into());
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (rows, cols) = (word(4), word(8));
    let body = &bytes[16..];
    if body.len() != rows * cols * 8 {
        return Err(format!("{rows}x{cols} matrix needs {} bytes, found {}", rows * cols * 8, body.len()));
    }
    let vals: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(DMatrix::from_row_slice(rows, cols, &vals))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<(), CliError> {
    let res = if path.extension().is_some_and(|e| e == "bin") {
        fs::write(path, matrix_to_bytes(m))
    } else {
        fs::write(path, matrix_to_csv(m))
    };
    res.map_err(|e| CliError::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let parsed = if path.extension().is_some_and(|e| e == "bin") {
        matrix_from_bytes(&bytes)
    } else {
        String::from_utf8(bytes).map_err(|e| e.to_string()).and_then(|t| matrix_from_csv(&t))
    };
    parsed.map_err(|e| CliError::general(format!("{}: {e}", path.display())))
}

/// Writes a table with a header line; every row must have as many fields as the header.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        debug_assert_eq!(r.len(), header.len());
        out.push_str(&r.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::io(path, e))
}

/// Reads a table written by [`write_table`], returning the data rows.
pub fn read_table(path: &Path, header: &[&str]) -> Result<Vec<Vec<String>>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = text.lines();
    let found: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    if found != header {
        return Err(CliError::general(format!("{}: unexpected header {found:?}", path.display())));
    }
    Ok(lines.filter(|l| !l.is_empty()).map(|l| l.split(',').map(str::to_owned).collect()).collect())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::general(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::general(format!("{}: {e}", path.display())))
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Peer sets are written as `;`-separated indices.
pub fn peers_to_string(label: &SourceLabel) -> String {
    label.peers().iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

pub fn label_from_fields(kind: &str, peers: &str, subject: usize, n_subjects: usize) -> Result<SourceLabel, String> {
    let kind = SourceKind::from_short(kind).ok_or_else(|| format!("unknown source kind {kind:?}"))?;
    let peers = peers
        .split(';')
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<usize>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    SourceLabel::new(kind, peers, subject, n_subjects).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub id: String,
    pub n_time: usize,
    /// Relative to the manifest's directory.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEntry {
    /// `labels[k][c]` describes row `c` of subject `k`'s source matrix.
    pub labels: Vec<Vec<SourceLabel>>,
    pub cluster_of: Vec<usize>,
    pub sources: Vec<String>,
    pub mixing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: String,
    pub n_subjects: usize,
    pub n_voxels: usize,
    pub seed: u64,
    pub spec: Option<ScenarioSpec>,
    pub subjects: Vec<SubjectEntry>,
    pub truth: Option<TruthEntry>,
}

pub struct LoadedData {
    pub manifest: Manifest,
    pub datasets: Vec<SubjectDataset>,
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, CliError> {
    let m: Manifest = read_json(&dir.join(MANIFEST))?;
    if m.format_version != FORMAT_VERSION {
        return Err(CliError::general(format!("unsupported manifest format_version {:?}", m.format_version)));
    }
    if m.subjects.len() != m.n_subjects {
        return Err(CliError::general(format!("manifest lists {} subjects, declares {}", m.subjects.len(), m.n_subjects)));
    }
    Ok(m)
}

pub fn load_dataset(dir: &Path) -> Result<LoadedData, CliError> {
    let manifest = read_manifest(dir)?;
    let mut datasets = Vec::with_capacity(manifest.n_subjects);
    for s in &manifest.subjects {
        let path = dir.join(&s.path);
        let o = read_matrix(&path)?;
        if o.shape() != (s.n_time, manifest.n_voxels) {
            return Err(CliError::general(format!(
                "{}: shape {}x{}, manifest declares {}x{}",
                path.display(),
                o.nrows(),
                o.ncols(),
                s.n_time,
                manifest.n_voxels
            )));
        }
        datasets.push(SubjectDataset::new(s.id.clone(), o).map_err(|e| CliError::general(format!("{}: {e}", path.display())))?);
    }
    Ok(LoadedData { manifest, datasets })
}

pub fn load_truth(dir: &Path, manifest: &Manifest) -> Result<Option<GroundTruth>, CliError> {
    let Some(t) = &manifest.truth else { return Ok(None) };
    let read_all = |paths: &[String]| paths.iter().map(|p| read_matrix(&dir.join(p))).collect::<Result<Vec<_>, _>>();
    let sources = read_all(&t.sources)?;
    let mixing = read_all(&t.mixing)?;
    if sources.len() != manifest.n_subjects || t.labels.len() != manifest.n_subjects {
        return Err(CliError::general("ground truth does not cover every subject".into()));
    }
    for (k, s) in sources.iter().enumerate() {
        if s.shape() != (t.labels[k].len(), manifest.n_voxels) {
            return Err(CliError::general(format!("ground-truth sources of subject {k} do not match their labels")));
        }
    }
    for (k, row) in t.labels.iter().enumerate() {
        for l in row {
            SourceLabel::new(l.kind(), l.peers().clone(), k, manifest.n_subjects)
                .map_err(|e| CliError::general(format!("ground-truth label of subject {k}: {e}")))?;
        }
    }
    let count = |k: usize, kind: SourceKind| t.labels[k].iter().filter(|l| l.kind() == kind).count();
    Ok(Some(GroundTruth {
        joint_count: (0..manifest.n_subjects).map(|k| count(k, SourceKind::Joint)).max().unwrap_or(0),
        pjoint_counts: (0..manifest.n_subjects).map(|k| count(k, SourceKind::PartiallyJoint)).collect(),
        individual_counts: (0..manifest.n_subjects).map(|k| count(k, SourceKind::Individual)).collect(),
        cluster_of: t.cluster_of.clone(),
        labels: t.labels.clone(),
        sources,
        mixing,
    }))
}

pub fn file_name(prefix: &str, id: &str, format: MatrixFormat) -> String {
    format!("{prefix}_{id}.{}", format.extension())
}

/// Finds `stem_<id>.csv` or `stem_<id>.bin` in `dir`.
pub fn find_matrix(dir: &Path, prefix: &str, id: &str) -> Result<PathBuf, CliError> {
    for f in [MatrixFormat::Csv, MatrixFormat::Binary] {
        let p = dir.join(file_name(prefix, id, f));
        if p.exists() {
            return Ok(p);
        }
    }
    Err(CliError::general(format!("{}: no {prefix} matrix for subject {id}", dir.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let m = DMatrix::from_row_slice(2, 3, &[0.1, -1e-300, 1.0 / 3.0, f64::MAX, 5e-324, -0.0]);
        let back = matrix_from_csv(&matrix_to_csv(&m)).unwrap();
        assert_eq!(m.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), back.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn binary_header_layout() {
        let m = DMatrix::from_row_slice(2, 1, &[1.5, -2.0]);
        let b = matrix_to_bytes(&m);
        assert_eq!(&b[..4], b"JPJI");
        assert_eq!(b.len(), 32);
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(b[16..24].try_into().unwrap()), 1.5);
        assert_eq!(matrix_from_bytes(&b).unwrap(), m);
        assert!(matrix_from_bytes(&b[..30]).is_err());
    }

    #[test]
    fn ragged_csv_is_rejected() {
        assert!(matrix_from_csv("1,2\n3\n").is_err());
    }
}
